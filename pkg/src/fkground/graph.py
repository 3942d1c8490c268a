"""Interaction graph induced by strictly negative mixed second partials."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, GraphError
from .model import InteractionSpec, LatticeConfiguration, Site, _Assembly, site_set


@dataclass(frozen=True)
class InteractionGraph:
    window: tuple[Site, ...]
    adjacency: dict
    probe_provenance: str
    edge_threshold: float = 1e-9

    def neighbors(self, s: Site) -> tuple[Site, ...]:
        return self.adjacency[s]

    @property
    def edges(self) -> list[tuple[Site, Site]]:
        return sorted((p, q) for p in self.window for q in self.adjacency[p] if p < q)


def build_graph(spec: InteractionSpec, probe_configs: Sequence[LatticeConfiguration],
                window: Iterable, edge_threshold: float = 1e-9,
                provenance: str | None = None) -> InteractionGraph:
    """Link ``p, q`` when some single term has ``d2H/du_p du_q <= -edge_threshold``
    at every probe configuration. Terms anchored in the halo are included."""
    if not probe_configs:
        raise ContractError("probe set must be nonempty")
    win = site_set(window, spec.dim)
    inside = set(win)
    asm = _Assembly(spec, win)
    # (term, a, b) -> [p, q, still below threshold at every probe so far]
    linked: dict[tuple[int, int, int], list] = {}
    for cfg in probe_configs:
        x = asm.local_values(cfg)
        for t, (ix, h) in enumerate(asm.term_hessians(x)):
            k = len(ix)
            for a in range(k):
                for b in range(a + 1, k):
                    p, q = asm.sites[ix[a]], asm.sites[ix[b]]
                    if p not in inside or q not in inside:
                        continue
                    rec = linked.setdefault((t, a, b), [p, q, True])
                    rec[2] = rec[2] and float(h[a, b]) <= -edge_threshold
    adj: dict[Site, set] = {s: set() for s in win}
    for p, q, ok in linked.values():
        if ok:
            adj[p].add(q)
            adj[q].add(p)
    frozen = {s: tuple(sorted(v)) for s, v in adj.items()}
    prov = provenance or f"{len(probe_configs)} probe configuration(s)"
    return InteractionGraph(tuple(win), frozen, prov, edge_threshold)


def _bfs(g: InteractionGraph, sources: Iterable[Site]) -> tuple[dict, dict]:
    """Multi-source BFS; neighbors are expanded in lexicographic order."""
    dist, parent = {}, {}
    queue = deque()
    for s in sorted(set(sources)):
        if s not in g.adjacency:
            raise ContractError(f"site {s} not in graph window")
        dist[s] = 0
        parent[s] = None
        queue.append(s)
    while queue:
        p = queue.popleft()
        for q in g.adjacency[p]:
            if q not in dist:
                dist[q] = dist[p] + 1
                parent[q] = p
                queue.append(q)
    return dist, parent


def distance(g: InteractionGraph, i, j) -> int | None:
    """Shortest-path length inside the window, ``None`` when unreachable."""
    i, j = _site(g, i), _site(g, j)
    return _bfs(g, [i])[0].get(j)


def distance_to_set(g: InteractionGraph, i, S: Iterable) -> int | None:
    S = [_site(g, s) for s in S]
    if not S:
        raise ContractError("S must be nonempty")
    return _bfs(g, S)[0].get(_site(g, i))


@dataclass(frozen=True)
class Frontier:
    sites: tuple[Site, ...]
    strict: bool | None  # None when S is the whole window or the graph is disconnected


def frontier(g: InteractionGraph, S: Iterable) -> Frontier:
    """``{i : d(i, S) <= 1}``, with the strict-growth assertion when applicable."""
    S = sorted({_site(g, s) for s in S})
    if not S:
        raise ContractError("S must be nonempty")
    out = set(S)
    for s in S:
        out.update(g.adjacency[s])
    sites = tuple(sorted(out))
    strict = None
    if len(S) < len(g.window) and is_transitive(g):
        strict = len(sites) > len(S)
        if not strict:
            raise GraphError(f"frontier of {S} did not grow in a connected graph")
    return Frontier(sites, strict)


def shortest_path(g: InteractionGraph, i, j) -> list[Site]:
    i, j = _site(g, i), _site(g, j)
    _, parent = _bfs(g, [i])
    if j not in parent:
        raise GraphError(f"no path from {i} to {j} inside the window")
    path = [j]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def connected_hull(g: InteractionGraph, B: Iterable) -> list[Site]:
    """Union of the vertices of shortest paths between all pairs of ``B``."""
    B = sorted({_site(g, s) for s in B})
    out = set(B)
    for a, p in enumerate(B):
        for q in B[a + 1:]:
            out.update(shortest_path(g, p, q))
    hull = sorted(out)
    if not set(B) <= out or not is_connected_set(g, hull):
        raise GraphError("connected hull construction failed")
    return hull


def is_connected_set(g: InteractionGraph, S: Iterable) -> bool:
    """Whether ``S`` is connected using only edges with both ends in ``S``."""
    S = sorted({_site(g, s) for s in S})
    if not S:
        return True
    members = set(S)
    seen = {S[0]}
    queue = deque([S[0]])
    while queue:
        p = queue.popleft()
        for q in g.adjacency[p]:
            if q in members and q not in seen:
                seen.add(q)
                queue.append(q)
    return len(seen) == len(members)


def components(g: InteractionGraph) -> list[list[Site]]:
    seen: set = set()
    out = []
    for s in g.window:
        if s in seen:
            continue
        comp = sorted(_bfs(g, [s])[0])
        seen.update(comp)
        out.append(comp)
    return out


def is_transitive(g: InteractionGraph) -> bool:
    """Connectivity of the windowed graph."""
    return len(g.window) > 0 and len(components(g)) == 1


@dataclass(frozen=True)
class TransitivityReport:
    connected: bool
    n_components: int
    translation_invariant_edges: bool | None
    note: str


def transitivity_report(spec: InteractionSpec, g: InteractionGraph) -> TransitivityReport:
    """Connectivity plus, for translation-invariant specs, a check that every
    interior site sees the same set of edge offsets."""
    comps = components(g)
    ti = None
    if spec.translation_invariant and g.window:
        r = spec.range_bound
        inside = set(g.window)
        patterns = set()
        for s in g.window:
            box = [tuple(c + d for c, d in zip(s, off))
                   for off in np.ndindex(*([2 * r + 1] * spec.dim))]
            box = [tuple(c - r for c in b) for b in box]
            if all(b in inside for b in box):
                patterns.add(tuple(sorted(tuple(a - b for a, b in zip(q, s))
                                          for q in g.adjacency[s])))
        ti = len(patterns) <= 1 if patterns else None
    return TransitivityReport(len(comps) == 1 and len(g.window) > 0, len(comps), ti,
                              "window graph only; edges certified at probe configurations")


def export_edges(g: InteractionGraph) -> str:
    """Sorted edge list, one ``p q`` pair per line (coordinates comma separated)."""
    fmt = ",".join
    lines = [f"{fmt(map(str, p))} {fmt(map(str, q))}" for p, q in g.edges]
    return "\n".join(lines) + ("\n" if lines else "")


def _site(g: InteractionGraph, s) -> Site:
    if isinstance(s, (int, np.integer)):
        out = (int(s),)
    else:
        out = tuple(int(c) for c in s)
    if out not in g.adjacency:
        raise ContractError(f"site {out} not in graph window")
    return out
