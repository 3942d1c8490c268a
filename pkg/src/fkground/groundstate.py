"""Finite-window certification that foliation members are ground states.

For a member ``u`` and a finite window ``B`` the search maximizes the relative
energy ``Gamma(phi; u, B)`` over perturbations supported in ``B``, i.e. minimizes
the energy of ``u + phi`` on the terms meeting ``B``. A ground state admits no
``phi`` with positive ``Gamma``; the verifier reports the largest value found.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ContractError, HypothesisError, PreconditionError, SearchError
from .foliation import FoliationFamily, check_axioms
from .graph import build_graph, connected_hull, is_transitive, transitivity_report
from .model import (InteractionSpec, LatticeConfiguration, Site, _Assembly, as_site,
                    coercivity_probe, ferromagnetic_check, site_set)

log = logging.getLogger(__name__)


@dataclass
class WindowResult:
    phi_star: dict
    gamma_star: float
    stationarity: float
    iterations: int
    trajectory: list = field(default_factory=list)  # (iteration, energy, max |gradient|)


def _gamma(asm: _Assembly, x0: np.ndarray, x: np.ndarray) -> float:
    return math.fsum(asm.term_energies(x0) - asm.term_energies(x))


def _escape_saddle(asm, x, free, H, f, curvature_tol=1e-10):
    """Step along a negative-curvature direction from a stationary point, if any."""
    lam, vec = np.linalg.eigh(H)
    if lam[0] >= -curvature_tol:
        return None
    d = vec[:, 0]
    t = 1.0
    while t > 1e-8:
        for sign in (-1.0, 1.0):  # deterministic order
            xt = x.copy()
            xt[free] += sign * t * d
            ft = asm.energy(xt)
            if ft < f - 1e-14 * max(1.0, abs(f)):
                return xt, ft
        t *= 0.5
    return None


def _descend(asm, x0, free, start, max_iter, gtol):
    """Damped Newton on the free coordinates with a steepest-descent fallback."""
    x = x0.copy()
    x[free] += start
    f = asm.energy(x)
    g = asm.gradient(x)[free]
    traj = [(0, f, float(np.abs(g).max(initial=0.0)))]
    for it in range(1, max_iter + 1):
        gmax = float(np.abs(g).max(initial=0.0))
        H = asm.hessian(x)[np.ix_(free, free)]
        if gmax < gtol:
            escaped = _escape_saddle(asm, x, free, H, f)
            if escaped is None:
                return x, traj, it - 1
            x, f = escaped
            g = asm.gradient(x)[free]
            traj.append((it, f, float(np.abs(g).max(initial=0.0))))
            continue
        try:
            p = -cho_solve(cho_factor(H), g)
        except LinAlgError:
            p = -g
        slope = float(g @ p)
        if not slope < 0.0:
            p = -g
            slope = -float(g @ g)
        t = 1.0
        accepted = False
        while t > 1e-12:
            xt = x.copy()
            xt[free] += t * p
            ft = asm.energy(xt)
            gt = asm.gradient(xt)[free]
            if ft <= f + 1e-4 * t * slope:
                accepted = True
                break
            # near the minimum energy differences drown in round-off; a step
            # that does not raise the energy and shrinks the gradient is kept
            if ft <= f + 1e-14 * max(1.0, abs(f)) and np.abs(gt).max() < 0.5 * gmax:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise SearchError(f"line search failed at iteration {it} (|grad| = {gmax:.3e})",
                              traj)
        x, f, g = xt, ft, gt
        traj.append((it, f, float(np.abs(g).max(initial=0.0))))
    if float(np.abs(g).max(initial=0.0)) < gtol:
        return x, traj, max_iter
    raise SearchError(f"no stationary point within {max_iter} iterations", traj)


def minimize_window(spec: InteractionSpec, u: LatticeConfiguration, window: Iterable,
                    max_iter: int = 100, gtol: float = 1e-11, check_coercivity: bool = True,
                    restarts: int = 0, seed: int = 0, restart_scale: float = 2.0
                    ) -> WindowResult:
    """Maximize ``Gamma(phi; u, window)`` over ``phi`` supported in ``window``.

    The search starts at ``phi = 0``. Optional seeded restarts draw starting points
    uniformly from ``[-restart_scale, restart_scale]`` per site and keep the best
    stationary point (ties keep the earlier start).
    """
    win = site_set(window, spec.dim)
    if not win:
        raise ContractError("window must be nonempty")
    if check_coercivity:
        for s in win:
            if not coercivity_probe(spec, u, None, s).passed:
                raise PreconditionError(f"coercivity probe failed at site {s}")
    asm = _Assembly(spec, win)
    free = asm.anchor_idx
    x0 = asm.local_values(u)
    starts = [np.zeros(len(free))]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(rng.uniform(-restart_scale, restart_scale, len(free)))
    best = None
    total = 0
    for start in starts:
        x, traj, its = _descend(asm, x0, free, start, max_iter, gtol)
        total += its
        gam = _gamma(asm, x0, x)
        if best is None or gam > best[1]:
            best = (x, gam, traj)
    x, gam, traj = best
    phi = {s: float(x[i] - x0[i]) for s, i in zip(asm.anchor, free) if x[i] != x0[i]}
    stat = float(np.abs(asm.gradient(x)[free]).max())
    return WindowResult(phi, gam, stat, total, traj)


# ---------------------------------------------------------------------------
# oracle


@dataclass
class OracleResult:
    gamma_max: float
    phi_argmax: dict
    n_points: int
    step: float


def brute_force_oracle(spec: InteractionSpec, u: LatticeConfiguration, window: Iterable,
                       grid: Sequence[float] | None = None, chunk: int = 16) -> OracleResult:
    """Exhaustive maximum of ``Gamma`` over a product grid (at most three sites).

    The default grid is ``-2, -1.99, ..., 2`` per site. Ties resolve to the
    lexicographically smallest ``phi``.
    """
    win = site_set(window, spec.dim)
    if not 1 <= len(win) <= 3:
        raise ContractError("the oracle handles windows of one to three sites")
    g = np.arange(-200, 201) * 1e-2 if grid is None else np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0):
        raise ContractError("oracle grid must be a strictly increasing 1-D array")
    n = len(win)
    G = g.size
    asm = _Assembly(spec, win)
    x0 = asm.local_values(u)
    pos = {int(i): a for a, i in enumerate(asm.anchor_idx)}
    plans = []
    for base, _, term in asm.entries:
        cell_ix = [asm.index[tuple(b + o for b, o in zip(base, off))] for off in term.cell]
        axes = [pos.get(i) for i in cell_ix]
        e0 = float(term.energy(x0[cell_ix][:, None], np.array(base)[:, None])[0])
        plans.append((term, np.array(base), cell_ix, axes, e0))

    best_val, best_idx = -math.inf, None
    for c0 in range(0, G, chunk):
        rows = np.arange(c0, min(c0 + chunk, G))
        span = [rows] + [np.arange(G)] * (n - 1)
        total = np.zeros([len(s) for s in span])
        for term, base, cell_ix, axes, e0 in plans:
            free = sorted({a for a in axes if a is not None})
            shape = [len(span[a]) for a in free]
            mesh = np.meshgrid(*[g[span[a]] for a in free], indexing="ij")
            P = int(np.prod(shape)) if shape else 1
            xc = np.empty((len(cell_ix), P))
            for r, (i, a) in enumerate(zip(cell_ix, axes)):
                xc[r] = x0[i] if a is None else x0[i] + mesh[free.index(a)].ravel()
            e = np.asarray(term.energy(xc, np.broadcast_to(base[:, None], (len(base), P))),
                           dtype=float)
            contrib = (e0 - np.broadcast_to(e, (P,))).reshape(shape)
            full = [len(span[a]) if a in free else 1 for a in range(n)]
            total += contrib.reshape(full)
        k = int(np.argmax(total))
        val = float(total.flat[k])
        if val > best_val:
            best_val = val
            idx = np.unravel_index(k, total.shape)
            best_idx = (int(rows[idx[0]]),) + tuple(int(j) for j in idx[1:])
    phi = {s: float(g[j]) for s, j in zip(win, best_idx)}
    step = float(np.min(np.diff(g))) if G > 1 else 0.0
    return OracleResult(best_val, phi, G**n, step)


# ---------------------------------------------------------------------------
# theorem verification


@dataclass
class GroundStateReport:
    beta: float
    window: tuple
    phi_star: dict
    gamma_star: float
    stationarity: float
    verdict: str
    iterations: int

    @property
    def window_size(self) -> int:
        return len(self.window)


@dataclass
class VerificationResult:
    reports: list
    hypotheses: dict
    passed: bool
    window_monotone: bool
    worst: GroundStateReport | None
    coverage: dict

    @property
    def violations(self) -> int:
        return sum(r.verdict != "pass" for r in self.reports)


def default_windows(spec: InteractionSpec, graph, w_max: int = 15) -> list[list[Site]]:
    """``Con({0, (s - 1) e_1})`` for ``s = 1..w_max``."""
    zero = (0,) * spec.dim
    out = []
    for s in range(1, w_max + 1):
        far = (s - 1,) + (0,) * (spec.dim - 1)
        out.append(connected_hull(graph, [zero, far]))
    return out


def _probe_set(fam: FoliationFamily, betas, sites, n_random, seed):
    rng = np.random.default_rng(seed)
    probes = []
    for b in betas:
        u = fam.generator.member(b)
        probes.append(u)
        for _ in range(n_random):
            phi = {s: float(v) for s, v in zip(sites, rng.uniform(-1.0, 1.0, len(sites)))}
            probes.append(u.perturbed(phi))
    return probes


def check_hypotheses(fam: FoliationFamily, spec: InteractionSpec, sites: Sequence[Site],
                     betas: Sequence[float], seed: int = 0, n_random: int = 2,
                     ferro_tol: float = 1e-12):
    """Run the theorem's hypothesis checks in order; return ``(graph, summary)``.

    Raises :class:`HypothesisError` naming the first failing hypothesis.
    """
    summary = {}
    sample_betas = sorted({betas[0], betas[len(betas) // 2], betas[-1]})
    probes = _probe_set(fam, sample_betas, sites, n_random, seed)
    prov = f"{len(probes)} probes: members at beta={sample_betas} plus seeded perturbations"
    ferro = ferromagnetic_check(spec, probes, sites, ferro_tol)
    summary["ferromagnetic"] = {"passed": ferro.is_ferromagnetic,
                                "worst_entry": _entry(ferro.worst_entry),
                                "n_probes": ferro.n_probes, "n_entries": ferro.n_entries,
                                "note": ferro.note}
    if not ferro.is_ferromagnetic:
        raise HypothesisError("ferromagnetic_check", f"worst entry {_entry(ferro.worst_entry)}")

    graph = build_graph(spec, probes, sites, provenance=prov)
    trans = transitivity_report(spec, graph)
    ok = is_transitive(graph) and trans.translation_invariant_edges is not False
    summary["transitivity"] = {"passed": ok, "n_components": trans.n_components,
                               "translation_invariant_edges": trans.translation_invariant_edges,
                               "probe_provenance": prov, "note": trans.note}
    if not ok:
        raise HypothesisError("transitivity",
                              f"window graph has {trans.n_components} component(s)")

    bad = None
    for b in sample_betas:
        u = fam.generator.member(b)
        for s in sites:
            if not coercivity_probe(spec, u, None, s).passed:
                bad = (b, s)
                break
        if bad:
            break
    summary["coercivity"] = {"passed": bad is None, "n_sites": len(sites),
                             "betas": sample_betas}
    if bad:
        raise HypothesisError("coercivity", f"beta={bad[0]!r}, site {bad[1]}")

    rep = fam.axiom_report or check_axioms(fam)
    summary["axioms"] = rep.as_dict()
    if not rep.passed:
        failed = [k for k in ("a1", "a2", "a2_strict", "a3", "a4") if not getattr(rep, k).passed]
        raise HypothesisError("foliation_axioms", ", ".join(failed))
    return graph, summary


def _entry(e):
    if e is None:
        return None
    p, q, v = e
    return [list(p), list(q), v]


def verify_theorem(fam: FoliationFamily, spec: InteractionSpec | None = None,
                   window_schedule: Sequence[int] | Sequence[Sequence] | None = None,
                   betas: Sequence[float] | None = None, gamma_tol: float = 1e-8,
                   stationarity_tol: float = 1e-8, threads: int = 1, seed: int = 0,
                   max_iter: int = 100) -> VerificationResult:
    """Certify that no window perturbation lowers the energy of any sampled member.

    ``window_schedule`` is either a list of sizes (windows ``Con({0, (s-1) e_1})``)
    or explicit site sets, each replaced by its connected hull. ``betas`` defaults
    to the family's grid.
    """
    spec = spec or fam.spec
    betas = [float(b) for b in (fam.beta_grid if betas is None else betas)]
    if not betas:
        raise ContractError("no beta values to verify")
    sched = list(range(1, 16)) if window_schedule is None else list(window_schedule)
    if not sched:
        raise ContractError("window schedule must be nonempty")
    explicit = not isinstance(sched[0], (int, np.integer))
    if explicit:
        raw = [site_set(w, spec.dim) for w in sched]
        extent = sorted({s for w in raw for s in w})
    else:
        if any(int(s) < 1 for s in sched):
            raise ContractError("window sizes must be >= 1")
        extent = [(k,) + (0,) * (spec.dim - 1) for k in range(max(sched))]
    # the graph lives on a box around every window so shortest paths fit inside
    r = spec.range_bound
    lo = [min(s[j] for s in extent) - r for j in range(spec.dim)]
    hi = [max(s[j] for s in extent) + r for j in range(spec.dim)]
    box = [tuple(c) for c in np.ndindex(*[h - l + 1 for l, h in zip(lo, hi)])]
    box = [tuple(c + l for c, l in zip(s, lo)) for s in box]
    graph, hyp = check_hypotheses(fam, spec, box, betas, seed=seed)

    if explicit:
        windows = [connected_hull(graph, w) for w in raw]
    else:
        zero = (0,) * spec.dim
        windows = [connected_hull(graph, [zero, (int(s) - 1,) + (0,) * (spec.dim - 1)])
                   for s in sched]
    tasks = [(b, w) for b in betas for w in windows]

    def run(task):
        b, w = task
        u = fam.generator.member(b)
        try:
            res = minimize_window(spec, u, w, max_iter=max_iter, check_coercivity=False)
        except SearchError as exc:
            log.warning("search failed at beta=%r window size %d: %s", b, len(w), exc)
            return GroundStateReport(b, tuple(w), {}, math.nan, math.nan, "search-failed",
                                     len(exc.trajectory))
        ok = res.gamma_star <= gamma_tol and res.stationarity < stationarity_tol
        return GroundStateReport(b, tuple(w), res.phi_star, res.gamma_star, res.stationarity,
                                 "pass" if ok else "fail", res.iterations)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        reports = list(pool.map(run, tasks))

    monotone = True
    for b in betas:
        seq = [r.gamma_star for r in reports if r.beta == b]
        if any(not (y >= x - gamma_tol) for x, y in zip(seq, seq[1:])):
            monotone = False
    worst = max(reports, key=lambda r: (-math.inf if math.isnan(r.gamma_star)
                                        else r.gamma_star)) if reports else None
    failed = [r for r in reports if r.verdict != "pass"]
    if failed:
        worst = failed[0]
    passed = not failed and monotone
    coverage = {"n_beta": len(betas), "window_sizes": [len(w) for w in windows],
                "n_windows": len(tasks),
                "note": "sampled windows only; the theorem quantifies over all compact perturbations"}
    return VerificationResult(reports, hyp, passed, monotone, worst, coverage)


def report_rows(result: VerificationResult) -> list[list]:
    rows = [["beta", "window_size", "window_first", "window_last", "gamma_star",
             "stationarity", "iterations", "verdict"]]
    for r in result.reports:
        rows.append([r.beta, r.window_size, ",".join(map(str, r.window[0])),
                     ",".join(map(str, r.window[-1])), r.gamma_star, r.stationarity,
                     r.iterations, r.verdict])
    return rows


def report_summary(result: VerificationResult) -> dict:
    w = result.worst
    return {
        "passed": result.passed,
        "violations": result.violations,
        "window_monotone": result.window_monotone,
        "max_gamma_star": max((r.gamma_star for r in result.reports), default=None),
        "max_stationarity": max((r.stationarity for r in result.reports), default=None),
        "worst": None if w is None else {"beta": w.beta, "window_size": w.window_size,
                                         "gamma_star": w.gamma_star,
                                         "stationarity": w.stationarity,
                                         "verdict": w.verdict},
        "hypotheses": result.hypotheses,
        "coverage": result.coverage,
    }
