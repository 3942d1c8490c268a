"""Interaction specifications on lattices and the energy calculus built on them.

A model is a family of finite-range local terms ``H_B``. Each term is anchored at
a base site and touches the sites ``base + offset`` for the offsets in its cell.
Term callables are vectorized: they receive ``x`` with shape ``(len(cell), ...)``
and ``base`` with shape ``(dim, ...)`` and return arrays of shape ``(...)``,
``(len(cell), ...)`` and ``(len(cell), len(cell), ...)`` respectively.

Sign conventions follow the ground-state literature: the relative energy is
``Gamma(phi; u, B) = sum_{B' meets B} H_B'(u) - H_B'(u + phi)``, so a ground state
has ``Gamma <= 0`` for every finitely supported ``phi``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, EvaluationError

Site = tuple[int, ...]


def as_site(s, dim: int | None = None) -> Site:
    """Normalize an int or integer sequence to a site tuple."""
    if isinstance(s, (int, np.integer)):
        out = (int(s),)
    else:
        out = tuple(int(c) for c in s)
    if dim is not None and len(out) != dim:
        raise ContractError(f"site {out} has dimension {len(out)}, expected {dim}")
    return out


def site_set(sites: Iterable, dim: int | None = None) -> list[Site]:
    """Sorted, de-duplicated list of sites."""
    return sorted({as_site(s, dim) for s in sites})


def chain(lo: int, hi: int) -> list[Site]:
    """One-dimensional sites ``lo..hi`` inclusive."""
    return [(n,) for n in range(lo, hi + 1)]


def _add(a: Site, b: Site) -> Site:
    return tuple(x + y for x, y in zip(a, b))


def _chebyshev(a: Site, b: Site) -> int:
    return max(abs(x - y) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# media


class TorusPotential:
    """Real trigonometric polynomial ``V`` on the torus evaluated along ``u * alpha``.

    ``V(theta) = sum_k c_k exp(2 pi i k . theta)``; the coefficients must be
    hermitian so that ``V`` is real. A one-dimensional torus with ``alpha = (1,)``
    is the periodic medium of the classic Frenkel-Kontorova model.
    """

    def __init__(self, alpha: Sequence[float], coeffs: Mapping[Sequence[int], complex]):
        self.alpha = np.asarray(alpha, dtype=float)
        if self.alpha.ndim != 1 or self.alpha.size < 1:
            raise ContractError("alpha must be a nonempty vector")
        self.d = int(self.alpha.size)
        items = {}
        for k, c in coeffs.items():
            kk = as_site(k, self.d)
            c = complex(c)
            if c != 0:
                items[kk] = items.get(kk, 0) + c
        for k, c in items.items():
            partner = items.get(tuple(-x for x in k), 0)
            if abs(partner - c.conjugate()) > 1e-14 * max(1.0, abs(c)):
                raise ContractError(f"coefficients are not hermitian at k={k}")
        keys = sorted(items)
        self.modes = np.array(keys, dtype=np.int64).reshape(len(keys), self.d)
        self.coeffs = np.array([items[k] for k in keys], dtype=complex)
        self._kalpha = 2j * np.pi * (self.modes @ self.alpha)

    @classmethod
    def zero(cls, alpha: Sequence[float]) -> "TorusPotential":
        return cls(alpha, {})

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    def coefficient_map(self) -> dict[Site, complex]:
        return {tuple(int(x) for x in k): complex(c) for k, c in zip(self.modes, self.coeffs)}

    def scaled(self, factor: float) -> "TorusPotential":
        return TorusPotential(self.alpha, {k: factor * c for k, c in self.coefficient_map().items()})

    def nonresonance(self) -> float:
        """Smallest ``|k . alpha|`` over stored nonzero modes (``inf`` if none)."""
        ks = [k for k in self.modes if np.any(k != 0)]
        if not ks:
            return math.inf
        return float(np.min(np.abs(np.array(ks) @ self.alpha)))

    def _phases(self, theta):
        theta = np.asarray(theta, dtype=float)
        arg = 2 * np.pi * np.tensordot(theta, self.modes.T, axes=([-1], [0]))
        return np.exp(1j * arg)

    def __call__(self, theta) -> np.ndarray:
        """Evaluate at points with trailing axis of length ``d``."""
        if self.is_zero:
            return np.zeros(np.shape(theta)[:-1])
        return (self._phases(theta) @ self.coeffs).real

    def d_alpha(self, theta) -> np.ndarray:
        """Directional derivative ``(alpha . grad) V``."""
        if self.is_zero:
            return np.zeros(np.shape(theta)[:-1])
        return (self._phases(theta) @ (self.coeffs * self._kalpha)).real

    def d2_alpha(self, theta) -> np.ndarray:
        if self.is_zero:
            return np.zeros(np.shape(theta)[:-1])
        return (self._phases(theta) @ (self.coeffs * self._kalpha**2)).real

    def along(self, u):
        """Points ``u * alpha`` for scalar or array ``u``."""
        return np.asarray(u, dtype=float)[..., None] * self.alpha

    def __repr__(self):
        return f"TorusPotential(d={self.d}, modes={len(self.coeffs)})"


# ---------------------------------------------------------------------------
# interaction terms


@dataclass(frozen=True, eq=False)
class InteractionTerm:
    """One local energy ``H_B`` with analytic first and second partials."""

    cell: tuple[Site, ...]
    energy: Callable
    grad: Callable
    hess: Callable
    name: str = "term"

    def __post_init__(self):
        if not self.cell:
            raise ContractError("interaction cell must be nonempty")
        if len(set(self.cell)) != len(self.cell):
            raise ContractError(f"duplicate offsets in cell {self.cell}")
        dims = {len(o) for o in self.cell}
        if len(dims) != 1:
            raise ContractError("cell offsets have inconsistent dimensions")

    @property
    def dim(self) -> int:
        return len(self.cell[0])

    @property
    def range(self) -> int:
        """Diameter of the cell in the Chebyshev metric."""
        return max(_chebyshev(a, b) for a in self.cell for b in self.cell)

    @property
    def reach(self) -> int:
        return max(max(abs(c) for c in o) for o in self.cell)


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """A finite-range interaction: a rule assigning terms to every base site."""

    dim: int
    terms_at: Callable[[Site], Sequence[InteractionTerm]]
    range_bound: int
    medium: TorusPotential | None = None
    name: str = "custom"
    translation_invariant: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ContractError(f"unsupported lattice dimension {self.dim}")
        if self.range_bound < 1:
            raise ContractError("range_bound must be positive")

    def terms(self, base: Site) -> tuple[InteractionTerm, ...]:
        out = tuple(self.terms_at(base))
        for t in out:
            if t.dim != self.dim:
                raise ContractError(f"term {t.name} has dimension {t.dim}, spec has {self.dim}")
            if t.range >= self.range_bound or t.reach >= self.range_bound:
                raise ContractError(
                    f"term {t.name} at {base} exceeds range_bound {self.range_bound}"
                )
        return out

    def touching(self, sites: Iterable[Site]) -> list[tuple[Site, int, InteractionTerm]]:
        """Terms whose cell meets ``sites``, ordered lexicographically by base."""
        targets = set(site_set(sites, self.dim))
        if not targets:
            return []
        r = self.range_bound - 1
        box = list(itertools.product(range(-r, r + 1), repeat=self.dim))
        bases = {_add(s, b) for s in targets for b in box}
        out = []
        for base in sorted(bases):
            for idx, term in enumerate(self.terms(base)):
                if any(_add(base, o) in targets for o in term.cell):
                    out.append((base, idx, term))
        return out


# ---------------------------------------------------------------------------
# configurations


class ClosedForm:
    """Background given by a vectorized function of integer site arrays ``(n, dim)``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str = "closed-form"):
        self.fn = fn
        self.label = label

    def __call__(self, sites: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(sites, dtype=np.int64)), dtype=float)

    def __repr__(self):
        return f"ClosedForm({self.label})"


def linear_background(omega: float | Sequence[float], beta: float = 0.0) -> ClosedForm:
    """``u_i = omega . i + beta``."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))

    def fn(sites):
        return sites @ w + beta

    return ClosedForm(fn, f"linear(omega={w.tolist()}, beta={beta})")


def constant_background(value: float = 0.0) -> ClosedForm:
    return ClosedForm(lambda s: np.full(len(s), float(value)), f"constant({value})")


class LatticeConfiguration:
    """Background configuration plus a finitely supported overlay ``phi``."""

    def __init__(self, background, perturbation: Mapping | None = None, dim: int = 1):
        self.background = background
        self.dim = dim
        pert = {}
        for s, v in (perturbation or {}).items():
            v = float(v)
            if not math.isfinite(v):
                raise ContractError(f"non-finite perturbation at {s}")
            if v != 0.0:
                pert[as_site(s, dim)] = v
        self.perturbation = dict(sorted(pert.items()))

    @property
    def support(self) -> list[Site]:
        return list(self.perturbation)

    def values(self, sites: Sequence[Site]) -> np.ndarray:
        sites = [as_site(s, self.dim) for s in sites]
        if not sites:
            return np.zeros(0)
        arr = np.array(sites, dtype=np.int64).reshape(len(sites), self.dim)
        out = np.array(self.background(arr), dtype=float).reshape(len(sites))
        if self.perturbation:
            for i, s in enumerate(sites):
                out[i] += self.perturbation.get(s, 0.0)
        return out

    def value(self, s) -> float:
        return float(self.values([s])[0])

    def perturbed(self, phi: Mapping) -> "LatticeConfiguration":
        """New configuration ``u + phi`` (overlays add)."""
        merged = dict(self.perturbation)
        for s, v in phi.items():
            s = as_site(s, self.dim)
            merged[s] = merged.get(s, 0.0) + float(v)
        return LatticeConfiguration(self.background, merged, self.dim)

    def base(self) -> "LatticeConfiguration":
        return LatticeConfiguration(self.background, None, self.dim)

    def __repr__(self):
        return f"LatticeConfiguration({self.background!r}, support={len(self.perturbation)})"


def _phi_map(phi: Mapping | None, dim: int) -> dict[Site, float]:
    if phi is None:
        return {}
    if not isinstance(phi, Mapping):
        raise ContractError("perturbation must be a finite mapping site -> value")
    out = {}
    for s, v in phi.items():
        v = float(v)
        if v != 0.0:
            out[as_site(s, dim)] = v
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# local assembly


class _Assembly:
    """All terms meeting an anchor set, with grouped vectorized evaluation."""

    def __init__(self, spec: InteractionSpec, anchor: Iterable[Site]):
        self.spec = spec
        self.anchor = site_set(anchor, spec.dim)
        self.entries = spec.touching(self.anchor)
        local = sorted({_add(b, o) for b, _, t in self.entries for o in t.cell} | set(self.anchor))
        self.sites = local
        self.index = {s: i for i, s in enumerate(local)}
        self.anchor_idx = np.array([self.index[s] for s in self.anchor], dtype=np.int64)
        groups: dict[int, list] = {}
        for pos, (base, _, term) in enumerate(self.entries):
            g = groups.setdefault(id(term), [term, [], [], []])
            g[1].append(pos)
            g[2].append([self.index[_add(base, o)] for o in term.cell])
            g[3].append(base)
        self.groups = [
            (t, np.array(p, dtype=np.int64), np.array(ix, dtype=np.int64),
             np.array(b, dtype=np.int64).T)
            for t, p, ix, b in groups.values()
        ]

    @property
    def n_terms(self) -> int:
        return len(self.entries)

    def term_energies(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_terms)
        for term, pos, ix, bases in self.groups:
            vals = np.asarray(term.energy(x[ix].T, bases), dtype=float)
            out[pos] = np.broadcast_to(vals, pos.shape)
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.isfinite(out))[0])
            base, idx, term = self.entries[bad]
            raise EvaluationError(f"non-finite energy in term {term.name}[{idx}] at base {base}")
        return out

    def energy(self, x: np.ndarray) -> float:
        return math.fsum(self.term_energies(x))

    def _term_grads(self, x):
        k_max = max((len(t.cell) for t, *_ in self.groups), default=0)
        vals = np.zeros((self.n_terms, k_max))
        cols = np.full((self.n_terms, k_max), -1, dtype=np.int64)
        for term, pos, ix, bases in self.groups:
            k = len(term.cell)
            g = np.asarray(term.grad(x[ix].T, bases), dtype=float)
            vals[pos, :k] = np.broadcast_to(g, (k, len(pos))).T
            cols[pos, :k] = ix
        return vals, cols

    def gradient(self, x: np.ndarray) -> np.ndarray:
        vals, cols = self._term_grads(x)
        out = np.zeros(len(self.sites))
        mask = cols >= 0
        np.add.at(out, cols[mask], vals[mask])
        if not np.all(np.isfinite(out)):
            raise EvaluationError("non-finite gradient")
        return out

    def term_hessians(self, x: np.ndarray):
        """Yield ``(position, local index list, k x k block)`` in term order."""
        blocks = [None] * self.n_terms
        for term, pos, ix, bases in self.groups:
            k = len(term.cell)
            h = np.asarray(term.hess(x[ix].T, bases), dtype=float)
            h = np.broadcast_to(h, (k, k, len(pos)))
            for j, p in enumerate(pos):
                blocks[p] = (ix[j], h[:, :, j])
        return blocks

    def hessian(self, x: np.ndarray) -> np.ndarray:
        n = len(self.sites)
        out = np.zeros((n, n))
        for term, pos, ix, bases in self.groups:
            k = len(term.cell)
            h = np.broadcast_to(np.asarray(term.hess(x[ix].T, bases), dtype=float),
                                (k, k, len(pos)))
            for a in range(k):
                for b in range(k):
                    np.add.at(out, (ix[:, a], ix[:, b]), h[a, b])
        if not np.all(np.isfinite(out)):
            raise EvaluationError("non-finite hessian")
        return out

    def local_values(self, config: LatticeConfiguration) -> np.ndarray:
        return config.values(self.sites)

    def phi_vector(self, phi: Mapping[Site, float]) -> np.ndarray:
        v = np.zeros(len(self.sites))
        for s, val in phi.items():
            v[self.index[s]] = val
        return v


# ---------------------------------------------------------------------------
# operations


def window_energy(spec: InteractionSpec, config: LatticeConfiguration, window: Iterable) -> float:
    """Sum of ``H_B(config)`` over all terms meeting ``window``."""
    asm = _Assembly(spec, window)
    return asm.energy(asm.local_values(config))


def relative_energy(spec: InteractionSpec, u: LatticeConfiguration, phi: Mapping,
                    anchor: Iterable | None = None) -> float:
    """``Gamma(phi; u, anchor)``; the anchor is widened to contain ``supp(phi)``."""
    phi = _phi_map(phi, spec.dim)
    anchor = set(site_set(anchor or [], spec.dim)) | set(phi)
    if not anchor:
        return 0.0
    asm = _Assembly(spec, anchor)
    x = asm.local_values(u)
    if not phi:
        return 0.0
    diff = asm.term_energies(x) - asm.term_energies(x + asm.phi_vector(phi))
    return math.fsum(diff)


def residual(spec: InteractionSpec, config: LatticeConfiguration, site) -> float:
    """Equilibrium residual ``E_i = sum_{B containing i} dH_B/du_i``."""
    s = as_site(site, spec.dim)
    asm = _Assembly(spec, [s])
    return float(asm.gradient(asm.local_values(config))[asm.index[s]])


def residuals(spec: InteractionSpec, config: LatticeConfiguration, sites: Iterable) -> np.ndarray:
    """Residuals at every site of ``sites`` (in sorted order), one assembly."""
    asm = _Assembly(spec, sites)
    g = asm.gradient(asm.local_values(config))
    return g[asm.anchor_idx]


def hessian_entry(spec: InteractionSpec, config: LatticeConfiguration, p, q) -> float:
    """``sum_{B containing p and q} d^2 H_B / du_p du_q``."""
    p = as_site(p, spec.dim)
    q = as_site(q, spec.dim)
    if _chebyshev(p, q) >= spec.range_bound:
        return 0.0
    asm = _Assembly(spec, [p])
    x = asm.local_values(config)
    if q not in asm.index:
        return 0.0
    ip, iq = asm.index[p], asm.index[q]
    total = []
    for blk in asm.term_hessians(x):
        ix, h = blk
        ix = list(ix)
        if ip in ix and iq in ix:
            total.append(h[ix.index(ip), ix.index(iq)])
    return math.fsum(total)


@dataclass(frozen=True)
class FerromagneticReport:
    is_ferromagnetic: bool
    worst_entry: tuple[Site, Site, float] | None
    n_probes: int
    n_entries: int
    tolerance: float
    note: str = "sampled at the supplied probe configurations only"


def ferromagnetic_check(spec: InteractionSpec, probe_configs: Sequence[LatticeConfiguration],
                        window: Iterable, tol: float = 1e-12) -> FerromagneticReport:
    """Check every off-diagonal per-term second partial is ``<= tol`` at each probe."""
    if not probe_configs:
        raise ContractError("probe set must be nonempty")
    asm = _Assembly(spec, window)
    worst = None
    count = 0
    for cfg in probe_configs:
        x = asm.local_values(cfg)
        for ix, h in asm.term_hessians(x):
            k = len(ix)
            for a in range(k):
                for b in range(k):
                    if a == b:
                        continue
                    count += 1
                    val = float(h[a, b])
                    if worst is None or val > worst[2]:
                        worst = (asm.sites[ix[a]], asm.sites[ix[b]], val)
    ok = worst is None or worst[2] <= tol
    return FerromagneticReport(ok, worst, len(probe_configs), count, tol)


@dataclass(frozen=True)
class CoercivityResult:
    t_values: tuple[float, ...]
    values: tuple[float, ...]
    passed: bool


def coercivity_probe(spec: InteractionSpec, u: LatticeConfiguration, phi: Mapping | None,
                     site, t_values: Sequence[float] = (-1000.0, -100.0, -10.0, 0.0,
                                                        10.0, 100.0, 1000.0)) -> CoercivityResult:
    """Relative energy growth along a single-site ray ``u + phi + t delta_site``.

    Passes when, on each side, values at the sampled tail magnitudes ``|t| >= 10``
    are positive and strictly increase with ``|t|``.
    """
    s = as_site(site, spec.dim)
    phi = _phi_map(phi, spec.dim)
    support = set(phi) | {s}
    asm = _Assembly(spec, support)
    x0 = asm.local_values(u) + asm.phi_vector(phi)
    e0 = asm.term_energies(x0)
    ts = [float(t) for t in t_values]
    vals = []
    for t in ts:
        if t == 0.0:
            vals.append(0.0)
            continue
        x = x0.copy()
        x[asm.index[s]] += t
        vals.append(math.fsum(asm.term_energies(x) - e0))
    ok = True
    for sign in (-1.0, 1.0):
        tail = sorted((abs(t), v) for t, v in zip(ts, vals) if t * sign >= 10.0)
        if not tail:
            ok = False
            continue
        if tail[0][1] <= 0:
            ok = False
        if any(b[1] <= a[1] for a, b in zip(tail, tail[1:])):
            ok = False
    return CoercivityResult(tuple(ts), tuple(vals), ok)


def summability_probe(spec: InteractionSpec, u: LatticeConfiguration, phi: Mapping,
                      L_values: Sequence[int], t_values: Sequence[float] = (0.0, 0.5, 1.0)
                      ) -> dict[int, tuple[float, float]]:
    """Tail sums of first and second partials over terms of diameter ``>= L``.

    For each ``L`` returns ``(sum |dH_B/du_i|, sum |d^2 H_B/du_i du_j|)`` over terms
    meeting ``supp(phi)`` and all sites of each term, maximized over ``t``.
    """
    phi = _phi_map(phi, spec.dim)
    if not phi:
        return {int(L): (0.0, 0.0) for L in L_values}
    asm = _Assembly(spec, phi)
    diam = np.array([t.range for _, _, t in asm.entries])
    x0 = asm.local_values(u)
    dphi = asm.phi_vector(phi)
    per_t = []
    for t in t_values:
        x = x0 + float(t) * dphi
        gvals, _ = asm._term_grads(x)
        g_abs = np.abs(gvals).sum(axis=1)
        h_abs = np.array([np.abs(h).sum() for _, h in asm.term_hessians(x)])
        per_t.append((g_abs, h_abs))
    out = {}
    for L in L_values:
        mask = diam >= L
        g = max(math.fsum(ga[mask]) for ga, _ in per_t)
        h = max(math.fsum(ha[mask]) for _, ha in per_t)
        out[int(L)] = (g, h)
    return out


def check_terms(spec: InteractionSpec, config: LatticeConfiguration, window: Iterable,
                rel_tol: float = 1e-12) -> list[str]:
    """Return a list of problems (asymmetric or non-finite hessians) at ``config``."""
    asm = _Assembly(spec, window)
    x = asm.local_values(config)
    problems = []
    for (base, idx, term), (_, h) in zip(asm.entries, asm.term_hessians(x)):
        if not np.all(np.isfinite(h)):
            problems.append(f"{term.name}[{idx}]@{base}: non-finite hessian")
        elif not np.allclose(h, h.T, rtol=rel_tol, atol=rel_tol * max(1.0, np.abs(h).max())):
            problems.append(f"{term.name}[{idx}]@{base}: asymmetric hessian")
    return problems
