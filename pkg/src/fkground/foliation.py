"""Beta-indexed families of equilibria and the foliation axioms.

A family is produced by a *generator*: either a solved hull (members are
``u_n^beta = n omega + h_beta(n omega alpha)``) or a closed-form equilibrium family
such as the linear configurations ``u_n^beta = n omega + beta`` of the free chain.
Members are sampled on a finite window; the axiom checks report what can honestly
be certified from those samples plus the generator's continuity in ``beta``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ContractError, FoliationError
from .hull import HullFunction, monotonicity_margin, sample_config, sample_values
from .model import (ClosedForm, InteractionSpec, LatticeConfiguration, Site, chain,
                    linear_background, residuals, site_set)

DEFAULT_HULL_TOL = 1e-10
A3_TAIL = 1e3


def default_beta_grid(n: int = 101, half_width: float = 2.0, tail: float = A3_TAIL
                      ) -> list[float]:
    """``n`` points on ``[-half_width, half_width]`` plus tail points ``+-tail``."""
    core = np.linspace(-half_width, half_width, n).tolist()
    return [-tail] + core + [tail]


# ---------------------------------------------------------------------------
# generators


class HullFamily:
    """Translates of a solved hull function."""

    kind = "hull"

    def __init__(self, spec: InteractionSpec, hull: HullFunction, omega: float | None = None):
        if spec.dim != 1:
            raise ContractError("hull families live on the one-dimensional chain")
        self.spec = spec
        self.hull = hull
        self.omega = hull.omega if omega is None else float(omega)
        self._margin = None

    def member(self, beta: float) -> LatticeConfiguration:
        return sample_config(self.hull, self.omega, beta)

    def values(self, beta: float, sites: Sequence[Site]) -> np.ndarray:
        return sample_values(self.hull, [s[0] for s in sites], beta, self.omega)

    def monotonicity(self) -> float:
        """``min (1 + d_alpha h)``: lower bound on ``d u_i^beta / d beta``."""
        if self._margin is None:
            self._margin = monotonicity_margin(self.hull)
        return self._margin

    def displacement_bound(self) -> float:
        """``2 ||h||`` bounding ``|u_i^beta - u_i^0 - beta|`` (coefficient l1 norm)."""
        return 2.0 * self.hull.l1_norm()

    def describe(self) -> str:
        return f"hull(omega={self.omega!r}, N={self.hull.n_trunc})"


class ClosedFormFamily:
    """Family given by a vectorized ``fn(beta, sites[(n, dim)]) -> values``."""

    kind = "closed-form"

    def __init__(self, spec: InteractionSpec, fn: Callable[[float, np.ndarray], np.ndarray],
                 label: str = "closed-form", monotonicity: float | None = None):
        self.spec = spec
        self.fn = fn
        self.label = label
        self._monotonicity = monotonicity

    @classmethod
    def linear(cls, spec: InteractionSpec, omega) -> "ClosedFormFamily":
        """``u_i^beta = omega . i + beta``; an equilibrium family of the free chain."""
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        if w.size != spec.dim:
            raise ContractError("omega must have one component per lattice direction")

        def fn(beta, sites):
            return sites @ w + beta

        return cls(spec, fn, f"linear(omega={w.tolist()})", monotonicity=1.0)

    def member(self, beta: float) -> LatticeConfiguration:
        beta = float(beta)
        return LatticeConfiguration(ClosedForm(lambda s: self.fn(beta, s),
                                               f"{self.label}@beta={beta!r}"),
                                    None, self.spec.dim)

    def values(self, beta: float, sites: Sequence[Site]) -> np.ndarray:
        arr = np.array(sites, dtype=np.int64).reshape(len(sites), self.spec.dim)
        return np.asarray(self.fn(float(beta), arr), dtype=float)

    def monotonicity(self) -> float | None:
        return self._monotonicity

    def displacement_bound(self) -> float | None:
        return None

    def describe(self) -> str:
        return self.label


# ---------------------------------------------------------------------------
# family


@dataclass
class FoliationFamily:
    beta_grid: tuple[float, ...]
    members: tuple[LatticeConfiguration, ...]
    window: tuple[Site, ...]
    source: str
    generator: object
    spec: InteractionSpec
    site_residuals: np.ndarray  # (n_beta, n_window)
    equilibrium_tol: float
    axiom_report: "AxiomReport | None" = None

    @property
    def max_residuals(self) -> np.ndarray:
        if self.site_residuals.size == 0:
            return np.zeros(len(self.beta_grid))
        return np.abs(self.site_residuals).max(axis=1)

    def values(self) -> np.ndarray:
        """Member values on the window, shape ``(n_beta, n_window)``."""
        return np.array([self.generator.values(b, self.window) for b in self.beta_grid])


def _effective_tol(tol: float, vals: np.ndarray) -> float:
    # an exact closed form (tol 0) is still evaluated in floating point
    if tol > 0:
        return tol
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    return 16.0 * np.finfo(float).eps * scale


def build_foliation(generator, beta_grid: Sequence[float] | None = None,
                    window: Iterable | None = None, equilibrium_tol: float | None = None,
                    threads: int = 1) -> FoliationFamily:
    """Sample members on ``window`` and check (A1) for each of them.

    Raises :class:`FoliationError` naming the worst site of the first rejected member.
    """
    spec = generator.spec
    betas = [float(b) for b in (default_beta_grid() if beta_grid is None else beta_grid)]
    if not betas:
        raise ContractError("beta grid must be nonempty")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ContractError("beta grid must be strictly increasing")
    win = tuple(site_set(chain(-50, 50) if window is None else window, spec.dim))
    if not win:
        raise ContractError("window must be nonempty")
    if equilibrium_tol is None:
        equilibrium_tol = DEFAULT_HULL_TOL if generator.kind == "hull" else 0.0
    if equilibrium_tol < 0:
        raise ContractError("equilibrium_tol must be nonnegative")
    margin = generator.monotonicity()
    if generator.kind == "hull" and not margin > 0.0:
        # strict ordering (A2)' is required of hull generators
        raise FoliationError(f"hull monotonicity margin {margin:.3e} is not positive")

    members = [generator.member(b) for b in betas]

    def one(cfg):
        return residuals(spec, cfg, win)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        res = np.array(list(pool.map(one, members)))

    for b, cfg, r in zip(betas, members, res):
        tol = _effective_tol(equilibrium_tol, generator.values(b, win))
        k = int(np.argmax(np.abs(r)))
        if not abs(r[k]) < tol:
            raise FoliationError(
                f"member beta={b!r} is not an equilibrium: |E| = {abs(r[k]):.3e} at site "
                f"{win[k]} (tolerance {tol:.1e})", beta=b, site=win[k], residual=float(r[k]))
    return FoliationFamily(tuple(betas), tuple(members), win, generator.kind, generator,
                           spec, res, float(equilibrium_tol))


def restrict(fam: FoliationFamily, sub_window: Iterable) -> FoliationFamily:
    """Same members observed on a sub-window."""
    sub = tuple(site_set(sub_window, fam.spec.dim))
    pos = {s: i for i, s in enumerate(fam.window)}
    missing = [s for s in sub if s not in pos]
    if missing or not sub:
        raise ContractError(f"sub-window must be a nonempty subset of the window; missing {missing}")
    idx = [pos[s] for s in sub]
    return FoliationFamily(fam.beta_grid, fam.members, sub, fam.source, fam.generator,
                           fam.spec, fam.site_residuals[:, idx], fam.equilibrium_tol)


# ---------------------------------------------------------------------------
# axioms


@dataclass
class AxiomResult:
    passed: bool
    detail: str
    witness: dict = field(default_factory=dict)


@dataclass
class AxiomReport:
    a1: AxiomResult
    a2: AxiomResult
    a2_strict: AxiomResult
    a3: AxiomResult
    a4: AxiomResult
    ordering_margins: list  # per beta: min gap to the next member (None for the last)
    monotonicity: list  # per beta: min gap / spacing to the next member (None for the last)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in (self.a1, self.a2, self.a2_strict, self.a3, self.a4))

    def as_dict(self) -> dict:
        out = {}
        for name in ("a1", "a2", "a2_strict", "a3", "a4"):
            r = getattr(self, name)
            out[name] = {"passed": r.passed, "detail": r.detail, "witness": r.witness}
        out["passed"] = self.passed
        return out


def _check_a1(fam: FoliationFamily) -> AxiomResult:
    mr = fam.max_residuals
    k = int(np.argmax(mr))
    return AxiomResult(True, f"max residual {mr[k]:.3e} (tolerance {fam.equilibrium_tol:.1e})",
                       {"beta": fam.beta_grid[k], "max_abs_residual": float(mr[k])})


def _check_a2(fam, vals):
    betas = np.asarray(fam.beta_grid)
    gaps = vals[1:] - vals[:-1]
    margins = gaps.min(axis=1)
    slopes = margins / np.diff(betas)
    k = int(np.argmin(margins))
    j = int(np.argmin(gaps[k]))
    wit = {"site": list(fam.window[j]), "beta_pair": [betas[k], betas[k + 1]],
           "gap": float(gaps[k, j])}
    a2 = AxiomResult(bool(margins[k] >= 0.0), f"min consecutive gap {margins[k]:.3e}", wit)
    detail = f"strict margin {margins[k]:.3e}"
    strict_ok = bool(margins[k] > 0.0)
    m = fam.generator.monotonicity()
    if m is not None and fam.source == "hull":
        # mean value theorem: gap >= spacing * min(1 + d_alpha h)
        worst = float(np.min(margins - np.diff(betas) * m))
        detail += f"; min(gap - spacing * monotonicity_margin) = {worst:.3e}"
        wit = dict(wit, monotonicity_margin=m, mvt_slack=worst)
        strict_ok = strict_ok and m > 0 and worst >= -1e-10
    a2s = AxiomResult(strict_ok, detail, wit)
    return a2, a2s, margins.tolist() + [None], slopes.tolist() + [None]


def _check_a3(fam, vals, a3_threshold):
    betas = np.asarray(fam.beta_grid)
    ref = int(np.argmin(np.abs(betas)))
    up = float((vals[-1] - vals[ref]).min())
    down = float((vals[0] - vals[ref]).max())
    sampled = up >= a3_threshold and down <= -a3_threshold
    wit = {"beta_min": betas[0], "beta_max": betas[-1], "beta_ref": betas[ref],
           "min_rise": up, "max_fall": down, "threshold": a3_threshold}
    bound = fam.generator.displacement_bound()
    if bound is not None:
        # u_i^beta - u_i^0 lies in [beta - 2||h||, beta + 2||h||] for every site
        wit["displacement_bound"] = bound
        analytic = math.isfinite(bound)
        return AxiomResult(sampled and analytic,
                           f"sampled rise {up:.3e} / fall {down:.3e}; certified analytically by "
                           f"|u^beta - u^0 - beta| <= {bound:.3e}", wit)
    return AxiomResult(sampled, f"sampled rise {up:.3e} / fall {down:.3e} "
                                f"(threshold {a3_threshold:g})", wit)


def _check_a4(fam, vals, targets, tol=1e-9):
    betas = np.asarray(fam.beta_grid)
    gen = fam.generator
    worst = 0.0
    worst_wit = {}
    failures = []
    count = 0
    for j, s in enumerate(fam.window):
        col = vals[:, j]
        for v in targets:
            count += 1
            k = int(np.searchsorted(col, v, side="left"))
            if k == 0 or k == len(col):
                if k == 0 and col[0] == v:
                    bw = float(betas[0])
                else:
                    failures.append({"site": list(s), "value": v, "reason": "not bracketed"})
                    continue
            else:
                lo, hi = float(betas[k - 1]), float(betas[k])

                def f(b, s=s, v=v):
                    return float(gen.values(b, [s])[0]) - v

                flo, fhi = f(lo), f(hi)
                if flo == 0.0:
                    bw = lo
                elif fhi == 0.0:
                    bw = hi
                elif flo * fhi > 0:
                    failures.append({"site": list(s), "value": v, "reason": "no sign change"})
                    continue
                else:
                    bw = brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                                maxiter=200)
            err = abs(float(gen.values(bw, [s])[0]) - v)
            if err >= tol:
                failures.append({"site": list(s), "value": v, "beta": bw, "error": err})
            if err >= worst:
                worst = err
                worst_wit = {"site": list(s), "value": v, "beta": bw, "error": err}
    ok = not failures
    detail = (f"certified via IVT + A3: {count} (site, value) pairs bracketed, "
              f"max |u - v| = {worst:.2e}")
    wit = {"worst": worst_wit}
    if failures:
        wit["failures"] = failures[:10]
        detail += f"; {len(failures)} failure(s)"
    return AxiomResult(ok, detail, wit)


def check_axioms(fam: FoliationFamily, a4_targets: Sequence[float] | None = None,
                 a3_threshold: float = 100.0) -> AxiomReport:
    """Check (A1)-(A4) and (A2)' on the sampled family; failures carry witnesses."""
    vals = fam.values()
    a1 = _check_a1(fam)
    if len(fam.beta_grid) < 2:
        raise ContractError("axiom checks need at least two members")
    a2, a2s, margins, slopes = _check_a2(fam, vals)
    a3 = _check_a3(fam, vals, a3_threshold)
    if a4_targets is None:
        a4_targets = np.linspace(-3.0, 3.0, 7).tolist()
    if a2.passed:
        a4 = _check_a4(fam, vals, [float(v) for v in a4_targets])
    else:
        a4 = AxiomResult(False, "not checked: members are not ordered (A2 failed)")
    report = AxiomReport(a1, a2, a2s, a3, a4, margins, slopes)
    fam.axiom_report = report
    return report


def foliation_rows(fam: FoliationFamily) -> list[list]:
    """CSV rows ``beta, max_abs_residual, ordering_margin, monotonicity_margin``."""
    rep = fam.axiom_report or check_axioms(fam)
    rows = [["beta", "max_abs_residual", "ordering_margin", "monotonicity_margin"]]
    for b, r, m, s in zip(fam.beta_grid, fam.max_residuals, rep.ordering_margins,
                          rep.monotonicity):
        rows.append([b, float(r), "" if m is None else m, "" if s is None else s])
    return rows


def foliation_summary(fam: FoliationFamily) -> dict:
    rep = fam.axiom_report or check_axioms(fam)
    return {
        "source": fam.source,
        "generator": fam.generator.describe(),
        "n_beta": len(fam.beta_grid),
        "beta_min": fam.beta_grid[0],
        "beta_max": fam.beta_grid[-1],
        "window": [list(s) for s in (fam.window[0], fam.window[-1])],
        "n_sites": len(fam.window),
        "equilibrium_tol": fam.equilibrium_tol,
        "monotonicity_margin": fam.generator.monotonicity(),
        "axioms": rep.as_dict(),
    }
