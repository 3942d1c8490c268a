"""Numerical exercises of the comparison argument behind the ground-state theorem.

Two tools are provided:

* the fundamental-theorem identity
  ``E_i(u + eta) - E_i(u) = sum_j eta_j int_0^1 d^2 S / du_i du_j (u + t eta) dt``,
  evaluated with Gauss-Legendre quadrature;
* contact checks: if ``eta`` has one sign, vanishes at a site ``i*`` and the residuals
  of ``u`` and ``u + eta`` agree there, then every term of the identity has the
  same sign, so ``eta`` must vanish at every graph neighbour of ``i*``. Iterating
  over a connected set of sites where both configurations are equilibria
  propagates the contact to the whole set and its frontier.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContactError, ContractError, GraphError, PreconditionError
from .graph import InteractionGraph, build_graph, components, is_transitive
from .model import (InteractionSpec, LatticeConfiguration, Site, _Assembly, _phi_map,
                    as_site, residuals, site_set)


def _gauss_legendre(n: int):
    if n < 1:
        raise ContractError("quadrature_n must be positive")
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _identity_terms(spec, u_star, eta, site, quadrature_n):
    """``(lhs, {j: int_0^1 H_ij dt})`` for the sites ``j`` sharing a term with ``site``."""
    i = as_site(site, spec.dim)
    asm = _Assembly(spec, [i])
    x0 = asm.local_values(u_star)
    d = np.zeros(len(asm.sites))
    for s, v in eta.items():
        if s in asm.index:
            d[asm.index[s]] = v
    ii = asm.index[i]
    lhs = float(asm.gradient(x0 + d)[ii] - asm.gradient(x0)[ii])
    nodes, weights = _gauss_legendre(quadrature_n)
    integral = np.zeros(len(asm.sites))
    for t, w in zip(nodes, weights):
        integral += w * asm.hessian(x0 + t * d)[ii]
    return lhs, {s: float(integral[k]) for s, k in asm.index.items()}, d


def hilbert_identity_check(spec: InteractionSpec, u_star: LatticeConfiguration, eta: Mapping,
                           site, quadrature_n: int = 16) -> float:
    """``|LHS - RHS|`` of the fundamental-theorem identity at ``site``."""
    eta = _phi_map(eta, spec.dim)
    if not eta:
        return 0.0
    lhs, integrals, _ = _identity_terms(spec, u_star, eta, site, quadrature_n)
    rhs = sum(v * integrals.get(s, 0.0) for s, v in eta.items())
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class ContactScenario:
    """``u*``, a single-signed ``eta``, a touching site ``i*`` and a window ``S``."""

    base: LatticeConfiguration
    eta: dict
    contact_site: Site
    window: tuple
    sign: int = 0
    label: str = "scenario"

    @classmethod
    def create(cls, spec: InteractionSpec, base: LatticeConfiguration, eta: Mapping,
               contact_site, window: Iterable, scenario_tol: float = 1e-9,
               label: str = "scenario") -> "ContactScenario":
        """Build and validate a scenario (sign and residual equality at ``i*``)."""
        eta = _phi_map(eta, spec.dim)
        vals = np.array(list(eta.values()))
        if vals.size and vals.min() < 0.0 < vals.max():
            raise PreconditionError("eta changes sign")
        sign = 0 if not vals.size else (1 if vals.max() > 0 else -1)
        i = as_site(contact_site, spec.dim)
        win = tuple(site_set(window, spec.dim))
        if i not in win:
            raise ContractError(f"contact site {i} is not in the window")
        r0 = residuals(spec, base, [i])[0]
        r1 = residuals(spec, base.perturbed(eta), [i])[0]
        if abs(r1 - r0) > scenario_tol:
            raise PreconditionError(
                f"residuals differ at the contact site by {abs(r1 - r0):.3e}")
        return cls(base, eta, i, win, sign, label)


def _graph_for(spec, scenario, sites):
    probes = [scenario.base, scenario.base.perturbed(scenario.eta)]
    return build_graph(spec, probes, sites, provenance="u* and u* + eta")


def _halo(spec, sites):
    r = spec.range_bound - 1
    out = set()
    for s in sites:
        for off in np.ndindex(*([2 * r + 1] * spec.dim)):
            out.add(tuple(c + o - r for c, o in zip(s, off)))
    return sorted(out)


@dataclass
class ContactResult:
    site: Site
    certified: list
    bounds: dict = field(default_factory=dict)  # neighbour -> certified bound on |eta_j|
    residual_gap: float = 0.0


def contact_check(spec: InteractionSpec, scenario: ContactScenario, contact_tol: float = 1e-8,
                  quadrature_n: int = 16, graph: InteractionGraph | None = None,
                  site=None) -> ContactResult:
    """Certify ``eta = 0`` at ``i*`` and at every graph neighbour of ``i*``.

    The bound ``|eta_j| <= |E_i(u*+eta) - E_i(u*)| / |int_0^1 H_ij dt|`` follows from
    the identity because all its terms share a sign. A neighbour whose actual
    ``|eta_j|`` exceeds ``contact_tol`` is a counterexample and raises
    :class:`ContactError`.
    """
    i = scenario.contact_site if site is None else as_site(site, spec.dim)
    eta = scenario.eta
    ei = abs(eta.get(i, 0.0))
    if ei > contact_tol:
        raise ContactError(f"eta does not touch at {i}: |eta| = {ei:.3e}", i, ei)
    if graph is None:
        graph = _graph_for(spec, scenario, _halo(spec, [i]))
    lhs, integrals, _ = _identity_terms(spec, scenario.base, eta, i, quadrature_n)
    bounds = {}
    certified = [i]
    for j in graph.neighbors(i):
        I = integrals.get(j, 0.0)
        bound = abs(lhs) / abs(I) if I != 0.0 else np.inf
        bounds[j] = float(bound)
        val = abs(eta.get(j, 0.0))
        if val > contact_tol:
            raise ContactError(f"counterexample: eta = {eta[j]!r} at neighbour {j} of {i} "
                               f"(certified bound {bound:.3e})", j, eta[j])
        if bound > contact_tol:
            raise ContactError(f"cannot certify neighbour {j} of {i}: bound {bound:.3e}", j,
                               bound)
        certified.append(j)
    return ContactResult(i, sorted(certified), bounds, abs(lhs))


@dataclass
class PropagationResult:
    certified: list  # S together with its frontier
    window: list
    frontier: list  # certified sites outside S
    strict: bool | None
    steps: int


def contact_propagation(spec: InteractionSpec, scenario: ContactScenario,
                        contact_tol: float = 1e-8, scenario_tol: float = 1e-9,
                        quadrature_n: int = 16) -> PropagationResult:
    """Propagate the contact from ``i*`` through the window ``S``.

    Both ``u*`` and ``u* + eta`` must be equilibria on ``S`` (within
    ``scenario_tol``). The result is ``S`` plus its distance-one frontier.
    """
    S = list(scenario.window)
    base = scenario.base
    r0 = residuals(spec, base, S)
    r1 = residuals(spec, base.perturbed(scenario.eta), S)
    worst = float(max(np.abs(r0).max(), np.abs(r1).max()))
    if worst > scenario_tol:
        raise PreconditionError(f"u* or u* + eta is not an equilibrium on the window "
                                f"(max residual {worst:.3e})")
    sites = _halo(spec, S)
    graph = _graph_for(spec, scenario, sites)
    members = set(S)
    done = {scenario.contact_site}
    certified = {scenario.contact_site}
    queue = deque([scenario.contact_site])
    steps = 0
    while queue:
        p = queue.popleft()
        res = contact_check(spec, scenario, contact_tol, quadrature_n, graph, site=p)
        steps += 1
        for q in res.certified:
            certified.add(q)
            if q in members and q not in done:
                done.add(q)
                queue.append(q)
    unreached = sorted(members - done)
    if unreached:
        raise GraphError(f"contact propagation stalled: window sites {unreached} "
                         "are not connected to the contact site inside the window")
    frontier = sorted(certified - members)
    strict = None
    if is_transitive(graph) and len(members) < len(graph.window):
        strict = bool(frontier)
    return PropagationResult(sorted(certified), S, frontier, strict, steps)


def synthetic_scenario(spec: InteractionSpec, base: LatticeConfiguration, window: Sequence,
                       rng: np.random.Generator, sign: int = 1, n_far: int = 3,
                       contact_site=None, label: str = "synthetic") -> ContactScenario:
    """A touching scenario whose ``eta`` lives strictly beyond the window's halo.

    Both configurations then coincide near the window, which is exactly what the
    contact argument forces; ``eta`` is nonzero only where the theorem is silent.
    """
    win = site_set(window, spec.dim)
    halo = set(_halo(spec, _halo(spec, win)))
    far = []
    r = spec.range_bound
    lo = min(s[0] for s in win) - 3 * r
    hi = max(s[0] for s in win) + 3 * r
    candidates = [s for s in _halo(spec, [(lo,) + (0,) * (spec.dim - 1),
                                          (hi,) + (0,) * (spec.dim - 1)]) if s not in halo]
    pick = rng.choice(len(candidates), size=min(n_far, len(candidates)), replace=False)
    for k in sorted(pick):
        far.append(candidates[k])
    eta = {s: float(sign * rng.uniform(0.1, 1.0)) for s in far}
    i = win[int(rng.integers(len(win)))] if contact_site is None else contact_site
    return ContactScenario.create(spec, base, eta, i, win, label=label)
