"""Built-in interaction models.

All nearest-neighbour bonds are ``0.5 * (u_p - u_q)**2`` and media enter as
single-site terms ``-V(u * alpha)``, so the Frenkel-Kontorova energy reads
``sum_n 0.5 * (u_n - u_{n+1})**2 - V(u_n alpha)``.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError
from .model import InteractionSpec, InteractionTerm, TorusPotential

GOLDEN_OMEGA = (math.sqrt(5.0) - 1.0) / 2.0
DEMO_ALPHA = (1.0, math.sqrt(2.0))


def _ones(x):
    return np.ones_like(np.asarray(x[0], dtype=float))


def bond_term(offset=(1,), stiffness: float = 1.0, name: str = "bond") -> InteractionTerm:
    """``0.5 * k * (u_0 - u_offset)**2``; mixed partial ``-k``."""
    k = float(stiffness)
    zero = tuple(0 for _ in offset)

    def energy(x, base):
        return 0.5 * k * (x[0] - x[1]) ** 2

    def grad(x, base):
        d = k * (x[0] - x[1])
        return np.stack([d, -d])

    def hess(x, base):
        one = k * _ones(x)
        return np.array([[one, -one], [-one, one]])

    return InteractionTerm((zero, tuple(offset)), energy, grad, hess, name)


def medium_term(potential: TorusPotential, dim: int = 1) -> InteractionTerm:
    """Single-site ``-V(u * alpha)``."""
    zero = tuple(0 for _ in range(dim))

    def energy(x, base):
        return -potential(potential.along(x[0]))

    def grad(x, base):
        return -potential.d_alpha(potential.along(x[0]))[None]

    def hess(x, base):
        return -potential.d2_alpha(potential.along(x[0]))[None, None]

    return InteractionTerm((zero,), energy, grad, hess, "medium")


def quadratic_site_term(stiffness: float = 1.0, dim: int = 1) -> InteractionTerm:
    """``0.5 * k * u**2`` on one site."""
    k = float(stiffness)
    zero = tuple(0 for _ in range(dim))
    return InteractionTerm(
        (zero,),
        lambda x, base: 0.5 * k * x[0] ** 2,
        lambda x, base: (k * x[0])[None],
        lambda x, base: (k * _ones(x))[None, None],
        "onsite",
    )


def product_term(offset=(1,), coupling: float = 1.0) -> InteractionTerm:
    """``c * u_0 * u_offset``; antiferromagnetic for ``c > 0``."""
    c = float(coupling)
    zero = tuple(0 for _ in offset)

    def hess(x, base):
        z = 0.0 * _ones(x)
        cc = c * _ones(x)
        return np.array([[z, cc], [cc, z]])

    return InteractionTerm(
        (zero, tuple(offset)),
        lambda x, base: c * x[0] * x[1],
        lambda x, base: np.stack([c * x[1], c * x[0]]),
        hess,
        "product",
    )


def three_body_term(kappa: float = 0.25) -> InteractionTerm:
    """Cell ``{0, 1, 2}``: two bonds plus ``kappa * log cosh(u_2 - u_0)``.

    Mixed partials are ``-1, -1`` for the bonded pairs and ``-kappa sech^2`` for
    the outer pair, so the term is ferromagnetic for ``kappa >= 0``.
    """
    kap = float(kappa)

    def energy(x, base):
        z = x[2] - x[0]
        lc = np.logaddexp(z, -z) - math.log(2.0)
        return 0.5 * (x[1] - x[0]) ** 2 + 0.5 * (x[2] - x[1]) ** 2 + kap * lc

    def grad(x, base):
        th = kap * np.tanh(x[2] - x[0])
        return np.stack([
            -(x[1] - x[0]) - th,
            (x[1] - x[0]) - (x[2] - x[1]),
            (x[2] - x[1]) + th,
        ])

    def hess(x, base):
        s = kap / np.cosh(x[2] - x[0]) ** 2
        one = _ones(x)
        return np.array([
            [one + s, -one, -s],
            [-one, 2 * one, -one],
            [-s, -one, one + s],
        ])

    return InteractionTerm(((0,), (1,), (2,)), energy, grad, hess, "three-body")


def _axis(j: int, dim: int) -> tuple[int, ...]:
    return tuple(1 if i == j else 0 for i in range(dim))


def fk_periodic(potential: TorusPotential | None = None, dim: int = 1) -> InteractionSpec:
    """Classic Frenkel-Kontorova chain (or its ``Z^dim`` analogue) in a periodic medium."""
    if potential is None:
        potential = TorusPotential.zero((1.0,))
    if potential.d != 1:
        raise ContractError("periodic medium must live on a one-dimensional torus")
    terms = [bond_term(_axis(j, dim)) for j in range(dim)]
    if not potential.is_zero:
        terms.append(medium_term(potential, dim))
    terms = tuple(terms)
    return InteractionSpec(dim, lambda base: terms, 2, potential, "fk-periodic")


def fk_quasiperiodic(potential: TorusPotential) -> InteractionSpec:
    """Frenkel-Kontorova chain in a quasi-periodic medium ``V(u alpha)``, ``d >= 2``."""
    if potential.d < 2:
        raise ContractError("quasi-periodic medium needs d >= 2")
    terms = [bond_term()]
    if not potential.is_zero:
        terms.append(medium_term(potential))
    terms = tuple(terms)
    return InteractionSpec(1, lambda base: terms, 2, potential, "fk-quasiperiodic")


def long_range_pair(couplings: Mapping[int, float] | None = None, cutoff: int = 20,
                    decay: float = 0.5, potential: TorusPotential | None = None
                    ) -> InteractionSpec:
    """Pair terms ``-(c_r / 2) (u_n - u_{n+r})**2`` for ``1 <= r <= cutoff``.

    ``c_r`` is the mixed partial of the pair term; by default ``c_r = -decay**r``.
    """
    if couplings is None:
        couplings = {r: -(decay**r) for r in range(1, cutoff + 1)}
    couplings = {int(r): float(c) for r, c in couplings.items() if c != 0.0}
    if any(r < 1 for r in couplings):
        raise ContractError("pair distances must be positive")
    terms = [bond_term((r,), -c, f"pair{r}") for r, c in sorted(couplings.items())]
    if potential is not None and not potential.is_zero:
        terms.append(medium_term(potential))
    terms = tuple(terms)
    rmax = max(couplings, default=0)
    return InteractionSpec(1, lambda base: terms, rmax + 1, potential, "long-range-pair",
                           params={"couplings": couplings})


def three_body_demo(kappa: float = 0.25, potential: TorusPotential | None = None
                    ) -> InteractionSpec:
    terms = [three_body_term(kappa)]
    if potential is not None and not potential.is_zero:
        terms.append(medium_term(potential))
    terms = tuple(terms)
    return InteractionSpec(1, lambda base: terms, 3, potential, "three-body-demo",
                           params={"kappa": kappa})


def antiferromagnetic_demo(coupling: float = 1.0) -> InteractionSpec:
    """``u_n u_{n+1} + u_n**2``: coercive but with mixed partial ``+coupling``."""
    terms = (product_term((1,), coupling), quadratic_site_term(2.0))
    return InteractionSpec(1, lambda base: terms, 2, None, "antiferromagnetic-demo")


def decoupled_demo(stiffness: float = 1.0) -> InteractionSpec:
    """On-site terms only: no mixed partials, edgeless interaction graph."""
    terms = (quadratic_site_term(stiffness),)
    return InteractionSpec(1, lambda base: terms, 1, None, "decoupled")


def two_block_demo(cut: int = 0) -> InteractionSpec:
    """Nearest-neighbour chain with the bond ``(cut - 1, cut)`` removed."""
    bond = bond_term()

    def terms_at(base):
        return () if base[0] == cut - 1 else (bond,)

    return InteractionSpec(1, terms_at, 2, None, "two-block", translation_invariant=False)


def demo_potential(epsilon: float = 0.01, alpha: Sequence[float] = DEMO_ALPHA) -> TorusPotential:
    """``epsilon * sum_j cos(2 pi theta_j)`` on the ``len(alpha)``-torus."""
    d = len(alpha)
    coeffs = {}
    for j in range(d):
        for s in (1, -1):
            k = tuple(s if i == j else 0 for i in range(d))
            coeffs[k] = 0.5 * epsilon
    return TorusPotential(alpha, coeffs)


def cosine_potential(epsilon: float) -> TorusPotential:
    """Periodic ``V(x) = epsilon * cos(2 pi x)``."""
    return TorusPotential((1.0,), {(1,): 0.5 * epsilon, (-1,): 0.5 * epsilon})
