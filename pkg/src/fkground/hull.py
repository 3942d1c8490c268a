"""Quasi-periodic hull functions and the spectral Newton solver for them.

A plane-like equilibrium of the quasi-periodic Frenkel-Kontorova chain is
``u_n = n omega + h(n omega alpha)`` with ``h`` on the ``d``-torus solving

    h(s + omega alpha) + h(s - omega alpha) - 2 h(s) + (alpha . grad V)(s + alpha h(s)) = 0.

``h`` is stored as a truncated Fourier series with the zero mode pinned to 0;
translates ``h_beta(s) = h(s + beta alpha) + beta`` carry the mean in ``offset``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.fft import fftn, ifftn
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ContractError, ConvergenceError, ResonanceError
from .model import LatticeConfiguration, TorusPotential

log = logging.getLogger(__name__)

DENSE_LIMIT = 64 * 64


def _kgrid(M: int, d: int) -> np.ndarray:
    """Integer wave numbers in FFT layout, shape ``(d, M, ..., M)``."""
    f = np.rint(np.fft.fftfreq(M, 1.0 / M)).astype(np.int64)
    return np.array(np.meshgrid(*([f] * d), indexing="ij"))


def _points(M: int, d: int) -> np.ndarray:
    """Tensor grid ``j / M`` on the torus, shape ``(M, ..., M, d)``."""
    s = np.arange(M) / M
    return np.stack(np.meshgrid(*([s] * d), indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class HullFunction:
    """Truncated Fourier representation of a hull function.

    ``coeffs`` is centered: entry ``[k_1 + N, ..., k_d + N]`` is the coefficient
    of ``exp(2 pi i k . s)``.
    """

    alpha: np.ndarray
    omega: float
    coeffs: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != self.alpha.size or len(set(c.shape)) != 1 or c.shape[0] % 2 != 1:
            raise ContractError("coefficients must be a centered odd cube matching alpha")
        if self.alpha.size < 2:
            raise ContractError("hull functions live on a torus of dimension d >= 2")
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.alpha.size

    @property
    def n_trunc(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @classmethod
    def zero(cls, alpha, omega: float, n_trunc: int = 32) -> "HullFunction":
        d = len(alpha)
        return cls(np.asarray(alpha, float), float(omega),
                   np.zeros((2 * n_trunc + 1,) * d, dtype=complex))

    @classmethod
    def from_grid(cls, values: np.ndarray, alpha, omega: float, offset: float = 0.0
                  ) -> "HullFunction":
        """Interpolate grid values on an odd ``M^d`` grid; the mean is dropped."""
        M = values.shape[0]
        c = np.fft.fftshift(fftn(values)) / values.size
        N = (M - 1) // 2
        c[(N,) * values.ndim] = 0.0
        return cls(np.asarray(alpha, float), float(omega), c, offset)

    def coefficient_map(self) -> dict[tuple[int, ...], complex]:
        """Nonzero coefficients keyed by wave vector."""
        N = self.n_trunc
        out = {}
        for idx in zip(*np.nonzero(self.coeffs)):
            out[tuple(int(i) - N for i in idx)] = complex(self.coeffs[idx])
        return out

    def _wave_alpha(self) -> np.ndarray:
        N = self.n_trunc
        k = np.arange(-N, N + 1)
        ks = np.meshgrid(*([k] * self.d), indexing="ij")
        return sum(kj * a for kj, a in zip(ks, self.alpha))

    def _with_coeffs(self, coeffs, offset=None) -> "HullFunction":
        return HullFunction(self.alpha, self.omega, coeffs,
                            self.offset if offset is None else offset)

    def derivative(self) -> "HullFunction":
        """``alpha . grad h`` as a hull function (offset dropped)."""
        return self._with_coeffs(self.coeffs * (2j * np.pi * self._wave_alpha()), 0.0)

    def shifted(self, t: float) -> "HullFunction":
        """``s -> h(s + t alpha)``, offset unchanged."""
        return self._with_coeffs(self.coeffs * np.exp(2j * np.pi * t * self._wave_alpha()))

    def evaluate(self, points, chunk: int = 4096) -> np.ndarray:
        """Direct trigonometric summation at arbitrary points ``(..., d)``."""
        pts = np.mod(np.asarray(points, dtype=float), 1.0)
        shape = pts.shape[:-1]
        pts = pts.reshape(-1, self.d)
        N = self.n_trunc
        k = np.arange(-N, N + 1)
        out = np.empty(len(pts))
        for start in range(0, len(pts), chunk):
            p = pts[start:start + chunk]
            E = np.exp(2j * np.pi * p[:, :, None] * k[None, None, :])
            R = np.einsum("pa,...a->p...", E[:, -1], self.coeffs)
            for j in range(self.d - 2, -1, -1):
                R = np.einsum("pb,p...b->p...", E[:, j], R)
            out[start:start + chunk] = R.real
        return out.reshape(shape) + self.offset

    def grid_values(self, M: int) -> np.ndarray:
        """Values on the ``M^d`` grid (``M >= 2N + 1``) by zero-padded inverse FFT."""
        N = self.n_trunc
        if M < 2 * N + 1:
            raise ContractError(f"grid {M} too coarse for truncation {N}")
        pad = np.zeros((M,) * self.d, dtype=complex)
        lo = M // 2 - N
        pad[(slice(lo, lo + 2 * N + 1),) * self.d] = self.coeffs
        vals = ifftn(np.fft.ifftshift(pad)).real * pad.size
        return vals + self.offset

    def l1_norm(self) -> float:
        """``sum |c_k|``, an upper bound for ``sup |h - offset|``."""
        return float(np.abs(self.coeffs).sum())

    def sup_norm(self, M: int | None = None) -> float:
        M = M or 4 * (2 * self.n_trunc + 1)
        return float(np.abs(self.grid_values(M) - self.offset).max())


def translate(h: HullFunction, beta: float) -> HullFunction:
    """``h_beta(s) = h(s + beta alpha) + beta``."""
    out = h.shifted(beta)
    return HullFunction(out.alpha, out.omega, out.coeffs, h.offset + float(beta))


def _default_grid(h: HullFunction) -> int:
    return 2 * h.n_trunc + 1


def hull_residual(h: HullFunction, V: TorusPotential, grid: int | None = None) -> np.ndarray:
    """Hull-equation residual on the tensor grid ``j / grid``.

    Shifts are exact phase multiplications of the coefficients; the medium term
    is composed pointwise.
    """
    M = grid or _default_grid(h)
    w = h.omega
    plus = h.shifted(w).grid_values(M)
    minus = h.shifted(-w).grid_values(M)
    center = h.grid_values(M)
    pts = _points(M, h.d)
    force = V.d_alpha(pts + center[..., None] * h.alpha)
    return plus + minus - 2.0 * center + force


def monotonicity_margin(h: HullFunction, grid: int | None = None) -> float:
    """``min (1 + alpha . grad h)`` over the grid."""
    M = grid or 2 * _default_grid(h)
    return float(1.0 + h.derivative().grid_values(M).min())


# ---------------------------------------------------------------------------
# solver


@dataclass
class HullSolution:
    hull: HullFunction
    history: list = field(default_factory=list)  # (epsilon, iteration, max residual)
    stages: list = field(default_factory=list)
    min_divisor: float = math.inf
    min_divisor_mode: tuple = ()

    @property
    def final_residuals(self) -> list[float]:
        if not self.history:
            return []
        eps = self.history[-1][0]
        return [r for e, _, r in self.history if e == eps]

    @property
    def final_iterations(self) -> int:
        return max(len(self.final_residuals) - 1, 0)

    def quadratic_constant(self, floor: float = 1e-14) -> float | None:
        """``max r_{k+1} / r_k^2`` over the last three steps above the round-off floor."""
        r = self.final_residuals
        pairs = [(a, b) for a, b in zip(r[:-1], r[1:])][-3:]
        ratios = [b / a**2 for a, b in pairs if b > floor and a > 0]
        return max(ratios) if ratios else None


class _HullSystem:
    """Grid-space Newton machinery at a fixed resolution ``M = 2N + 1``."""

    def __init__(self, alpha, omega: float, n_trunc: int):
        self.alpha = np.asarray(alpha, float)
        self.omega = float(omega)
        self.d = self.alpha.size
        self.M = 2 * n_trunc + 1
        self.shape = (self.M,) * self.d
        self.n = self.M**self.d
        K = _kgrid(self.M, self.d)
        self.K = K
        self.kalpha = np.tensordot(self.alpha, K, axes=1)
        self.plus = np.exp(2j * np.pi * self.omega * self.kalpha)
        self.dalpha = 2j * np.pi * self.kalpha
        self.points = _points(self.M, self.d)
        zero = (0,) * self.d
        self.zero = zero
        div = np.abs(self.plus - 1.0) ** 2
        div[zero] = np.inf
        self.divisors = div

    def worst_divisor(self):
        idx = np.unravel_index(np.argmin(self.divisors), self.shape)
        mode = tuple(int(self.K[(j,) + idx]) for j in range(self.d))
        return float(self.divisors[idx]), mode

    def shift(self, f, phase):
        return ifftn(fftn(f) * phase).real

    def residual(self, h, V):
        force = V.d_alpha(self.points + h[..., None] * self.alpha)
        return self.shift(h, self.plus) + self.shift(h, self.plus.conj()) - 2.0 * h + force

    def curvature(self, h, V):
        return V.d2_alpha(self.points + h[..., None] * self.alpha)

    def apply(self, delta, c):
        return (self.shift(delta, self.plus) + self.shift(delta, self.plus.conj())
                - 2.0 * delta + c * delta)

    # bordered system [J 1; mean 0] [delta; lam] = [rhs; 0]

    def solve_dense(self, c, rhs):
        T = None
        for a in self.alpha:
            p = np.exp(2j * np.pi * self.omega * np.rint(np.fft.fftfreq(self.M, 1 / self.M)) * a)
            Tj = np.fft.ifft(p[:, None] * np.fft.fft(np.eye(self.M), axis=0), axis=0).real
            T = Tj if T is None else np.kron(T, Tj)
        A = np.zeros((self.n + 1, self.n + 1))
        A[:-1, :-1] = T + T.T - 2.0 * np.eye(self.n) + np.diag(c.ravel())
        A[:-1, -1] = 1.0
        A[-1, :-1] = 1.0 / self.n
        b = np.append(rhs.ravel(), 0.0)
        sol = np.linalg.solve(A, b)
        return sol[:-1].reshape(self.shape)

    def _preconditioner(self, h):
        v = 1.0 + ifftn(fftn(h) * self.dalpha).real
        if v.min() <= 0.0:
            raise ConvergenceError("hull lost monotonicity (1 + d_alpha h <= 0)")
        g = v * self.shift(v, self.plus)
        inv_minus = np.zeros(self.shape, dtype=complex)
        inv_plus = np.zeros(self.shape, dtype=complex)
        mask = np.ones(self.shape, bool)
        mask[self.zero] = False
        inv_minus[mask] = 1.0 / (1.0 - self.plus.conj()[mask])
        inv_plus[mask] = 1.0 / (self.plus[mask] - 1.0)
        mean_v = v.mean()
        mean_ig = (1.0 / g).mean()

        def apply(z):
            r = z[:-1].reshape(self.shape)
            s = z[-1]
            lam = (v * r).mean() / mean_v
            y0 = ifftn(fftn(v * (r - lam)) * inv_minus).real
            y = y0 - (y0 / g).mean() / mean_ig
            w0 = ifftn(fftn(y / g) * inv_plus).real
            w = w0 + (s - (v * w0).mean()) / mean_v
            return np.append((v * w).ravel(), lam)

        return apply

    def solve_iterative(self, h, c, rhs, rtol=1e-13):
        n = self.n

        def matvec(z):
            d = z[:-1].reshape(self.shape)
            out = self.apply(d, c) + z[-1]
            return np.append(out.ravel(), d.mean())

        A = LinearOperator((n + 1, n + 1), matvec=matvec, dtype=float)
        P = LinearOperator((n + 1, n + 1), matvec=self._preconditioner(h), dtype=float)
        b = np.append(rhs.ravel(), 0.0)
        sol, info = gmres(A, b, rtol=rtol, atol=0.0, restart=50, maxiter=20, M=P)
        if info < 0:
            raise ConvergenceError(f"GMRES breakdown (info={info})")
        return sol[:-1].reshape(self.shape)

    def newton(self, V, h0, tol, max_iter, eps, history, dense_limit=DENSE_LIMIT):
        h = h0.copy()
        prev = None
        for it in range(max_iter + 1):
            E = self.residual(h, V)
            r = float(np.abs(E).max())
            history.append((eps, it, r))
            log.debug("eps=%g iter=%d residual=%.3e", eps, it, r)
            if not math.isfinite(r):
                raise ConvergenceError("non-finite hull residual", history)
            if r < tol:
                return h
            if prev is not None and r > 2.0 * prev:
                raise ConvergenceError(f"Newton diverging at continuation factor {eps}", history)
            if it == max_iter:
                break
            prev = r
            c = self.curvature(h, V)
            if self.n <= dense_limit:
                delta = self.solve_dense(c, -E)
            else:
                delta = self.solve_iterative(h, c, -E)
            h = h + delta
        raise ConvergenceError(
            f"Newton did not converge within {max_iter} iterations at continuation factor {eps}", history)


def solve_hull(V: TorusPotential, omega: float, alpha: Sequence[float] | None = None,
               epsilon_schedule: Sequence[float] | None = None, n_trunc: int = 32,
               tol: float = 1e-12, max_iter: int = 12, divisor_floor: float = 1e-6,
               max_halvings: int = 8, dense_limit: int = DENSE_LIMIT) -> HullSolution:
    """Solve the hull equation by Newton iteration with continuation in amplitude.

    The potential at continuation stage ``eps`` is ``eps * V``; with no schedule,
    ``V`` is used as given (a single stage ``eps = 1``). The first stage starts from
    ``h = 0``; a failed stage halves the step towards the next target and every
    success doubles it.
    """
    alpha = np.asarray(V.alpha if alpha is None else alpha, dtype=float)
    if alpha.size != V.d or not np.allclose(alpha, V.alpha, rtol=0, atol=0):
        raise ContractError("alpha must match the potential's frequency vector")
    if V.d < 2:
        raise ContractError("hull solver requires a quasi-periodic medium (d >= 2)")
    schedule = sorted(float(e) for e in (epsilon_schedule or [1.0]))
    if schedule[0] <= 0:
        raise ContractError("epsilon schedule must be positive")
    sysm = _HullSystem(alpha, omega, n_trunc)
    dmin, mode = sysm.worst_divisor()
    if dmin < divisor_floor:
        raise ResonanceError(mode, dmin, divisor_floor)
    sol = HullSolution(HullFunction.zero(alpha, omega, n_trunc), min_divisor=dmin,
                       min_divisor_mode=mode)
    h = np.zeros(sysm.shape)
    if V.is_zero:
        sol.history.append((schedule[-1], 0, 0.0))
        sol.stages.append(schedule[-1])
        return sol
    done = 0.0
    for target in schedule:
        step = target - done
        halvings = 0
        while done < target:
            trial = min(done + step, target)
            try:
                h = sysm.newton(V.scaled(trial), h, tol, max_iter, trial, sol.history,
                                dense_limit)
            except ConvergenceError as exc:
                halvings += 1
                if halvings > max_halvings:
                    raise ConvergenceError(str(exc), sol.history) from exc
                step *= 0.5
                log.info("continuation step failed at factor %g; halving step to %g", trial, step)
                continue
            sol.stages.append(trial)
            done = trial
            step *= 2.0
    sol.hull = HullFunction.from_grid(h, alpha, omega)
    return sol


# ---------------------------------------------------------------------------
# sampling


class HullBackground:
    """``u_n = n omega + h(n omega alpha)`` for a (possibly translated) hull."""

    def __init__(self, hull: HullFunction, omega: float | None = None):
        self.hull = hull
        self.omega = hull.omega if omega is None else float(omega)

    def __call__(self, sites: np.ndarray) -> np.ndarray:
        n = np.asarray(sites, dtype=float).reshape(len(sites), -1)[:, 0]
        x = n * self.omega
        return x + self.hull.evaluate(x[:, None] * self.hull.alpha)

    def __repr__(self):
        return f"HullBackground(omega={self.omega}, offset={self.hull.offset})"


def sample_config(h: HullFunction, omega: float | None = None, beta: float = 0.0
                  ) -> LatticeConfiguration:
    """Configuration ``u_n^beta = n omega + h_beta(n omega alpha)`` on the chain."""
    return LatticeConfiguration(HullBackground(translate(h, beta), omega), None, 1)


def sample_values(h: HullFunction, sites, beta: float = 0.0, omega: float | None = None
                  ) -> np.ndarray:
    """``u_n^beta`` at integer sites ``n`` (fast path, no configuration object)."""
    w = h.omega if omega is None else omega
    n = np.asarray(sites, dtype=float).reshape(-1)
    x = n * w + beta
    return x + h.evaluate(x[:, None] * h.alpha)
