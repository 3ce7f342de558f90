"""Grid discretisation of the one-step transfer operator (d <= 2).

The Euler chain has a Gaussian one-step kernel; on a torus it is the
periodised Gaussian centred at ``wrap(x + dt F(x))`` with standard deviation
``sigma sqrt(dt)``.  Sampling it at cell centres gives a dense
column-stochastic matrix ``K[target, source]`` acting on density vectors.
That matrix is an independent route to invariant densities, mixing rates
and linear response, used to validate the Monte Carlo estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .io import emit_csv
from .torus import SdeSystem, TorusDomain, VectorField, wrap_point

__all__ = [
    "Grid",
    "KernelMatrix",
    "DensityVector",
    "SpectralDiagnostics",
    "FirstOrderResult",
    "SmoothingResult",
    "GridResolutionError",
    "ConvergenceError",
    "ResolventError",
    "build_kernel_matrix",
    "invariant_density",
    "spectral_diagnostics",
    "response_resolvent",
    "response_vector",
    "first_order_expansion_check",
    "l2_smoothing_check",
    "write_kernel_csv",
    "write_density_csv",
]

TAIL = 1e-14
MIN_CELLS_PER_STD = 2.0


class GridResolutionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class ResolventError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    domain: TorusDomain
    m_per_dim: int

    def __post_init__(self):
        if self.m_per_dim < 8:
            raise ValueError(f"need at least 8 cells per dimension, got {self.m_per_dim}")
        if self.domain.d > 2:
            raise ValueError(f"grid oracle supports d <= 2, got d={self.domain.d}")

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def h(self) -> float:
        return self.domain.period / self.m_per_dim

    @property
    def size(self) -> int:
        return self.m_per_dim**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @cached_property
    def axes(self) -> list:
        return [
            self.domain.lower[i] + (np.arange(self.m_per_dim) + 0.5) * self.h
            for i in range(self.d)
        ]

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """Row-major flattening: the last coordinate varies fastest."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)

    def l2_norm(self, values) -> float:
        return float(np.sqrt(np.sum(np.square(values)) * self.cell_volume))

    def sample(self, phi) -> np.ndarray:
        return np.asarray(phi(self.cell_centers), dtype=float)


@dataclass
class KernelMatrix:
    entries: np.ndarray
    grid: Grid
    dt: float
    delta: float = 0.0

    def apply(self, f) -> np.ndarray:
        return self.entries @ f

    def power_apply(self, f, n: int) -> np.ndarray:
        for _ in range(n):
            f = self.entries @ f
        return f


@dataclass
class DensityVector:
    values: np.ndarray
    grid: Grid
    iterations: int = 0
    residual: float = 0.0

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)


def _periodic_gaussian(diff, std, period):
    """Periodised normal density at ``diff``; images summed until below TAIL."""
    diff = np.mod(diff + period / 2, period) - period / 2
    reach = std * math.sqrt(2 * math.log(1 / TAIL)) + period / 2
    n_img = int(math.ceil(reach / period))
    norm = 1.0 / (std * math.sqrt(2 * math.pi))
    out = np.zeros_like(diff)
    for k in range(-n_img, n_img + 1):
        out += np.exp(-0.5 * ((diff + k * period) / std) ** 2)
    return norm * out


def build_kernel_matrix(system: SdeSystem, grid: Grid, dt: float, delta: float = 0.0) -> KernelMatrix:
    """Column-stochastic matrix of the Euler step on the cell centres.

    ``delta`` is recorded only; pass an already perturbed ``system``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if system.domain != grid.domain:
        raise ValueError("system and grid live on different domains")
    std = system.sigma * math.sqrt(dt)
    if std < MIN_CELLS_PER_STD * grid.h:
        need = int(math.ceil(MIN_CELLS_PER_STD * grid.domain.period / std))
        raise GridResolutionError(
            f"grid too coarse: sigma*sqrt(dt)={std:.4g} spans {std / grid.h:.2f} cells; "
            f"need m_per_dim >= {need}"
        )
    x = grid.cell_centers
    mean = wrap_point(x + dt * system.drift(x), grid.domain)
    if not np.isfinite(mean).all():
        raise FloatingPointError("non-finite drift on the grid")
    m, M = grid.m_per_dim, grid.size
    factors = [
        _periodic_gaussian(grid.axes[i][:, None] - mean[None, :, i], std, grid.domain.period)
        for i in range(grid.d)
    ]
    if grid.d == 1:
        K = factors[0]
    else:
        K = (factors[0][:, None, :] * factors[1][None, :, :]).reshape(M, M)
    K = K * grid.cell_volume
    K /= K.sum(axis=0, keepdims=True)
    return KernelMatrix(K, grid, float(dt), float(delta))


def invariant_density(K: KernelMatrix, tol: float = 1e-13, max_iter: int = 200_000) -> DensityVector:
    """Power iteration from the uniform density until the L1 step is below ``tol``."""
    grid = K.grid
    f = np.full(grid.size, 1.0 / grid.domain.volume)
    A = K.entries
    diff = np.inf
    for it in range(1, max_iter + 1):
        g = A @ f
        diff = grid.integrate(np.abs(g - f))
        f = g
        if diff < tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} steps; L1 residual {diff:.3e}"
        )
    f = f / grid.integrate(f)
    return DensityVector(f, grid, it, diff)


@dataclass(frozen=True)
class SpectralDiagnostics:
    lambda2_modulus: float
    min_entry: float
    contraction_rho: float
    doeblin_bound: float


DENSE_EIG_MAX = 2048


def _lambda2_dense(A):
    ev = np.linalg.eigvals(A)
    order = np.argsort(-np.abs(ev))
    return float(np.abs(ev[order[1]]))


def _lambda2_subspace(A, rng, block=6, tol=1e-10, max_iter=20_000, check_every=10):
    """Largest eigenvalue modulus of ``A`` on zero-sum vectors.

    Block subspace iteration with a Rayleigh-Ritz step, so complex pairs
    (rotating drifts) are resolved instead of averaged.
    """
    n = A.shape[0]
    Q = rng.standard_normal((n, min(block, n - 1)))
    Q -= Q.mean(axis=0)
    Q, _ = np.linalg.qr(Q)
    prev = None
    est = 0.0
    for it in range(1, max_iter + 1):
        Z = A @ Q
        Z -= Z.mean(axis=0)
        if it % check_every == 0:
            H = Q.T @ Z
            est = float(np.abs(np.linalg.eigvals(H)).max())
            if prev is not None and abs(est - prev) < tol * max(est, 1e-300):
                return est
            prev = est
        Q, _ = np.linalg.qr(Z)
    return est


def _pair_contraction(A, rng, max_pairs=200_000):
    """Largest ``||A(e_i - e_j)||_1 / 2`` over column pairs (all of them when feasible)."""
    n = A.shape[0]
    best = 0.0
    if n * (n - 1) // 2 <= max_pairs:
        for i in range(n - 1):
            tv = 0.5 * np.abs(A[:, i : i + 1] - A[:, i + 1 :]).sum(axis=0)
            best = max(best, float(tv.max()))
    else:
        i = rng.integers(0, n, max_pairs // n + 1)
        for a in i:
            tv = 0.5 * np.abs(A[:, a : a + 1] - A).sum(axis=0)
            best = max(best, float(tv.max()))
    return best


def spectral_diagnostics(K: KernelMatrix, n_random: int = 64, seed: int = 0) -> SpectralDiagnostics:
    """Second-eigenvalue modulus, kernel lower bound and L1 contraction on zero-sum vectors."""
    A = K.entries
    rng = np.random.default_rng(seed)
    lam2 = _lambda2_dense(A) if A.shape[0] <= DENSE_EIG_MAX else _lambda2_subspace(A, rng)
    min_entry = float(A.min() / K.grid.cell_volume)
    rho = _pair_contraction(A, rng)
    for _ in range(n_random):
        g = rng.standard_normal(A.shape[0])
        g -= g.mean()
        rho = max(rho, float(np.abs(A @ g).sum() / np.abs(g).sum()))
    # a stochastic matrix cannot expand L1 norms; clip rounding above 1
    rho = min(rho, 1.0)
    return SpectralDiagnostics(lam2, min_entry, rho, 1.0 - min_entry * K.grid.domain.volume)


def response_vector(system, eta, f0: DensityVector, grid, dt, fd_delta) -> np.ndarray:
    """Central difference ``(K_{+d} - K_{-d}) f0 / (2 d)``."""
    Kp = build_kernel_matrix(system.perturbed(eta, fd_delta), grid, dt, fd_delta)
    Km = build_kernel_matrix(system.perturbed(eta, -fd_delta), grid, dt, -fd_delta)
    return (Kp.entries @ f0.values - Km.entries @ f0.values) / (2.0 * fd_delta)


@dataclass
class ResolventResult:
    value: float
    u: np.ndarray
    D: np.ndarray
    f0: DensityVector
    D_mass: float
    residual: float

    def __float__(self):
        return self.value


def response_resolvent(
    system: SdeSystem,
    eta: VectorField,
    phi,
    grid: Grid,
    dt: float,
    fd_delta: float = 1e-3,
    horizon: float = None,
    method: str = "direct",
    tol: float = 1e-9,
    f0: DensityVector = None,
    K0: KernelMatrix = None,
) -> ResolventResult:
    """Linear response ``int phi (I - K0)^{-1} D`` on the grid.

    ``horizon`` (physical time) replaces the resolvent by the truncated sum
    ``sum_{k < horizon/dt} K0^k D``, which is what a Monte Carlo estimator
    with the same decorrelation window targets.  ``float(result)`` gives the
    response value.
    """
    if K0 is None:
        K0 = build_kernel_matrix(system, grid, dt)
    if f0 is None:
        f0 = invariant_density(K0)
    D = response_vector(system, eta, f0, grid, dt, fd_delta)
    D_mass = grid.integrate(D)
    if abs(D_mass) > 1e-10:
        raise ResolventError(f"response vector is not zero-average: mass {D_mass:.3e}")
    D = D - D.mean()
    A = K0.entries
    n = len(D)
    if horizon is not None:
        steps = int(round(horizon / dt))
        u = np.zeros(n)
        term = D.copy()
        for _ in range(steps):
            u += term
            term = A @ term
        residual = 0.0
    elif method == "direct":
        M = np.eye(n) - A + np.outer(f0.values, np.full(n, grid.cell_volume))
        u = np.linalg.solve(M, D)
        residual = float(np.linalg.norm(u - A @ u - D) / max(np.linalg.norm(D), 1e-300))
    elif method == "neumann":
        u = np.zeros(n)
        term = D.copy()
        scale = max(np.linalg.norm(D), 1e-300)
        for _ in range(1_000_000):
            u += term
            term = A @ term
            term -= term.mean()
            if np.linalg.norm(term) < 1e-15 * scale:
                break
        residual = float(np.linalg.norm(u - A @ u - D) / scale)
    else:
        raise ValueError(f"unknown method {method!r}")
    if residual > tol:
        raise ResolventError(f"resolvent solve residual {residual:.3e} exceeds {tol:.1e}")
    value = grid.integrate(grid.sample(phi) * u)
    return ResolventResult(value, u, D, f0, D_mass, residual)


@dataclass
class FirstOrderResult:
    slope: float
    deltas: np.ndarray
    errors: np.ndarray
    exact_zero: bool = False


def first_order_expansion_check(
    system: SdeSystem, eta: VectorField, p0, grid: Grid, dt: float, deltas
) -> FirstOrderResult:
    """Log-log slope of ``||(K_d p0 - K_0 p0)/d - r_ref||_2`` against ``d``.

    ``r_ref`` is the Richardson extrapolation from the two smallest ``d``.
    First-order accuracy of the one-step expansion shows up as slope 1.
    """
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    if len(deltas) < 3:
        raise ValueError("need at least three deltas")
    p = p0.values if isinstance(p0, DensityVector) else np.asarray(p0, dtype=float)
    base = build_kernel_matrix(system, grid, dt).entries @ p
    r = np.array(
        [
            (build_kernel_matrix(system.perturbed(eta, dl), grid, dt, dl).entries @ p - base) / dl
            for dl in deltas
        ]
    )
    if not np.any(r):
        return FirstOrderResult(float("nan"), deltas, np.zeros(len(deltas)), exact_zero=True)
    q = deltas[-2] / deltas[-1]
    ref = (q * r[-1] - r[-2]) / (q - 1.0)
    errors = np.array([grid.l2_norm(ri - ref) for ri in r])
    if np.any(np.diff(errors) >= 0):
        raise ValueError(
            f"error ladder is not monotone (grid or finite-difference noise floor): {errors}"
        )
    slope = float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])
    return FirstOrderResult(slope, deltas, errors)


@dataclass
class SmoothingResult:
    exponent: float
    times: np.ndarray
    norms: np.ndarray
    dt: float


def smoothing_window(system: SdeSystem, grid: Grid):
    """Times where the kernel is resolved but has not felt the periodisation."""
    t_min = (MIN_CELLS_PER_STD * grid.h / system.sigma) ** 2
    t_max = (grid.domain.period / 8.0 / system.sigma) ** 2
    return t_min, t_max


def l2_smoothing_check(system: SdeSystem, grid: Grid, times, dt: float = None) -> SmoothingResult:
    """Fit ``log ||p(t)||_2`` against ``log t`` for a point mass evolved by the kernel.

    ``dt`` defaults to the finest step the grid resolves; every time must be a
    multiple of it (rounded).
    """
    t_min, t_max = smoothing_window(system, grid)
    times = np.asarray(sorted(times), dtype=float)
    if t_min >= t_max:
        raise ValueError(f"no pre-equilibration window on this grid: [{t_min:.3g}, {t_max:.3g}]")
    if times[0] < t_min * (1 - 1e-9) or times[-1] > t_max * (1 + 1e-9):
        raise ValueError(f"times must lie in the window [{t_min:.4g}, {t_max:.4g}]")
    if dt is None:
        dt = t_min
    K = build_kernel_matrix(system, grid, dt)
    p = np.zeros(grid.size)
    p[grid.size // 2] = 1.0 / grid.cell_volume
    steps = np.maximum(1, np.round(times / dt).astype(int))
    norms = []
    done = 0
    for s in steps:
        p = K.power_apply(p, s - done)
        done = s
        norms.append(grid.l2_norm(p))
    t_eff = steps * dt
    exponent = float(np.polyfit(np.log(t_eff), np.log(norms), 1)[0])
    return SmoothingResult(exponent, t_eff, np.array(norms), dt)


def write_kernel_csv(K: KernelMatrix, path) -> None:
    rows = [(i, j, K.entries[i, j]) for j in range(K.entries.shape[1]) for i in range(K.entries.shape[0])]
    emit_csv(["target", "source", "entry"], rows, path)


def write_density_csv(f: DensityVector, path) -> None:
    cols = [f"x_{i + 1}" for i in range(f.grid.d)]
    rows = [tuple(c) + (v,) for c, v in zip(f.grid.cell_centers, f.values)]
    emit_csv(cols + ["density"], rows, path)
