"""Benchmark systems: Kuramoto on T^d, cutoff Lorenz-63 on T^3, and the
reduced perturbation space used for the 20-dimensional Kuramoto chain."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import PerturbationSpace, ProductBasis, hp_norm_sq, scalar_basis_matrix
from .torus import SdeSystem, TorusDomain, VectorField

__all__ = [
    "KuramotoSpec",
    "LorenzCutoffSpec",
    "ReducedSpaceSpec",
    "ReducedBasis",
    "kuramoto_drift",
    "kuramoto_observable",
    "lorenz_observable",
    "cutoff_profile",
    "lorenz_cutoff_drift",
    "reduced_space_basis",
    "SYSTEMS",
    "get_system",
]


@dataclass(frozen=True)
class KuramotoSpec:
    omegas: tuple = (1.0, 3.0)
    sigma: float = 1.0

    @property
    def d(self) -> int:
        return len(self.omegas)

    @property
    def domain(self) -> TorusDomain:
        return TorusDomain(self.d, (np.pi,) * self.d, np.pi)

    def system(self) -> SdeSystem:
        return SdeSystem(self.domain, kuramoto_drift(self), self.sigma, f"kuramoto{self.d}")


def kuramoto_drift(spec: KuramotoSpec) -> VectorField:
    """``F^i(x) = omega_i + (1/d) sum_j sin(x_j - x_i)``.

    Uses ``sin(x_j - x_i) = sin x_j cos x_i - cos x_j sin x_i`` so each
    evaluation costs O(d).
    """
    omega = np.asarray(spec.omegas, dtype=float)

    def drift(x):
        s, c = np.sin(x), np.cos(x)
        return omega + c * s.mean(axis=-1, keepdims=True) - s * c.mean(axis=-1, keepdims=True)

    return VectorField(drift, f"kuramoto(omega={omega.tolist()})")


def kuramoto_observable(d: int):
    """``phi(x) = (1/d) sum_i sin(x_i)``."""

    def phi(x):
        return np.sin(np.asarray(x, dtype=float)).mean(axis=-1)

    phi.__name__ = f"mean_sin_{d}"
    return phi


@dataclass(frozen=True)
class LorenzCutoffSpec:
    r_box: float = 40.0
    r_bezel: float = 2.0
    center: tuple = (0.0, 0.0, 40.0)
    sigma: float = 5.0

    @property
    def domain(self) -> TorusDomain:
        return TorusDomain(3, self.center, self.r_box)

    def system(self) -> SdeSystem:
        return SdeSystem(self.domain, lorenz_cutoff_drift(self), self.sigma, "lorenz-cutoff")


def cutoff_profile(rho, spec: LorenzCutoffSpec = LorenzCutoffSpec()):
    """Piecewise linear cutoff: 1 inside, linear to 0 across the bezel, 0 beyond."""
    rho = np.asarray(rho, dtype=float)
    return np.clip((spec.r_box - rho) / spec.r_bezel, 0.0, 1.0)


def lorenz_cutoff_drift(spec: LorenzCutoffSpec = LorenzCutoffSpec()) -> VectorField:
    center = np.asarray(spec.center, dtype=float)

    def drift(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        lor = np.stack(
            [10.0 * (x2 - x1), x1 * (28.0 - x3) - x2, x1 * x2 - 8.0 * x3 / 3.0], axis=-1
        )
        rho = np.abs(x - center).max(axis=-1)
        return cutoff_profile(rho, spec)[..., None] * lor

    return VectorField(drift, "lorenz63*cutoff")


def lorenz_observable(spec: LorenzCutoffSpec = LorenzCutoffSpec()):
    """``phi(x) = sum_i sin(2 pi x_i / (2 r_box))``."""
    scale = 2.0 * np.pi / (2.0 * spec.r_box)

    def phi(x):
        return np.sin(scale * np.asarray(x, dtype=float)).sum(axis=-1)

    phi.__name__ = "sum_sin_lorenz"
    return phi


@dataclass(frozen=True)
class ReducedSpaceSpec:
    ambient_d: int = 20
    active: tuple = (0, 1)
    coordinate: int = 0
    p: int = 4


class ReducedBasis(PerturbationSpace):
    """Fields ``(g(x_1), g(x_1), 0, ..., 0)`` with ``g`` in ``H^p(T)``.

    Element ``n`` uses ``g = b_n / ||b_n||_{H^p}``; the norm is the
    one-dimensional weighted norm of the generator.
    """

    kind = "reduced"
    label_columns = ("n",)

    def __init__(self, domain: TorusDomain, N: int, spec: ReducedSpaceSpec = ReducedSpaceSpec(), origin=None):
        if domain.d != spec.ambient_d:
            raise ValueError(f"domain has d={domain.d}, spec expects {spec.ambient_d}")
        self.domain = domain
        self.N = int(N)
        self.spec = spec
        self.p = spec.p
        self.d = domain.d
        i = spec.coordinate
        self.origin = domain.centers[i] if origin is None else float(origin)

    @cached_property
    def labels(self) -> list:
        return list(range(self.N))

    @cached_property
    def norms(self) -> np.ndarray:
        return np.sqrt([hp_norm_sq((n,), self.p) for n in range(self.N)])

    def format_label(self, label) -> str:
        return f"B_{label}"

    def generator(self, coeffs, t) -> np.ndarray:
        """``g(t) = sum_n coeffs[n] b_n(t) / ||b_n||``."""
        i = self.spec.coordinate
        basis = scalar_basis_matrix(t, self.N, self.origin, self.domain.radius)
        return basis @ (np.asarray(coeffs, float) / self.norms)

    def evaluate(self, coeffs, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = self.generator(coeffs, x[..., self.spec.coordinate])
        out = np.zeros(x.shape)
        for a in self.spec.active:
            out[..., a] = g
        return out

    def project(self, x, weights) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        weights = np.asarray(weights, dtype=float).reshape(-1, self.d)
        i = self.spec.coordinate
        basis = scalar_basis_matrix(x[:, i], self.N, self.origin, self.domain.radius)
        w = weights[:, list(self.spec.active)].sum(axis=1)
        return (w @ basis) / self.norms


def reduced_space_basis(
    spec: ReducedSpaceSpec, N: int, domain: TorusDomain = None, origin=None
) -> ReducedBasis:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if domain is None:
        domain = TorusDomain(spec.ambient_d, (np.pi,) * spec.ambient_d, np.pi)
    return ReducedBasis(domain, N, spec, origin)


@dataclass(frozen=True)
class RegisteredSystem:
    """A benchmark bundle: dynamics, observable and default perturbation space.

    The benchmark bases take their trigonometric phase from ``x = 0``
    (``basis_origin``), i.e. ``b_1(x) = sin(x)`` on ``[0, 2 pi)``; the
    published coefficient tables use that convention.
    """

    key: str
    system: SdeSystem
    observable: object
    p: int
    N: int
    reduced: bool
    total_time: float
    decorrelation_time: float
    basis_origin: tuple = None
    notes: dict = field(default_factory=dict)

    def space(self, N: int = None, p: int = None, reduced: bool = None) -> PerturbationSpace:
        N = self.N if N is None else N
        p = self.p if p is None else p
        reduced = self.reduced if reduced is None else reduced
        origin = self.basis_origin
        if reduced:
            spec = ReducedSpaceSpec(ambient_d=self.system.d, p=p)
            return reduced_space_basis(
                spec, N, self.system.domain, None if origin is None else origin[spec.coordinate]
            )
        return ProductBasis(self.system.domain, N, p, origin)


def _kuramoto2():
    spec = KuramotoSpec((1.0, 3.0))
    return RegisteredSystem(
        "kuramoto2", spec.system(), kuramoto_observable(2), 5, 11, False, 1e5, 4.0, (0.0,) * 2
    )


def _kuramoto20():
    spec = KuramotoSpec(tuple(np.round(np.arange(1.0, 4.81, 0.2), 10)))
    return RegisteredSystem(
        "kuramoto20-reduced", spec.system(), kuramoto_observable(20), 4, 22, True, 5e5, 6.0,
        (0.0,) * 20,
    )


def _lorenz():
    spec = LorenzCutoffSpec()
    return RegisteredSystem(
        "lorenz-cutoff", spec.system(), lorenz_observable(spec), 5, 9, False, 1e5, 4.0, (0.0,) * 3
    )


SYSTEMS = {"kuramoto2": _kuramoto2, "kuramoto20-reduced": _kuramoto20, "lorenz-cutoff": _lorenz}


def get_system(key: str) -> RegisteredSystem:
    try:
        return SYSTEMS[key]()
    except KeyError:
        raise KeyError(
            f"unknown system id {key!r}; registered ids: {', '.join(sorted(SYSTEMS))}"
        ) from None
