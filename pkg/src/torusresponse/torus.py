"""Torus geometry, vector fields and the Euler-Maruyama chain.

Every array-valued callable in this package is vectorised over leading axes:
a drift or perturbation field maps an array of shape ``(..., d)`` to an
array of the same shape, and a scalar observable maps ``(..., d)`` to
``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "TorusDomain",
    "VectorField",
    "SdeSystem",
    "Trajectory",
    "NonFiniteDriftError",
    "wrap_point",
    "make_rng",
    "chain_rngs",
    "EnsembleRun",
    "simulate_em",
    "ergodic_average",
]

Observable = Callable[[np.ndarray], np.ndarray]


class NonFiniteDriftError(FloatingPointError):
    """Raised when a drift evaluation produces NaN or inf."""

    def __init__(self, state, value):
        self.state = np.asarray(state)
        self.value = np.asarray(value)
        super().__init__(
            f"non-finite drift {self.value.tolist()} at state {self.state.tolist()}"
        )


@dataclass(frozen=True)
class TorusDomain:
    """Product of circles; coordinate ``i`` lives on ``[c_i - r, c_i + r)``."""

    d: int
    centers: tuple = None
    radius: float = np.pi

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        centers = self.centers
        if centers is None:
            centers = (float(self.radius),) * int(self.d)
        centers = tuple(float(c) for c in np.broadcast_to(centers, (int(self.d),)))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "centers", centers)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.centers) - self.radius

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.centers) + self.radius

    @property
    def period(self) -> float:
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        return self.period**self.d

    def wrap(self, x):
        return wrap_point(x, self)


def wrap_point(x, domain: TorusDomain) -> np.ndarray:
    """Map points onto the representative box of ``domain``.

    Coordinates already inside ``[c - r, c + r)`` are returned untouched, so
    wrapping is exactly idempotent in floating point.
    """
    x = np.asarray(x, dtype=float)
    lo = domain.lower
    hi = domain.upper
    inside = (x >= lo) & (x < hi)
    if inside.all():
        return x.copy()
    period = domain.period
    y = lo + np.mod(x - lo, period)
    # rounding can land exactly on the upper edge or just below the lower one
    y = np.where(y >= hi, lo, y)
    y = np.where(y < lo, lo, y)
    return np.where(inside, x, y)


@dataclass(frozen=True)
class VectorField:
    """A (vectorised) map from points of the torus to drift vectors."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    label: str = "field"

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float))

    def __add__(self, other: "VectorField") -> "VectorField":
        f, g = self.evaluator, other.evaluator
        return VectorField(lambda x: f(x) + g(x), f"({self.label})+({other.label})")

    def scaled(self, factor: float) -> "VectorField":
        if factor == 0:
            return VectorField(lambda x: np.zeros_like(x), "0")
        f = self.evaluator
        factor = float(factor)
        return VectorField(lambda x: factor * f(x), f"{factor!r}*({self.label})")

    @classmethod
    def zero(cls) -> "VectorField":
        return cls(lambda x: np.zeros_like(x), "0")

    @classmethod
    def constant(cls, value) -> "VectorField":
        value = np.asarray(value, dtype=float)
        return cls(lambda x: np.broadcast_to(value, x.shape).copy(), f"const{value.tolist()}")


@dataclass(frozen=True)
class SdeSystem:
    """``dX = F(X) dt + sigma dW`` on a flat torus."""

    domain: TorusDomain
    drift: VectorField
    sigma: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive (non-degenerate noise), got {self.sigma}")

    @property
    def d(self) -> int:
        return self.domain.d

    def perturbed(self, eta: VectorField, gamma: float) -> "SdeSystem":
        """System with drift ``F + gamma * eta``."""
        if gamma == 0:
            return self
        return replace(self, drift=self.drift + eta.scaled(gamma))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    increments: np.ndarray
    dt: float
    seed: int
    metadata: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.states)


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) for one stream.

    Normal draws use numpy's ziggurat transform, which is stable across
    platforms for a fixed numpy version.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def chain_rngs(seed: int, n_chains: int) -> list:
    """Independent streams, one per chain, spawned from a single seed."""
    children = np.random.SeedSequence(int(seed)).spawn(int(n_chains))
    return [make_rng(c) for c in children]


class EnsembleRun:
    """Euler-Maruyama ensemble advanced in lock-step.

    Each chain owns its own RNG stream, so chain ``i`` is reproducible
    regardless of how many chains run beside it.  :meth:`blocks` yields
    ``(states, draws)`` of shape ``(B, C, d)``: ``states[k]`` is the state
    before step ``k`` and ``draws[k]`` the standard normal vector used in it.
    """

    def __init__(self, system, x0, dt, rngs, deterministic=False):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        if x0.shape != (len(rngs), system.d):
            raise ValueError(
                f"x0 has shape {x0.shape}, expected ({len(rngs)}, {system.d})"
            )
        self.system = system
        self.dt = float(dt)
        self.rngs = list(rngs)
        self.deterministic = deterministic
        self.state = wrap_point(x0, system.domain)

    def _draws(self, n):
        c, d = len(self.rngs), self.system.d
        if self.deterministic:
            return np.zeros((n, c, d))
        out = np.empty((n, c, d))
        for i, rng in enumerate(self.rngs):
            out[:, i, :] = rng.standard_normal((n, d))
        return out

    def blocks(self, steps: int, block_steps: int = 1024):
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        drift = self.system.drift.evaluator
        dom = self.system.domain
        lo, hi, period = dom.lower, dom.upper, dom.period
        h = self.dt
        noise_scale = self.system.sigma * np.sqrt(h)
        x = self.state
        done = 0
        while done < steps:
            n = min(block_steps, steps - done)
            xi = self._draws(n)
            states = np.empty((n,) + x.shape)
            kicks = noise_scale * xi
            for k in range(n):
                states[k] = x
                f = drift(x)
                if not np.isfinite(f).all():
                    bad = np.argwhere(~np.isfinite(f))[0][0]
                    raise NonFiniteDriftError(x[bad], f[bad])
                y = x + h * f + kicks[k]
                out = (y < lo) | (y >= hi)
                if out.any():
                    w = lo + np.mod(y - lo, period)
                    w = np.where(w >= hi, lo, w)
                    y = np.where(out, w, y)
                x = y
            self.state = x
            done += n
            yield states, xi


def simulate_em(
    system: SdeSystem,
    x0,
    dt: float = 0.01,
    steps: int = 1000,
    seed: int = 0,
    deterministic: bool = False,
    block_steps: int = 4096,
) -> Trajectory:
    """Euler-Maruyama chain ``X_{n+1} = wrap(X_n + h F(X_n) + sigma sqrt(h) xi_n)``.

    ``deterministic=True`` zeroes the noise; it exists for exact-arithmetic
    tests only.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, system.d)
    run = EnsembleRun(system, x0, dt, [make_rng(seed)], deterministic=deterministic)
    states, draws = [], []
    for s, xi in run.blocks(int(steps), block_steps):
        states.append(s[:, 0, :])
        draws.append(xi[:, 0, :])
    states.append(run.state)
    return Trajectory(
        states=np.concatenate(states),
        increments=np.concatenate(draws),
        dt=float(dt),
        seed=int(seed),
        metadata={"sigma": system.sigma, "deterministic": deterministic},
    )


def ergodic_average(traj, phi: Observable, burn_in: int = 0) -> float:
    """Time average of ``phi`` over ``traj.states[burn_in:]``."""
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    if burn_in < 0 or burn_in >= len(states):
        raise ValueError(
            f"empty averaging window: burn_in={burn_in}, {len(states)} states"
        )
    return float(np.mean(phi(states[burn_in:])))
