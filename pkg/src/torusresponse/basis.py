"""Trigonometric product basis of vector fields and the unit-ball optimiser.

Scalar factors on a circle of half-width ``r`` centred at ``c``::

    b_0(x)      = 1 / sqrt(2 r)
    b_{2k-1}(x) = sqrt(1 / r) sin(k pi (x - c) / r)
    b_{2k}(x)   = sqrt(1 / r) cos(k pi (x - c) / r)

so that each ``b_m`` has unit L2 norm over one period.  The vector field
``B^j_n = e_j prod_i b_{n_i}(x_i)`` carries the weighted Sobolev norm
returned by :func:`hp_norm_sq`, and ``B~^j_n = B^j_n / ||B^j_n||`` are
orthonormal under the coefficient inner product.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .io import emit_csv
from .torus import TorusDomain, VectorField

__all__ = [
    "MultiIndex",
    "BasisElement",
    "PerturbationSpace",
    "ProductBasis",
    "RieszVector",
    "OptimalPerturbation",
    "VanishingResponseError",
    "enumerate_indices",
    "frequency",
    "eval_scalar_basis",
    "scalar_basis_matrix",
    "hp_norm_sq",
    "hp_norm_sq_bruteforce",
    "eval_basis_field",
    "assemble_optimal_perturbation",
    "read_riesz_csv",
    "write_riesz_csv",
]

MultiIndex = tuple


class VanishingResponseError(ValueError):
    """The response functional is identically zero on the perturbation space."""


def enumerate_indices(d: int, N: int) -> list:
    """All ``(j, n)`` pairs with ``1 <= j <= d`` and ``0 <= n_i < N``.

    Ordered by component ``j`` first, then ``n`` in row-major
    (lexicographic) order, e.g. ``(1,(0,0)), (1,(0,1)), ..., (2,(N-1,N-1))``.
    """
    if d < 1 or N < 1:
        raise ValueError(f"need d >= 1 and N >= 1, got d={d}, N={N}")
    multi = list(itertools.product(range(N), repeat=d))
    return [(j, n) for j in range(1, d + 1) for n in multi]


def frequency(m) -> np.ndarray:
    """Integer frequency ``floor((m + 1) / 2)`` of scalar factor ``b_m``."""
    return (np.asarray(m) + 1) // 2


def eval_scalar_basis(m: int, x, c: float = np.pi, r_box: float = np.pi):
    if m < 0:
        raise ValueError(f"basis index must be non-negative, got {m}")
    x = np.asarray(x, dtype=float)
    if m == 0:
        return np.full_like(x, 1.0 / np.sqrt(2.0 * r_box))
    k = (m + 1) // 2
    arg = k * np.pi / r_box * (x - c)
    trig = np.sin if m % 2 else np.cos
    return np.sqrt(1.0 / r_box) * trig(arg)


def scalar_basis_matrix(x, N: int, c: float = np.pi, r_box: float = np.pi) -> np.ndarray:
    """``out[..., m] = b_m(x)`` for ``m < N``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (N,))
    out[..., 0] = 1.0 / np.sqrt(2.0 * r_box)
    if N > 1:
        k = np.arange(1, (N - 1) // 2 + 2)
        arg = (x - c)[..., None] * (k * (np.pi / r_box))
        amp = np.sqrt(1.0 / r_box)
        s, co = amp * np.sin(arg), amp * np.cos(arg)
        n_odd = len(range(1, N, 2))
        n_even = len(range(2, N, 2))
        out[..., 1::2] = s[..., :n_odd]
        out[..., 2::2] = co[..., :n_even]
    return out


def hp_norm_sq(index, p: int) -> float:
    """Squared weighted ``H^p`` norm of ``B^j_n`` (independent of ``j``).

    Sum over ``l = 0..p`` and all derivative tuples ``k in {1..d}^l`` of
    ``prod_i floor((n_{k_i} + 1) / 2)^2``.  Since the inner sum factorises,
    it equals ``sum_l (sum_i w_i)^l`` with ``w_i = floor((n_i + 1)/2)^2``.
    """
    if p < 0:
        raise ValueError(f"Sobolev order must be non-negative, got {p}")
    s = int(np.sum(frequency(np.asarray(index, dtype=int)) ** 2))
    return float(sum(s**l for l in range(p + 1)))


def hp_norm_sq_bruteforce(index, p: int) -> float:
    """Literal tuple enumeration of :func:`hp_norm_sq`; exponential cost."""
    w = [((n + 1) // 2) ** 2 for n in index]
    d = len(w)
    total = 0
    for l in range(p + 1):
        for ks in itertools.product(range(d), repeat=l):
            prod = 1
            for k in ks:
                prod *= w[k]
            total += prod
    return float(total)


@dataclass(frozen=True)
class BasisElement:
    """``B~^j_n``; ``origin`` is the phase reference of the trigonometric
    factors (defaults to the domain centres)."""

    component_j: int
    index: tuple
    domain: TorusDomain
    p: int
    origin: tuple = None

    @property
    def phase_origin(self) -> tuple:
        return self.domain.centers if self.origin is None else tuple(self.origin)

    @cached_property
    def norm_hp(self) -> float:
        return float(np.sqrt(hp_norm_sq(self.index, self.p)))

    def __call__(self, x):
        return eval_basis_field(self, x)

    def as_field(self) -> VectorField:
        return VectorField(self.__call__, f"B{self.component_j}{tuple(self.index)}")


def eval_basis_field(elem: BasisElement, x) -> np.ndarray:
    """Normalised field ``B~^j_n(x)`` for ``x`` of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    origin = elem.phase_origin
    val = np.ones(x.shape[:-1])
    for i, m in enumerate(elem.index):
        val = val * eval_scalar_basis(m, x[..., i], origin[i], elem.domain.radius)
    out = np.zeros(x.shape)
    out[..., elem.component_j - 1] = val / elem.norm_hp
    return out


class PerturbationSpace:
    """Finite orthonormal family of perturbation fields.

    Subclasses implement evaluation of a coefficient combination and the
    projection ``sum_n w_n . B~_k(X_n)`` used by the response estimator.
    Coefficients are ordered as :attr:`labels`.
    """

    kind = "abstract"
    label_columns: tuple = ()

    @property
    def labels(self) -> list:
        raise NotImplementedError

    @property
    def norms(self) -> np.ndarray:
        raise NotImplementedError

    def __len__(self):
        return len(self.labels)

    def inner(self, a, b) -> float:
        """Inner product of two coefficient vectors (orthonormal basis)."""
        return float(np.dot(np.asarray(a, float), np.asarray(b, float)))

    def norm(self, a) -> float:
        a = np.asarray(a, float)
        return float(np.sqrt(np.dot(a, a)))

    def evaluate(self, coeffs, x) -> np.ndarray:
        raise NotImplementedError

    def project(self, x, weights) -> np.ndarray:
        raise NotImplementedError

    def element_field(self, k: int) -> VectorField:
        coeffs = np.zeros(len(self))
        coeffs[k] = 1.0
        return self.field(coeffs, label=self.format_label(self.labels[k]))

    def field(self, coeffs, label="eta") -> VectorField:
        coeffs = np.array(coeffs, dtype=float)
        return VectorField(lambda x: self.evaluate(coeffs, x), label)

    def format_label(self, label) -> str:
        return "B" + ",".join(str(v) for v in np.ravel(label))

    def find(self, label) -> int:
        return self.labels.index(label)

    def flat(self, label) -> tuple:
        return tuple(np.ravel(label).tolist())

    def unflat(self, row):
        vals = tuple(int(v) for v in row)
        return vals[0] if len(vals) == 1 else vals


class ProductBasis(PerturbationSpace):
    """All ``B~^j_n`` with ``0 <= n_i < N`` on ``domain``.

    ``origin`` shifts the phase reference of the trigonometric factors
    (``x_i - origin_i``); by default it is the domain centre.
    """

    kind = "full-product"

    def __init__(self, domain: TorusDomain, N: int, p: int, origin=None):
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        if p < 0:
            raise ValueError(f"p must be >= 0, got {p}")
        self.domain = domain
        self.N = int(N)
        self.p = int(p)
        self.d = domain.d
        self.origin = domain.centers if origin is None else tuple(float(o) for o in origin)
        if len(self.origin) != self.d:
            raise ValueError(f"origin must have {self.d} entries")
        self.label_columns = ("j",) + tuple(f"n_{i + 1}" for i in range(self.d))

    @cached_property
    def labels(self) -> list:
        return enumerate_indices(self.d, self.N)

    @cached_property
    def elements(self) -> list:
        return [BasisElement(j, n, self.domain, self.p, self.origin) for j, n in self.labels]

    @cached_property
    def _norm_grid(self) -> np.ndarray:
        # norms of the N^d multi-indices, shaped (N,)*d
        grid = np.zeros((self.N,) * self.d)
        for n in itertools.product(range(self.N), repeat=self.d):
            grid[n] = np.sqrt(hp_norm_sq(n, self.p))
        return grid

    @cached_property
    def norms(self) -> np.ndarray:
        return np.tile(self._norm_grid.ravel(), self.d)

    def format_label(self, label) -> str:
        j, n = label
        return f"B{j}_" + "(" + ",".join(str(v) for v in n) + ")"

    def flat(self, label) -> tuple:
        j, n = label
        return (j,) + tuple(n)

    def unflat(self, row) -> tuple:
        return (int(row[0]), tuple(int(v) for v in row[1:]))

    def _factors(self, x):
        return [
            scalar_basis_matrix(x[..., i], self.N, self.origin[i], self.domain.radius)
            for i in range(self.d)
        ]

    def evaluate(self, coeffs, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        xf = x.reshape(-1, self.d)
        factors = self._factors(xf)
        coeffs = np.asarray(coeffs, float).reshape((self.d,) + (self.N,) * self.d)
        out = np.empty_like(xf)
        for j in range(self.d):
            t = (coeffs[j] / self._norm_grid).reshape(self.N, -1)
            t = factors[0] @ t  # (n, N^(d-1))
            for i in range(1, self.d):
                t = t.reshape(len(xf), self.N, -1)
                t = np.einsum("nab,na->nb", t, factors[i])
            out[:, j] = t.reshape(len(xf))
        return out.reshape(lead + (self.d,))

    def project(self, x, weights) -> np.ndarray:
        """``out[k] = sum_n weights[n] . B~_k(x[n])`` for every element ``k``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        weights = np.asarray(weights, dtype=float).reshape(-1, self.d)
        factors = self._factors(x)
        n = len(x)
        out = np.empty((self.d,) + (self.N,) * self.d)
        for j in range(self.d):
            t = factors[0] * weights[:, j : j + 1]
            for i in range(1, self.d - 1):
                t = (t[:, :, None] * factors[i][:, None, :]).reshape(n, -1)
            if self.d > 1:
                t = t.T @ factors[-1]
            else:
                t = t.sum(axis=0)
            out[j] = t.reshape((self.N,) * self.d)
        out /= self._norm_grid
        return out.ravel()


@dataclass
class RieszVector:
    """Coefficients ``C_k = R(B~_k)`` of the Riesz representative."""

    coefficients: np.ndarray
    space: PerturbationSpace

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (len(self.space),):
            raise ValueError(
                f"expected {len(self.space)} coefficients, got {self.coefficients.shape}"
            )

    def as_dict(self) -> dict:
        return dict(zip(self.space.labels, self.coefficients.tolist()))

    def norm(self) -> float:
        return self.space.norm(self.coefficients)

    def argmax(self):
        return self.space.labels[int(np.argmax(np.abs(self.coefficients)))]


class OptimalPerturbation(NamedTuple):
    field: VectorField
    norm: float
    coefficients: np.ndarray


def assemble_optimal_perturbation(coeffs: RieszVector) -> OptimalPerturbation:
    """Unit-norm maximiser ``v / ||v||`` of the response, together with ``||v||``.

    ``coefficients`` holds the expansion of the returned field in the
    orthonormal basis of ``coeffs.space``.
    """
    c = coeffs.coefficients
    norm = coeffs.norm()
    if not np.any(c) or norm == 0:
        raise VanishingResponseError(
            "response functional vanishes on the space; no optimal direction exists"
        )
    unit = c / norm
    # one refinement pass so the returned coefficients have unit norm to rounding
    unit = unit / coeffs.space.norm(unit)
    return OptimalPerturbation(coeffs.space.field(unit, label="eta_opt"), norm, unit)


def write_riesz_csv(path, coeffs: RieszVector, value_name="coefficient"):
    space = coeffs.space
    rows = [space.flat(lab) + (c,) for lab, c in zip(space.labels, coeffs.coefficients)]
    emit_csv(list(space.label_columns) + [value_name], rows, path)


def read_riesz_csv(path, space: PerturbationSpace) -> RieszVector:
    """Read coefficients written by :func:`write_riesz_csv` into ``space`` order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ncol = len(space.label_columns)
        if tuple(header[:ncol]) != tuple(space.label_columns):
            raise ValueError(f"{path}: header {header} does not match {space.label_columns}")
        values = {}
        for row in reader:
            values[space.unflat(row[:ncol])] = float(row[ncol])
    missing = [lab for lab in space.labels if lab not in values]
    if missing:
        raise ValueError(f"{path}: missing {len(missing)} rows, e.g. {missing[0]}")
    return RieszVector(np.array([values[lab] for lab in space.labels]), space)
