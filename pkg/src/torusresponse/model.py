"""Estimator-style wrapper around the response pipeline.

``OptimalResponse`` follows the scikit-learn conventions (constructor only
stores parameters, ``fit`` returns ``self``, learned state ends in ``_``)
so it composes with ``get_params``/``set_params``/``clone``.  There is no
training data: ``fit`` simulates the registered system, and ``predict``
evaluates the fitted optimal field at query points.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .basis import RieszVector, assemble_optimal_perturbation
from .estimator import KdConfig, estimate_response_table
from .systems import get_system

__all__ = ["OptimalResponse", "check_points"]


def check_points(X, d: int) -> np.ndarray:
    """Validate query points: finite, 2-D, ``d`` columns, cast to float."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != d:
        raise ValueError(f"X has {X.shape[1]} columns, the system has d={d}")
    return X


class OptimalResponse(BaseEstimator):
    """Riesz coefficients and the optimal unit perturbation of a registered system.

    Parameters
    ----------
    system : str
        Registered system id.
    N, p, reduced : optional
        Space parameters; ``None`` takes the system defaults.
    total_time, decorrelation_time, dt, burn_in_time, n_chains, n_batches, seed, threads
        Passed to :class:`KdConfig`; ``decorrelation_time=None`` takes the
        system default.

    Attributes
    ----------
    space_ : PerturbationSpace
    coef_ : ndarray
        Estimated responses ``C_k = R(B~_k)``.
    std_error_ : ndarray
    norm_ : float
        ``||v||``, the response of the optimal field.
    eta_coef_ : ndarray
        Unit-norm coefficients of ``eta_opt``.
    """

    def __init__(
        self,
        system="kuramoto2",
        N=None,
        p=None,
        reduced=None,
        total_time=1e5,
        decorrelation_time=None,
        dt=0.01,
        burn_in_time=100.0,
        n_chains=100,
        n_batches=20,
        seed=0,
        threads=1,
    ):
        self.system = system
        self.N = N
        self.p = p
        self.reduced = reduced
        self.total_time = total_time
        self.decorrelation_time = decorrelation_time
        self.dt = dt
        self.burn_in_time = burn_in_time
        self.n_chains = n_chains
        self.n_batches = n_batches
        self.seed = seed
        self.threads = threads

    def _config(self, registered) -> KdConfig:
        W = self.decorrelation_time
        return KdConfig(
            total_time=float(self.total_time),
            decorrelation_time=float(registered.decorrelation_time if W is None else W),
            dt=float(self.dt),
            burn_in_time=float(self.burn_in_time),
            seed=int(self.seed),
            n_chains=int(self.n_chains),
            n_batches=int(self.n_batches),
            chain_group=int(self.n_chains),
            threads=int(self.threads),
        )

    def fit(self, X=None, y=None):
        """Estimate every coefficient from one shared ensemble of orbits."""
        registered = get_system(self.system)
        space = registered.space(self.N, self.p, self.reduced)
        config = self._config(registered)
        table = estimate_response_table(registered.system, registered.observable, space, config)
        riesz = RieszVector(table.values, space)
        opt = assemble_optimal_perturbation(riesz)
        self.registered_ = registered
        self.space_ = space
        self.config_ = config
        self.table_ = table
        self.riesz_ = riesz
        self.coef_ = table.values
        self.std_error_ = table.std_errors
        self.norm_ = opt.norm
        self.eta_coef_ = opt.coefficients
        self.eta_opt_ = opt.field
        self.n_features_in_ = registered.system.d
        return self

    def predict(self, X) -> np.ndarray:
        """``eta_opt`` evaluated at the rows of ``X``, shape ``(n, d)``."""
        check_is_fitted(self, "eta_coef_")
        X = check_points(X, self.n_features_in_)
        return self.space_.evaluate(self.eta_coef_, X)

    def response(self, coeffs) -> float:
        """Linear response of the field with the given unit-basis coefficients."""
        check_is_fitted(self, "coef_")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != self.coef_.shape:
            raise ValueError(f"expected {self.coef_.shape} coefficients, got {coeffs.shape}")
        return float(coeffs @ self.coef_)
