"""Monte Carlo linear response by ergodic kernel differentiation.

For the Euler chain ``X_{n+1} = X_n + h F(X_n) + sigma sqrt(h) xi_n`` the
derivative of the log one-step density with respect to a drift perturbation
``gamma * eta`` at ``gamma = 0`` is ``eta(X_n) . xi_n sqrt(h) / sigma``.
Correlating that score with the centred observable over the following
``W / h`` steps gives the response estimator

    R(eta) = sum_{w=1}^{W/h} mean_n [ (phi(X_{n+w}) - mean(phi)) * score_n ].

All fields are estimated from the same trajectories, so the estimate is
exactly linear in ``eta``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import PerturbationSpace
from .torus import EnsembleRun, SdeSystem, VectorField, make_rng

__all__ = [
    "KdConfig",
    "ResponseEstimate",
    "ResponseTable",
    "SweepResult",
    "SlopeCheck",
    "score_weight",
    "estimate_response_table",
    "estimate_responses",
    "truncation_check",
    "sweep_observable",
    "slope_match_check",
]

log = logging.getLogger(__name__)


def _as_steps(value, dt, what):
    steps = value / dt
    n = int(round(steps))
    if abs(steps - n) > 1e-9 * max(1.0, abs(steps)):
        raise ValueError(f"{what}={value} is not an integer multiple of dt={dt}")
    return n


@dataclass(frozen=True)
class KdConfig:
    """Run-length and bookkeeping parameters of the response estimator.

    ``total_time`` is the physical time summed over all chains after burn-in.
    ``chain_group`` fixes how chains are split into lock-step ensembles; it
    determines the summation order, so results do not depend on ``threads``.
    """

    total_time: float = 1e5
    decorrelation_time: float = 4.0
    dt: float = 0.01
    burn_in_time: float = 100.0
    seed: int = 0
    n_chains: int = 100
    n_batches: int = 20
    block_steps: int = 2000
    chain_group: int = 100
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.total_time > 0 or not self.decorrelation_time > 0:
            raise ValueError("total_time and decorrelation_time must be positive")
        if self.decorrelation_time >= self.total_time:
            raise ValueError("decorrelation_time must be shorter than total_time")
        if self.burn_in_time < 0:
            raise ValueError("burn_in_time must be non-negative")
        if self.n_chains < 1 or self.chain_group < 1 or self.threads < 1:
            raise ValueError("n_chains, chain_group and threads must be >= 1")
        if self.n_batches < 20:
            raise ValueError(f"n_batches must be >= 20, got {self.n_batches}")
        # validates the integer-step bookkeeping
        self.w_steps, self.burn_in_steps, self.chain_steps

    @property
    def w_steps(self) -> int:
        return _as_steps(self.decorrelation_time, self.dt, "decorrelation_time")

    @property
    def burn_in_steps(self) -> int:
        return _as_steps(self.burn_in_time, self.dt, "burn_in_time")

    @property
    def chain_steps(self) -> int:
        return _as_steps(self.total_time / self.n_chains, self.dt, "total_time / n_chains")

    def replace(self, **changes) -> "KdConfig":
        d = asdict(self)
        d.update(changes)
        return KdConfig(**d)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResponseEstimate:
    value: float
    std_error: float
    n_samples: int
    label: str = ""


@dataclass
class ResponseTable:
    """Responses of several fields from one shared set of trajectories."""

    values: np.ndarray
    std_errors: np.ndarray
    batch_values: np.ndarray
    n_samples: int
    phi_mean: float
    labels: list
    config: KdConfig
    metadata: dict = field(default_factory=dict)

    def combine(self, coeffs, label="combination") -> ResponseEstimate:
        """Response of ``sum_k coeffs[k] * field_k``.

        The standard error comes from the same batches, so correlations
        between the fields' estimates are accounted for.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        batches = self.batch_values @ coeffs
        se = batches.std(ddof=1) / math.sqrt(len(batches))
        return ResponseEstimate(float(self.values @ coeffs), float(se), self.n_samples, label)

    def estimates(self) -> list:
        return [
            ResponseEstimate(float(v), float(s), self.n_samples, str(lab))
            for v, s, lab in zip(self.values, self.std_errors, self.labels)
        ]


def score_weight(eta_at_x, xi, dt: float, sigma: float):
    """Likelihood-ratio weight ``eta(X_n) . xi_n sqrt(dt) / sigma``."""
    if not sigma > 0 or not dt > 0:
        raise ValueError("sigma and dt must be positive")
    eta_at_x = np.asarray(eta_at_x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return np.sum(eta_at_x * xi, axis=-1) * (math.sqrt(dt) / sigma)


def _initial_states(system, rngs):
    lo, period = system.domain.lower, system.domain.period
    return np.array([lo + period * rng.random(system.d) for rng in rngs])


def _chain_streams(seed, n_chains):
    children = np.random.SeedSequence(int(seed)).spawn(int(n_chains))
    return [make_rng(c) for c in children]


def _groups(config):
    g = config.chain_group
    return [range(a, min(a + g, config.n_chains)) for a in range(0, config.n_chains, g)]


def _run_group(system, chains, rngs, config, burn_in=True):
    """Burn in the chains of one group and return the live ensemble."""
    x0 = _initial_states(system, rngs)
    run = EnsembleRun(system, x0, config.dt, rngs)
    if burn_in and config.burn_in_steps > 0:
        for _ in run.blocks(config.burn_in_steps, config.block_steps):
            pass
    return run


class _FieldProjector:
    """``project(x, w)`` for an explicit list of fields, one field at a time."""

    def __init__(self, fields):
        self.fields = list(fields)

    def __len__(self):
        return len(self.fields)

    def __call__(self, x, weights):
        out = np.empty((len(weights), len(self.fields)))
        for k, eta in enumerate(self.fields):
            ev = eta(x)
            for a, w in enumerate(weights):
                out[a, k] = np.sum(ev * w)
        return out


class _SpaceProjector:
    def __init__(self, space: PerturbationSpace):
        self.space = space

    def __len__(self):
        return len(self.space)

    def __call__(self, x, weights):
        return np.stack([self.space.project(x, w) for w in weights])


def _accumulate_group(system, phi, projector, config, chains):
    """Stream one chain group; returns per-batch sums for that group."""
    rngs = _chain_streams(config.seed, config.n_chains)
    rngs = [rngs[c] for c in chains]
    run = _run_group(system, chains, rngs, config)
    W = config.w_steps
    S = config.chain_steps
    n_samples = S - W + 1  # per chain; sample n needs states n+1..n+W
    if n_samples < 1:
        raise ValueError(
            f"decorrelation window of {W} steps needs more than the {S} steps per chain"
        )
    nb = config.n_batches
    K = len(projector)
    C = len(rngs)
    d = system.d
    P = np.zeros((nb, K))
    Q = np.zeros((nb, K))
    counts = np.zeros(nb, dtype=np.int64)
    phi_sum = 0.0
    n_states = 0

    pend_x = np.empty((0, C, d))
    pend_xi = np.empty((0, C, d))
    pend_phi = np.empty((0, C))
    start = 0  # global index of pend_*[0]

    def flush():
        nonlocal pend_x, pend_xi, pend_phi, start
        m = min(len(pend_phi) - W, len(pend_x), n_samples - start)
        if m <= 0:
            return
        cs = np.concatenate([np.zeros((1, C)), np.cumsum(pend_phi, axis=0)])
        U = cs[W + 1 : W + 1 + m] - cs[1 : 1 + m]
        idx = start + np.arange(m)
        batch = idx * nb // n_samples
        for b in np.unique(batch):
            sel = batch == b
            x = pend_x[:m][sel].reshape(-1, d)
            xi = pend_xi[:m][sel].reshape(-1, d)
            u = U[sel].reshape(-1, 1)
            proj = projector(x, [u * xi, xi])
            P[b] += proj[0]
            Q[b] += proj[1]
            counts[b] += len(x)
        if not (np.isfinite(P).all() and np.isfinite(Q).all()):
            bad = np.argwhere(~np.isfinite(P) | ~np.isfinite(Q))[0]
            raise FloatingPointError(
                f"non-finite response partial sum in batch {bad[0]}, field {bad[1]} "
                f"after sample {start + m} (chains {chains.start}..{chains.stop - 1})"
            )
        pend_x, pend_xi, pend_phi = pend_x[m:], pend_xi[m:], pend_phi[m:]
        start += m

    for states, xi in run.blocks(S, config.block_steps):
        ph = np.asarray(phi(states), dtype=float)
        phi_sum += float(ph.sum())
        n_states += ph.size
        pend_x = np.concatenate([pend_x, states])
        pend_xi = np.concatenate([pend_xi, xi])
        pend_phi = np.concatenate([pend_phi, ph])
        flush()
    last = np.asarray(phi(run.state), dtype=float)[None]
    phi_sum += float(last.sum())
    n_states += last.size
    pend_phi = np.concatenate([pend_phi, last])
    flush()
    return P, Q, counts, phi_sum, n_states


def _reduce(results):
    P = sum(r[0] for r in results)
    Q = sum(r[1] for r in results)
    counts = sum(r[2] for r in results)
    phi_sum = math.fsum(r[3] for r in results)
    n_states = sum(r[4] for r in results)
    return P, Q, counts, phi_sum, n_states


def _map_groups(fn, groups, threads):
    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, groups))
    return [fn(g) for g in groups]


def estimate_response_table(
    system: SdeSystem, phi, fields, config: KdConfig = KdConfig()
) -> ResponseTable:
    """Responses of every field (or every element of a space) at once."""
    if isinstance(fields, PerturbationSpace):
        projector = _SpaceProjector(fields)
        labels = [fields.format_label(lab) for lab in fields.labels]
    else:
        fields = list(fields)
        if not fields:
            raise ValueError("need at least one perturbation field")
        projector = _FieldProjector(fields)
        labels = [getattr(f, "label", str(k)) for k, f in enumerate(fields)]

    results = _map_groups(
        lambda g: _accumulate_group(system, phi, projector, config, g),
        _groups(config),
        config.threads,
    )
    P, Q, counts, phi_sum, n_states = _reduce(results)
    phi_mean = phi_sum / n_states
    W = config.w_steps
    c = math.sqrt(config.dt) / system.sigma
    N = int(counts.sum())
    values = c * (P.sum(axis=0) - W * phi_mean * Q.sum(axis=0)) / N
    batch_values = c * (P - W * phi_mean * Q) / counts[:, None]
    nb = len(counts)
    std_errors = batch_values.std(axis=0, ddof=1) / math.sqrt(nb)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite response estimate")
    return ResponseTable(
        values=values,
        std_errors=std_errors,
        batch_values=batch_values,
        n_samples=N,
        phi_mean=phi_mean,
        labels=labels,
        config=config,
        metadata={"w_steps": W, "chain_steps": config.chain_steps, "sigma": system.sigma},
    )


def estimate_responses(system: SdeSystem, phi, fields, config: KdConfig = KdConfig()) -> list:
    """List of :class:`ResponseEstimate`, one per field, in input order."""
    return estimate_response_table(system, phi, fields, config).estimates()


def truncation_check(system, phi, fields, config: KdConfig = KdConfig()) -> dict:
    """Compare estimates with window ``W`` and ``2W`` on the same trajectories.

    A diagnostic: a difference large compared to the standard errors means
    correlations have not decayed within ``W``.
    """
    base = estimate_response_table(system, phi, fields, config)
    double = estimate_response_table(
        system, phi, fields, config.replace(decorrelation_time=2 * config.decorrelation_time)
    )
    diff = double.values - base.values
    se = np.hypot(base.std_errors, double.std_errors)
    return {"W": base, "2W": double, "difference": diff, "z": diff / np.where(se > 0, se, np.inf)}


@dataclass
class SweepResult:
    gammas: np.ndarray
    means: np.ndarray
    std_errors: np.ndarray
    batch_means: np.ndarray = None
    config: KdConfig = None

    def rows(self):
        return list(zip(self.gammas.tolist(), self.means.tolist(), self.std_errors.tolist()))


def _ergodic_group(system, phi, config, chains):
    rngs = _chain_streams(config.seed, config.n_chains)
    rngs = [rngs[c] for c in chains]
    run = _run_group(system, chains, rngs, config)
    S = config.chain_steps
    nb = config.n_batches
    sums = np.zeros(nb)
    counts = np.zeros(nb, dtype=np.int64)
    offset = 0
    n_states = S + 1
    for states, _ in run.blocks(S, config.block_steps):
        ph = np.asarray(phi(states), dtype=float)
        batch = (offset + np.arange(len(ph))) * nb // n_states
        np.add.at(sums, batch, ph.sum(axis=1))
        np.add.at(counts, batch, ph.shape[1])
        offset += len(ph)
    last = np.asarray(phi(run.state), dtype=float)
    sums[(n_states - 1) * nb // n_states] += last.sum()
    counts[(n_states - 1) * nb // n_states] += last.size
    return sums, counts


def sweep_observable(system: SdeSystem, eta: VectorField, gammas, phi, config: KdConfig = KdConfig()) -> SweepResult:
    """Ergodic averages of ``phi`` under drifts ``F + gamma eta``.

    Every ``gamma`` reuses the same seeds (common random numbers), which
    keeps the fitted slope far less noisy than the individual means.
    """
    gammas = np.asarray(list(gammas), dtype=float)
    if gammas.size == 0:
        raise ValueError("need at least one gamma")
    means, ses, batch_means = [], [], []
    for g in gammas:
        perturbed = system.perturbed(eta, float(g))
        parts = _map_groups(
            lambda grp: _ergodic_group(perturbed, phi, config, grp), _groups(config), config.threads
        )
        sums = sum(p[0] for p in parts)
        counts = sum(p[1] for p in parts)
        bm = sums / counts
        means.append(sums.sum() / counts.sum())
        ses.append(bm.std(ddof=1) / math.sqrt(len(bm)))
        batch_means.append(bm)
    return SweepResult(gammas, np.array(means), np.array(ses), np.array(batch_means), config)


@dataclass(frozen=True)
class SlopeCheck:
    passed: bool
    slope: float
    slope_se: float
    estimate: float
    combined_se: float
    margin: float

    @property
    def tolerance(self) -> float:
        return 3.0 * self.combined_se


def slope_match_check(sweep: SweepResult, estimate: ResponseEstimate, n_sigma: float = 3.0) -> SlopeCheck:
    """Least-squares slope of the sweep against a response estimate.

    When the sweep carries batch means (common random numbers), the slope
    error comes from the spread of per-batch slopes; otherwise the point
    errors are propagated as if independent.  ``margin`` is
    ``|slope - estimate|``.
    """
    x = np.asarray(sweep.gammas, dtype=float)
    y = np.asarray(sweep.means, dtype=float)
    if len(x) < 3:
        raise ValueError("slope check needs at least 3 gamma values")
    if np.ptp(x) == 0:
        raise ValueError("degenerate fit: all gamma values are equal")
    if not (x.min() <= 0 <= x.max()):
        raise ValueError("gamma values must span 0")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, y - y.mean()) / sxx)
    bm = sweep.batch_means
    if bm is not None and np.ndim(bm) == 2 and bm.shape[1] >= 2:
        per_batch = (xc @ (bm - bm.mean(axis=0))) / sxx
        slope_se = float(per_batch.std(ddof=1) / math.sqrt(len(per_batch)))
    else:
        slope_se = float(np.sqrt(np.sum((xc * np.asarray(sweep.std_errors)) ** 2)) / sxx)
    combined = math.hypot(slope_se, estimate.std_error)
    margin = abs(slope - estimate.value)
    slack = 1e-12 * max(1.0, abs(estimate.value))
    return SlopeCheck(
        passed=bool(margin <= n_sigma * combined + slack),
        slope=slope,
        slope_se=slope_se,
        estimate=float(estimate.value),
        combined_se=combined,
        margin=margin,
    )
