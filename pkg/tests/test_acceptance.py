"""Acceptance criteria, one test per criterion.

Each test records a ``criterion N: PASS/FAIL`` line that pytest prints in
the terminal summary.  Criterion 6 is long-running and marked ``nightly``
(deselected by default; run with ``pytest -m nightly``).
"""

import itertools
import time

import numpy as np
import pytest

from torusresponse.basis import (
    ProductBasis,
    RieszVector,
    assemble_optimal_perturbation,
    hp_norm_sq,
    hp_norm_sq_bruteforce,
)
from torusresponse.estimator import (
    KdConfig,
    estimate_response_table,
    estimate_responses,
    slope_match_check,
    sweep_observable,
)
from torusresponse.oracle import (
    Grid,
    build_kernel_matrix,
    first_order_expansion_check,
    invariant_density,
    l2_smoothing_check,
    response_resolvent,
    response_vector,
    smoothing_window,
    spectral_diagnostics,
)
from torusresponse.systems import get_system
from torusresponse.torus import SdeSystem, TorusDomain, VectorField

T1 = TorusDomain(1)
COS = lambda x: np.cos(x[..., 0])  # noqa: E731
SIN = VectorField(lambda x: np.sin(x), "sin")
DRIFTLESS = SdeSystem(T1, VectorField.zero(), 1.0)
GAMMAS = [-0.2, -0.1, -0.05, 0.05, 0.1, 0.2]

KURAMOTO2_FIRST_SIX = [-0.05, -0.09, 0.19, 0.01, 0.0, 0.0]
REDUCED20_LEADING = [0.31, -0.9, 0.31, -0.02, 0.01, 0.0]
LORENZ_SIGNS = [-1, 1, 1, 0, -1, 0]


def trig_field(a, b, label="trig"):
    a, b = np.asarray(a, float), np.asarray(b, float)
    k = np.arange(1, len(a) + 1)

    def f(x):
        t = x[..., :1] * k
        return (np.cos(t) @ a + np.sin(t) @ b)[..., None]

    return VectorField(f, label)


def normalised(table):
    """``eta_opt`` coefficients and their standard errors (norm treated as exact)."""
    norm = np.linalg.norm(table.values)
    return table.values / norm, table.std_errors / norm


# -- criterion 1 -------------------------------------------------------------


def test_criterion_1_analytic_gibbs_response(report):
    t0 = time.perf_counter()
    oracle = response_resolvent(DRIFTLESS, SIN, COS, Grid(T1, 256), 0.05, fd_delta=1e-3).value
    oracle_ok = abs(oracle + 1.0) <= 0.02
    cfg = KdConfig(total_time=2e4, decorrelation_time=4.0)
    est = estimate_responses(DRIFTLESS, COS, [SIN], cfg)[0]
    mc_ok = abs(est.value + 1.0) <= 3 * est.std_error
    elapsed = time.perf_counter() - t0
    passed = oracle_ok and mc_ok and elapsed <= 60
    report(
        1,
        passed,
        f"oracle={oracle:.5f} (|+1|<=0.02: {oracle_ok}); MC={est.value:.4f}+-{est.std_error:.4f} "
        f"(within 3 SE of -1: {mc_ok}); {elapsed:.0f}s",
    )
    assert oracle_ok, oracle
    assert mc_ok, f"MC {est.value} +- {est.std_error} is not within 3 SE of -1"
    assert elapsed <= 60


# -- criterion 2 -------------------------------------------------------------


def test_criterion_2_cross_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    dt, W = 0.01, 4.0
    worst = 0.0
    failures = []
    for i in range(5):
        drift = trig_field(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), f"F{i}")
        etas = [trig_field(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), f"eta{i}{j}") for j in range(5)]
        system = SdeSystem(T1, drift, 1.0)
        cfg = KdConfig(total_time=2e4, decorrelation_time=W, dt=dt, seed=100 + i)
        table = estimate_response_table(system, COS, etas, cfg)
        for j, eta in enumerate(etas):
            # the oracle on the same dt-chain, summed over the same window
            fine = response_resolvent(system, eta, COS, Grid(T1, 256), dt, horizon=W).value
            coarse = response_resolvent(system, eta, COS, Grid(T1, 128), dt, horizon=W).value
            combined = np.hypot(table.std_errors[j], abs(fine - coarse))
            z = abs(table.values[j] - fine) / combined
            worst = max(worst, z)
            if z > 3:
                failures.append((i, j, table.values[j], fine, combined))
    elapsed = time.perf_counter() - t0
    passed = not failures and elapsed <= 300
    report(2, passed, f"25 pairs, worst |MC - oracle| = {worst:.2f} combined SE; {elapsed:.0f}s")
    assert not failures, failures
    assert elapsed <= 300


# -- criteria 3 and 4 ----------------------------------------------------------


@pytest.fixture(scope="module")
def kuramoto2_run():
    reg = get_system("kuramoto2")
    space = reg.space()
    cfg = KdConfig(total_time=1e5, decorrelation_time=4.0)
    t0 = time.perf_counter()
    table = estimate_response_table(reg.system, reg.observable, space, cfg)
    return reg, space, cfg, table, time.perf_counter() - t0


def test_criterion_3_kuramoto2_coefficients(kuramoto2_run, report):
    reg, space, cfg, table, elapsed = kuramoto2_run
    coef, se = normalised(table)
    k10 = space.find((1, (1, 0)))
    lead_ok = abs(coef[k10] + 0.87) <= 0.15
    first = [space.find((1, (0, n))) for n in range(6)]
    six_ok = [
        bool(abs(coef[k] - target) <= 0.05 + 3 * se[k]) for k, target in zip(first, KURAMOTO2_FIRST_SIX)
    ]
    top = space.labels[int(np.argmax(np.abs(coef)))]
    top_ok = top == (1, (1, 0))
    passed = lead_ok and all(six_ok) and top_ok
    report(
        3,
        passed,
        f"C[B1_(1,0)]={coef[k10]:.3f}; first six={np.round(coef[first], 3).tolist()} "
        f"ok={six_ok}; argmax={space.format_label(top)}; {elapsed:.0f}s",
    )
    assert lead_ok and all(six_ok) and top_ok


def test_criterion_4_sweep_slopes_and_optimality(kuramoto2_run, report):
    reg, space, cfg, table, _ = kuramoto2_run
    t0 = time.perf_counter()
    opt = assemble_optimal_perturbation(RieszVector(table.values, space))
    cases = [
        ("eta_opt", opt.field, table.combine(opt.coefficients, "eta_opt")),
    ]
    for label in [(1, (1, 0)), (2, (10, 10))]:
        k = space.find(label)
        cases.append((space.format_label(label), space.element_field(k), table.estimates()[k]))
    sweep_cfg = cfg.replace(seed=cfg.seed + 1)
    details, checks = [], []
    for name, field, est in cases:
        sweep = sweep_observable(reg.system, field, GAMMAS, reg.observable, sweep_cfg)
        check = slope_match_check(sweep, est)
        checks.append(check.passed)
        details.append(
            f"{name}: slope={check.slope:.3g}+-{check.slope_se:.2g} vs R={check.estimate:.3g} "
            f"({check.margin / check.combined_se:.2f} SE)"
        )
    best_basis = float(np.max(np.abs(table.values)))
    optimal = bool(opt.norm > best_basis)
    elapsed = time.perf_counter() - t0
    passed = all(checks) and optimal
    report(4, passed, "; ".join(details) + f"; R(eta_opt)={opt.norm:.5f} > max |R(B)|={best_basis:.5f}: {optimal}; {elapsed:.0f}s")
    assert all(checks), details
    assert optimal


# -- criterion 5 -------------------------------------------------------------


def test_criterion_5_reduced_20d(report):
    reg = get_system("kuramoto20-reduced")
    space = reg.space()
    t0 = time.perf_counter()
    table = estimate_response_table(reg.system, reg.observable, space, KdConfig(total_time=1e5, decorrelation_time=6.0))
    elapsed = time.perf_counter() - t0
    coef, se = normalised(table)
    lead_ok = [bool(abs(coef[n] - t) <= 0.1 + 3 * se[n]) for n, t in enumerate(REDUCED20_LEADING)]
    mag = np.abs(coef)
    # no statistically significant increase of |C_n| from one index to the next, n >= 3
    rises = [
        (n, round(float(mag[n + 1] - mag[n]), 5))
        for n in range(3, len(coef) - 1)
        if mag[n + 1] - mag[n] > 3 * np.hypot(se[n], se[n + 1])
    ]
    strictly = bool(np.all(np.diff(mag[3:]) <= 0))
    top_ok = int(np.argmax(mag)) == 1
    passed = all(lead_ok) and not rises and top_ok and elapsed <= 600
    report(
        5,
        passed,
        f"leading={np.round(coef[:6], 3).tolist()} ok={lead_ok}; significant rises n>=3: {rises} "
        f"(strictly monotone: {strictly}); argmax n={int(np.argmax(mag))}; {elapsed:.0f}s",
    )
    assert all(lead_ok) and not rises and top_ok
    assert elapsed <= 600


# -- criterion 6 -------------------------------------------------------------


@pytest.mark.nightly
def test_criterion_6_lorenz_qualitative(report):
    reg = get_system("lorenz-cutoff")
    space = reg.space()
    cfg = KdConfig(total_time=reg.total_time / 5, decorrelation_time=reg.decorrelation_time)
    t0 = time.perf_counter()
    table = estimate_response_table(reg.system, reg.observable, space, cfg)
    elapsed = time.perf_counter() - t0
    coef, se = normalised(table)
    top = space.labels[int(np.argmax(np.abs(coef)))]
    first = [space.find((1, (0, 0, n))) for n in range(6)]
    signs_ok = []
    for k, s in zip(first, LORENZ_SIGNS):
        if s == 0:
            signs_ok.append(bool(abs(coef[k]) <= 0.05 + 3 * se[k]))
        else:
            signs_ok.append(bool(np.sign(coef[k]) == s or abs(coef[k]) <= 3 * se[k]))
    passed = top == (2, (0, 2, 0)) and all(signs_ok)
    report(
        6,
        passed,
        f"argmax={space.format_label(top)}; first six={np.round(coef[first], 3).tolist()} "
        f"+-{np.round(se[first], 3).tolist()} ok={signs_ok}; {elapsed:.0f}s",
    )
    assert passed


# -- criterion 7 -------------------------------------------------------------


def test_criterion_7_property_suites(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    results = {}

    space = ProductBasis(TorusDomain(2), 4, 3)
    unit, homog = True, True
    for _ in range(200):
        c = rng.standard_normal(len(space)) * 10.0 ** rng.uniform(-6, 6)
        opt = assemble_optimal_perturbation(RieszVector(c, space))
        unit &= abs(np.linalg.norm(opt.coefficients) - 1) <= 1e-12
        a = 10.0 ** rng.uniform(-3, 3)
        scaled = assemble_optimal_perturbation(RieszVector(a * c, space))
        homog &= np.allclose(scaled.coefficients, opt.coefficients, rtol=1e-12, atol=1e-15)
    results["unit norm"] = unit
    results["degree-0 homogeneous"] = homog

    system = SdeSystem(T1, trig_field([0.5, -0.2], [0.3, 0.1]), 1.0)
    e1, e2 = trig_field([1, 0], [0, 0.5], "e1"), trig_field([0, -0.3], [1, 0], "e2")
    a, b = 1.7, -0.6
    combo = trig_field([a, -0.3 * b], [b, 0.5 * a], "combo")
    r1, r2, r12 = estimate_response_table(
        system, COS, [e1, e2, combo], KdConfig(total_time=400.0, decorrelation_time=2.0, n_chains=20)
    ).values
    results["linearity"] = abs(r12 - (a * r1 + b * r2)) <= 1e-10 * (abs(a * r1) + abs(b * r2))

    grid = Grid(T1, 64)
    K = build_kernel_matrix(system, grid, 0.5)
    results["column sums"] = float(np.abs(K.entries.sum(axis=0) - 1).max()) <= 1e-12
    diag = spectral_diagnostics(K)
    results["min entry > 0"] = diag.min_entry > 0
    results["rho < 1"] = diag.contraction_rho < 1
    K0 = build_kernel_matrix(DRIFTLESS, Grid(T1, 128), 0.5)
    lam2 = spectral_diagnostics(K0).lambda2_modulus
    results["lambda2 driftless"] = abs(lam2 - np.exp(-0.25)) <= 1e-3

    f0 = invariant_density(build_kernel_matrix(system, grid, 0.1))
    D = response_vector(system, e1, f0, grid, 0.1, 1e-3)
    results["D zero average"] = abs(grid.integrate(D)) <= 1e-10

    results["hp_norm brute force"] = all(
        hp_norm_sq(n, p) == hp_norm_sq_bruteforce(n, p)
        for d in (1, 2, 3)
        for p in range(6)
        for n in itertools.product(range(5), repeat=d)
    )
    elapsed = time.perf_counter() - t0
    passed = all(results.values()) and elapsed < 60
    report(7, passed, ", ".join(f"{k}: {v}" for k, v in results.items()) + f"; {elapsed:.0f}s")
    assert passed, results


# -- criterion 8 -------------------------------------------------------------


def test_criterion_8_rate_checks(report):
    t0 = time.perf_counter()
    grid = Grid(T1, 128)
    p0 = np.exp(np.cos(grid.cell_centers[:, 0]))
    p0 /= grid.integrate(p0)
    first = first_order_expansion_check(DRIFTLESS, SIN, p0, grid, 0.1, [1e-1, 5e-2, 2.5e-2, 1.25e-2])
    slope_ok = abs(first.slope - 1.0) <= 0.15
    exps = {}
    for d, m in ((1, 512), (2, 96)):
        dom = TorusDomain(d)
        g = Grid(dom, m)
        sys_d = SdeSystem(dom, VectorField.zero(), 1.0)
        lo, hi = smoothing_window(sys_d, g)
        exps[d] = l2_smoothing_check(sys_d, g, np.geomspace(4 * lo, hi, 6)).exponent
    exp_ok = all(abs(exps[d] + d / 4) <= 0.05 for d in exps)
    elapsed = time.perf_counter() - t0
    passed = slope_ok and exp_ok and elapsed <= 120
    report(
        8,
        passed,
        f"first-order slope={first.slope:.3f}; smoothing exponents d=1: {exps[1]:.3f}, d=2: {exps[2]:.3f}; {elapsed:.0f}s",
    )
    assert passed
