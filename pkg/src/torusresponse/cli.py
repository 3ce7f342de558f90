"""Command line entry point.

    torusresponse {respond,optimize,sweep,oracle,simulate} [--config PATH]
                  [--seed INT] [--threads INT] [--out DIR] [--scale {desk,paper}]

Every run writes ``metadata.json`` (resolved config, seeds, derived step
counts, versions) and ``config.ini`` (the resolved config; feeding it back
with ``--config`` reproduces the CSV outputs byte for byte).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .basis import RieszVector, VanishingResponseError, assemble_optimal_perturbation, write_riesz_csv
from .config import ConfigError, ExperimentConfig, format_config, load_config
from .estimator import estimate_response_table, sweep_observable
from .io import emit_csv, write_json
from .oracle import (
    ConvergenceError,
    Grid,
    GridResolutionError,
    ResolventError,
    build_kernel_matrix,
    invariant_density,
    response_resolvent,
    spectral_diagnostics,
)
from .systems import get_system
from .torus import simulate_em

__all__ = ["main", "run_experiment", "COMMANDS", "UnsupportedDimensionError"]

log = logging.getLogger("torusresponse")

COMMANDS = ("respond", "optimize", "sweep", "oracle", "simulate")


class UnsupportedDimensionError(ValueError):
    pass


def _respond(cfg, reg, space, out, meta):
    table = estimate_response_table(reg.system, reg.observable, space, cfg.kd_config())
    rows = [
        space.flat(lab) + (v, s)
        for lab, v, s in zip(space.labels, table.values, table.std_errors)
    ]
    emit_csv(list(space.label_columns) + ["estimate", "std_error"], rows, out / "coefficients.csv")
    meta["n_samples"] = table.n_samples
    meta["phi_mean"] = table.phi_mean
    meta["w_steps"] = cfg.kd_config().w_steps
    meta["chain_steps"] = cfg.kd_config().chain_steps
    return table


def _optimize(cfg, reg, space, out, meta):
    table = _respond(cfg, reg, space, out, meta)
    opt = assemble_optimal_perturbation(RieszVector(table.values, space))
    write_riesz_csv(out / "eta_opt.csv", RieszVector(opt.coefficients, space))
    emit_csv(
        ["quantity", "value"],
        [("response_norm", opt.norm), ("eta_opt_norm", space.norm(opt.coefficients))],
        out / "eta_opt_norm.csv",
    )
    meta["response_norm"] = opt.norm
    meta["argmax"] = space.format_label(RieszVector(table.values, space).argmax())
    return table, opt


def _named_field(cfg, reg, space, out, meta):
    """``(field, mc_estimate)`` for ``cfg.sweep_field``."""
    if cfg.sweep_field == "eta_opt":
        table, opt = _optimize(cfg, reg, space, out, meta)
        est = table.combine(opt.coefficients, "eta_opt")
        return opt.field, (est.value, est.std_error)
    labels = [space.format_label(lab) for lab in space.labels]
    if cfg.sweep_field not in labels:
        raise ConfigError(
            f"sweep_field {cfg.sweep_field!r} is neither 'eta_opt' nor a basis label such as {labels[1]!r}"
        )
    k = labels.index(cfg.sweep_field)
    return space.element_field(k), None


def _sweep(cfg, reg, space, out, meta):
    eta, est = _named_field(cfg, reg, space, out, meta)
    result = sweep_observable(reg.system, eta, cfg.gammas, reg.observable, cfg.kd_config())
    emit_csv(["gamma", "mean", "std_error"], result.rows(), out / "sweep.csv")
    meta["sweep_field"] = cfg.sweep_field
    if est is not None:
        meta["sweep_field_response"] = {"estimate": est[0], "std_error": est[1]}


def _oracle(cfg, reg, space, out, meta):
    system = reg.system
    if system.d > 2:
        raise UnsupportedDimensionError(
            f"the transfer oracle supports d <= 2; system {reg.key!r} has d={system.d}"
        )
    eta, _ = _named_field(cfg, reg, space, out, meta)
    grid = Grid(system.domain, cfg.grid_m)
    K = build_kernel_matrix(system, grid, cfg.oracle_dt)
    f0 = invariant_density(K)
    diag = spectral_diagnostics(K, seed=cfg.seed)
    res = response_resolvent(
        system, eta, reg.observable, grid, cfg.oracle_dt, fd_delta=cfg.fd_delta, f0=f0, K0=K
    )
    rows = [
        ("grid_m", cfg.grid_m),
        ("oracle_dt", cfg.oracle_dt),
        ("density_mass", f0.mass),
        ("density_residual", f0.residual),
        ("lambda2_modulus", diag.lambda2_modulus),
        ("min_entry", diag.min_entry),
        ("contraction_rho", diag.contraction_rho),
        ("doeblin_bound", diag.doeblin_bound),
        ("max_column_sum_error", float(np.max(np.abs(K.entries.sum(axis=0) - 1.0)))),
        ("fd_response_mass", res.D_mass),
        ("resolvent_residual", res.residual),
        ("response", res.value),
    ]
    emit_csv(["quantity", "value"], rows, out / "oracle_report.csv")
    meta["oracle_field"] = cfg.sweep_field


def _simulate(cfg, reg, space, out, meta):
    system = reg.system
    x0 = np.asarray(system.domain.centers)
    traj = simulate_em(system, x0, dt=cfg.dt, steps=cfg.orbit_steps, seed=cfg.seed)
    idx = np.arange(0, len(traj.states), cfg.orbit_stride)
    header = ["t"] + [f"x_{i + 1}" for i in range(system.d)]
    rows = [(float(i * cfg.dt),) + tuple(traj.states[i].tolist()) for i in idx]
    emit_csv(header, rows, out / "orbit.csv")


_HANDLERS = {
    "respond": _respond,
    "optimize": _optimize,
    "sweep": _sweep,
    "oracle": _oracle,
    "simulate": _simulate,
}


def run_experiment(config: ExperimentConfig, command: str, requested_scale: str = None) -> int:
    """Run one subcommand and write its artifacts into ``config.out``."""
    if command not in _HANDLERS:
        raise ValueError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    requested_scale = requested_scale or config.scale
    cfg = config.resolved()
    reg = get_system(cfg.system)
    space = reg.space(int(cfg.N), int(cfg.p), bool(cfg.reduced))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": command,
        "config": cfg.as_dict(),
        "requested_scale": requested_scale,
        "seed": cfg.seed,
        "space": {"kind": space.kind, "size": len(space), "origin": getattr(space, "origin", None)},
        "versions": {"torusresponse": __version__, "numpy": np.__version__},
    }
    if requested_scale == "desk":
        meta["scale_note"] = (
            "total_time divided by 5; standard errors grow by about sqrt(5), "
            "so comparison tolerances stated as k standard errors widen accordingly"
        )
    (out / "config.ini").write_text(format_config(cfg))
    t0 = time.perf_counter()
    _HANDLERS[command](cfg, reg, space, out, meta)
    meta["elapsed_seconds"] = time.perf_counter() - t0
    write_json(meta, out / "metadata.json")
    return 0


def _defaults_epilog() -> str:
    lines = ["config keys and defaults ('auto' = registered system default):"]
    lines += ["  " + line for line in format_config().splitlines()[1:]]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusresponse",
        description="Linear response and optimal drift perturbations of SDEs on the torus.",
        epilog=_defaults_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="key-value config file (or a metadata.json)")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
    parser.add_argument("--out", default=None, help="output directory (default ./out)")
    parser.add_argument("--scale", choices=("desk", "paper"), default=None, help="desk divides total_time by 5 (default paper)")
    parser.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads, out=args.out, scale=args.scale)
        if args.print_config:
            sys.stdout.write(format_config(cfg.resolved()))
            return 0
        return run_experiment(cfg, args.command)
    except (
        ConfigError,
        UnsupportedDimensionError,
        GridResolutionError,
        ConvergenceError,
        ResolventError,
        VanishingResponseError,
        KeyError,
        OSError,
    ) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"torusresponse: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
