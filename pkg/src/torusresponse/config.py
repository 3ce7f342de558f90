"""Experiment configuration: a flat ``key = value`` file.

The file may contain a single ``[experiment]`` section or bare key-value
lines.  Unknown keys are rejected.  Values left at ``auto`` take the
registered system's default.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .estimator import KdConfig
from .systems import SYSTEMS, get_system

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "format_config", "SECTION"]

SECTION = "experiment"
AUTO = "auto"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "kuramoto2"
    p: object = AUTO
    N: object = AUTO
    reduced: object = AUTO
    total_time: object = AUTO
    decorrelation_time: object = AUTO
    dt: float = 0.01
    burn_in_time: float = 100.0
    n_chains: int = 100
    n_batches: int = 20
    chain_group: int = 100
    block_steps: int = 2000
    gammas: tuple = (-0.2, -0.1, -0.05, 0.05, 0.1, 0.2)
    sweep_field: str = "eta_opt"
    grid_m: int = 64
    oracle_dt: float = 0.05
    fd_delta: float = 1e-3
    orbit_steps: int = 20000
    orbit_stride: int = 10
    scale: str = "paper"
    seed: int = 0
    threads: int = 1
    out: str = "out"

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(
                f"unknown system id {self.system!r}; registered ids: {', '.join(sorted(SYSTEMS))}"
            )
        if self.scale not in ("desk", "paper"):
            raise ConfigError(f"scale must be 'desk' or 'paper', got {self.scale!r}")
        for name in ("n_chains", "chain_group", "block_steps", "grid_m", "orbit_steps", "orbit_stride", "threads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.dt > 0 or not self.oracle_dt > 0 or not self.fd_delta > 0:
            raise ConfigError("dt, oracle_dt and fd_delta must be positive")
        if len(self.gammas) < 3:
            raise ConfigError("gammas needs at least 3 values")

    def resolved(self) -> "ExperimentConfig":
        """Replace every ``auto`` with the system default and apply ``scale``.

        The result has ``scale = paper`` with ``total_time`` already divided
        for desk runs, so it reproduces the run when loaded again.
        """
        reg = get_system(self.system)
        values = {}
        if self.p == AUTO:
            values["p"] = reg.p
        if self.N == AUTO:
            values["N"] = reg.N
        if self.reduced == AUTO:
            values["reduced"] = reg.reduced
        if self.decorrelation_time == AUTO:
            values["decorrelation_time"] = reg.decorrelation_time
        if self.total_time == AUTO:
            values["total_time"] = reg.total_time
        cfg = replace(self, **values)
        if cfg.scale == "desk":
            cfg = replace(cfg, total_time=float(cfg.total_time) / 5.0, scale="paper")
        return cfg

    def kd_config(self) -> KdConfig:
        """Estimator settings; call on a :meth:`resolved` config."""
        cfg = self
        if AUTO in (cfg.total_time, cfg.decorrelation_time):
            raise ConfigError("kd_config() needs a resolved config")
        try:
            return KdConfig(
                total_time=float(cfg.total_time),
                decorrelation_time=float(cfg.decorrelation_time),
                dt=float(cfg.dt),
                burn_in_time=float(cfg.burn_in_time),
                seed=int(cfg.seed),
                n_chains=int(cfg.n_chains),
                n_batches=int(cfg.n_batches),
                block_steps=int(cfg.block_steps),
                chain_group=int(cfg.chain_group),
                threads=int(cfg.threads),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> dict:
        return asdict(self)


def _to_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _gammas(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(g) for g in text)
    return tuple(float(g) for g in text.replace(",", " ").split())


_PARSERS = {
    "system": str,
    "p": int,
    "N": int,
    "reduced": _to_bool,
    "total_time": float,
    "decorrelation_time": float,
    "dt": float,
    "burn_in_time": float,
    "n_chains": int,
    "n_batches": int,
    "chain_group": int,
    "block_steps": int,
    "gammas": _gammas,
    "sweep_field": str,
    "grid_m": int,
    "oracle_dt": float,
    "fd_delta": float,
    "orbit_steps": int,
    "orbit_stride": int,
    "scale": str,
    "seed": int,
    "threads": int,
    "out": str,
}


def _parse_value(key, value):
    if key not in _PARSERS:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(_PARSERS)}")
    if isinstance(value, str) and value.strip().lower() == AUTO and key in ("p", "N", "reduced", "total_time", "decorrelation_time"):
        return AUTO
    if isinstance(value, bool) or not isinstance(value, str):
        return _gammas(value) if key == "gammas" else value
    try:
        return _PARSERS[key](value.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc


def _read_pairs(path: Path) -> dict:
    text = path.read_text()
    if path.suffix == ".json":
        meta = json.loads(text)
        return dict(meta.get("config", meta))
    if not any(line.lstrip().startswith("[") for line in text.splitlines()):
        text = f"[{SECTION}]\n" + text
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (N vs n)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    extra = [s for s in parser.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"{path}: unknown section(s) {extra}; use [{SECTION}]")
    return dict(parser[SECTION]) if parser.has_section(SECTION) else {}


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then non-``None`` ``overrides``."""
    values = {}
    if path is not None:
        for key, value in _read_pairs(Path(path)).items():
            values[key] = _parse_value(key, value)
    for key, value in overrides.items():
        if value is not None:
            values[key] = _parse_value(key, value)
    return ExperimentConfig(**values)


def format_config(cfg: ExperimentConfig = None) -> str:
    """Key-value text for ``cfg`` (defaults when ``None``); loadable by :func:`load_config`."""
    cfg = ExperimentConfig() if cfg is None else cfg
    lines = [f"[{SECTION}]"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "gammas":
            v = ", ".join(repr(float(g)) for g in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
