import json

import numpy as np
import pytest

from torusresponse.basis import read_riesz_csv
from torusresponse.cli import main, run_experiment
from torusresponse.config import ConfigError, ExperimentConfig, format_config, load_config
from torusresponse.io import read_csv
from torusresponse.systems import get_system

SMALL = """
system = kuramoto2
N = 3
total_time = 1000
decorrelation_time = 2.0
sweep_field = B1_(1,0)
gammas = -0.1, 0.0, 0.1
grid_m = 64
orbit_steps = 500
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_defaults_are_printable_and_reload():
    text = format_config()
    assert "total_time = auto" in text and "dt = 0.01" in text
    assert load_config_from_text(text) == ExperimentConfig()


def load_config_from_text(text, tmp=None):
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "c.ini"
        p.write_text(text)
        return load_config(p)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
        load_config_from_text("bogus = 1\n")


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        load_config_from_text("[other]\nseed = 1\n")


def test_unknown_system_lists_ids():
    with pytest.raises(ConfigError, match="kuramoto2, kuramoto20-reduced, lorenz-cutoff"):
        load_config_from_text("system = pendulum\n")


def test_flags_override_file(small_cfg):
    cfg = load_config(small_cfg, seed=5, threads=2, scale="desk")
    assert (cfg.seed, cfg.threads, cfg.scale) == (5, 2, "desk")
    assert cfg.resolved().total_time == 200.0
    # desk on system default
    assert load_config(None, scale="desk").resolved().total_time == get_system("kuramoto2").total_time / 5


def test_optimize_writes_unit_norm_eta(small_cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["optimize", "--config", str(small_cfg), "--out", str(out)]) == 0
    header, rows = read_csv(out / "coefficients.csv")
    assert header == ["j", "n_1", "n_2", "estimate", "std_error"] and len(rows) == 18
    space = get_system("kuramoto2").space(3, 5, False)
    eta = read_riesz_csv(out / "eta_opt.csv", space)
    assert abs(np.linalg.norm(eta.coefficients) - 1.0) <= 1e-12
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["seed"] == 0 and meta["config"]["p"] == 5
    assert meta["config"]["total_time"] == 1000.0


def test_rerun_from_metadata_is_byte_identical(small_cfg, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["optimize", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert main(["optimize", "--config", str(a / "metadata.json"), "--out", str(b)]) == 0
    assert main(["optimize", "--config", str(a / "config.ini"), "--out", str(c), "--threads", "3"]) == 0
    for name in ("coefficients.csv", "eta_opt.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


def test_seed_changes_output(small_cfg, tmp_path):
    main(["respond", "--config", str(small_cfg), "--out", str(tmp_path / "a")])
    main(["respond", "--config", str(small_cfg), "--out", str(tmp_path / "b"), "--seed", "1"])
    assert (tmp_path / "a" / "coefficients.csv").read_bytes() != (tmp_path / "b" / "coefficients.csv").read_bytes()


def test_sweep_and_simulate(small_cfg, tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(small_cfg), "--out", str(out)]) == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header == ["gamma", "mean", "std_error"] and [float(r[0]) for r in rows] == [-0.1, 0.0, 0.1]
    assert main(["simulate", "--config", str(small_cfg), "--out", str(out)]) == 0
    header, rows = read_csv(out / "orbit.csv")
    assert header == ["t", "x_1", "x_2"] and len(rows) == 51


def test_oracle_report(small_cfg, tmp_path):
    out = tmp_path / "r"
    assert main(["oracle", "--config", str(small_cfg), "--out", str(out)]) == 0
    _, rows = read_csv(out / "oracle_report.csv")
    report = {k: float(v) for k, v in rows}
    assert abs(report["density_mass"] - 1) < 1e-12
    assert report["max_column_sum_error"] < 1e-12
    assert abs(report["fd_response_mass"]) < 1e-10
    assert -0.03 < report["response"] < -0.01


def test_oracle_refuses_three_dimensions(tmp_path, capsys):
    cfg = tmp_path / "l.ini"
    cfg.write_text("system = lorenz-cutoff\n")
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "supports d <= 2" in capsys.readouterr().err


def test_bad_sweep_field(small_cfg, tmp_path, capsys):
    cfg = load_config(small_cfg, out=str(tmp_path / "z"))
    from dataclasses import replace

    with pytest.raises(ConfigError, match="sweep_field"):
        run_experiment(replace(cfg, sweep_field="B9_(9,9)"), "sweep")


def test_print_config(capsys):
    assert main(["respond", "--print-config", "--scale", "desk"]) == 0
    out = capsys.readouterr().out
    assert "total_time = 20000.0" in out and "N = 11" in out


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for key in ExperimentConfig.__dataclass_fields__:
        assert f"{key} = " in out
