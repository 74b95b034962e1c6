import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from echo_thermo import dynamics
from echo_thermo.cli import ConfigError, ExperimentConfig, load_config, main, parse_quantity
from echo_thermo.dynamics import SpinConfig, TimeGrid, TimeSeries
from echo_thermo.lattice import TfimParams, build_lattice, critical_beta

RING = {
    "lattice": "ring4",
    "time_grid": {"dt": 0.125, "n_t": 8},
    "betas": ["beta_c/3", "beta_c"],
    "shots": {"n_shots": 10000},
    "trotter": {"max_step": 0.25},
    "wick": {"chi2_factor": 5, "omega_bound": "spectral"},
    "chains": {"n_chains": 2, "n_samples": 40, "burn_in": 4},
}


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units")
    return list(csv.DictReader(lines[1:]))


@pytest.mark.parametrize(
    "text, value",
    [(2, 2.0), (0.5, 0.5), ("16/pi", 16 / math.pi), ("4*pi", 4 * math.pi), ("-2**3", -8.0), ("8*beta_c/3", 8 * critical_beta() / 3)],
)
def test_parse_quantity(text, value):
    assert parse_quantity(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["__import__('os')", "pi(", "x", True, None, [1]])
def test_parse_quantity_rejects(text):
    with pytest.raises(ConfigError):
        parse_quantity(text)


def test_config_grids():
    cfg = ExperimentConfig(time_grid={"rate": "16/pi", "t_max": "pi"})
    assert cfg.grid().dt == pytest.approx(math.pi / 16) and cfg.grid().n_t == 16
    assert ExperimentConfig(time_grid={"n_t": 8, "t_max": 1}).grid().dt == pytest.approx(0.125)
    with pytest.raises(ConfigError):
        ExperimentConfig(time_grid={"dt": 0.1}).grid()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"lattice": "ring4", "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"betas": [-1]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"lattice": str(tmp_path / "missing.json")})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"provider": "oracle"})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_spectral_bound_option():
    cfg = ExperimentConfig.from_dict(RING)
    lo, hi = dynamics.extremal_energies(build_lattice("ring4"), TfimParams(1.0, 1.0))
    assert cfg.wick_config().omega_bound == pytest.approx(max(abs(lo), abs(hi)))


def test_lattice_command(tmp_path, capsys):
    assert main(["lattice", "--config", str(write_config(tmp_path, RING)), "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    assert "4" in capsys.readouterr().out
    doc = json.loads((tmp_path / "o" / "lattice.json").read_text())
    assert doc


def test_echoes_and_wick_roundtrip(tmp_path):
    cfg = dict(RING, shots=None, trotter={}, wick={}, betas=[0.5])
    path = write_config(tmp_path, cfg)
    assert main(["echoes", "--config", str(path), "--out", str(tmp_path / "e"), "--seed", "3"]) == 0
    series = TimeSeries.load(tmp_path / "e" / "series.json")
    lat, params = build_lattice("ring4"), TfimParams(1.0, 1.0)
    ref = dynamics.exact_echoes(SpinConfig.all_up(4), TimeGrid(0.125, 8), lat, params)
    np.testing.assert_allclose(series.values, ref.values, atol=1e-12)
    args = ["wick", "--config", str(path), "--out", str(tmp_path / "w"), "--seed", "3", "--series", str(tmp_path / "e" / "series.json")]
    assert main(args) == 0
    rows = read_csv(tmp_path / "w" / "weights.csv")
    assert float(rows[0]["beta"]) == 0.5 and float(rows[0]["weight"]) > 0
    assert "omega" in json.loads((tmp_path / "w" / "density.json").read_text())


def test_scan_writes_sorted_rows(tmp_path):
    cfg = dict(RING, shots=None, trotter={}, wick={"method": "gaussian_filter"}, betas=[0.3],
               time_grid={"rate": "16/pi", "t_max": "pi"}, scan={"values": [8, 2, 4]})
    out = tmp_path / "s"
    assert main(["scan", "--axis", "alpha", "--config", str(write_config(tmp_path, cfg)), "--out", str(out), "--seed", "0"]) == 0
    rows = read_csv(out / "scan_alpha.csv")
    assert [float(r["alpha"]) for r in rows] == [2.0, 4.0, 8.0]
    assert all(float(r["rel_error"]) >= 0 for r in rows)


def test_mc_and_manifest_reproducible(tmp_path):
    path = write_config(tmp_path, RING)
    for name in ("a", "b"):
        assert main(["mc", "--config", str(path), "--out", str(tmp_path / name), "--seed", "17", "--workers", "1"]) == 0
    assert (tmp_path / "a" / "mc.csv").read_text() == (tmp_path / "b" / "mc.csv").read_text()
    rows = read_csv(tmp_path / "a" / "mc.csv")
    assert len(rows) == 2 and {"beta", "m2", "m2_err", "unique_fraction", "acceptance"} <= set(rows[0])
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 17 and manifest["command"] == "mc"
    assert {"echo_thermo", "numpy", "scipy", "python"} <= set(manifest["versions"])
    assert len(list((tmp_path / "a" / "chains").glob("*.jsonl"))) == 4


def test_mc_worker_count_does_not_change_results(tmp_path):
    path = write_config(tmp_path, dict(RING, betas=["beta_c"]))
    assert main(["mc", "--config", str(path), "--out", str(tmp_path / "one"), "--seed", "5", "--workers", "1"]) == 0
    assert main(["mc", "--config", str(path), "--out", str(tmp_path / "two"), "--seed", "5", "--workers", "2"]) == 0
    assert (tmp_path / "one" / "mc.csv").read_text() == (tmp_path / "two" / "mc.csv").read_text()


def test_absent_seed_is_recorded(tmp_path):
    assert main(["lattice", "--config", str(write_config(tmp_path, RING)), "--out", str(tmp_path / "o")]) == 0
    seed = json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"]
    assert 0 <= seed < 2**64


def test_report_without_mc(tmp_path):
    cfg = dict(RING, lattice="honeycomb10", betas=["beta_c", "beta_c/3"])
    assert main(["report", "--no-mc", "--config", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "r"), "--seed", "1"]) == 0
    rows = read_csv(tmp_path / "r" / "report.csv")
    assert [float(r["beta"]) for r in rows] == pytest.approx([critical_beta() / 3, critical_beta()])
    lat = build_lattice("honeycomb10")
    assert float(rows[1]["m2_exact"]) == pytest.approx(dynamics.thermal_m2(lat, TfimParams(1.0, 1.0), critical_beta()))
    assert float(rows[1]["m2_classical"]) == pytest.approx(dynamics.thermal_m2(lat, TfimParams(1.0, 0.0), critical_beta()))


def test_errors_are_machine_readable(tmp_path, capsys):
    out = tmp_path / "err"
    out.mkdir()
    code = main(["wick", "--config", str(write_config(tmp_path, RING)), "--out", str(out), "--seed", "1"])
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError" and record["command"] == "wick"
    assert json.loads((out / "error.json").read_text()) == record


def test_runtime_error_exit_code(tmp_path, capsys):
    series = tmp_path / "broken.json"
    series.write_text("{}")
    code = main(["wick", "--config", str(write_config(tmp_path, RING)), "--out", str(tmp_path / "x"), "--seed", "1", "--series", str(series)])
    assert code == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["command"] == "wick"


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "echo_thermo.cli", "lattice", "--out", str(tmp_path), "--seed", "1"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "manifest.json").is_file()


def test_invalid_wick_settings_are_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig(wick={"method": "maxent"}).wick_config()
    with pytest.raises(ConfigError):
        ExperimentConfig(wick={"chi2_target": 4}).wick_config()
