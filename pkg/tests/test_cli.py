import dataclasses
import json

import numpy as np
import pytest

from cmtfiber import __version__
from cmtfiber.cli import main
from cmtfiber.config import dump_config, reference_config_path
from cmtfiber.plotting import read_table


@pytest.fixture(scope="module")
def short_tm(tmp_path_factory, tm_cfg):
    """Reference Tm fiber cut to 0.2 m."""
    cfg = tm_cfg.replace(fiber=dataclasses.replace(tm_cfg.fiber, L=0.2),
                         numerics=dataclasses.replace(tm_cfg.numerics, L_tilde=0.02))
    path = tmp_path_factory.mktemp("cfg") / "tm_short.json"
    dump_config(cfg, path)
    return path


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    code, out, _ = _run(capsys, "--version")
    assert code == 0 and out.strip() == f"cmtfiber {__version__}"


def test_modes_yb(capsys):
    code, out, _ = _run(capsys, "modes", "--config", reference_config_path("yb"))
    assert code == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert lines[0].startswith("mode,rank")
    assert [l.split(",")[0] for l in lines[1:]] == ["LP01", "LP11", "LP21", "LP02"]
    assert "# steps_for_L: " in out


def test_builtin_config_name(capsys):
    code, out, _ = _run(capsys, "modes", "--config", "tm")
    assert code == 0
    assert [l.split(",")[0] for l in out.splitlines() if l.startswith("LP")] == ["LP01", "LP11"]


def test_missing_config_names_path(capsys, tmp_path):
    missing = tmp_path / "nowhere.json"
    code, _, err = _run(capsys, "modes", "--config", missing)
    assert code == 3
    assert str(missing) in err


def test_invalid_config_is_config_error(capsys, tmp_path, tm_cfg):
    d = tm_cfg.to_dict()
    d["fiber"]["r_clad"] = 1e-6
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    code, _, err = _run(capsys, "modes", "--config", bad)
    assert code == 3 and "r_core < r_clad" in err


@pytest.mark.parametrize("argv", [["simulate"], ["bogus"], ["modes", "--config"],
                                  ["sweep", "--config", "x", "--pp0", "a:b", "--ltilde", "1",
                                   "--out", "o"]])
def test_usage_errors(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == 2 and err


def test_simulate_first_row_and_determinism(capsys, tmp_path):
    args = ["simulate", "--config", reference_config_path("tm"), "--length", "0.02"]
    assert _run(capsys, *args, "--out", tmp_path / "a.csv")[0] == 0
    assert _run(capsys, *args, "--out", tmp_path / "b.csv")[0] == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    meta, names, data = read_table(tmp_path / "a.csv")
    assert names == ["z_m", "P_pump_W", "P_LP01_W", "P_LP11_W", "P_signal_W"]
    assert data[0, 0] == 0
    assert data[0, 1] == pytest.approx(1100.0, rel=1e-12)
    assert data[0, -1] == pytest.approx(30.0, rel=1e-10)
    assert meta["solver"] == "rk4" and len(meta["config_sha256"]) == 64
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["wall_time_s"]["L"] > 0 and man["n_steps"]["L"] == int(meta["n_steps_L"])


def test_simulate_options(capsys, tmp_path, short_tm):
    out = tmp_path / "t.csv"
    code, _, _ = _run(capsys, "simulate", "--config", short_tm, "--out", out, "--length", "0.01",
                      "--fractions", "0.5,0.5", "--pp0", "2000", "--solver", "dopri",
                      "--samples", "50", "--plot", tmp_path / "t.svg")
    assert code == 0
    meta, names, data = read_table(out)
    assert meta["solver"] == "dopri"
    assert data[0, 1] == pytest.approx(2000.0)
    assert data[0, 2] == pytest.approx(15.0) and data[0, 3] == pytest.approx(15.0)
    assert 40 <= data.shape[0] <= 60
    assert (tmp_path / "t.svg").read_text().count("<polyline") == 4


def test_bad_fractions(capsys, tmp_path, short_tm):
    code, _, err = _run(capsys, "simulate", "--config", short_tm, "--out", tmp_path / "x.csv",
                        "--fractions", "0.5,0.6")
    assert code == 3 and "sum to 1" in err


def test_equivalent_compare(capsys, tmp_path, short_tm):
    out = tmp_path / "eq.csv"
    code, _, _ = _run(capsys, "equivalent", "--config", short_tm, "--compare", "--out", out,
                      "--fractions", "0.5,0.5", "--plot", tmp_path / "eq.svg")
    assert code == 0
    meta, names, data = read_table(out)
    assert names[0] == "z_tilde_m" and names[-3:] == ["dP_pump_W", "dP_LP01_W", "dP_LP11_W"]
    assert data[-1, 0] == pytest.approx(0.02)
    assert 0 < float(meta["relative_error"]) < 1e-2
    assert float(meta["max_abs_diff_pump_W"]) == pytest.approx(np.max(np.abs(data[:, -3])), rel=1e-5)
    assert (tmp_path / "eq.svg").exists()


def test_equivalent_bad_ltilde(capsys, tmp_path, short_tm):
    code, _, _ = _run(capsys, "equivalent", "--config", short_tm, "--ltilde", "5",
                      "--out", tmp_path / "x.csv")
    assert code == 3


def test_sweep_and_plot(capsys, tmp_path, short_tm):
    out = tmp_path / "eps.csv"
    code, _, err = _run(capsys, "sweep", "--config", short_tm, "--pp0", "1000:2000:2",
                        "--ltilde", "0.02,0.2", "--increment", "0.5", "--out", out,
                        "--plot", tmp_path / "eps.svg")
    assert code == 0 and "3 launches" in err
    meta, names, data = read_table(out)
    assert names == ["P_p0_W", "L_tilde_m", "eps", "worst_launch", "valid"]
    assert data.shape == (4, 5) and np.all(data[:, 4] == 1)
    assert np.all(data[data[:, 1] == 0.2, 2] < 1e-9)
    assert meta["launches"] == "3"
    svg = (tmp_path / "eps.svg").read_text()
    assert "<polygon" in svg
    code, _, _ = _run(capsys, "plot", "--csv", out, "--out", tmp_path / "again.svg")
    assert code == 0


def test_diagnose(capsys, tmp_path, short_tm):
    out = tmp_path / "d.csv"
    code, _, _ = _run(capsys, "diagnose", "--config", short_tm, "--out", out, "--length", "0.01",
                      "--fractions", "0.5,0.5", "--samples", "20")
    assert code == 0
    meta, names, data = read_table(out)
    assert "rho_LP01_W_per_m" in names and data.shape[0] >= 15
    assert float(meta["rho_relative"]) > 0


def test_gain_check(capsys):
    code, out, _ = _run(capsys, "gain-check", "--config", reference_config_path("yb"),
                        "--n", "50", "--seed", "3")
    assert code == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert len(lines) == 51
    assert float(next(l for l in out.splitlines() if "max_rel_diff" in l).split(":")[1]) < 1e-8


def test_plot_malformed_csv(capsys, tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,zz\n")
    code, _, err = _run(capsys, "plot", "--csv", tmp_path / "bad.csv", "--out", tmp_path / "x.svg")
    assert code == 4 and "non-numeric" in err


def test_plot_missing_csv(capsys, tmp_path):
    code, _, err = _run(capsys, "plot", "--csv", tmp_path / "none.csv", "--out", tmp_path / "x.svg")
    assert code == 3 and "none.csv" in err
