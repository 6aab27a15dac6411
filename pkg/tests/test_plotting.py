import os
from pathlib import Path

import numpy as np
import pytest

from cmtfiber.plotting import (PlotError, contour_svg, emit_plot, line_plot_svg, nice_ticks,
                               read_table)
from cmtfiber.reporting import write_table

GOLDEN = Path(__file__).parent / "golden"


def _trace_csv(path):
    z = np.linspace(0, 10, 201)
    pump = 1100 * np.exp(-0.5 * z)
    sig = 30 + 0.6 * (1100 - pump)
    write_table(path, ["z_m", "P_pump_W", "P_signal_W"], zip(z, pump, sig),
                {"title": "synthetic trace"})


def _grid_csv(path):
    rows = []
    for p in np.linspace(1000, 5000, 5):
        for lt in (0.05, 0.1, 0.5, 1.0, 5.0):
            rows.append((p, lt, 1e-3 * (1 + p / 1e4) / lt, 0, 1))
    write_table(path, ["P_p0_W", "L_tilde_m", "eps", "worst_launch", "valid"], rows,
                {"title": "synthetic grid"})


def _check_golden(name, svg):
    path = GOLDEN / name
    if os.environ.get("CMTFIBER_UPDATE_GOLDEN"):
        path.write_text(svg)
    assert svg == path.read_text()


def test_trace_golden(tmp_path):
    _trace_csv(tmp_path / "t.csv")
    svg = emit_plot(tmp_path / "t.csv", tmp_path / "t.svg")
    assert (tmp_path / "t.svg").read_text() == svg
    assert svg.count("<polyline") == 2
    assert "synthetic trace" in svg
    _check_golden("trace.svg", svg)


def test_grid_golden(tmp_path):
    _grid_csv(tmp_path / "g.csv")
    svg = emit_plot(tmp_path / "g.csv", tmp_path / "g.svg")
    assert "<polygon" in svg or "<path" in svg
    _check_golden("grid.svg", svg)


def test_two_column_trace_is_one_polyline(tmp_path):
    write_table(tmp_path / "a.csv", ["z_m", "P_W"], [(0, 1), (1, 2), (2, 4)])
    svg = emit_plot(tmp_path / "a.csv", tmp_path / "a.svg")
    assert svg.count("<polyline") == 1
    assert svg.startswith("<svg") or svg.startswith("<?xml")


def test_plots_are_deterministic(tmp_path):
    _grid_csv(tmp_path / "g.csv")
    a = emit_plot(tmp_path / "g.csv", tmp_path / "a.svg")
    b = emit_plot(tmp_path / "g.csv", tmp_path / "b.svg")
    assert a == b


def test_read_table_round_trip(tmp_path):
    _trace_csv(tmp_path / "t.csv")
    meta, names, data = read_table(tmp_path / "t.csv")
    assert meta["title"] == "synthetic trace"
    assert names == ["z_m", "P_pump_W", "P_signal_W"]
    assert data.shape == (201, 3) and data[0, 1] == 1100


@pytest.mark.parametrize("text", ["", "# only: header\n", "a,b\n1,x\n", "a,b\n1,2\n3\n"])
def test_malformed_csv(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(PlotError):
        emit_plot(tmp_path / "bad.csv", tmp_path / "bad.svg")


def test_grid_style_needs_grid_columns(tmp_path):
    _trace_csv(tmp_path / "t.csv")
    with pytest.raises(PlotError):
        emit_plot(tmp_path / "t.csv", tmp_path / "t.svg", style="grid")
    with pytest.raises(PlotError):
        emit_plot(tmp_path / "t.csv", tmp_path / "t.svg", style="pie")


def test_plot_input_validation():
    with pytest.raises(PlotError):
        line_plot_svg([0.0], {"a": [1.0]})
    with pytest.raises(PlotError):
        line_plot_svg([0.0, 1.0], {"a": [1.0]})
    with pytest.raises(PlotError):
        contour_svg([0, 1], [0, 1], np.full((2, 2), np.nan))
    with pytest.raises(PlotError):
        contour_svg([0, 1], [0, 1], np.ones((2, 2)), ylog=True)


def test_nice_ticks_cover_range():
    # ticks sit inside the range at a 1-2-5 spacing
    t = nice_ticks(0.03, 9.7)
    assert 0.03 <= t[0] and t[-1] <= 9.7 and len(t) >= 3
    steps = np.diff(t)
    assert np.allclose(steps, steps[0])
    mant = steps[0] / 10 ** np.floor(np.log10(steps[0]))
    assert min(abs(mant - m) for m in (1, 2, 5, 10)) < 1e-9
    assert nice_ticks(5.0, 5.0)
    with pytest.raises(PlotError):
        nice_ticks(0.0, np.inf)
