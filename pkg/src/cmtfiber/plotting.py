"""Deterministic SVG line plots and filled-contour panels.

Output depends only on the input numbers: fixed canvas, fixed palette,
fixed number formatting, plain-text labels.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=78, right=150, top=40, bottom=56)
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"]
# sequential ramp for contour bands, light to dark
RAMP = ["#fff5eb", "#fee6ce", "#fdd0a2", "#fdae6b", "#fd8d3c",
        "#f16913", "#d94801", "#a63603", "#7f2704"]
INVALID_FILL = "#bdbdbd"


class PlotError(ValueError):
    """Input table cannot be plotted."""


def _f(v: float) -> str:
    return f"{v:.2f}"


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise PlotError("non-finite axis range")
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        if t >= lo - 1e-9 * step:
            ticks.append(round(t / step) * step)
        t += step
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if 1e-3 <= a < 1e5:
        return f"{v:.6g}"
    return f"{v:.2e}"


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0 = MARGIN["left"]
        self.x1 = WIDTH - MARGIN["right"]
        self.y0 = HEIGHT - MARGIN["bottom"]
        self.y1 = MARGIN["top"]
        self.xlim = xlim
        self.ylim = ylim

    def sx(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x) - lo) / (hi - lo) * (self.x1 - self.x0)

    def sy(self, y):
        lo, hi = self.ylim
        return self.y0 - (np.asarray(y) - lo) / (hi - lo) * (self.y0 - self.y1)


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2 - (MARGIN["right"] - MARGIN["left"]) / 2:.2f}" y="22" '
        f'text-anchor="middle" font-size="14">{_esc(title)}</text>',
    ]


def _axes(fr: _Frame, xticks, yticks, xlabel, ylabel, ylabels=None) -> list[str]:
    out = [f'<rect x="{_f(fr.x0)}" y="{_f(fr.y1)}" width="{_f(fr.x1 - fr.x0)}" '
           f'height="{_f(fr.y0 - fr.y1)}" fill="none" stroke="#000000"/>']
    for t in xticks:
        x = float(fr.sx(t))
        out.append(f'<line x1="{_f(x)}" y1="{_f(fr.y0)}" x2="{_f(x)}" y2="{_f(fr.y0 + 5)}" '
                   'stroke="#000000"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(fr.y0 + 18)}" text-anchor="middle">'
                   f'{_fmt_tick(t)}</text>')
    ylabels = [_fmt_tick(t) for t in yticks] if ylabels is None else ylabels
    for t, lab in zip(yticks, ylabels):
        y = float(fr.sy(t))
        out.append(f'<line x1="{_f(fr.x0 - 5)}" y1="{_f(y)}" x2="{_f(fr.x0)}" y2="{_f(y)}" '
                   'stroke="#000000"/>')
        out.append(f'<text x="{_f(fr.x0 - 8)}" y="{_f(y + 4)}" text-anchor="end">'
                   f'{lab}</text>')
    cx = (fr.x0 + fr.x1) / 2
    cy = (fr.y0 + fr.y1) / 2
    out.append(f'<text x="{_f(cx)}" y="{_f(HEIGHT - 14)}" text-anchor="middle">'
               f'{_esc(xlabel)}</text>')
    out.append(f'<text x="18" y="{_f(cy)}" text-anchor="middle" '
               f'transform="rotate(-90 18 {_f(cy)})">{_esc(ylabel)}</text>')
    return out


def line_plot_svg(x, series: dict, title: str = "", xlabel: str = "",
                  ylabel: str = "") -> str:
    """One polyline per entry of ``series`` (name -> y values) against ``x``."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 or not series:
        raise PlotError("need at least two samples and one series")
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if any(v.shape != x.shape for v in ys.values()):
        raise PlotError("series length differs from x")
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()])
    if allv.size == 0:
        raise PlotError("no finite values to plot")
    xt = nice_ticks(float(np.min(x)), float(np.max(x)))
    yt = nice_ticks(float(allv.min()), float(allv.max()))
    fr = _Frame((min(xt[0], x.min()), max(xt[-1], x.max())),
                (min(yt[0], allv.min()), max(yt[-1], allv.max())))
    out = _header(title) + _axes(fr, xt, yt, xlabel, ylabel)
    px = fr.sx(x)
    for k, (name, y) in enumerate(ys.items()):
        color = PALETTE[k % len(PALETTE)]
        py = fr.sy(y)
        ok = np.isfinite(py)
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px[ok], py[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{pts}"/>')
        ly = MARGIN["top"] + 10 + 18 * k
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{_f(lx)}" y1="{_f(ly)}" x2="{_f(lx + 20)}" y2="{_f(ly)}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_f(lx + 26)}" y="{_f(ly + 4)}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _clip(poly, vals, level, keep_above):
    """Clip a polygon with linearly varying ``vals`` against ``vals >= level``
    (or ``<``); vertices and values are interpolated along cut edges."""
    out_p, out_v = [], []
    n = len(poly)
    for k in range(n):
        p, v = poly[k], vals[k]
        q, w = poly[(k + 1) % n], vals[(k + 1) % n]
        pin = (v >= level) if keep_above else (v < level)
        qin = (w >= level) if keep_above else (w < level)
        if pin:
            out_p.append(p)
            out_v.append(v)
        if pin != qin:
            t = (level - v) / (w - v)
            out_p.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
            out_v.append(level)
    return out_p, out_v


def contour_svg(x, y, Z, levels=None, title: str = "", xlabel: str = "",
                ylabel: str = "", log: bool = True, ylog: bool = False) -> str:
    """Filled contours of ``Z[i, j]`` at ``(x[i], y[j])``.

    Each grid cell is split into two triangles on which ``Z`` is linear, and
    every band between consecutive levels is clipped out exactly.  With
    ``log`` the field is ``log10 Z``.  Cells touching a non-finite value are
    drawn grey.  With ``ylog`` rows are placed at ``log10 y`` and labelled
    with ``y``.
    """
    x = np.asarray(x, dtype=float)
    y_raw = np.asarray(y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (x.size, y_raw.size) or x.size < 2 or y_raw.size < 2:
        raise PlotError("contour grid needs at least 2x2 values matching the axes")
    if ylog and np.any(y_raw <= 0):
        raise PlotError("log axis needs positive values")
    y = np.log10(y_raw) if ylog else y_raw
    F = np.full(Z.shape, np.nan)
    ok = np.isfinite(Z) & ((Z > 0) if log else True)
    F[ok] = np.log10(Z[ok]) if log else Z[ok]
    if not np.any(np.isfinite(F)):
        raise PlotError("no finite values to contour")
    if levels is None:
        lo, hi = float(np.nanmin(F)), float(np.nanmax(F))
        if hi - lo < 1e-12:
            hi = lo + 1.0
        levels = np.linspace(lo, hi, len(RAMP) + 1)
    levels = np.asarray(levels, dtype=float)
    fr = _Frame((x.min(), x.max()), (y.min(), y.max()))
    out = _header(title)
    for i in range(x.size - 1):
        for j in range(y.size - 1):
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            pts = [(float(fr.sx(x[a])), float(fr.sy(y[b]))) for a, b in corners]
            vals = [F[a, b] for a, b in corners]
            if not all(math.isfinite(v) for v in vals):
                poly = " ".join(f"{_f(p)},{_f(q)}" for p, q in pts)
                out.append(f'<polygon points="{poly}" fill="{INVALID_FILL}"/>')
                continue
            for tri in ((0, 1, 2), (0, 2, 3)):
                tp = [pts[t] for t in tri]
                tv = [vals[t] for t in tri]
                for b in range(levels.size - 1):
                    p, v = tp, tv
                    if b > 0:
                        p, v = _clip(p, v, levels[b], True)
                    if b < levels.size - 2 and p:
                        p, v = _clip(p, v, levels[b + 1], False)
                    if len(p) < 3:
                        continue
                    poly = " ".join(f"{_f(a)},{_f(c)}" for a, c in p)
                    color = RAMP[min(b, len(RAMP) - 1)]
                    out.append(f'<polygon points="{poly}" fill="{color}" stroke="{color}" '
                               'stroke-width="0.3"/>')
    out += _axes(fr, list(x), list(y), xlabel, ylabel, [_fmt_tick(v) for v in y_raw])
    lx = WIDTH - MARGIN["right"] + 16
    for b in range(levels.size - 1):
        ly = MARGIN["top"] + 18 * (levels.size - 2 - b)
        color = RAMP[min(b, len(RAMP) - 1)]
        lab = f"{levels[b]:.2f} .. {levels[b + 1]:.2f}"
        out.append(f'<rect x="{_f(lx)}" y="{_f(ly)}" width="14" height="14" fill="{color}" '
                   'stroke="#000000" stroke-width="0.5"/>')
        out.append(f'<text x="{_f(lx + 20)}" y="{_f(ly + 11)}">{_esc(lab)}</text>')
    note = "log10 of value" if log else "value"
    out.append(f'<text x="{_f(lx)}" y="{_f(MARGIN["top"] + 18 * (levels.size - 1) + 12)}">'
               f'{note}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- CSV tables ------------------------------------------------------------------

def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Read a CSV written by this package: ``# key: value`` header lines,
    one column-name row, then numeric rows."""
    meta, rows, names = {}, [], None
    text = Path(path).read_text()
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
            continue
        if names is None:
            names = next(csv.reader(io.StringIO(line)))
            continue
        rows.append(next(csv.reader(io.StringIO(line))))
    if names is None or not rows:
        raise PlotError(f"{path}: no column header or no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise PlotError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(names):
        raise PlotError(f"{path}: ragged rows")
    return meta, names, data


def plot_trace(names, data, title="") -> str:
    x = data[:, 0]
    series = {n: data[:, k] for k, n in enumerate(names) if k > 0}
    return line_plot_svg(x, series, title=title, xlabel=names[0], ylabel="value")


def plot_grid(names, data, title="") -> str:
    """Long-format ``P_p0_W, L_tilde_m, eps, ...`` table as a contour panel."""
    try:
        ip, il, ie = names.index("P_p0_W"), names.index("L_tilde_m"), names.index("eps")
    except ValueError:
        raise PlotError("grid table needs columns P_p0_W, L_tilde_m, eps") from None
    xs = np.unique(data[:, ip])
    ys = np.unique(data[:, il])
    Z = np.full((xs.size, ys.size), np.nan)
    for row in data:
        Z[np.searchsorted(xs, row[ip]), np.searchsorted(ys, row[il])] = row[ie]
    # the L_tilde grid spans decades
    return contour_svg(xs, ys, Z, title=title, xlabel="P_p0 (W)",
                       ylabel="L_tilde (m), log scale", ylog=True)


def emit_plot(csv_path, svg_path, style: str = "auto", title: str | None = None) -> str:
    """Render a CSV written by this package as SVG; returns the SVG text."""
    meta, names, data = read_table(csv_path)
    if style == "auto":
        style = "grid" if "eps" in names else "trace"
    title = meta.get("title", Path(csv_path).stem) if title is None else title
    if style == "grid":
        svg = plot_grid(names, data, title)
    elif style == "trace":
        svg = plot_trace(names, data, title)
    else:
        raise PlotError(f"unknown plot style {style!r}")
    Path(svg_path).write_text(svg)
    return svg
