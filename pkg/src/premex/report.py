"""Static SVG figures and CSV tables for every computed artifact.

The renderer is deliberately dependency-free: identical inputs must give
byte-identical SVG, which rules out plotting libraries that embed
timestamps or hashed ids.  Figures validate their data shape before any
output is produced.
"""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .artifacts import csv_meta_line
from .errors import DataValidationError

FIGURE_KINDS = (
    "correlation_heatmap",
    "group_boxplot",
    "learning_curve",
    "residual_scatter",
    "qq",
    "prediction_error",
    "beeswarm",
    "importance_bar",
    "ice_panel",
)

# One place for every cosmetic constant.
COLOR_AXIS = "#333333"
COLOR_GRID = "#dddddd"
COLOR_POINT = "#1f77b4"
COLOR_ACCENT = "#d62728"
COLOR_PDP = "#ff7f0e"
COLOR_CURVE = "#7f9fbf"
COLOR_LOW = (31, 119, 180)  # beeswarm low feature value
COLOR_HIGH = (214, 39, 40)  # beeswarm high feature value
FONT = "font-family=\"Helvetica,Arial,sans-serif\""


@dataclass
class FigureSpec:
    kind: str
    title: str
    x_label: str = ""
    y_label: str = ""

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise DataValidationError(f"unknown figure kind {self.kind!r}")


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _fmt(x: float) -> str:
    return f"{float(x):.2f}"


def _label(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return f"{x:.4g}"


def value_label(x: float) -> str:
    """Compact label for a (possibly integral) feature value."""
    return _label(float(x))


def _ticks(lo: float, hi: float, target: int = 5):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / max(target, 1)
    magnitude = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * magnitude
        if raw <= step:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    value = first
    while value <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(value) < 1e-12 else value)
        value += step
    return ticks


class _Scale:
    def __init__(self, lo, hi, pixel_lo, pixel_hi):
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = float(lo), float(hi)
        self.pixel_lo, self.pixel_hi = float(pixel_lo), float(pixel_hi)

    def __call__(self, x):
        t = (float(x) - self.lo) / (self.hi - self.lo)
        return self.pixel_lo + t * (self.pixel_hi - self.pixel_lo)


class _Canvas:
    def __init__(self, width: int, height: int, title: str, meta: str = ""):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
        ]
        if meta:
            self.parts.append(f"<desc>{_esc(meta)}</desc>")
        self.parts.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')
        if title:
            self.text(width / 2, 24, title, size=16, anchor="middle", weight="bold")

    def line(self, x1, y1, x2, y2, color=COLOR_AXIS, width=1.0, dash=""):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{extra}/>'
        )

    def rect(self, x, y, w, h, fill, stroke="none", opacity=None):
        extra = f' fill-opacity="{opacity}"' if opacity is not None else ""
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" stroke="{stroke}"{extra}/>'
        )

    def circle(self, x, y, r, fill, opacity=None):
        extra = f' fill-opacity="{opacity}"' if opacity is not None else ""
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{fill}"{extra}/>'
        )

    def polyline(self, xs, ys, color, width=1.5, opacity=None):
        points = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
        extra = f' stroke-opacity="{opacity}"' if opacity is not None else ""
        self.parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>'
        )

    def text(self, x, y, content, size=11, anchor="start", weight="normal", angle=None, color="#000000"):
        transform = (
            f' transform="rotate({angle} {_fmt(x)} {_fmt(y)})"' if angle is not None else ""
        )
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" {FONT} '
            f'text-anchor="{anchor}" font-weight="{weight}" fill="{color}"{transform}>'
            f"{_esc(content)}</text>"
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _axes(canvas, box, x_scale, y_scale, x_label, y_label, x_ticks=None, y_ticks=None):
    left, top, right, bottom = box
    canvas.line(left, bottom, right, bottom)
    canvas.line(left, top, left, bottom)
    for tick in x_ticks if x_ticks is not None else _ticks(x_scale.lo, x_scale.hi):
        px = x_scale(tick)
        canvas.line(px, bottom, px, bottom + 4)
        canvas.text(px, bottom + 16, _label(tick), size=10, anchor="middle")
    for tick in y_ticks if y_ticks is not None else _ticks(y_scale.lo, y_scale.hi):
        py = y_scale(tick)
        canvas.line(left - 4, py, left, py)
        canvas.line(left, py, right, py, color=COLOR_GRID, width=0.5)
        canvas.text(left - 7, py + 3.5, _label(tick), size=10, anchor="end")
    if x_label:
        canvas.text((left + right) / 2, bottom + 34, x_label, size=12, anchor="middle")
    if y_label:
        canvas.text(left - 44, (top + bottom) / 2, y_label, size=12, anchor="middle", angle=-90)


def _require(data, keys, kind):
    for key in keys:
        if key not in data:
            raise DataValidationError(f"{kind} figure needs {key!r} data")
    return [data[key] for key in keys]


def _as_array(values, kind, name, min_len=1):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < min_len:
        raise DataValidationError(f"{kind}: {name!r} needs at least {min_len} values")
    return arr


def _blend(low, high, t):
    r = round(low[0] + (high[0] - low[0]) * t)
    g = round(low[1] + (high[1] - low[1]) * t)
    b = round(low[2] + (high[2] - low[2]) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def _heat_color(value: float) -> str:
    # -1 blue, 0 white, +1 red
    v = max(-1.0, min(1.0, value))
    if v >= 0:
        return _blend((255, 255, 255), COLOR_HIGH, v)
    return _blend((255, 255, 255), COLOR_LOW, -v)


# --- figure kinds -----------------------------------------------------------

def _figure_correlation_heatmap(spec, data, meta):
    (names, matrix) = _require(data, ["names", "matrix"], spec.kind)
    matrix = np.asarray(matrix, dtype=np.float64)
    m = len(names)
    if matrix.shape != (m, m):
        raise DataValidationError(f"correlation matrix is {matrix.shape}, expected ({m}, {m})")
    cell = 42 if m <= 12 else 30
    left, top = 170, 170
    width, height = left + cell * m + 60, top + cell * m + 40
    canvas = _Canvas(width, height, spec.title, meta)
    for i in range(m):
        for j in range(m):
            x = left + j * cell
            y = top + i * cell
            canvas.rect(x, y, cell, cell, _heat_color(matrix[i, j]), stroke="#ffffff")
            canvas.text(
                x + cell / 2, y + cell / 2 + 3, f"{matrix[i, j]:.2f}",
                size=8, anchor="middle",
                color="#000000" if abs(matrix[i, j]) < 0.6 else "#ffffff",
            )
    for i, name in enumerate(names):
        canvas.text(left - 6, top + i * cell + cell / 2 + 3, name, size=9, anchor="end")
        canvas.text(
            left + i * cell + cell / 2, top - 6, name,
            size=9, anchor="start", angle=-60,
        )
    return canvas.render()


def _figure_group_boxplot(spec, data, meta):
    (groups,) = _require(data, ["groups"], spec.kind)
    if not groups:
        raise DataValidationError("group_boxplot: no groups")
    width, height = 520, 420
    box = (70, 50, width - 30, height - 70)
    all_values = np.concatenate([_as_array(g["values"], spec.kind, "values") for g in groups])
    y_scale = _Scale(all_values.min(), all_values.max(), box[3], box[1])
    canvas = _Canvas(width, height, spec.title, meta)
    slot = (box[2] - box[0]) / len(groups)
    x_ticks = []
    for g_index, group in enumerate(groups):
        values = np.sort(np.asarray(group["values"], dtype=np.float64))
        q1, median, q3 = np.percentile(values, [25, 50, 75], method="linear")
        iqr = q3 - q1
        in_lo = values[values >= q1 - 1.5 * iqr]
        in_hi = values[values <= q3 + 1.5 * iqr]
        whisker_lo = in_lo[0] if in_lo.size else q1
        whisker_hi = in_hi[-1] if in_hi.size else q3
        center = box[0] + slot * (g_index + 0.5)
        half = min(30.0, slot * 0.3)
        canvas.line(center, y_scale(whisker_lo), center, y_scale(q1))
        canvas.line(center, y_scale(q3), center, y_scale(whisker_hi))
        canvas.line(center - half / 2, y_scale(whisker_lo), center + half / 2, y_scale(whisker_lo))
        canvas.line(center - half / 2, y_scale(whisker_hi), center + half / 2, y_scale(whisker_hi))
        canvas.rect(center - half, y_scale(q3), 2 * half, y_scale(q1) - y_scale(q3),
                    fill="#aec7e8", stroke=COLOR_AXIS)
        canvas.line(center - half, y_scale(median), center + half, y_scale(median),
                    color=COLOR_ACCENT, width=2)
        for value in values[(values < whisker_lo) | (values > whisker_hi)]:
            canvas.circle(center, y_scale(value), 2.2, COLOR_POINT, opacity=0.7)
        canvas.text(center, box[3] + 16, str(group["label"]), size=10, anchor="middle")
        x_ticks.append(center)
    canvas.line(box[0], box[3], box[2], box[3])
    canvas.line(box[0], box[1], box[0], box[3])
    for tick in _ticks(y_scale.lo, y_scale.hi):
        canvas.text(box[0] - 7, y_scale(tick) + 3.5, _label(tick), size=10, anchor="end")
        canvas.line(box[0] - 4, y_scale(tick), box[0], y_scale(tick))
    if spec.x_label:
        canvas.text((box[0] + box[2]) / 2, box[3] + 34, spec.x_label, size=12, anchor="middle")
    if spec.y_label:
        canvas.text(box[0] - 44, (box[1] + box[3]) / 2, spec.y_label, size=12,
                    anchor="middle", angle=-90)
    return canvas.render()


def _figure_learning_curve(spec, data, meta):
    (n_rows, train, val) = _require(data, ["n_rows", "train", "val"], spec.kind)
    n_rows = _as_array(n_rows, spec.kind, "n_rows", 2)
    train = _as_array(train, spec.kind, "train", 2)
    val = _as_array(val, spec.kind, "val", 2)
    if not n_rows.size == train.size == val.size:
        raise DataValidationError("learning_curve: series lengths differ")
    width, height = 520, 380
    box = (70, 50, width - 30, height - 70)
    y_all = np.concatenate([train, val])
    x_scale = _Scale(n_rows.min(), n_rows.max(), box[0], box[2])
    y_scale = _Scale(y_all.min(), min(1.05, y_all.max() + 0.05), box[3], box[1])
    canvas = _Canvas(width, height, spec.title, meta)
    _axes(canvas, box, x_scale, y_scale, spec.x_label, spec.y_label)
    canvas.polyline([x_scale(x) for x in n_rows], [y_scale(y) for y in train], COLOR_ACCENT, 2)
    canvas.polyline([x_scale(x) for x in n_rows], [y_scale(y) for y in val], COLOR_POINT, 2)
    for x, y in zip(n_rows, train):
        canvas.circle(x_scale(x), y_scale(y), 3, COLOR_ACCENT)
    for x, y in zip(n_rows, val):
        canvas.circle(x_scale(x), y_scale(y), 3, COLOR_POINT)
    canvas.rect(box[2] - 150, box[1] + 6, 12, 12, COLOR_ACCENT)
    canvas.text(box[2] - 132, box[1] + 16, "training score", size=10)
    canvas.rect(box[2] - 150, box[1] + 24, 12, 12, COLOR_POINT)
    canvas.text(box[2] - 132, box[1] + 34, "validation score", size=10)
    return canvas.render()


def _scatter_figure(spec, xs, ys, meta, identity=False, zero_line=False):
    width, height = 480, 420
    box = (70, 50, width - 30, height - 70)
    lo = min(xs.min(), ys.min()) if identity else None
    hi = max(xs.max(), ys.max()) if identity else None
    x_scale = _Scale(lo if identity else xs.min(), hi if identity else xs.max(), box[0], box[2])
    y_scale = _Scale(lo if identity else ys.min(), hi if identity else ys.max(), box[3], box[1])
    canvas = _Canvas(width, height, spec.title, meta)
    _axes(canvas, box, x_scale, y_scale, spec.x_label, spec.y_label)
    if identity:
        canvas.line(x_scale(lo), y_scale(lo), x_scale(hi), y_scale(hi),
                    color=COLOR_ACCENT, width=1.5, dash="5,3")
    if zero_line:
        canvas.line(x_scale(x_scale.lo), y_scale(0), x_scale(x_scale.hi), y_scale(0),
                    color=COLOR_ACCENT, width=1.5, dash="5,3")
    for x, y in zip(xs, ys):
        canvas.circle(x_scale(x), y_scale(y), 2.5, COLOR_POINT, opacity=0.6)
    return canvas.render()


def _figure_residual_scatter(spec, data, meta):
    (predicted, residuals) = _require(data, ["predicted", "residuals"], spec.kind)
    predicted = _as_array(predicted, spec.kind, "predicted", 2)
    residuals = _as_array(residuals, spec.kind, "residuals", 2)
    if predicted.size != residuals.size:
        raise DataValidationError("residual_scatter: series lengths differ")
    return _scatter_figure(spec, predicted, residuals, meta, zero_line=True)


def _figure_qq(spec, data, meta):
    (theoretical, sample) = _require(data, ["theoretical", "sample"], spec.kind)
    theoretical = _as_array(theoretical, spec.kind, "theoretical", 3)
    sample = _as_array(sample, spec.kind, "sample", 3)
    if theoretical.size != sample.size:
        raise DataValidationError("qq: series lengths differ")
    return _scatter_figure(spec, theoretical, sample, meta, identity=True)


def _figure_prediction_error(spec, data, meta):
    (actual, predicted) = _require(data, ["actual", "predicted"], spec.kind)
    actual = _as_array(actual, spec.kind, "actual", 2)
    predicted = _as_array(predicted, spec.kind, "predicted", 2)
    if actual.size != predicted.size:
        raise DataValidationError("prediction_error: series lengths differ")
    return _scatter_figure(spec, actual, predicted, meta, identity=True)


def _figure_beeswarm(spec, data, meta):
    (names, points) = _require(data, ["feature_names", "points"], spec.kind)
    if not names or len(names) != len(points):
        raise DataValidationError("beeswarm: names and point groups must align")
    band = 40
    width = 640
    left, top = 170, 50
    bottom = top + band * len(names)
    height = bottom + 70
    all_phi = np.concatenate([np.asarray(p[0], dtype=np.float64) for p in points])
    if all_phi.size == 0:
        raise DataValidationError("beeswarm: no attribution points")
    limit = max(abs(all_phi.min()), abs(all_phi.max()), 1e-12)
    x_scale = _Scale(-limit, limit, left, width - 90)
    canvas = _Canvas(width, height, spec.title, meta)
    canvas.line(x_scale(0), top, x_scale(0), bottom, color=COLOR_GRID, width=1)
    for row, (name, (phi, colors)) in enumerate(zip(names, points)):
        phi = np.asarray(phi, dtype=np.float64)
        colors = np.asarray(colors, dtype=np.float64)
        center = top + band * (row + 0.5)
        canvas.text(left - 8, center + 3.5, name, size=10, anchor="end")
        canvas.line(left, top + band * (row + 1), width - 90, top + band * (row + 1),
                    color=COLOR_GRID, width=0.5)
        # deterministic vertical stacking: points sharing an x-bin fan out
        order = sorted(range(phi.size), key=lambda i: (phi[i], colors[i], i))
        bins = {}
        for i in order:
            bin_id = int((x_scale(phi[i]) - left) // 5)
            level = bins.get(bin_id, 0)
            bins[bin_id] = level + 1
            step = (level + 1) // 2 * 3.2
            offset = step if level % 2 == 1 else -step
            offset = max(-band / 2 + 4, min(band / 2 - 4, offset))
            canvas.circle(x_scale(phi[i]), center + offset, 2.2,
                          _blend(COLOR_LOW, COLOR_HIGH, colors[i]), opacity=0.8)
    canvas.line(left, bottom, width - 90, bottom)
    for tick in _ticks(-limit, limit):
        canvas.line(x_scale(tick), bottom, x_scale(tick), bottom + 4)
        canvas.text(x_scale(tick), bottom + 16, _label(tick), size=10, anchor="middle")
    canvas.text((left + width - 90) / 2, bottom + 34,
                spec.x_label or "attribution", size=12, anchor="middle")
    # color legend
    for i in range(40):
        canvas.rect(width - 60, top + i * 3, 10, 3, _blend(COLOR_HIGH, COLOR_LOW, i / 39))
    canvas.text(width - 44, top + 8, "high", size=9)
    canvas.text(width - 44, top + 120, "low", size=9)
    return canvas.render()


def _figure_importance_bar(spec, data, meta):
    (names, totals) = _require(data, ["names", "totals"], spec.kind)
    totals = _as_array(totals, spec.kind, "totals")
    if len(names) != totals.size:
        raise DataValidationError("importance_bar: names and totals must align")
    band = 34
    width = 560
    left, top = 170, 50
    bottom = top + band * len(names)
    height = bottom + 70
    x_scale = _Scale(0, totals.max() if totals.max() > 0 else 1.0, left, width - 40)
    canvas = _Canvas(width, height, spec.title, meta)
    for row, (name, total) in enumerate(zip(names, totals)):
        y = top + band * row + 6
        canvas.text(left - 8, y + band / 2, name, size=10, anchor="end")
        canvas.rect(left, y, x_scale(total) - left, band - 12, COLOR_POINT)
        canvas.text(x_scale(total) + 5, y + band / 2, f"{total:.1f}", size=9)
    canvas.line(left, bottom, width - 40, bottom)
    for tick in _ticks(0, x_scale.hi):
        canvas.line(x_scale(tick), bottom, x_scale(tick), bottom + 4)
        canvas.text(x_scale(tick), bottom + 16, _label(tick), size=10, anchor="middle")
    canvas.text((left + width - 40) / 2, bottom + 34,
                spec.x_label or "total |attribution|", size=12, anchor="middle")
    return canvas.render()


def _figure_ice_panel(spec, data, meta):
    (panels,) = _require(data, ["panels"], spec.kind)
    if not panels:
        raise DataValidationError("ice_panel: no panels")
    columns = min(3, len(panels))
    rows = (len(panels) + columns - 1) // columns
    panel_w, panel_h = 240, 200
    margin = 40
    width = margin + columns * (panel_w + 20) + 20
    height = 50 + rows * (panel_h + 40)
    canvas = _Canvas(width, height, spec.title, meta)
    for index, panel in enumerate(panels):
        grid = _as_array(panel["grid"], spec.kind, "grid", 1)
        curves = np.atleast_2d(np.asarray(panel["curves"], dtype=np.float64))
        pdp = _as_array(panel["pdp"], spec.kind, "pdp", 1)
        if curves.shape[1] != grid.size or pdp.size != grid.size:
            raise DataValidationError("ice_panel: curve/grid lengths differ")
        px = margin + (index % columns) * (panel_w + 20)
        py = 50 + (index // columns) * (panel_h + 40)
        box = (px + 36, py + 20, px + panel_w, py + panel_h - 26)
        lo = min(curves.min(), pdp.min())
        hi = max(curves.max(), pdp.max())
        x_scale = _Scale(grid.min(), grid.max(), box[0], box[2])
        y_scale = _Scale(lo, hi, box[3], box[1])
        canvas.text(px + panel_w / 2, py + 12, str(panel.get("feature_name", "")),
                    size=11, anchor="middle", weight="bold")
        canvas.line(box[0], box[3], box[2], box[3])
        canvas.line(box[0], box[1], box[0], box[3])
        for tick in _ticks(x_scale.lo, x_scale.hi, 4):
            canvas.text(x_scale(tick), box[3] + 12, _label(tick), size=8, anchor="middle")
        for tick in _ticks(y_scale.lo, y_scale.hi, 4):
            canvas.text(box[0] - 3, y_scale(tick) + 2.5, _label(tick), size=8, anchor="end")
        xs = [x_scale(x) for x in grid]
        for curve in curves:
            canvas.polyline(xs, [y_scale(v) for v in curve], COLOR_CURVE, 0.8, opacity=0.5)
        canvas.polyline(xs, [y_scale(v) for v in pdp], COLOR_PDP, 2.5)
        anchor = panel.get("anchor_index")
        if anchor is not None:
            canvas.circle(x_scale(grid[anchor]), y_scale(pdp[anchor]), 3, COLOR_ACCENT)
    return canvas.render()


_FIGURES = {
    "correlation_heatmap": _figure_correlation_heatmap,
    "group_boxplot": _figure_group_boxplot,
    "learning_curve": _figure_learning_curve,
    "residual_scatter": _figure_residual_scatter,
    "qq": _figure_qq,
    "prediction_error": _figure_prediction_error,
    "beeswarm": _figure_beeswarm,
    "importance_bar": _figure_importance_bar,
    "ice_panel": _figure_ice_panel,
}


def render(spec: FigureSpec, data: dict, meta: str = "") -> str:
    """Render one figure kind to a self-contained SVG string."""
    return _FIGURES[spec.kind](spec, data, meta)


# --- CSV tables -------------------------------------------------------------

def _csv_text(header, rows, meta: str) -> str:
    buffer = io.StringIO()
    buffer.write(meta + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def summary_stats_csv(stats, *, seed=None) -> str:
    rows = [
        [name] + [f"{v:.2f}" for v in values]
        for name, *values in stats.rows()
    ]
    return _csv_text(
        ["Feature", "Mean", "Std", "Min", "Q1", "Median", "Q3", "Max"],
        rows,
        csv_meta_line(seed=seed, config={"table": "summary_stats"}),
    )


def metrics_table_csv(reports, *, seed=None) -> str:
    """Test-set metrics, one model per row; R^2 and MAPE in percent."""
    if not reports:
        raise DataValidationError("no models to tabulate")
    rows = [
        [r.model, f"{100.0 * r.r_squared:.3f}", f"{r.mae:.3f}", f"{r.rmse:.3f}", f"{r.mape:.3f}"]
        for r in reports
    ]
    return _csv_text(
        ["Model", "R2_pct", "MAE", "RMSE", "MAPE_pct"],
        rows,
        csv_meta_line(seed=seed, config={"table": "test_metrics"}),
    )


def cv_table_csv(entries, *, seed=None) -> str:
    """Model training / CV overview: one row per model."""
    if not entries:
        raise DataValidationError("no models to tabulate")
    rows = [
        [
            e["model"],
            f"{100.0 * e['train_r2']:.3f}",
            f"{100.0 * e['cv_r2']:.3f}",
            json.dumps(e["best_params"], sort_keys=True),
        ]
        for e in entries
    ]
    return _csv_text(
        ["Model", "TrainR2_pct", "CvR2_pct", "BestParams"],
        rows,
        csv_meta_line(seed=seed, config={"table": "cv_overview"}),
    )


def cv_cells_csv(result, *, seed=None) -> str:
    """Every grid cell with its per-fold scores, mean, and rank."""
    header = ["Rank", "Params"] + [f"Fold{i + 1}R2_pct" for i in range(result.k)] + ["MeanR2_pct"]
    rows = []
    for cell in sorted(result.cells, key=lambda c: c.rank):
        rows.append(
            [cell.rank, json.dumps(cell.params, sort_keys=True)]
            + [f"{100.0 * s:.3f}" for s in cell.fold_scores]
            + [f"{100.0 * cell.mean_score:.3f}"]
        )
    return _csv_text(header, rows, csv_meta_line(seed=seed, config={"table": "cv_cells", "variant": result.variant}))


def improvement_csv(rows, *, seed=None) -> str:
    if not rows:
        raise DataValidationError("no models to tabulate")
    body = [
        [r.model, f"{r.train_r2:.3f}", f"{r.cv_r2:.3f}", f"{r.test_r2:.3f}", f"{r.improvement:.3f}"]
        for r in rows
    ]
    return _csv_text(
        ["Model", "TrainR2_pct", "CvR2_pct", "TestR2_pct", "ImprovementPoints"],
        body,
        csv_meta_line(seed=seed, config={"table": "improvement"}),
    )


def learning_curve_csv(curve, *, seed=None) -> str:
    rows = [
        [f"{f:.3f}", f"{n:.1f}", f"{t:.6f}", f"{v:.6f}"]
        for f, n, t, v in zip(curve.fractions, curve.n_rows, curve.train_scores, curve.val_scores)
    ]
    return _csv_text(
        ["Fraction", "TrainRows", "TrainR2", "ValR2"],
        rows,
        csv_meta_line(seed=seed, config={"table": "learning_curve"}),
    )


_GROUP_HEADER = ["Feature", "Value", "Count", "MeanPremium", "Q1", "Median", "Q3", "Min", "Max"]


def _group_rows(feature, groups):
    return [
        [
            feature,
            _label(g.value),
            g.count,
            f"{g.mean:.2f}",
            f"{g.q1:.2f}",
            f"{g.median:.2f}",
            f"{g.q3:.2f}",
            f"{g.minimum:.2f}",
            f"{g.maximum:.2f}",
        ]
        for g in groups
    ]


def group_summary_csv(feature: str, groups, *, seed=None) -> str:
    return _csv_text(
        _GROUP_HEADER,
        _group_rows(feature, groups),
        csv_meta_line(seed=seed, config={"table": "group_summary", "feature": feature}),
    )


def group_summary_all_csv(parts, *, seed=None) -> str:
    """One table for every grouping feature: parts are (feature, groups) pairs."""
    rows = []
    for feature, groups in parts:
        rows.extend(_group_rows(feature, groups))
    return _csv_text(
        _GROUP_HEADER,
        rows,
        csv_meta_line(seed=seed, config={"table": "group_summary"}),
    )


def shap_values_csv(explanation, row_ids=None, *, seed=None) -> str:
    n = explanation.phi.shape[0]
    if row_ids is None:
        row_ids = list(range(n))
    header = ["RowId"] + list(explanation.feature_names) + ["BaseValue"]
    rows = [
        [row_ids[i]] + [f"{v:.6f}" for v in explanation.phi[i]] + [f"{explanation.base_value:.6f}"]
        for i in range(n)
    ]
    return _csv_text(header, rows, csv_meta_line(seed=seed, config={"table": "shap_values"}))


def importance_csv(importance, *, seed=None) -> str:
    rows = [
        [importance.feature_names[j], f"{importance.totals[j]:.6f}", rank + 1]
        for rank, j in enumerate(importance.order)
    ]
    return _csv_text(
        ["Feature", "TotalAbsAttribution", "Rank"],
        rows,
        csv_meta_line(seed=seed, config={"table": "importance"}),
    )


def ice_long_csv(curve_sets, row_ids=None, *, seed=None) -> str:
    """Long-format ICE curves: one line per (variant, row, grid point)."""
    rows = []
    for curve_set in curve_sets:
        ids = row_ids if row_ids is not None else list(range(curve_set.curves.shape[0]))
        for i in range(curve_set.curves.shape[0]):
            for g, grid_value in enumerate(curve_set.grid):
                rows.append(
                    [
                        curve_set.feature_name,
                        curve_set.variant,
                        ids[i],
                        f"{grid_value:.6f}",
                        f"{curve_set.curves[i, g]:.6f}",
                    ]
                )
    return _csv_text(
        ["Feature", "Variant", "RowId", "GridValue", "Prediction"],
        rows,
        csv_meta_line(seed=seed, config={"table": "ice_curves"}),
    )


def emit_tables(metrics_reports, cv_entries, improvement_rows, summary=None, *, seed=None) -> dict:
    """The summary/CV/improvement/test-metrics CSV family, keyed by logical name."""
    tables = {
        "test_metrics": metrics_table_csv(metrics_reports, seed=seed),
        "cv_overview": cv_table_csv(cv_entries, seed=seed),
        "improvement": improvement_csv(improvement_rows, seed=seed),
    }
    if summary is not None:
        tables["summary_stats"] = summary_stats_csv(summary, seed=seed)
    return tables
