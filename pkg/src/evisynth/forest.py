"""Deterministic SVG forest plots with inverse-variance fixed-effect pooling.

Rendering is pure string assembly over validated inputs: the same PlotSpec
always yields byte-identical SVG 1.1. Ratio-scale plots use a log axis;
difference-scale plots a linear one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import ValidationError
from .outcomes import EffectEstimate, Scale, Z_95

LABEL_GUTTER = 180
RIGHT_PAD = 24
TOP_PAD = 20
ROW_HEIGHT = 40
MAX_SQUARE_SIDE = 16.0
AXIS_PAD_FRACTION = 0.05
MAX_TICKS = 9
POOLED_LABEL = "Pooled (fixed effect)"

_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class PlotRow:
    """One study line: label, its estimate, and a normalized weight."""

    label: str
    estimate: EffectEstimate
    weight: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.estimate, EffectEstimate):
            raise ValidationError("row estimate must be an EffectEstimate")
        if not 0.0 <= self.weight <= 1.0 + _BOUND_TOL:
            raise ValidationError("row weight must lie in [0, 1]")


@dataclass(frozen=True)
class PlotSpec:
    """Validated, fully-determined plot description."""

    rows: tuple[PlotRow, ...]
    scale: Scale
    null_line: float
    axis_min: float
    axis_max: float
    width_px: int
    height_px: int
    pooled: EffectEstimate | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise ValidationError("a plot needs at least one row")
        for row in self.rows:
            if row.estimate.scale is not self.scale:
                raise ValidationError("all rows must share the plot scale")
        if self.pooled is not None and self.pooled.scale is not self.scale:
            raise ValidationError("pooled estimate must share the plot scale")
        if self.null_line != self.scale.null_value:
            raise ValidationError("null line must match the scale")
        if not self.axis_min < self.axis_max:
            raise ValidationError("axis bounds are out of order")
        if self.scale is Scale.RATIO and self.axis_min <= 0:
            raise ValidationError("a ratio axis must be positive")
        slack = _BOUND_TOL * max(1.0, abs(self.axis_min), abs(self.axis_max))
        lo, hi = self.axis_min - slack, self.axis_max + slack
        if not lo <= self.null_line <= hi:
            raise ValidationError("axis bounds must enclose the null line")
        for row in self.rows:
            est = row.estimate
            if not est.estimable:
                continue
            for bound in (est.ci_low, est.ci_high, est.point):
                if math.isfinite(bound) and not lo <= bound <= hi:
                    raise ValidationError(
                        f"axis bounds must enclose {row.label!r} ({bound})")
        if self.width_px < LABEL_GUTTER + RIGHT_PAD + 100 or self.height_px < 120:
            raise ValidationError("canvas is too small to draw into")


def normalize_weights(rows: Sequence[PlotRow]) -> list[PlotRow]:
    """Inverse-variance weights (1/SE^2) scaled to sum to 1.

    Rows that are not estimable get weight 0. Zero-SE rows dominate in the
    limit, so when present they split the weight equally and all other rows
    get 0; rows with a non-finite SE carry no information and get 0.
    """
    if not rows:
        raise ValidationError("no rows to weight")
    zero_se = [i for i, row in enumerate(rows)
               if row.estimate.estimable and row.estimate.std_error == 0.0]
    weights = [0.0] * len(rows)
    if zero_se:
        share = 1.0 / len(zero_se)
        for i in zero_se:
            weights[i] = share
    else:
        raw = [1.0 / row.estimate.std_error ** 2
               if row.estimate.estimable and math.isfinite(row.estimate.std_error)
               else 0.0
               for row in rows]
        total = math.fsum(raw)
        if total > 0:
            weights = [w / total for w in raw]
    return [replace(row, weight=w) for row, w in zip(rows, weights)]


def _analysis_point(est: EffectEstimate, scale: Scale) -> float:
    return math.log(est.point) if scale is Scale.RATIO else est.point


def pool_fixed_effect(rows: Sequence[PlotRow]) -> EffectEstimate:
    """Fixed-effect pooled estimate over the estimable rows.

    Pooling happens on the analysis scale (log for ratios): the pooled point
    is the inverse-variance weighted mean and its standard error is
    1/sqrt(sum of weights). With no usable rows the result is not estimable.
    """
    if not rows:
        raise ValidationError("no rows to pool")
    scales = {row.estimate.scale for row in rows}
    if len(scales) != 1:
        raise ValidationError("rows mix scales; pool one scale at a time")
    scale = scales.pop()
    usable = [row.estimate for row in rows
              if row.estimate.estimable and math.isfinite(row.estimate.std_error)]
    if not usable:
        return EffectEstimate.not_estimable(scale)
    exact = [est for est in usable if est.std_error == 0.0]
    if exact:
        points = [_analysis_point(est, scale) for est in exact]
        pooled_theta = math.fsum(points) / len(points)
        pooled_se = 0.0
    else:
        weights = [1.0 / est.std_error ** 2 for est in usable]
        total = math.fsum(weights)
        if total == 0.0:
            return EffectEstimate.not_estimable(scale)
        pooled_theta = math.fsum(
            w * _analysis_point(est, scale) for w, est in zip(weights, usable)) / total
        pooled_se = 1.0 / math.sqrt(total)
    low = pooled_theta - Z_95 * pooled_se
    high = pooled_theta + Z_95 * pooled_se
    if scale is Scale.RATIO:
        return EffectEstimate(math.exp(pooled_theta), pooled_se,
                              math.exp(low), math.exp(high), scale)
    return EffectEstimate(pooled_theta, pooled_se, low, high, scale)


def _axis_bounds(scale: Scale, values: list[float]) -> tuple[float, float]:
    """Smallest padded range enclosing the given finite values and the null."""
    points = [v for v in values if math.isfinite(v)]
    points.append(scale.null_value)
    if scale is Scale.RATIO:
        logs = [math.log(v) for v in points]
        lo, hi = min(logs), max(logs)
        pad = AXIS_PAD_FRACTION * (hi - lo) if hi > lo else math.log(2.0)
        return math.exp(lo - pad), math.exp(hi + pad)
    lo, hi = min(points), max(points)
    pad = AXIS_PAD_FRACTION * (hi - lo) if hi > lo else 1.0
    return lo - pad, hi + pad


def make_plot_spec(labeled: Sequence[tuple[str, EffectEstimate]], *,
                   include_pooled: bool = False,
                   width_px: int = 800) -> PlotSpec:
    """Assemble a PlotSpec from labeled estimates: weights, pooling, axis, canvas."""
    if not labeled:
        raise ValidationError("no estimates to plot")
    rows = normalize_weights([PlotRow(label, est) for label, est in labeled])
    scales = {row.estimate.scale for row in rows}
    if len(scales) != 1:
        raise ValidationError("estimates mix scales; plot one scale at a time")
    scale = scales.pop()
    pooled = pool_fixed_effect(rows) if include_pooled else None

    span_values: list[float] = []
    for row in rows:
        if row.estimate.estimable:
            span_values.extend((row.estimate.ci_low, row.estimate.ci_high,
                                row.estimate.point))
    if pooled is not None and pooled.estimable:
        span_values.extend((pooled.ci_low, pooled.ci_high, pooled.point))
    axis_min, axis_max = _axis_bounds(scale, span_values)

    display_rows = len(rows) + (1 if pooled is not None else 0)
    return PlotSpec(rows=tuple(rows), scale=scale, null_line=scale.null_value,
                    axis_min=axis_min, axis_max=axis_max,
                    width_px=width_px, height_px=ROW_HEIGHT * display_rows + 80,
                    pooled=pooled)


def value_to_x(spec: PlotSpec, value: float) -> float:
    """Horizontal pixel position of a value; affine in log(value) on a ratio axis."""
    x0 = float(LABEL_GUTTER)
    x1 = float(spec.width_px - RIGHT_PAD)
    if spec.scale is Scale.RATIO:
        if value <= 0:
            raise ValidationError("ratio values must be positive")
        t = ((math.log(value) - math.log(spec.axis_min))
             / (math.log(spec.axis_max) - math.log(spec.axis_min)))
    else:
        t = (value - spec.axis_min) / (spec.axis_max - spec.axis_min)
    return x0 + t * (x1 - x0)


def _ratio_ticks(axis_min: float, axis_max: float) -> list[float]:
    lo_exp = math.floor(math.log10(axis_min))
    hi_exp = math.ceil(math.log10(axis_max))
    lo = axis_min * (1 - 1e-12)
    hi = axis_max * (1 + 1e-12)
    ticks = [m * 10.0 ** e
             for e in range(lo_exp, hi_exp + 1)
             for m in (1.0, 2.0, 5.0)
             if lo <= m * 10.0 ** e <= hi]
    if len(ticks) > MAX_TICKS:
        ticks = [t for t in ticks if abs(math.log10(t) - round(math.log10(t))) < 1e-9]
    if len(ticks) > MAX_TICKS:
        stride = math.ceil(len(ticks) / MAX_TICKS)
        ticks = ticks[::stride]
    if len(ticks) < 2:
        ticks = sorted({axis_min, axis_max} | ({1.0} if axis_min < 1.0 < axis_max else set()))
    return ticks


def _difference_ticks(axis_min: float, axis_max: float) -> list[float]:
    span = axis_max - axis_min
    raw_step = span / 6.0
    magnitude = 10.0 ** math.floor(math.log10(raw_step))
    step = next(m * magnitude for m in (1.0, 2.0, 5.0, 10.0) if m * magnitude >= raw_step)
    first = math.ceil(axis_min / step)
    last = math.floor(axis_max / step)
    ticks = [k * step for k in range(first, last + 1)]
    if len(ticks) < 2:
        ticks = [axis_min, axis_max]
    return ticks


def _fmt(value: float) -> str:
    """Coordinates are rounded to 2 decimals so output is byte-stable."""
    return f"{value:.2f}"


def _tick_label(value: float) -> str:
    return f"{value:g}"


def _clamped_x(spec: PlotSpec, value: float, side: str) -> tuple[float, bool]:
    if not math.isfinite(value):
        edge = spec.axis_min if side == "low" else spec.axis_max
        return value_to_x(spec, edge), True
    return value_to_x(spec, value), False


def render_svg(spec: PlotSpec) -> str:
    """Render the plot as self-contained SVG 1.1 markup."""
    width, height = spec.width_px, spec.height_px
    x0 = float(LABEL_GUTTER)
    x1 = float(width - RIGHT_PAD)
    n_rows = len(spec.rows) + (1 if spec.pooled is not None else 0)
    axis_y = TOP_PAD + ROW_HEIGHT * n_rows + 20.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<g font-family="sans-serif" font-size="12" fill="black">',
    ]

    # axis, ticks, null line under the data marks
    parts.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(axis_y)}" x2="{_fmt(x1)}" '
                 f'y2="{_fmt(axis_y)}" stroke="black" stroke-width="1"/>')
    ticks = (_ratio_ticks(spec.axis_min, spec.axis_max)
             if spec.scale is Scale.RATIO
             else _difference_ticks(spec.axis_min, spec.axis_max))
    for tick in ticks:
        tx = value_to_x(spec, tick)
        parts.append(f'<line x1="{_fmt(tx)}" y1="{_fmt(axis_y)}" x2="{_fmt(tx)}" '
                     f'y2="{_fmt(axis_y + 5)}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(tx)}" y="{_fmt(axis_y + 18)}" '
                     f'text-anchor="middle">{escape(_tick_label(tick))}</text>')
    null_x = value_to_x(spec, spec.null_line)
    parts.append(f'<line x1="{_fmt(null_x)}" y1="{_fmt(TOP_PAD)}" x2="{_fmt(null_x)}" '
                 f'y2="{_fmt(axis_y)}" stroke="#888888" stroke-width="1" '
                 f'stroke-dasharray="4 3"/>')

    def row_center(index: int) -> float:
        return TOP_PAD + ROW_HEIGHT * index + ROW_HEIGHT / 2.0

    def draw_label(text: str, cy: float) -> None:
        parts.append(f'<text x="8" y="{_fmt(cy + 4)}">{escape(text)}</text>')

    def draw_not_estimable(cy: float) -> None:
        parts.append(f'<text x="{_fmt(x0 + 8)}" y="{_fmt(cy + 4)}" fill="#666666" '
                     f'font-style="italic">Not estimable</text>')

    def draw_arrow(x: float, cy: float, direction: int) -> None:
        tip = x
        base = x - direction * 7.0
        parts.append(f'<polygon points="{_fmt(tip)},{_fmt(cy)} {_fmt(base)},{_fmt(cy - 4)} '
                     f'{_fmt(base)},{_fmt(cy + 4)}" fill="black"/>')

    for index, row in enumerate(spec.rows):
        cy = row_center(index)
        draw_label(row.label, cy)
        est = row.estimate
        if not est.estimable:
            draw_not_estimable(cy)
            continue
        low_x, low_clamped = _clamped_x(spec, est.ci_low, "low")
        high_x, high_clamped = _clamped_x(spec, est.ci_high, "high")
        parts.append(f'<line x1="{_fmt(low_x)}" y1="{_fmt(cy)}" x2="{_fmt(high_x)}" '
                     f'y2="{_fmt(cy)}" stroke="black" stroke-width="1.5"/>')
        if low_clamped:
            draw_arrow(low_x, cy, -1)
        if high_clamped:
            draw_arrow(high_x, cy, 1)
        side = MAX_SQUARE_SIDE * math.sqrt(row.weight)
        if side >= 0.01:
            px = value_to_x(spec, est.point)
            parts.append(f'<rect x="{_fmt(px - side / 2)}" y="{_fmt(cy - side / 2)}" '
                         f'width="{_fmt(side)}" height="{_fmt(side)}" fill="#35618f"/>')

    if spec.pooled is not None:
        cy = row_center(len(spec.rows))
        draw_label(POOLED_LABEL, cy)
        pooled = spec.pooled
        if pooled.estimable:
            left = value_to_x(spec, pooled.ci_low)
            right = value_to_x(spec, pooled.ci_high)
            center = value_to_x(spec, pooled.point)
            parts.append(f'<polygon points="{_fmt(left)},{_fmt(cy)} '
                         f'{_fmt(center)},{_fmt(cy - 8)} {_fmt(right)},{_fmt(cy)} '
                         f'{_fmt(center)},{_fmt(cy + 8)}" fill="black"/>')
        else:
            draw_not_estimable(cy)

    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _table_value(value: float) -> float | None:
    return value if math.isfinite(value) else None


def plot_table(spec: PlotSpec) -> dict:
    """Numeric companion table mirroring the drawn columns, exact values."""
    rows = []
    for row in spec.rows:
        est = row.estimate
        if est.estimable:
            rows.append({"label": row.label, "point": _table_value(est.point),
                         "ci_low": _table_value(est.ci_low),
                         "ci_high": _table_value(est.ci_high),
                         "weight": row.weight})
        else:
            rows.append({"label": row.label, "point": None, "ci_low": None,
                         "ci_high": None, "weight": row.weight})
    pooled = None
    if spec.pooled is not None:
        if spec.pooled.estimable:
            pooled = {"label": POOLED_LABEL, "point": _table_value(spec.pooled.point),
                      "ci_low": _table_value(spec.pooled.ci_low),
                      "ci_high": _table_value(spec.pooled.ci_high),
                      "weight": 1.0}
        else:
            pooled = {"label": POOLED_LABEL, "point": None, "ci_low": None,
                      "ci_high": None, "weight": 0.0}
    return {"scale": spec.scale.value, "null_line": spec.null_line,
            "rows": rows, "pooled": pooled}
