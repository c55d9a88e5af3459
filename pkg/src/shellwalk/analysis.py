"""Energy-trace statistics: autocorrelation, compute-fair subsampling, plots.

Comparing samplers with different per-move costs is only fair on a common
compute axis, so traces carry a cost-per-recorded-sample and the overlay
machinery subsamples the cheaper trace until both lag units agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape as _xml_escape

import numpy as np

from .errors import DegenerateTraceError

# Curves whose compute-normalized lag units differ by more than this cannot
# be overlaid on one axis.
LAG_UNIT_TOLERANCE = 0.05


@dataclass
class EnergyTrace:
    """A recorded energy series plus its provenance metadata.

    ``meta['cost_per_sample']`` (when present) is the compute cost of one
    recorded step in whatever unit the producer chose (candidate evaluations
    by default); it defines the trace's lag unit for fair comparisons.
    """

    energies: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=np.float64)

    def __len__(self):
        return len(self.energies)

    @property
    def cost_per_sample(self):
        return float(self.meta.get("cost_per_sample", 1.0))


def load_trace(path):
    """Read a trace CSV written by the samplers (# key=value, then rows)."""
    meta = {}
    energies = []
    with open(path, encoding="utf-8") as handle:
        header_seen = False
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line != "step,energy,accepted,k":
                    raise ValueError(
                        f"{path}: unexpected header {line!r}"
                    )
                header_seen = True
                continue
            parts = line.split(",")
            energies.append(float(parts[1]))
    meta["path"] = str(path)
    for key in ("beta", "gamma", "evals_per_move", "cost_per_sample"):
        if key in meta:
            meta[key] = float(meta[key])
    for key in ("moves", "stride", "seed", "trial"):
        if key in meta:
            meta[key] = int(float(meta[key]))
    if "cost_per_sample" not in meta and "evals_per_move" in meta:
        meta["cost_per_sample"] = meta["evals_per_move"] * meta.get("stride", 1)
    return EnergyTrace(np.array(energies, dtype=np.float64), meta)


def acf(trace, max_lag):
    """Normalized autocorrelation of the energies for lags 0..max_lag.

    Uses the biased single-mean estimator
    rho(t) = sum_s (E_s - mean)(E_{s+t} - mean) / sum_s (E_s - mean)^2,
    which is invariant to shifting or positively scaling the trace.
    """
    values = trace.energies if isinstance(trace, EnergyTrace) else np.asarray(trace, dtype=np.float64)
    length = len(values)
    if length < max_lag + 2:
        raise ValueError(
            f"trace of length {length} too short for max_lag={max_lag}"
        )
    centered = values - values.mean()
    denom = float(centered @ centered)
    if denom <= 0.0:
        raise DegenerateTraceError(
            "trace has zero variance; autocorrelation is undefined"
        )
    out = np.empty(max_lag + 1, dtype=np.float64)
    out[0] = 1.0
    for t in range(1, max_lag + 1):
        out[t] = float(centered[: length - t] @ centered[t:]) / denom
    return out


def subsample(trace: EnergyTrace, stride):
    """Keep every ``stride``-th recorded sample, scaling the lag unit."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride == 1:
        return trace
    meta = dict(trace.meta)
    meta["cost_per_sample"] = trace.cost_per_sample * stride
    meta["subsample"] = int(meta.get("subsample", 1)) * stride
    return EnergyTrace(trace.energies[::stride].copy(), meta)


@dataclass
class AcfCurve:
    """Trial-averaged autocorrelation on a compute-normalized lag axis."""

    lags: np.ndarray          # lag values in compute units (index * lag_unit)
    mean: np.ndarray
    variance: np.ndarray      # population variance across trials, per lag
    num_trials: int
    lag_unit: float = 1.0
    label: str = ""


def average_acf(per_trial, lag_unit=1.0, label=""):
    """Combine per-trial ACF arrays into a mean curve with spread."""
    if len(per_trial) < 2:
        raise ValueError("need at least 2 trials to average")
    stacked = np.vstack([np.asarray(c, dtype=np.float64) for c in per_trial])
    if stacked.ndim != 2:
        raise ValueError("per-trial curves must share one lag grid")
    mean = stacked.mean(axis=0)
    variance = stacked.var(axis=0)
    lags = np.arange(stacked.shape[1], dtype=np.float64) * lag_unit
    return AcfCurve(
        lags=lags,
        mean=mean,
        variance=variance,
        num_trials=stacked.shape[0],
        lag_unit=lag_unit,
        label=label,
    )


def integrated_time(curve):
    """Integrated autocorrelation time 1 + 2*sum rho(t).

    The sum runs over positive lags and stops at the first non-positive
    autocorrelation value.
    """
    values = curve.mean if isinstance(curve, AcfCurve) else np.asarray(curve, dtype=np.float64)
    total = 0.0
    for rho in values[1:]:
        if rho <= 0.0:
            break
        total += float(rho)
    return 1.0 + 2.0 * total


def fair_stride(cost_expensive, cost_cheap):
    """Samples of the cheap trace per sample of the expensive one."""
    if cost_cheap <= 0 or cost_expensive <= 0:
        raise ValueError("costs must be positive")
    return max(1, round(cost_expensive / cost_cheap))


def check_lag_units(curves, tolerance=LAG_UNIT_TOLERANCE):
    """Refuse overlays whose compute-normalized lag units disagree."""
    units = [c.lag_unit for c in curves]
    reference = units[0]
    for unit in units[1:]:
        if abs(unit - reference) > tolerance * reference:
            raise ValueError(
                f"lag units differ by more than {tolerance:.0%}: {units}; "
                "subsample the cheaper trace to a common compute axis first"
            )


def write_acf_csv(curve: AcfCurve, path):
    """lag,mean,variance rows with full (17 significant digit) precision."""
    lines = ["lag,mean,variance"]
    for lag, mean, var in zip(curve.lags, curve.mean, curve.variance):
        lines.append(
            f"{format(float(lag), '.17g')},{format(float(mean), '.17g')},"
            f"{format(float(var), '.17g')}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


# deterministic, dependency-free SVG emission

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH, _HEIGHT = 640, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 20, 28, 46


def _fmt(x):
    return format(float(x), ".6g")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(count - 1, 1)
    power = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * power
        if span / step <= count:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    value = first
    while value <= hi + 1e-12 * span:
        ticks.append(value)
        value += step
    return ticks


@dataclass
class PlotCurve:
    """One polyline with optional per-point spread (drawn as vertical bars)."""

    label: str
    x: np.ndarray
    y: np.ndarray
    spread: np.ndarray | None = None


def curve_from_acf(curve: AcfCurve, label=None):
    return PlotCurve(
        label=label if label is not None else curve.label,
        x=curve.lags,
        y=curve.mean,
        spread=np.sqrt(curve.variance),
    )


def emit_svg(curves, title="", x_label="", y_label="", bar_every=10):
    """Standalone SVG overlay of the given curves; byte-deterministic.

    Vertical bars show the per-point spread at every ``bar_every``-th point.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve to plot")
    xs = np.concatenate([np.asarray(c.x, dtype=np.float64) for c in curves])
    ys = np.concatenate([np.asarray(c.y, dtype=np.float64) for c in curves])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x):
        return _MARGIN_L + plot_w * (x - x_lo) / (x_hi - x_lo)

    def py(y):
        return _MARGIN_T + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333333"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:.1f}" y="18" text-anchor="middle" '
            f'font-size="14" font-family="sans-serif">{_xml_escape(title)}</text>'
        )
    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_MARGIN_T + plot_h}" x2="{x:.2f}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_MARGIN_T + plot_h + 18}" '
            f'text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        parts.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{y:.2f}" x2="{_MARGIN_L}" '
            f'y2="{y:.2f}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{_fmt(tick)}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 10}" '
            f'text-anchor="middle" font-size="12" '
            f'font-family="sans-serif">{_xml_escape(x_label)}</text>'
        )
    if y_label:
        cx, cy = 16, _MARGIN_T + plot_h / 2
        parts.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{_xml_escape(y_label)}</text>'
        )
    for idx, curve in enumerate(curves):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(
            f"{px(float(x)):.2f},{py(float(y)):.2f}"
            for x, y in zip(curve.x, curve.y)
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        if curve.spread is not None:
            for j in range(0, len(curve.x), bar_every):
                s = float(curve.spread[j])
                if s <= 0.0:
                    continue
                x = px(float(curve.x[j]))
                y1 = py(float(curve.y[j]) - s)
                y2 = py(float(curve.y[j]) + s)
                parts.append(
                    f'<line x1="{x:.2f}" y1="{y1:.2f}" x2="{x:.2f}" '
                    f'y2="{y2:.2f}" stroke="{color}" stroke-width="1"/>'
                )
        ly = _MARGIN_T + 16 + 16 * idx
        lx = _MARGIN_L + plot_w - 150
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 28}" y="{ly}" font-size="11" '
            f'font-family="sans-serif">{_xml_escape(str(curve.label))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
