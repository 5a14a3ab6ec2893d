"""Descriptive analytics: subpopulation accuracy, sliding-window Gaussian
trends for scalar properties, and group distribution summaries for binary
properties."""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import InsufficientDataError, SchemaError

DENSITY_GRID_POINTS = 128


@dataclass(frozen=True)
class AccuracyRow:
    group: tuple  # one value per group_by property
    per_class: dict  # class_name -> accuracy percent, or None when no samples
    mean: float | None  # unweighted mean of the present per-class accuracies


@dataclass(frozen=True)
class AccuracyTable:
    group_by: tuple
    class_names: tuple
    rows: tuple


@dataclass(frozen=True)
class TrendCurve:
    window_centers: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    window_size: int
    stride: int


@dataclass(frozen=True)
class GroupSummary:
    label: float
    count: int
    q1: float
    median: float
    q3: float
    grid: np.ndarray
    densities: np.ndarray


def mean_accuracy(per_class_accuracies) -> float:
    """Unweighted arithmetic mean, rounded to 2 decimals."""
    vals = [v for v in per_class_accuracies if v is not None]
    if not vals:
        raise ValueError("no accuracies to average")
    return round(sum(vals) / len(vals), 2)


def subpopulation_accuracy(dataset: Dataset, group_by) -> AccuracyTable:
    """Per-(group, class) accuracy percentages with predicted = argmax logits."""
    group_by = tuple(group_by)
    for abbr in group_by:
        if abbr not in dataset.properties:
            raise SchemaError(f"unknown property abbreviation {abbr!r}")
    predicted = np.argmax(dataset.logits, axis=1)
    keys = np.stack([dataset.properties[a] for a in group_by], axis=1) if group_by else None

    if keys is None:
        group_values = [()]
        group_masks = {(): np.ones(dataset.n, dtype=bool)}
    else:
        uniq = sorted({tuple(k) for k in keys.tolist()})
        group_values = uniq
        group_masks = {g: np.all(keys == np.asarray(g), axis=1) for g in uniq}

    rows = []
    for g in group_values:
        mask = group_masks[g]
        per_class = {}
        for ci, name in enumerate(dataset.class_names):
            sel = mask & (dataset.true_label == ci)
            total = int(sel.sum())
            if total == 0:
                per_class[name] = None
            else:
                per_class[name] = round(100.0 * float(np.mean(predicted[sel] == ci)), 2)
        present = [v for v in per_class.values() if v is not None]
        rows.append(
            AccuracyRow(group=g, per_class=per_class, mean=mean_accuracy(present) if present else None)
        )
    return AccuracyTable(group_by=group_by, class_names=dataset.class_names, rows=tuple(rows))


def accuracy_to_csv(table: AccuracyTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(list(table.group_by) + list(table.class_names) + ["mean"])
    for row in table.rows:
        cells = [repr(v) for v in row.group]
        cells += ["-" if row.per_class[c] is None else f"{row.per_class[c]:.2f}"
                  for c in table.class_names]
        cells.append("-" if row.mean is None else f"{row.mean:.2f}")
        writer.writerow(cells)
    return buf.getvalue()


def sliding_gaussian_trend(prop_values, logit_values, window_frac: float = 0.1,
                           stride_frac: float = 0.025, min_window: int = 20) -> TrendCurve:
    """Sort by property value, then summarize the logit with per-window mean
    and (population) standard deviation; the last window is anchored to
    include the final sample."""
    x = np.asarray(prop_values, dtype=float)
    y = np.asarray(logit_values, dtype=float)
    if x.shape != y.shape:
        raise ValueError("property and logit vectors must have equal length")
    n = x.size
    window = max(min_window, int(np.floor(window_frac * n)))
    if window > n:
        raise InsufficientDataError(f"n={n} smaller than window size {window}")
    stride = max(1, int(np.floor(stride_frac * n)))

    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    starts = list(range(0, n - window + 1, stride))
    if starts[-1] != n - window:
        starts.append(n - window)

    centers = np.array([xs[s : s + window].mean() for s in starts])
    means = np.array([ys[s : s + window].mean() for s in starts])
    stds = np.array([ys[s : s + window].std() for s in starts])
    return TrendCurve(window_centers=centers, means=means, stds=stds,
                      window_size=window, stride=stride)


def trend_to_csv(curve: TrendCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["center", "mean", "std"])
    for c, m, s in zip(curve.window_centers, curve.means, curve.stds):
        writer.writerow([repr(float(c)), repr(float(m)), repr(float(s))])
    return buf.getvalue()


def _silverman_bandwidth(values) -> float:
    m = values.size
    std = values.std(ddof=1) if m > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    spread_candidates = [s for s in (std, iqr / 1.34) if s > 0]
    spread = min(spread_candidates) if spread_candidates else 0.0
    if spread == 0:
        ptp = float(values.max() - values.min())
        spread = ptp / 10 if ptp > 0 else 1e-3
    return 0.9 * spread * m ** (-1 / 5)


def binary_group_summary(prop_values, logit_values):
    """(GroupSummary for manifestation 0, for manifestation 1): counts,
    linear-interpolation quartiles, and a Gaussian KDE on a shared grid."""
    x = np.asarray(prop_values, dtype=float)
    y = np.asarray(logit_values, dtype=float)
    groups = {}
    for label in (0.0, 1.0):
        vals = y[x == label]
        if vals.size == 0:
            raise InsufficientDataError(f"no samples with manifestation {int(label)}")
        groups[label] = vals

    bws = {label: _silverman_bandwidth(vals) for label, vals in groups.items()}
    pad = 4.0 * max(bws.values())
    lo, hi = float(y.min()) - pad, float(y.max()) + pad
    grid = np.linspace(lo, hi, DENSITY_GRID_POINTS)

    out = []
    for label in (0.0, 1.0):
        vals = groups[label]
        bw = bws[label]
        q1, median, q3 = np.percentile(vals, [25, 50, 75])
        dens = np.exp(-0.5 * ((grid[:, None] - vals[None, :]) / bw) ** 2)
        dens = dens.sum(axis=1) / (vals.size * bw * np.sqrt(2 * np.pi))
        out.append(
            GroupSummary(label=label, count=int(vals.size), q1=float(q1),
                         median=float(median), q3=float(q3), grid=grid, densities=dens)
        )
    return tuple(out)


def groups_to_json(summaries) -> str:
    obj = [
        {
            "label": s.label,
            "count": s.count,
            "q1": s.q1,
            "median": s.median,
            "q3": s.q3,
            "grid": [float(v) for v in s.grid],
            "densities": [float(v) for v in s.densities],
        }
        for s in summaries
    ]
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _svg_header(width, height):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )


def render_trend_svg(curve: TrendCurve, width: int = 640, height: int = 360) -> str:
    """Mean line with a +/- one-std band."""
    cx = curve.window_centers
    lo_y = curve.means - curve.stds
    hi_y = curve.means + curve.stds
    x0, x1 = float(cx.min()), float(cx.max())
    y0, y1 = float(lo_y.min()), float(hi_y.max())
    xr = (x1 - x0) or 1.0
    yr = (y1 - y0) or 1.0
    pad = 20

    def sx(v):
        return pad + (v - x0) / xr * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / yr * (height - 2 * pad)

    band = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(cx, hi_y))
    band += " " + " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(cx[::-1], lo_y[::-1]))
    line = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(cx, curve.means))
    return (
        _svg_header(width, height)
        + f'<polygon points="{band}" fill="#7aa6d8" fill-opacity="0.35" stroke="none"/>'
        + f'<polyline points="{line}" fill="none" stroke="#1f4e8c" stroke-width="2"/>'
        + "</svg>\n"
    )


def render_violin_svg(summaries, width: int = 480, height: int = 360) -> str:
    """Side-by-side density silhouettes with quartile ticks."""
    pad = 20
    max_d = max(float(s.densities.max()) for s in summaries) or 1.0
    grid = summaries[0].grid
    y0, y1 = float(grid.min()), float(grid.max())
    yr = (y1 - y0) or 1.0
    slot = (width - 2 * pad) / len(summaries)
    parts = [_svg_header(width, height)]

    def sy(v):
        return height - pad - (v - y0) / yr * (height - 2 * pad)

    for i, s in enumerate(summaries):
        cx = pad + slot * (i + 0.5)
        half = 0.4 * slot / max_d
        right = [(cx + d * half, sy(g)) for g, d in zip(s.grid, s.densities)]
        left = [(cx - d * half, sy(g)) for g, d in zip(s.grid[::-1], s.densities[::-1])]
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in right + left)
        parts.append(f'<polygon points="{pts}" fill="#7aa6d8" stroke="#1f4e8c"/>')
        for q in (s.q1, s.median, s.q3):
            yq = sy(q)
            parts.append(
                f'<line x1="{cx - 0.2 * slot:.2f}" y1="{yq:.2f}" '
                f'x2="{cx + 0.2 * slot:.2f}" y2="{yq:.2f}" stroke="#333" stroke-width="1"/>'
            )
    parts.append("</svg>\n")
    return "".join(parts)
