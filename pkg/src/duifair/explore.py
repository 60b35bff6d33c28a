"""Pearson correlation analysis and density views of risk by attribute.

Histogram bins are half-open [lo, hi) with the final bin closed so mass
conservation is exact. Smoothed curves use a Gaussian kernel with
Silverman's rule-of-thumb bandwidth per group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UndefinedCorrelationError
from .ingest import CountyRecord
from .preprocess import DK_FIELD_BY_SHORT, DK_SHORT_NAMES

TARGET_COLUMN = "target_pct"
GROUP_NAMES = {0: "Low", 1: "High"}


@dataclass
class CorrelationMatrix:
    names: list[str]
    r: np.ndarray
    defined: np.ndarray  # bool mask; undefined cells hold nan in r

    def value(self, a: str, b: str) -> float:
        i, j = self.names.index(a), self.names.index(b)
        if not self.defined[i, j]:
            raise UndefinedCorrelationError(f"correlation ({a}, {b}) is undefined")
        return float(self.r[i, j])


@dataclass
class Density1D:
    bin_edges: np.ndarray
    counts: dict[int, np.ndarray]
    grid: np.ndarray
    density: dict[int, np.ndarray | None]
    bandwidth: dict[int, float | None]
    group_sizes: dict[int, int]
    notes: dict[int, str] = field(default_factory=dict)


@dataclass
class Density2D:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray  # shape (gx, gy), sums to n


def pearson(x, y) -> float:
    """Sample Pearson product-moment correlation; symmetric in arguments."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("pearson expects two equal-length 1-D columns")
    if x.size < 2:
        raise DataError("pearson needs at least 2 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.dot(xc, xc))
    sy = float(np.dot(yc, yc))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance column")
    r = float(np.dot(xc, yc) / math.sqrt(sx * sy))
    return min(1.0, max(-1.0, r))


def correlation_matrix(columns: dict[str, np.ndarray]) -> CorrelationMatrix:
    """Pairwise Pearson over named numeric columns.

    Zero-variance pairs are flagged undefined (nan), never fabricated as 0.
    """
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    k = len(names)
    if k == 0:
        raise DataError("correlation_matrix needs at least one column")
    r = np.full((k, k), np.nan)
    defined = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i, k):
            try:
                val = 1.0 if i == j and np.ptp(cols[i]) > 0 else pearson(cols[i], cols[j])
            except UndefinedCorrelationError:
                continue
            r[i, j] = r[j, i] = val
            defined[i, j] = defined[j, i] = True
    return CorrelationMatrix(names=names, r=r, defined=defined)


def columns_from_records(records: list[CountyRecord], include_target: bool = True):
    """Ordered name -> column mapping for correlation analysis.

    Records must be complete (run drop_incomplete first). Domain-knowledge
    columns use their short names; the raw target percentage is labeled
    ``target_pct``.
    """
    if not records:
        raise DataError("no records to analyze")
    out: dict[str, np.ndarray] = {}
    for name in records[0].explanatory:
        out[name] = np.array([r.explanatory[name] for r in records], dtype=float)
    for short in DK_SHORT_NAMES:
        fld = DK_FIELD_BY_SHORT[short]
        values = [getattr(r, fld) for r in records]
        if all(v is not None for v in values):
            out[short] = np.array(values, dtype=float)
    if include_target:
        out[TARGET_COLUMN] = np.array(
            [r.alcohol_impaired_death_pct for r in records], dtype=float
        )
    for name, col in out.items():
        if not np.all(np.isfinite(col)):
            raise DataError(f"column '{name}' has missing values; run drop_incomplete first")
    return out


def _silverman_bandwidth(values: np.ndarray) -> float:
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * len(values) ** (-0.2)


def _bin_index(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    # Half-open bins with the final bin closed at hi.
    width = (hi - lo) / bins
    idx = np.floor((values - lo) / width).astype(int)
    return np.clip(idx, 0, bins - 1)


def density_1d(
    values,
    groups,
    bins: int = 30,
    grid_points: int = 200,
    group_labels: tuple[int, ...] = (0, 1),
) -> Density1D:
    """Per-group histogram plus Gaussian-kernel smoothed density.

    Histograms share equal-width bins spanning the pooled range. Groups
    with fewer than 2 points (or zero spread) get histogram counts only,
    with the reason noted.
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups, dtype=int)
    if values.shape != groups.shape or values.ndim != 1 or values.size == 0:
        raise DataError("density_1d expects matching non-empty value/group vectors")
    if not np.all(np.isfinite(values)):
        raise DataError("density_1d values must be finite")
    if bins < 1 or grid_points < 2:
        raise DataError("need bins >= 1 and grid_points >= 2")

    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        bins = 1
        edges = np.array([lo, lo])
    else:
        edges = np.linspace(lo, hi, bins + 1)

    counts: dict[int, np.ndarray] = {}
    density: dict[int, np.ndarray | None] = {}
    bandwidth: dict[int, float | None] = {}
    sizes: dict[int, int] = {}
    notes: dict[int, str] = {}
    per_group = {}
    for g in group_labels:
        members = values[groups == g]
        sizes[g] = int(members.size)
        per_group[g] = members
        if members.size and hi > lo:
            hist = np.bincount(_bin_index(members, lo, hi, bins), minlength=bins)
        else:
            hist = np.zeros(bins, dtype=int)
            if members.size:  # degenerate single-point range
                hist[0] = members.size
        counts[g] = hist

    bandwidths = {}
    for g in group_labels:
        members = per_group[g]
        if members.size < 2:
            bandwidths[g] = None
            notes[g] = "smoothing unavailable: fewer than 2 points"
            continue
        bw = _silverman_bandwidth(members)
        if bw <= 0:
            bandwidths[g] = None
            notes[g] = "smoothing unavailable: zero spread"
        else:
            bandwidths[g] = bw

    usable = [bw for bw in bandwidths.values() if bw]
    pad = 4.0 * max(usable) if usable else 0.0
    grid = np.linspace(lo - pad, hi + pad, grid_points)
    for g in group_labels:
        bw = bandwidths[g]
        bandwidth[g] = bw
        if bw is None:
            density[g] = None
            continue
        members = per_group[g]
        z = (grid[:, None] - members[None, :]) / bw
        density[g] = np.exp(-0.5 * z * z).sum(axis=1) / (members.size * bw * math.sqrt(2 * math.pi))
    return Density1D(
        bin_edges=edges,
        counts=counts,
        grid=grid,
        density=density,
        bandwidth=bandwidth,
        group_sizes=sizes,
        notes=notes,
    )


def density_2d(x, y, grid: tuple[int, int] = (50, 50)) -> Density2D:
    """Cell counts over the bounding box; right/top edges are closed.

    A degenerate axis (all values equal) collapses to a single row/column.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise DataError("density_2d needs at least one point")
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("density_2d expects matching 1-D vectors")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("density_2d values must be finite")
    gx, gy = grid
    if gx < 1 or gy < 1:
        raise DataError("grid dimensions must be >= 1")
    x_lo, x_hi = float(x.min()), float(x.max())
    y_lo, y_hi = float(y.min()), float(y.max())
    if x_hi == x_lo:
        gx = 1
    if y_hi == y_lo:
        gy = 1
    ix = _bin_index(x, x_lo, x_hi, gx) if gx > 1 else np.zeros(x.size, dtype=int)
    iy = _bin_index(y, y_lo, y_hi, gy) if gy > 1 else np.zeros(y.size, dtype=int)
    counts = np.zeros((gx, gy), dtype=int)
    np.add.at(counts, (ix, iy), 1)
    x_edges = np.linspace(x_lo, x_hi, gx + 1) if gx > 1 else np.array([x_lo, x_hi])
    y_edges = np.linspace(y_lo, y_hi, gy + 1) if gy > 1 else np.array([y_lo, y_hi])
    return Density2D(x_edges=x_edges, y_edges=y_edges, counts=counts)


# ---------------------------------------------------------------------------
# delimited-text and SVG exports
# ---------------------------------------------------------------------------

def correlation_to_csv(cm: CorrelationMatrix) -> str:
    lines = ["," + ",".join(cm.names)]
    for i, name in enumerate(cm.names):
        cells = [
            f"{cm.r[i, j]:.6g}" if cm.defined[i, j] else "undefined"
            for j in range(len(cm.names))
        ]
        lines.append(name + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def density_1d_to_csv(d: Density1D) -> str:
    """Two blocks: histogram counts per bin, then smoothed density per grid point."""
    groups = sorted(d.counts)
    lines = ["bin_lo,bin_hi," + ",".join(f"count_{GROUP_NAMES.get(g, g)}" for g in groups)]
    nbins = len(d.counts[groups[0]])
    for b in range(nbins):
        lo = d.bin_edges[b] if len(d.bin_edges) > b else d.bin_edges[0]
        hi = d.bin_edges[min(b + 1, len(d.bin_edges) - 1)]
        lines.append(
            f"{lo:.6g},{hi:.6g}," + ",".join(str(int(d.counts[g][b])) for g in groups)
        )
    lines.append("")
    lines.append("x," + ",".join(f"density_{GROUP_NAMES.get(g, g)}" for g in groups))
    for i, xv in enumerate(d.grid):
        cells = []
        for g in groups:
            dens = d.density[g]
            cells.append(f"{dens[i]:.6g}" if dens is not None else "unavailable")
        lines.append(f"{xv:.6g}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def density_2d_to_csv(d: Density2D) -> str:
    lines = ["x_lo,x_hi,y_lo,y_hi,count"]
    gx, gy = d.counts.shape
    for i in range(gx):
        x_lo = d.x_edges[min(i, len(d.x_edges) - 2)] if len(d.x_edges) > 1 else d.x_edges[0]
        x_hi = d.x_edges[min(i + 1, len(d.x_edges) - 1)]
        for j in range(gy):
            y_lo = d.y_edges[min(j, len(d.y_edges) - 2)] if len(d.y_edges) > 1 else d.y_edges[0]
            y_hi = d.y_edges[min(j + 1, len(d.y_edges) - 1)]
            lines.append(f"{x_lo:.6g},{x_hi:.6g},{y_lo:.6g},{y_hi:.6g},{int(d.counts[i, j])}")
    return "\n".join(lines) + "\n"


_SVG_W, _SVG_H, _MARGIN = 640, 400, 48
_GROUP_COLORS = {0: "#4a78a8", 1: "#d97a2a"}


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f"<title>{title}</title>",
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_SVG_H - _MARGIN}" x2="{_SVG_W - _MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_SVG_H - _MARGIN}" stroke="black"/>',
    ]


def _scale(v, lo, hi, out_lo, out_hi):
    if hi == lo:
        return (out_lo + out_hi) / 2.0
    return out_lo + (v - lo) * (out_hi - out_lo) / (hi - lo)


def density_1d_svg(d: Density1D, title: str = "smoothed density") -> str:
    """Line chart of the per-group smoothed densities."""
    parts = _svg_open(title)
    curves = {g: dens for g, dens in d.density.items() if dens is not None}
    y_max = max((float(c.max()) for c in curves.values()), default=1.0) or 1.0
    x_lo, x_hi = float(d.grid[0]), float(d.grid[-1])
    for g in sorted(curves):
        pts = []
        for xv, yv in zip(d.grid, curves[g]):
            px = _scale(xv, x_lo, x_hi, _MARGIN, _SVG_W - _MARGIN)
            py = _scale(yv, 0.0, y_max, _SVG_H - _MARGIN, _MARGIN)
            pts.append(f"{px:.2f},{py:.2f}")
        color = _GROUP_COLORS.get(g, "#555555")
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(pts)}"/>'
        )
        parts.append(
            f'<text x="{_SVG_W - _MARGIN - 90}" y="{_MARGIN + 16 * (g + 1)}" fill="{color}" '
            f'font-size="12">{GROUP_NAMES.get(g, g)} risk</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(d: Density1D, title: str = "histogram") -> str:
    """Grouped bar chart of the per-group bin counts."""
    parts = _svg_open(title)
    groups = sorted(d.counts)
    nbins = len(d.counts[groups[0]])
    top = max((int(d.counts[g].max()) for g in groups), default=1) or 1
    span = _SVG_W - 2 * _MARGIN
    bin_w = span / max(nbins, 1)
    bar_w = bin_w / max(len(groups), 1)
    for b in range(nbins):
        for k, g in enumerate(groups):
            c = int(d.counts[g][b])
            if c == 0:
                continue
            h = _scale(c, 0, top, 0, _SVG_H - 2 * _MARGIN)
            x = _MARGIN + b * bin_w + k * bar_w
            y = _SVG_H - _MARGIN - h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
                f'fill="{_GROUP_COLORS.get(g, "#555555")}" fill-opacity="0.8"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def density_2d_svg(d: Density2D, title: str = "bivariate density") -> str:
    """Shaded-grid rendering of the 2-D cell counts."""
    parts = _svg_open(title)
    gx, gy = d.counts.shape
    top = int(d.counts.max()) or 1
    span_x = _SVG_W - 2 * _MARGIN
    span_y = _SVG_H - 2 * _MARGIN
    cell_w = span_x / gx
    cell_h = span_y / gy
    for i in range(gx):
        for j in range(gy):
            c = int(d.counts[i, j])
            if c == 0:
                continue
            x = _MARGIN + i * cell_w
            y = _SVG_H - _MARGIN - (j + 1) * cell_h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_w:.2f}" height="{cell_h:.2f}" '
                f'fill="#7a2a52" fill-opacity="{c / top:.3f}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
