"""Static SVG figures: latent-space scatter plots and probability-by-distance curves.

Written by hand so the output is plain text, diffable and free of plotting
dependencies. Coordinates are formatted to a fixed precision so reruns give
identical files.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy.special import expit

__all__ = [
    "PALETTE",
    "probability_curves",
    "scatter_svg",
    "curves_svg",
]

PALETTE = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
    "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a",
)

_W, _H, _PAD = 480, 420, 48


def probability_curves(intercepts: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """``expit(b - d)`` for every intercept (rows) and distance (columns)."""
    b = np.asarray(intercepts, dtype=float)
    d = np.asarray(distances, dtype=float)
    return expit(b[:, None] - d[None, :])


@dataclass
class _Frame:
    lo: np.ndarray
    hi: np.ndarray

    def map(self, pts: np.ndarray) -> np.ndarray:
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        u = (pts - self.lo) / span
        return np.column_stack([_PAD + u[:, 0] * (_W - 2 * _PAD), _H - _PAD - u[:, 1] * (_H - 2 * _PAD)])


def _frame(*arrays: np.ndarray, square: bool = True) -> _Frame:
    pts = np.vstack([a for a in arrays if a.size])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if square:
        half = 0.5 * max(float(np.max(hi - lo)), 1e-9)
        mid = 0.5 * (lo + hi)
        lo, hi = mid - half, mid + half
    margin = 0.05 * (hi - lo)
    return _Frame(lo - margin, hi + margin)


def _f(v: float) -> str:
    return f"{v:.2f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#999"/>',
    ]


def _ticks(frame: _Frame, axis: int, n: int = 5) -> list[str]:
    out = []
    vals = np.linspace(frame.lo[axis], frame.hi[axis], n)
    for v in vals:
        pt = np.zeros((1, 2))
        pt[0] = frame.lo
        pt[0, axis] = v
        x, y = frame.map(pt)[0]
        if axis == 0:
            out.append(f'<text x="{_f(x)}" y="{_H - _PAD + 14}" text-anchor="middle">{v:.2g}</text>')
        else:
            out.append(f'<text x="{_PAD - 4}" y="{_f(y + 4)}" text-anchor="end">{v:.2g}</text>')
    return out


def scatter_svg(points: np.ndarray, labels: Sequence[int], title: str = "",
                overlay: Optional[np.ndarray] = None, overlay_labels: Optional[Sequence[int]] = None,
                point_names: Optional[Sequence[str]] = None,
                overlay_names: Optional[Sequence[str]] = None) -> str:
    """Scatter of 2-D positions coloured by cluster.

    ``overlay`` points (e.g. item positions over person positions) are drawn as
    labelled triangles. Only the first two coordinates are plotted.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 1:
        raise ValueError("points must be (m, D)")
    if pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(len(pts))])
    pts = pts[:, :2]
    ov = None
    if overlay is not None:
        ov = np.asarray(overlay, dtype=float)
        ov = np.column_stack([ov[:, 0], np.zeros(len(ov))]) if ov.shape[1] == 1 else ov[:, :2]
    frame = _frame(pts, ov if ov is not None else np.empty((0, 2)))
    lines = _header(title) + _ticks(frame, 0) + _ticks(frame, 1)
    xy = frame.map(pts)
    labels = np.asarray(labels, dtype=int)
    for r, (x, y) in enumerate(xy):
        colour = PALETTE[labels[r] % len(PALETTE)]
        name = f"<title>{escape(point_names[r])}</title>" if point_names is not None else ""
        lines.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{colour}" fill-opacity="0.7">{name}</circle>')
    if ov is not None:
        oxy = frame.map(ov)
        olab = np.zeros(len(ov), dtype=int) if overlay_labels is None else np.asarray(overlay_labels, dtype=int)
        for r, (x, y) in enumerate(oxy):
            colour = PALETTE[olab[r] % len(PALETTE)]
            tri = f"{_f(x)},{_f(y - 6)} {_f(x - 5)},{_f(y + 4)} {_f(x + 5)},{_f(y + 4)}"
            lines.append(f'<polygon points="{tri}" fill="{colour}" stroke="black" stroke-width="0.8"/>')
            if overlay_names is not None:
                lines.append(f'<text x="{_f(x + 6)}" y="{_f(y - 4)}" font-size="9">{escape(overlay_names[r])}</text>')
    for g in sorted(set(labels.tolist())):
        y = _PAD + 12 * g + 8
        lines.append(f'<rect x="{_W - _PAD + 6}" y="{y - 7}" width="8" height="8" fill="{PALETTE[g % len(PALETTE)]}"/>')
        lines.append(f'<text x="{_W - _PAD + 17}" y="{y}" font-size="9">{g + 1}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def curves_svg(intercepts: np.ndarray, max_distance: float, title: str = "",
               labels: Optional[Sequence[int]] = None, n_points: int = 60) -> str:
    """One decreasing logistic curve ``expit(b - d)`` per unit, on ``[0, max_distance]``."""
    b = np.asarray(intercepts, dtype=float)
    dmax = max(float(max_distance), 1e-6)
    d = np.linspace(0.0, dmax, n_points)
    prob = probability_curves(b, d)
    frame = _Frame(np.array([0.0, 0.0]), np.array([dmax, 1.0]))
    lines = _header(title) + _ticks(frame, 0) + _ticks(frame, 1)
    lines.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">distance</text>')
    labels = np.zeros(b.size, dtype=int) if labels is None else np.asarray(labels, dtype=int)
    for r in range(b.size):
        xy = frame.map(np.column_stack([d, prob[r]]))
        path = " ".join(f"{_f(x)},{_f(y)}" for x, y in xy)
        colour = PALETTE[labels[r] % len(PALETTE)]
        lines.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-opacity="0.6"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
