"""Minimal SVG plots: scatter, bars, lines and a boolean grid."""

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Figure", "scatter", "bars", "lines", "grid"]

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


class Figure:
    """A single panel with linear axes mapped onto a fixed pixel box."""

    def __init__(self, xlim, ylim, width=480, height=320, title="", margin=40):
        self.w, self.h, self.m = width, height, margin
        self.xlim = self._pad(xlim)
        self.ylim = self._pad(ylim)
        self.items = []
        self.title = title

    @staticmethod
    def _pad(lim):
        lo, hi = float(lim[0]), float(lim[1])
        if not np.isfinite(lo) or not np.isfinite(hi):
            lo, hi = 0.0, 1.0
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        return lo, hi

    def px(self, x):
        lo, hi = self.xlim
        return self.m + (np.asarray(x, float) - lo) / (hi - lo) * (self.w - 2 * self.m)

    def py(self, y):
        lo, hi = self.ylim
        return self.h - self.m - (np.asarray(y, float) - lo) / (hi - lo) * (self.h - 2 * self.m)

    def add(self, element):
        self.items.append(element)

    def render(self):
        m = self.m
        axes = (f'<rect x="{m}" y="{m}" width="{self.w - 2 * m}" height="{self.h - 2 * m}" '
                'fill="none" stroke="#444"/>')
        labels = [
            f'<text x="{m}" y="{self.h - m + 14}" font-size="10">{self.xlim[0]:.3g}</text>',
            f'<text x="{self.w - m}" y="{self.h - m + 14}" font-size="10" '
            f'text-anchor="end">{self.xlim[1]:.3g}</text>',
            f'<text x="{m - 4}" y="{self.h - m}" font-size="10" '
            f'text-anchor="end">{self.ylim[0]:.3g}</text>',
            f'<text x="{m - 4}" y="{m + 8}" font-size="10" text-anchor="end">{self.ylim[1]:.3g}</text>',
            f'<text x="{self.w / 2}" y="{m / 2}" font-size="12" '
            f'text-anchor="middle">{escape(self.title)}</text>',
        ]
        body = "\n".join([axes] + labels + self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" '
                f'height="{self.h}">\n{body}\n</svg>\n')

    def save(self, path):
        Path(path).write_text(self.render())
        return Path(path)


def _lim(v):
    v = np.asarray(v, float)
    v = v[np.isfinite(v)]
    return (v.min(), v.max()) if v.size else (0.0, 1.0)


def scatter(x, y, groups=None, markers=None, title=""):
    """Points coloured by ``groups``; ``markers`` is an optional (k, 2) array drawn as crosses."""
    xs = np.concatenate([np.ravel(x)] + ([np.asarray(markers)[:, 0]] if markers is not None else []))
    ys = np.concatenate([np.ravel(y)] + ([np.asarray(markers)[:, 1]] if markers is not None else []))
    fig = Figure(_lim(xs), _lim(ys), title=title)
    groups = np.zeros(len(x), dtype=int) if groups is None else np.asarray(groups)
    for xi, yi, g in zip(fig.px(x), fig.py(y), groups):
        fig.add(f'<circle cx="{xi:.1f}" cy="{yi:.1f}" r="2" fill="{PALETTE[int(g) % 10]}"/>')
    if markers is not None:
        for mx, my in zip(fig.px(np.asarray(markers)[:, 0]), fig.py(np.asarray(markers)[:, 1])):
            fig.add(f'<path d="M{mx - 6:.1f},{my:.1f}h12M{mx:.1f},{my - 6:.1f}v12" '
                    'stroke="#000" stroke-width="2"/>')
    return fig


def bars(values, lower=None, upper=None, title=""):
    """Bar chart with optional error bars from ``lower`` to ``upper``."""
    v = np.asarray(values, float)
    ext = [v, [0.0]] + [np.asarray(b, float) for b in (lower, upper) if b is not None]
    fig = Figure((0, len(v)), _lim(np.concatenate(ext)), title=title)
    bw = (fig.w - 2 * fig.m) / max(len(v), 1)
    y0 = fig.py(0.0)
    for i, vi in enumerate(v):
        x = fig.px(i) + 0.1 * bw
        top = min(fig.py(vi), y0)
        fig.add(f'<rect x="{x:.1f}" y="{top:.1f}" width="{0.8 * bw:.1f}" '
                f'height="{abs(fig.py(vi) - y0):.1f}" fill="{PALETTE[0]}"/>')
        if lower is not None and upper is not None:
            cx = fig.px(i + 0.5)
            fig.add(f'<line x1="{cx:.1f}" x2="{cx:.1f}" y1="{fig.py(lower[i]):.1f}" '
                    f'y2="{fig.py(upper[i]):.1f}" stroke="#e377c2" stroke-width="2"/>')
    return fig


def lines(x, ys, title=""):
    """One polyline per row of ``ys``."""
    ys = np.atleast_2d(ys)
    fig = Figure(_lim(x), _lim(ys), title=title)
    for k, row in enumerate(ys):
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(fig.px(x), fig.py(row)))
        fig.add(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[k % 10]}"/>')
    return fig


def grid(mask, title=""):
    """Boolean matrix as white (True) and black (False) cells, rows top to bottom."""
    mask = np.atleast_2d(np.asarray(mask, bool))
    r, c = mask.shape
    fig = Figure((0, c), (0, r), title=title)
    cw = (fig.w - 2 * fig.m) / c
    ch = (fig.h - 2 * fig.m) / r
    for i in range(r):
        for j in range(c):
            colour = "#fff" if mask[i, j] else "#000"
            fig.add(f'<rect x="{fig.px(j):.1f}" y="{fig.m + i * ch:.1f}" width="{cw:.2f}" '
                    f'height="{ch:.2f}" fill="{colour}"/>')
    return fig
