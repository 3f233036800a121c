"""Minimal static SVG line/scatter plots with optional log axes."""
from __future__ import annotations

import math
from html import escape

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=78, right=20, top=36, bottom=56)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, log: bool):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        mults = (1, 2, 5) if b - a <= 2 else (1,)
        ticks = [m * 10.0 ** k for k in range(a, b + 1) for m in mults]
        return [t for t in ticks if lo * (1 - 1e-9) <= t <= hi * (1 + 1e-9)]
    return list(np.linspace(lo, hi, 6))


def _label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:.4g}"


class Plot:
    """Accumulates series and renders them to an SVG string.

    >>> p = Plot("T vs lambda", "lambda", "T", xlog=True, ylog=True)
    >>> p.add([1, 10], [1, 0.3], "fit")
    >>> svg = p.render()
    """

    def __init__(self, title: str, xlabel: str, ylabel: str, xlog: bool = False, ylog: bool = False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.xlog, self.ylog = xlog, ylog
        self.series = []
        self.metadata = {}

    def add(self, x, y, name: str, points: bool = False, dashed: bool = False):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if self.xlog:
            keep &= x > 0
        if self.ylog:
            keep &= y > 0
        self.series.append((x[keep], y[keep], name, points, dashed))

    def _range(self, k, log):
        arrays = [s[k] for s in self.series if s[k].size]
        vals = np.concatenate(arrays) if arrays else np.array([1.0])
        lo, hi = float(vals.min()), float(vals.max())
        if log:
            # snap to quarter decades
            lo = 10 ** (math.floor(math.log10(lo) * 4) / 4)
            hi = 10 ** (math.ceil(math.log10(hi) * 4) / 4)
        elif hi == lo:
            lo, hi = lo - 1, hi + 1
        else:
            pad = 0.05 * (hi - lo)
            lo, hi = lo - pad, hi + pad
        if hi <= lo:
            hi = lo * 10 if log else lo + 1
        return lo, hi

    def render(self) -> str:
        x0, x1 = self._range(0, self.xlog)
        y0, y1 = self._range(1, self.ylog)
        L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]

        def tx(v):
            f = (math.log10(v) - math.log10(x0)) / (math.log10(x1) - math.log10(x0)) if self.xlog else (v - x0) / (x1 - x0)
            return L + f * (R - L)

        def ty(v):
            f = (math.log10(v) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)) if self.ylog else (v - y0) / (y1 - y0)
            return B - f * (B - T)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">']
        if self.metadata:
            meta = " ".join(f"{k}={v}" for k, v in sorted(self.metadata.items()))
            out.append(f"<metadata>{escape(meta)}</metadata>")
        out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
        out.append(f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>')
        out.append(f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>')
        for v in _ticks(x0, x1, self.xlog):
            px = _fmt(tx(v))
            out.append(f'<line x1="{px}" y1="{B}" x2="{px}" y2="{B + 5}" stroke="black"/>')
            out.append(f'<line x1="{px}" y1="{T}" x2="{px}" y2="{B}" stroke="#ddd"/>')
            out.append(f'<text x="{px}" y="{B + 18}" text-anchor="middle">{_label(v)}</text>')
        for v in _ticks(y0, y1, self.ylog):
            py = _fmt(ty(v))
            out.append(f'<line x1="{L - 5}" y1="{py}" x2="{L}" y2="{py}" stroke="black"/>')
            out.append(f'<line x1="{L}" y1="{py}" x2="{R}" y2="{py}" stroke="#ddd"/>')
            out.append(f'<text x="{L - 8}" y="{py}" text-anchor="end" dominant-baseline="middle">{_label(v)}</text>')
        out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 14}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="18" y="{(T + B) / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 18 {(T + B) / 2})">{escape(self.ylabel)}</text>')
        for i, (x, y, name, points, dashed) in enumerate(self.series):
            c = COLORS[i % len(COLORS)]
            if points:
                for a, b in zip(x, y):
                    out.append(f'<circle cx="{_fmt(tx(a))}" cy="{_fmt(ty(b))}" r="3" fill="{c}"/>')
            elif x.size:
                pts = " ".join(f"{_fmt(tx(a))},{_fmt(ty(b))}" for a, b in zip(x, y))
                dash = ' stroke-dasharray="6,4"' if dashed else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"{dash}/>')
            ly = T + 16 + 16 * i
            out.append(f'<rect x="{R - 150}" y="{ly - 9}" width="12" height="4" fill="{c}"/>')
            out.append(f'<text x="{R - 132}" y="{ly - 4}">{escape(name)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
