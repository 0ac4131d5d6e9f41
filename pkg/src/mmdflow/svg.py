"""Minimal self-contained SVG plotting: axes, polylines, filled regions, impulses, contours."""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .measure import Measure1D


def _f(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class Panel:
    """One axes box mapping data coordinates to a pixel rectangle."""

    xlim: tuple[float, float]
    ylim: tuple[float, float]
    width: float = 480.0
    height: float = 200.0
    left: float = 50.0
    top: float = 20.0
    title: str = ""
    items: list[str] = field(default_factory=list)

    def px(self, x, y):
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        X = self.left + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * self.width
        Y = self.top + self.height - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * self.height
        return X, Y

    def axes(self, nticks: int = 5, xlabel: str = "", ylabel: str = "") -> None:
        L, T, W, H = self.left, self.top, self.width, self.height
        self.items.append(f'<rect x="{_f(L)}" y="{_f(T)}" width="{_f(W)}" height="{_f(H)}" '
                          'fill="none" stroke="#333"/>')
        for v in np.linspace(*self.xlim, nticks):
            X, _ = self.px(v, self.ylim[0])
            self.items.append(f'<text x="{_f(X)}" y="{_f(T + H + 14)}" font-size="10" '
                              f'text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(*self.ylim, nticks):
            _, Y = self.px(self.xlim[0], v)
            self.items.append(f'<text x="{_f(L - 4)}" y="{_f(Y + 3)}" font-size="10" '
                              f'text-anchor="end">{v:.3g}</text>')
        if xlabel:
            self.items.append(f'<text x="{_f(L + W / 2)}" y="{_f(T + H + 28)}" font-size="11" '
                              f'text-anchor="middle">{escape(xlabel)}</text>')
        if ylabel:
            self.items.append(f'<text x="{_f(L - 36)}" y="{_f(T + H / 2)}" font-size="11" '
                              f'text-anchor="middle" transform="rotate(-90 {_f(L - 36)} '
                              f'{_f(T + H / 2)})">{escape(ylabel)}</text>')
        if self.title:
            self.items.append(f'<text x="{_f(L + W / 2)}" y="{_f(T - 6)}" font-size="12" '
                              f'text-anchor="middle">{escape(self.title)}</text>')

    def polyline(self, xs, ys, color: str = "black", width: float = 1.5, dash: str = "") -> None:
        X, Y = self.px(xs, ys)
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(np.atleast_1d(X), np.atleast_1d(Y)))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}/>')

    def filled(self, xs, ys, color: str = "#4a7bd0", opacity: float = 0.5) -> None:
        """Region between the curve and ``y = 0``."""
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        X, Y = self.px(np.concatenate([[xs[0]], xs, [xs[-1]]]), np.concatenate([[0], ys, [0]]))
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(X, Y))
        self.items.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="{opacity}" '
                          f'stroke="{color}"/>')

    def impulse(self, x: float, height: float, label: str = "", color: str = "#d03030") -> None:
        X, Y0 = self.px(x, 0.0)
        _, Y1 = self.px(x, height)
        self.items.append(f'<line x1="{_f(X)}" y1="{_f(Y0)}" x2="{_f(X)}" y2="{_f(Y1)}" '
                          f'stroke="{color}" stroke-width="2" stroke-dasharray="4,3"/>')
        if label:
            self.items.append(f'<text x="{_f(X + 4)}" y="{_f(Y1 + 10)}" font-size="10" '
                              f'fill="{color}">{escape(label)}</text>')

    def marker(self, x: float, y: float, color: str, label: str = "") -> None:
        X, Y = self.px(x, y)
        self.items.append(f'<circle cx="{_f(X)}" cy="{_f(Y)}" r="4" fill="{color}"/>')
        if label:
            self.items.append(f'<text x="{_f(X + 6)}" y="{_f(Y - 6)}" font-size="10" '
                              f'fill="{color}">{escape(label)}</text>')

    def contours(self, xs, ys, Z, levels, color: str = "#777") -> None:
        for lev in levels:
            for (x0, y0), (x1, y1) in marching_squares(xs, ys, Z, lev):
                X, Y = self.px([x0, x1], [y0, y1])
                self.items.append(f'<line x1="{_f(X[0])}" y1="{_f(Y[0])}" x2="{_f(X[1])}" '
                                  f'y2="{_f(Y[1])}" stroke="{color}" stroke-width="0.8"/>')


def marching_squares(xs, ys, Z, level):
    """Line segments of the ``level`` set of ``Z[j, i]`` sampled at ``(xs[i], ys[j])``."""
    xs, ys, Z = np.asarray(xs), np.asarray(ys), np.asarray(Z)
    segs = []
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            corners = [(xs[i], ys[j], Z[j, i]), (xs[i + 1], ys[j], Z[j, i + 1]),
                       (xs[i + 1], ys[j + 1], Z[j + 1, i + 1]), (xs[i], ys[j + 1], Z[j + 1, i])]
            pts = []
            for a, b in zip(corners, corners[1:] + corners[:1]):
                if (a[2] - level) * (b[2] - level) < 0:
                    t = (level - a[2]) / (b[2] - a[2])
                    pts.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
            if len(pts) == 2:
                segs.append((pts[0], pts[1]))
            elif len(pts) == 4:
                segs += [(pts[0], pts[1]), (pts[2], pts[3])]
    return segs


def render(panels: list[Panel], width: float | None = None) -> str:
    w = width or max(p.left + p.width + 30 for p in panels)
    h = max(p.top + p.height + 40 for p in panels)
    body = "\n".join(item for p in panels for item in p.items)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
            f'viewBox="0 0 {_f(w)} {_f(h)}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f"{body}\n</svg>\n")


def density_panels(snapshots: list[tuple[float, Measure1D]], xlim=None) -> str:
    """Stacked panels: densities filled (area = mass), atoms as impulses (height = mass)."""
    if xlim is None:
        lo = min(mu.support()[0] for _, mu in snapshots)
        hi = max(mu.support()[1] for _, mu in snapshots)
        pad = 0.1 * max(hi - lo, 1.0)
        xlim = (lo - pad, hi + pad)
    ymax = 1.0
    for _, mu in snapshots:
        for a, b, w in mu.density_pieces():
            ymax = max(ymax, w / (b - a))
    panels = []
    for k, (t, mu) in enumerate(snapshots):
        p = Panel(xlim, (0.0, 1.1 * ymax), top=30 + k * 250, title=f"t = {t:g}")
        p.axes(xlabel="x")
        for a, b, w in mu.density_pieces():
            p.filled([a, b], [w / (b - a)] * 2)
        for x, w in mu.atoms:
            p.impulse(x, w, f"{w:.3g}")
        panels.append(p)
    return render(panels)
