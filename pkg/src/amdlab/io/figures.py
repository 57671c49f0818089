"""Static SVG figures: energy and reward heatmaps, student clouds over
teacher contours, and metric curves.

Output is plain text assembled from fixed-precision numbers, so the same
inputs always give the same bytes.
"""

import os
from xml.sax.saxutils import escape

import contourpy
import numpy as np

from .. import reward as rewardlib
from .. import worlds
from ..errors import ConfigError, SinkError

SIZE = 800
MARGIN = 60
GRID = 61  # odd, so the box center sits in the middle of a cell
ENERGY_SPAN = 30.0  # energies this far above the minimum render as the coldest color
CONTOUR_OFFSETS = (1.0, 3.0, 6.0, 10.0)

# anchor colors of a perceptually ordered dark-to-bright ramp
_RAMP = np.array([
    (13, 8, 135), (84, 2, 163), (139, 10, 165), (185, 50, 137),
    (219, 92, 104), (244, 136, 73), (254, 188, 43), (240, 249, 33),
], dtype=np.float64)
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def _f(v):
    return f"{v:.2f}"


def color(u):
    """Hex color for intensity ``u`` in [0, 1]."""
    u = min(max(float(u), 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(u), len(_RAMP) - 2)
    c = _RAMP[i] + (u - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def square_box(world, pad_sigmas=4.0, pad_fraction=0.2):
    lo, hi = worlds.mode_bounding_box(world, pad_sigmas)
    center, half = (lo + hi) / 2.0, float(np.max(hi - lo)) / 2.0
    half += pad_fraction * float(np.max(world.means.max(axis=0) - world.means.min(axis=0)))
    return center - half, center + half


def landscape_grid(fn, box, n=GRID):
    """Cell centers and ``fn`` evaluated on an n x n grid; Z[i, j] is row y_i, column x_j."""
    lo, hi = box
    w = (hi - lo) / n
    xs = lo[0] + w[0] * (np.arange(n) + 0.5)
    ys = lo[1] + w[1] * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(xs, ys)
    Z = np.asarray(fn(np.stack([X.ravel(), Y.ravel()], axis=1)), dtype=np.float64)
    return xs, ys, Z.reshape(n, n)


def energy_intensity(world, box, n=GRID):
    xs, ys, E = landscape_grid(lambda p: worlds.energy(world, p), box, n)
    return xs, ys, np.clip(1.0 - (E - E.min()) / ENERGY_SPAN, 0.0, 1.0)


def reward_intensity(landscape, world, box, n=GRID):
    xs, ys, R = landscape_grid(lambda p: rewardlib.eval_reward(landscape, world, p), box, n)
    span = R.max() - R.min()
    if landscape.kind == "global" or landscape.kind == "selective":
        R = np.maximum(R, R.max() - ENERGY_SPAN)
        span = R.max() - R.min()
    return xs, ys, (R - R.min()) / span if span > 0 else np.zeros_like(R)


class Canvas:
    """800 x 800 SVG with a data box mapped to the plot area (y up)."""

    def __init__(self, box, title=""):
        self.lo, self.hi = (np.asarray(b, dtype=np.float64) for b in box)
        self.parts = []
        self.title = title
        self.inner = SIZE - 2 * MARGIN

    def px(self, x, y):
        u = (x - self.lo[0]) / (self.hi[0] - self.lo[0])
        v = (y - self.lo[1]) / (self.hi[1] - self.lo[1])
        return MARGIN + u * self.inner, SIZE - MARGIN - v * self.inner

    def add(self, s):
        self.parts.append(s)

    def heatmap(self, xs, ys, U):
        n = len(xs)
        cw, ch = self.inner / n, self.inner / len(ys)
        self.add('<g shape-rendering="crispEdges">')
        for i in range(len(ys)):
            for j in range(n):
                x0 = MARGIN + j * cw
                y0 = SIZE - MARGIN - (i + 1) * ch
                self.add(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(cw + 0.05)}" '
                         f'height="{_f(ch + 0.05)}" fill="{color(U[i, j])}"/>')
        self.add("</g>")

    def polyline(self, pts, stroke, width=1.0, closed=False, dash=None):
        if len(pts) < 2:
            return
        coords = " ".join(f"{_f(a)},{_f(b)}" for a, b in (self.px(x, y) for x, y in pts))
        tag = "polygon" if closed else "polyline"
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<{tag} points="{coords}" fill="none" stroke="{stroke}" '
                 f'stroke-width="{width}"{extra}/>')

    def points(self, xy, fill, r=1.6, opacity=0.6):
        self.add(f'<g fill="{fill}" fill-opacity="{opacity}">')
        for x, y in xy:
            if not (np.isfinite(x) and np.isfinite(y)):
                continue
            a, b = self.px(x, y)
            if -10 <= a <= SIZE + 10 and -10 <= b <= SIZE + 10:
                self.add(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{r}"/>')
        self.add("</g>")

    def marker(self, x, y, text, fill="#ffffff"):
        a, b = self.px(x, y)
        self.add(f'<text x="{_f(a)}" y="{_f(b + 5)}" font-size="16" text-anchor="middle" '
                 f'fill="{fill}" font-family="sans-serif">{escape(text)}</text>')

    def frame(self):
        self.add(f'<rect x="{MARGIN}" y="{MARGIN}" width="{self.inner}" height="{self.inner}" '
                 'fill="none" stroke="#333333"/>')
        for k in range(5):
            fx = self.lo[0] + k * (self.hi[0] - self.lo[0]) / 4
            fy = self.lo[1] + k * (self.hi[1] - self.lo[1]) / 4
            a, _ = self.px(fx, self.lo[1])
            _, b = self.px(self.lo[0], fy)
            self.add(f'<text x="{_f(a)}" y="{SIZE - MARGIN + 20}" font-size="12" '
                     f'text-anchor="middle" font-family="sans-serif">{fx:.1f}</text>')
            self.add(f'<text x="{MARGIN - 8}" y="{_f(b + 4)}" font-size="12" '
                     f'text-anchor="end" font-family="sans-serif">{fy:.1f}</text>')

    def svg(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
                f'viewBox="0 0 {SIZE} {SIZE}">')
        title = (f'<text x="{SIZE // 2}" y="{MARGIN // 2 + 6}" font-size="18" text-anchor="middle" '
                 f'font-family="sans-serif">{escape(self.title)}</text>')
        body = "\n".join(self.parts)
        return f'<?xml version="1.0" encoding="UTF-8"?>\n{head}\n<rect width="100%" height="100%" ' \
               f'fill="#ffffff"/>\n{title}\n{body}\n</svg>\n'


def teacher_contours(world, box, n=121):
    """Closed energy contours at fixed offsets above the minimum grid energy."""
    xs, ys, E = landscape_grid(lambda p: worlds.energy(world, p), box, n)
    gen = contourpy.contour_generator(xs, ys, E, name="serial")
    return [(lvl, gen.lines(E.min() + lvl)) for lvl in CONTOUR_OFFSETS]


def _draw_contours(cv, contours):
    for k, (_, lines) in enumerate(contours):
        for line in lines:
            cv.polyline(line, "#555555", width=0.8 + 0.2 * (len(contours) - k), dash=None if k == 0 else "4,3")


def energy_svg(world, box=None):
    box = square_box(world) if box is None else box
    xs, ys, U = energy_intensity(world, box)
    cv = Canvas(box, f"teacher energy, world {world.name}")
    cv.heatmap(xs, ys, U)
    cv.frame()
    return cv.svg()


def reward_svg(landscape, world, box=None):
    box = square_box(world) if box is None else box
    xs, ys, U = reward_intensity(landscape, world, box)
    cv = Canvas(box, f"reward landscape ({landscape.kind})")
    cv.heatmap(xs, ys, U)
    favored = set(landscape.favored)
    if landscape.kind in ("selective", "custom-bumps"):
        for i, mu in enumerate(world.means):
            cv.marker(mu[0], mu[1], "*" if i in favored else "x")
    cv.frame()
    return cv.svg()


def cloud_svg(snapshot, world, box=None, contours=None, label=""):
    box = square_box(world) if box is None else box
    contours = teacher_contours(world, box) if contours is None else contours
    x = np.asarray([np.nan if v is None else v for v in snapshot["samples"]], dtype=np.float64)
    cv = Canvas(box, f"{label}iteration {snapshot['iteration']}")
    _draw_contours(cv, contours)
    cv.points(x.reshape(-1, 2), _PALETTE[0])
    cv.frame()
    return cv.svg()


def overlay_svg(runs, world, box=None):
    """Final clouds of several runs over one set of teacher contours."""
    box = square_box(world) if box is None else box
    cv = Canvas(box, "final clouds: " + ", ".join(name for name, _ in runs))
    _draw_contours(cv, teacher_contours(world, box))
    for k, (name, snap) in enumerate(runs):
        x = np.asarray([np.nan if v is None else v for v in snap["samples"]], dtype=np.float64)
        cv.points(x.reshape(-1, 2), _PALETTE[k % len(_PALETTE)], r=1.4, opacity=0.45)
        cv.add(f'<text x="{MARGIN + 10}" y="{MARGIN + 20 + 18 * k}" font-size="14" '
               f'fill="{_PALETTE[k % len(_PALETTE)]}" font-family="sans-serif">{escape(name)}</text>')
    cv.frame()
    return cv.svg()


CURVE_KEYS = ("nll", "mean_reward", "fz_rate", "cos_dm_ca")


def curves_svg(series, keys=CURVE_KEYS):
    """2 x 2 panels of metric vs iteration; ``series`` is [(name, snapshots)]."""
    panel = (SIZE - 3 * MARGIN // 2) // 2
    parts = []
    for p, key in enumerate(keys):
        ox = MARGIN // 2 + (p % 2) * (panel + MARGIN // 2)
        oy = MARGIN // 2 + (p // 2) * (panel + MARGIN // 2)
        lines = []
        for name, snaps in series:
            pts = [(s["iteration"], s["metrics"].get(key)) for s in snaps]
            lines.append((name, [(i, v) for i, v in pts if v is not None and np.isfinite(v)]))
        allpts = [pt for _, pts in lines for pt in pts]
        parts.append(f'<rect x="{ox}" y="{oy}" width="{panel}" height="{panel}" fill="none" stroke="#333333"/>')
        parts.append(f'<text x="{ox + panel // 2}" y="{oy + 18}" font-size="14" text-anchor="middle" '
                     f'font-family="sans-serif">{escape(key)}</text>')
        if not allpts:
            continue
        it = np.array([a for a, _ in allpts], dtype=np.float64)
        val = np.array([b for _, b in allpts], dtype=np.float64)
        x0, x1 = it.min(), max(it.max(), it.min() + 1)
        y0, y1 = val.min(), val.max()
        if y1 - y0 < 1e-12:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 28

        def px(a, b):
            return (ox + pad + (a - x0) / (x1 - x0) * (panel - 2 * pad),
                    oy + panel - pad - (b - y0) / (y1 - y0) * (panel - 2 * pad))

        for k, (name, pts) in enumerate(lines):
            col = _PALETTE[k % len(_PALETTE)]
            xy = [px(a, b) for a, b in pts]
            if len(xy) == 1:
                parts.append(f'<circle cx="{_f(xy[0][0])}" cy="{_f(xy[0][1])}" r="3" fill="{col}"/>')
            elif xy:
                coords = " ".join(f"{_f(a)},{_f(b)}" for a, b in xy)
                parts.append(f'<polyline points="{coords}" fill="none" stroke="{col}" stroke-width="1.5"/>')
            if p == 0:
                parts.append(f'<text x="{ox + panel - 8}" y="{oy + 36 + 16 * k}" font-size="12" '
                             f'text-anchor="end" fill="{col}" font-family="sans-serif">{escape(name)}</text>')
        parts.append(f'<text x="{ox + 4}" y="{oy + pad - 6}" font-size="11" '
                     f'font-family="sans-serif">{y1:.3g}</text>')
        parts.append(f'<text x="{ox + 4}" y="{oy + panel - 6}" font-size="11" '
                     f'font-family="sans-serif">{y0:.3g} (iter {int(x0)}..{int(x1)})</text>')
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">')
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n{head}\n<rect width="100%" height="100%" '
            f'fill="#ffffff"/>\n' + "\n".join(parts) + "\n</svg>\n")


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise SinkError(f"cannot write figure {path}: {exc.strerror}") from None
    return path


def render_landscape(world, landscape, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    box = square_box(world)
    return [
        _write(os.path.join(out_dir, "energy.svg"), energy_svg(world, box)),
        _write(os.path.join(out_dir, "reward.svg"), reward_svg(landscape, world, box)),
    ]


def render_figures(snapshots, world, out_dir, landscape=None):
    """Energy map, reward map, one cloud per snapshot and the metric curves.

    Returns the written paths in a fixed order.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ConfigError("render_figures needs at least one snapshot")
    landscape = rewardlib.RewardLandscape() if landscape is None else landscape
    paths = render_landscape(world, landscape, out_dir)
    box = square_box(world)
    contours = teacher_contours(world, box)
    width = len(str(max(s["iteration"] for s in snapshots)))
    for s in snapshots:
        name = f"cloud_{s['iteration']:0{width}d}.svg"
        paths.append(_write(os.path.join(out_dir, name), cloud_svg(s, world, box, contours)))
    paths.append(_write(os.path.join(out_dir, "curves.svg"), curves_svg([("run", snapshots)])))
    return paths
