"""Static SVG plots: sample scatter over density contours of a 2-D target."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np
from contourpy import contour_generator

from .targets import TargetModel

GRID = 200
N_LEVELS = 8
WIDTH = HEIGHT = 480
MARGIN = 30


def density_grid(target: TargetModel, bounds, n=GRID):
    """Normalised density (max 1) on an ``n x n`` grid over ``bounds``."""
    (x0, x1), (y0, y1) = bounds
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    logp = np.array([[target.log_density(np.array([x, y])) for x in xs] for y in ys])
    logp = np.where(np.isfinite(logp), logp, -np.inf)
    return xs, ys, np.exp(logp - np.max(logp))


def quantile_levels(dens, n_levels=N_LEVELS):
    """Density thresholds enclosing mass fractions ``k / (n_levels + 1)``.

    Returned in increasing density order (the outermost contour first).
    """
    flat = np.sort(dens.ravel())[::-1]
    mass = np.cumsum(flat)
    mass /= mass[-1]
    fractions = np.arange(n_levels, 0, -1) / (n_levels + 1)
    idx = np.searchsorted(mass, fractions)
    levels = flat[np.minimum(idx, flat.size - 1)]
    return np.maximum.accumulate(levels)


def default_bounds(samples, pad=0.1):
    lo = np.percentile(samples, 0.5, axis=0)
    hi = np.percentile(samples, 99.5, axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (lo[0] - pad * span[0], hi[0] + pad * span[0]), (lo[1] - pad * span[1],
                                                            hi[1] + pad * span[1])


def render_svg(samples, target: TargetModel, bounds=None, title: str = "") -> str:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != 2 or target.dim != 2:
        raise ValueError(f"plotting needs a 2-D target and samples (got D={target.dim}, "
                         f"samples with {samples.shape[1]} columns)")
    bounds = bounds or default_bounds(samples)
    xs, ys, dens = density_grid(target, bounds)
    levels = quantile_levels(dens)
    (x0, x1), (y0, y1) = bounds

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{MARGIN}" y="{MARGIN - 10}" font-size="14">{escape(title)}</text>')
    gen = contour_generator(xs, ys, dens)
    for k, level in enumerate(levels):
        shade = int(200 - 160 * k / max(1, len(levels) - 1))
        out.append(f'<g class="contour" data-level="{level:.6g}" fill="none" '
                   f'stroke="rgb({shade},{shade},255)" stroke-width="1.2">')
        for line in gen.lines(level):
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in line)
            out.append(f'<polyline points="{pts}"/>')
        out.append("</g>")
    out.append('<g class="samples" fill="rgb(220,60,40)" fill-opacity="0.5">')
    for x, y in samples:
        if np.isfinite(x) and np.isfinite(y):
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="1.5"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, samples, target: TargetModel, bounds=None, title: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(samples, target, bounds, title))
