"""Gaussian KDE on a grid and minimal deterministic SVG figures.

Coordinates are written with fixed precision so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import contourpy
import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from tabpfgen.data import format_float
from tabpfgen.scorer import median_bandwidth

CLASS_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
GRID_SIZE = 100
HIST_BINS = 30
PAD = 0.10


def kde_log_density(points, sample, bandwidth):
    """Log density of an isotropic Gaussian KDE built on ``sample``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    d = sample.shape[1]
    a = -cdist(points, sample, "sqeuclidean") / (2.0 * bandwidth**2)
    norm = np.log(sample.shape[0]) + 0.5 * d * np.log(2.0 * np.pi * bandwidth**2)
    return logsumexp(a, axis=1) - norm


def padded_box(*arrays, pad=PAD):
    pts = np.vstack(arrays)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lo - pad * span, hi + pad * span


def density_grid(real, synth, bandwidth=None, size=GRID_SIZE):
    """Evaluate both KDEs on a size x size grid over the padded bounding box.

    One bandwidth (median heuristic on the real rows unless given) is used
    for both densities so they are directly comparable.
    """
    h = median_bandwidth(real) if bandwidth is None else bandwidth
    lo, hi = padded_box(real, synth)
    xs = np.linspace(lo[0], hi[0], size)
    ys = np.linspace(lo[1], hi[1], size)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    dr = np.exp(kde_log_density(pts, real, h)).reshape(size, size)
    ds = np.exp(kde_log_density(pts, synth, h)).reshape(size, size)
    return xs, ys, dr, ds, h


def write_grid_csv(path, xs, ys, dr, ds):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "density_real", "density_synth"])
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                w.writerow([format_float(x), format_float(y), format_float(dr[i, j]), format_float(ds[i, j])])


class _Canvas:
    def __init__(self, width, height, lo, hi, margin=30):
        self.w, self.h, self.lo, self.hi, self.m = width, height, np.asarray(lo), np.asarray(hi), margin
        self.items = []

    def px(self, x, y):
        sx = self.m + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * (self.w - 2 * self.m)
        sy = self.h - self.m - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * (self.h - 2 * self.m)
        return sx, sy

    def add(self, s):
        self.items.append(s)

    def frame(self, title):
        self.add(f'<rect x="{self.m}" y="{self.m}" width="{self.w - 2 * self.m}" '
                 f'height="{self.h - 2 * self.m}" fill="none" stroke="#333" stroke-width="1"/>')
        self.add(f'<text x="{self.w / 2:.1f}" y="{self.m * 0.6:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">{escape(title)}</text>')

    def render(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head, *self.items, "</svg>", ""])


def scatter_svg(real, real_y, synth, synth_y, title="real (circles) vs synthetic (crosses)"):
    lo, hi = padded_box(real, synth)
    c = _Canvas(520, 520, lo, hi)
    c.frame(title)
    for (x, y), k in zip(real, real_y):
        sx, sy = c.px(x, y)
        c.add(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="2.2" fill="{CLASS_COLORS[k % 6]}" fill-opacity="0.55"/>')
    for (x, y), k in zip(synth, synth_y):
        sx, sy = c.px(x, y)
        c.add(f'<path d="M{sx - 2.5:.2f},{sy - 2.5:.2f}L{sx + 2.5:.2f},{sy + 2.5:.2f}'
              f'M{sx - 2.5:.2f},{sy + 2.5:.2f}L{sx + 2.5:.2f},{sy - 2.5:.2f}" '
              f'stroke="{CLASS_COLORS[k % 6]}" stroke-width="1"/>')
    return c.render()


def contour_svg(xs, ys, dr, ds, n_levels=6, title="KDE contours: real (solid) vs synthetic (dashed)"):
    lo, hi = np.array([xs[0], ys[0]]), np.array([xs[-1], ys[-1]])
    c = _Canvas(520, 520, lo, hi)
    c.frame(title)
    top = max(dr.max(), ds.max())
    levels = top * np.linspace(0.1, 0.9, n_levels)
    for dens, dash, color in ((dr, "", "#1f77b4"), (ds, ' stroke-dasharray="4,3"', "#d62728")):
        gen = contourpy.contour_generator(xs, ys, dens)
        for lev in levels:
            for line in gen.lines(lev):
                pts = " ".join("{:.2f},{:.2f}".format(*c.px(x, y)) for x, y in line)
                c.add(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1"{dash}/>')
    return c.render()


def marginals_svg(real, synth, bins=HIST_BINS, title="marginal histograms: real vs synthetic"):
    width, height, m = 760, 360, 30
    panel = (width - 3 * m) / 2
    items = []
    lo_all, hi_all = padded_box(real, synth, pad=0.0)
    for j in range(real.shape[1] if real.shape[1] <= 2 else 2):
        edges = np.linspace(lo_all[j], hi_all[j], bins + 1)
        hr, _ = np.histogram(real[:, j], bins=edges, density=True)
        hs, _ = np.histogram(synth[:, j], bins=edges, density=True)
        top = max(hr.max(), hs.max(), 1e-12)
        x0 = m + j * (panel + m)
        bw = panel / bins
        items.append(f'<rect x="{x0:.2f}" y="{m}" width="{panel:.2f}" height="{height - 2 * m}" '
                     f'fill="none" stroke="#333"/>')
        items.append(f'<text x="{x0 + panel / 2:.2f}" y="{height - 8}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12">feature {j}</text>')
        for b in range(bins):
            for vals, color, off in ((hr, "#1f77b4", 0.0), (hs, "#d62728", 0.5)):
                hgt = vals[b] / top * (height - 2 * m)
                items.append(f'<rect x="{x0 + (b + off) * bw:.2f}" y="{height - m - hgt:.2f}" '
                             f'width="{bw / 2:.2f}" height="{hgt:.2f}" fill="{color}" fill-opacity="0.7"/>')
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    ttl = (f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" '
           f'font-size="13">{escape(title)}</text>')
    return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head, ttl, *items, "</svg>", ""])
