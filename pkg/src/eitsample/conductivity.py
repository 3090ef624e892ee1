"""
Circle-union conductivity samples, rasterization onto the mesh and convex
blending of samples.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from .mesh import Mesh

SIGMA_C = 0.4
SIGMA_H = 0.2


class Circle(NamedTuple):
    x01: float
    x02: float
    r: float

    @property
    def center_norm(self) -> float:
        return float(np.hypot(self.x01, self.x02))


class CircleCase(enum.Enum):
    REGULAR = "regular"
    S1_PARTIAL_OUTSIDE = "S1"
    S4_ZERO_RADIUS = "S4"
    S5_FULLY_OUTSIDE = "S5"


class Overlap(enum.Enum):
    DISJOINT = "disjoint"
    PARTIAL = "partial"
    CONTAINED = "contained"


def classify_circle(c: Circle, R: float) -> CircleCase:
    if c.r < 0:
        raise ValueError(f"negative radius {c.r}")
    if c.r == 0:
        return CircleCase.S4_ZERO_RADIUS
    d = c.center_norm
    if d >= R + c.r:
        return CircleCase.S5_FULLY_OUTSIDE
    if d + c.r <= R:
        return CircleCase.REGULAR
    return CircleCase.S1_PARTIAL_OUTSIDE


def overlaps(a: Circle, b: Circle) -> Overlap:
    """Pairwise relation used for the S2 (partial) / S3 (contained) cases."""
    d = np.hypot(a.x01 - b.x01, a.x02 - b.x02)
    if d >= a.r + b.r:
        return Overlap.DISJOINT
    if d + min(a.r, b.r) <= max(a.r, b.r):
        return Overlap.CONTAINED
    return Overlap.PARTIAL


@dataclass(frozen=True)
class CircleSample:
    """Binary field: ``sigma_c`` inside the union of circles, ``sigma_h`` elsewhere."""

    circles: tuple
    sigma_c: float = SIGMA_C
    sigma_h: float = SIGMA_H

    def __post_init__(self):
        circles = tuple(Circle(*map(float, c)) for c in self.circles)
        if any(c.r < 0 for c in circles):
            raise ValueError("circle radii must be non-negative")
        if not self.sigma_h > 0:
            raise ValueError("sigma_h must be positive")
        if not self.sigma_c > self.sigma_h:
            raise ValueError(f"need sigma_c > sigma_h, got {self.sigma_c} <= {self.sigma_h}")
        object.__setattr__(self, "circles", circles)

    @property
    def n_circles(self) -> int:
        return len(self.circles)

    @property
    def params(self) -> np.ndarray:
        """(N_c, 3) array of (x01, x02, r)."""
        return np.array(self.circles, dtype=float).reshape(-1, 3)

    def with_circles(self, circles) -> "CircleSample":
        return CircleSample(tuple(map(tuple, np.asarray(circles, dtype=float))), self.sigma_c, self.sigma_h)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"# circle sample: sigma_c={self.sigma_c!r} sigma_h={self.sigma_h!r}\n# x01 x02 r\n")
        np.savetxt(out, self.params, fmt="%.17g")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "CircleSample":
        first = text.splitlines()[0]
        kv = dict(t.split("=") for t in first.split(":", 1)[1].split())
        rows = np.loadtxt(io.StringIO(text), ndmin=2).reshape(-1, 3)
        return cls(tuple(map(tuple, rows)), float(kv["sigma_c"]), float(kv["sigma_h"]))


def circle_masks(params: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Per-circle centroid membership, shape (N_c, n_el). Zero radii are empty."""
    params = np.asarray(params, dtype=float).reshape(-1, 3)
    dx = centroids[None, :, 0] - params[:, 0, None]
    dy = centroids[None, :, 1] - params[:, 1, None]
    r = params[:, 2, None]
    return (dx * dx + dy * dy <= r * r) & (r > 0)


def inclusion_mask(sample: CircleSample, mesh: Mesh) -> np.ndarray:
    return circle_masks(sample.params, mesh.element_centroids).any(axis=0)


def rasterize(sample: CircleSample, mesh: Mesh) -> np.ndarray:
    """Per-element conductivity of a circle sample (centroid membership)."""
    return np.where(inclusion_mask(sample, mesh), sample.sigma_c, sample.sigma_h)


@dataclass(frozen=True, eq=False)
class Basis:
    """Convexly weighted collection of circle samples (the optimization control)."""

    samples: tuple
    weights: np.ndarray
    indices: tuple = field(default=())

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        object.__setattr__(self, "samples", tuple(self.samples))
        if w.shape != (len(self.samples),):
            raise ValueError("need exactly one weight per sample")
        check_weights(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "indices", tuple(self.indices))

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        return (isinstance(other, Basis) and self.samples == other.samples
                and np.array_equal(self.weights, other.weights))

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("# basis: sample weight x01 x02 r\n")
        for i, (s, a) in enumerate(zip(self.samples, self.weights)):
            out.write(f"# sample {i} sigma_c={s.sigma_c!r} sigma_h={s.sigma_h!r}\n")
            for c in s.circles:
                out.write(f"{i} {float(a)!r} {c.x01!r} {c.x02!r} {c.r!r}\n")
        return out.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Basis":
        text = Path(path).read_text()
        sigmas = {}
        for line in text.splitlines():
            if line.startswith("# sample"):
                _, _, i, *kv = line.split()
                sigmas[int(i)] = {k: float(v) for k, v in (t.split("=") for t in kv)}
        rows = np.loadtxt(io.StringIO(text), ndmin=2)
        samples, weights = [], []
        for i in sorted(sigmas):
            sel = rows[rows[:, 0] == i]
            samples.append(CircleSample(tuple(map(tuple, sel[:, 2:5])), **sigmas[i]))
            weights.append(sel[0, 1])
        return cls(tuple(samples), np.array(weights))


def check_weights(w: np.ndarray, tol: float = 1e-12) -> None:
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError(f"weights must lie in [0, 1], got {w}")
    if abs(w.sum() - 1) > tol:
        raise ValueError(f"weights must sum to 1, got sum {w.sum()!r}")


def blend_masks(masks: np.ndarray, weights: np.ndarray, sigma_c: float, sigma_h: float) -> np.ndarray:
    """sum_i w_i * (sigma_h + (sigma_c - sigma_h) * mask_i) per element."""
    frac = np.asarray(weights, dtype=float) @ masks
    return sigma_h + (sigma_c - sigma_h) * frac


def blend(basis: Basis, mesh: Mesh) -> np.ndarray:
    check_weights(basis.weights)
    if len({(s.sigma_c, s.sigma_h) for s in basis.samples}) == 1:
        s0 = basis.samples[0]
        masks = np.array([inclusion_mask(s, mesh) for s in basis.samples], dtype=float)
        return blend_masks(masks, basis.weights, s0.sigma_c, s0.sigma_h)
    return sum(a * rasterize(s, mesh) for s, a in zip(basis.samples, basis.weights))


def threshold(field: np.ndarray, level: float | None = None,
              sigma_c: float = SIGMA_C, sigma_h: float = SIGMA_H) -> np.ndarray:
    """Map each element to ``sigma_c`` if ``value >= level`` else ``sigma_h``."""
    lo, hi = min(sigma_c, sigma_h), max(sigma_c, sigma_h)
    if level is None:
        level = 0.5 * (sigma_c + sigma_h)
    if not lo <= level <= hi:
        raise ValueError(f"threshold level {level} outside [{lo}, {hi}]")
    return np.where(np.asarray(field) >= level, sigma_c, sigma_h)


def l2_error(field: np.ndarray, truth: np.ndarray, mesh: Mesh) -> float:
    field, truth = np.asarray(field), np.asarray(truth)
    if field.shape != (mesh.n_elements,) or truth.shape != (mesh.n_elements,):
        raise ValueError("fields must have one value per mesh element")
    return float(np.sqrt(np.sum(mesh.element_areas * (field - truth) ** 2)))


# export ------------------------------------------------------------------------

def field_table(field: np.ndarray, mesh: Mesh) -> str:
    out = io.StringIO()
    out.write("# element cx cy area sigma\n")
    np.savetxt(out, np.column_stack([np.arange(mesh.n_elements), mesh.element_centroids,
                                     mesh.element_areas, field]),
               fmt=["%d", "%.10g", "%.10g", "%.10g", "%.17g"])
    return out.getvalue()


def element_lookup(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Index of the element containing each point, -1 outside the mesh."""
    p = mesh.vertices[mesh.triangles]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    out = np.full(len(points), -1, dtype=np.int64)
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    for start in range(0, len(points), 256):
        q = points[start:start + 256]
        qx = q[:, None, 0] - a[None, :, 0]
        qy = q[:, None, 1] - a[None, :, 1]
        l1 = ((c[:, 1] - a[:, 1]) * qx - (c[:, 0] - a[:, 0]) * qy) / det
        l2 = (-(b[:, 1] - a[:, 1]) * qx + (b[:, 0] - a[:, 0]) * qy) / det
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (l1 + l2 <= 1 + 1e-12)
        hit = inside.any(axis=1)
        out[start:start + 256][hit] = inside[hit].argmax(axis=1)
    return out


def field_grid(field: np.ndarray, mesh: Mesh, resolution: int = 101) -> np.ndarray:
    """Sample a P0 field on a square grid over [-R, R]^2; NaN outside the mesh."""
    R = mesh.domain.radius
    xs = np.linspace(-R, R, resolution)
    X, Y = np.meshgrid(xs, xs[::-1])
    idx = element_lookup(mesh, np.column_stack([X.ravel(), Y.ravel()]))
    grid = np.where(idx >= 0, np.asarray(field)[np.maximum(idx, 0)], np.nan)
    return grid.reshape(resolution, resolution)


def grid_text(grid: np.ndarray) -> str:
    out = io.StringIO()
    out.write(f"# grid {grid.shape[0]}x{grid.shape[1]}, row 0 = top (+x2), nan = outside domain\n")
    np.savetxt(out, grid, fmt="%.6g")
    return out.getvalue()


def grid_pgm(grid: np.ndarray, lo: float = SIGMA_H, hi: float = SIGMA_C) -> bytes:
    """Binary PGM; outside the domain is white, lo..hi maps to dark..light grey."""
    g = np.nan_to_num((grid - lo) / (hi - lo), nan=-1.0)
    pix = np.where(g < 0, 255, np.clip(40 + 160 * g, 0, 200)).astype(np.uint8)
    return f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode() + pix.tobytes()


def connected_components(mask: np.ndarray, mesh: Mesh) -> int:
    """Number of edge-connected components among elements where ``mask`` holds."""
    tri = mesh.triangles
    sel = np.flatnonzero(mask)
    if sel.size == 0:
        return 0
    edges = np.sort(np.concatenate([tri[sel][:, [0, 1]], tri[sel][:, [1, 2]], tri[sel][:, [2, 0]]]), axis=1)
    owner = np.tile(np.arange(sel.size), 3)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    e, o = edges[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    a, b = o[:-1][same], o[1:][same]
    graph = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(sel.size, sel.size))
    return int(_cc(graph, directed=False)[0])
