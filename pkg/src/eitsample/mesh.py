"""
Disc triangulation with electrode arcs tagged on the boundary.

The mesh is built from boundary points placed exactly at every electrode
endpoint (plus uniform subdivision of each arc and gap) and concentric rings
of interior points, then triangulated by Delaunay. Because all boundary points
lie on the circle they are in strictly convex position, so the hull edges are
exactly the consecutive boundary segments and no edge straddles two tags.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

GAP = 0


@dataclass(frozen=True)
class DomainSpec:
    """Disc of radius ``radius`` with ``electrode_count`` equispaced electrodes.

    Electrode ``l`` (1-based) is centred at angle
    ``electrode_offset + 2*pi*(l-1)/electrode_count`` and spans
    ``+- electrode_half_width`` radians.
    """

    radius: float = 0.1
    electrode_count: int = 16
    electrode_half_width: float = 0.12
    electrode_offset: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.electrode_count < 2:
            raise ValueError(f"need at least 2 electrodes, got {self.electrode_count}")
        if not self.electrode_half_width > 0:
            raise ValueError("electrode_half_width must be positive")
        if 2 * self.electrode_half_width >= 2 * np.pi / self.electrode_count:
            raise ValueError(
                f"electrodes overlap: 2*w = {2 * self.electrode_half_width:.4g} rad "
                f">= spacing 2*pi/m = {2 * np.pi / self.electrode_count:.4g} rad"
            )

    @property
    def electrode_centers(self) -> np.ndarray:
        m = self.electrode_count
        return self.electrode_offset + 2 * np.pi * np.arange(m) / m

    @property
    def coverage_fraction(self) -> float:
        """Fraction of the boundary covered by electrodes."""
        return self.electrode_count * 2 * self.electrode_half_width / (2 * np.pi)

    @property
    def area(self) -> float:
        return np.pi * self.radius**2


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation of the disc.

    ``boundary_edges`` holds vertex index pairs ordered counter-clockwise
    along the boundary loop; ``boundary_tags`` gives 0 for gap edges and the
    1-based electrode index otherwise.
    """

    domain: DomainSpec
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    element_areas: np.ndarray = field(init=False)
    element_centroids: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(areas <= 0):
            raise ValueError("mesh contains triangles with non-positive signed area")
        object.__setattr__(self, "element_areas", areas)
        object.__setattr__(self, "element_centroids", p.mean(axis=1))
        for name in ("vertices", "triangles", "boundary_edges", "boundary_tags",
                     "element_areas", "element_centroids"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def edge_lengths(self) -> np.ndarray:
        a, b = self.vertices[self.boundary_edges[:, 0]], self.vertices[self.boundary_edges[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    def electrode_edges(self, electrode: int) -> np.ndarray:
        """Boundary edges (vertex pairs) tagged with 1-based ``electrode``."""
        m = self.domain.electrode_count
        if not 1 <= electrode <= m:
            raise IndexError(f"electrode index {electrode} outside 1..{m}")
        return self.boundary_edges[self.boundary_tags == electrode]

    def electrode_lengths(self) -> np.ndarray:
        """Total polygonal length of each electrode, shape (m,)."""
        m = self.domain.electrode_count
        return np.bincount(self.boundary_tags, weights=self.edge_lengths, minlength=m + 1)[1:]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.boundary_tags):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    # plain-text serialization -------------------------------------------------

    def to_text(self) -> str:
        d = self.domain
        out = io.StringIO()
        out.write("# eitsample mesh v1\n")
        out.write(f"# domain radius={d.radius!r} electrode_count={d.electrode_count} "
                  f"electrode_half_width={d.electrode_half_width!r} "
                  f"electrode_offset={d.electrode_offset!r}\n")
        out.write(f"# vertices {self.n_vertices}: x y\n")
        np.savetxt(out, self.vertices, fmt="%.17g")
        out.write(f"# triangles {self.n_elements}: v0 v1 v2\n")
        np.savetxt(out, self.triangles, fmt="%d")
        out.write(f"# boundary_edges {len(self.boundary_edges)}: v0 v1 tag (0 = gap)\n")
        np.savetxt(out, np.column_stack([self.boundary_edges, self.boundary_tags]), fmt="%d")
        return out.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Mesh":
        lines = text.splitlines()
        dom = dict(kv.split("=") for kv in lines[1][len("# domain "):].split())
        domain = DomainSpec(radius=float(dom["radius"]),
                            electrode_count=int(dom["electrode_count"]),
                            electrode_half_width=float(dom["electrode_half_width"]),
                            electrode_offset=float(dom["electrode_offset"]))
        sections = {}
        i = 2
        while i < len(lines):
            name, count = lines[i][2:].split(":")[0].split()
            count = int(count)
            sections[name] = lines[i + 1:i + 1 + count]
            i += 1 + count
        vertices = np.loadtxt(sections["vertices"], ndmin=2)
        triangles = np.loadtxt(sections["triangles"], dtype=np.int64, ndmin=2)
        be = np.loadtxt(sections["boundary_edges"], dtype=np.int64, ndmin=2)
        return cls(domain, vertices, triangles, be[:, :2].copy(), be[:, 2].copy())

    @classmethod
    def load(cls, path) -> "Mesh":
        return cls.from_text(Path(path).read_text())


def electrode_edges(mesh: Mesh, electrode: int) -> np.ndarray:
    return mesh.electrode_edges(electrode)


def _boundary_angles(spec: DomainSpec, h: float):
    """Boundary vertex angles in [0, 2pi) with the tag of the following edge."""
    R, w = spec.radius, spec.electrode_half_width
    spacing = 2 * np.pi / spec.electrode_count
    angles, tags = [], []
    for l, c in enumerate(spec.electrode_centers, start=1):
        start = c - w
        n_el = max(1, int(np.ceil(2 * w * R / h)))
        angles.extend(start + 2 * w * np.arange(n_el) / n_el)
        tags.extend([l] * n_el)
        gap = spacing - 2 * w
        n_gap = max(1, int(np.ceil(gap * R / h)))
        angles.extend(c + w + gap * np.arange(n_gap) / n_gap)
        tags.extend([GAP] * n_gap)
    return np.asarray(angles), np.asarray(tags)


def _build(spec: DomainSpec, h: float) -> Mesh:
    R = spec.radius
    theta, tags = _boundary_angles(spec, h)
    boundary = R * np.column_stack([np.cos(theta), np.sin(theta)])
    nb = len(boundary)

    # interior rings, kept clear of the boundary polygon's inradius
    inner = [np.zeros((1, 2))]
    n_rings = int(np.floor(R / h - 0.5))
    r_max = R * np.cos(np.pi / nb) - 0.5 * h
    for k in range(1, n_rings + 1):
        r = min(k * h, r_max)
        if r <= 0.5 * h:
            continue
        n = max(6, int(round(2 * np.pi * r / h)))
        phi = 2 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        inner.append(r * np.column_stack([np.cos(phi), np.sin(phi)]))
        if r == r_max:
            break
    points = np.vstack([boundary] + inner)

    tri = Delaunay(points).simplices.astype(np.int64)
    p = points[tri]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tri = tri[np.abs(signed) > 1e-14 * R * R]
    flip = signed[np.abs(signed) > 1e-14 * R * R] < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    edges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    return Mesh(spec, points, tri, edges, tags)


def build_disc_mesh(spec: DomainSpec, target_elements: int = 7730) -> Mesh:
    """Triangulate the disc with roughly ``target_elements`` triangles.

    The characteristic edge length is tuned by a short deterministic secant
    iteration on log(h) so the element count lands near the target.
    """
    if target_elements < 16:
        raise ValueError(f"target_elements must be >= 16, got {target_elements}")
    h = spec.radius * np.sqrt(np.pi / (target_elements * np.sqrt(3) / 4))
    best = None
    for _ in range(12):
        mesh = _build(spec, h)
        err = mesh.n_elements / target_elements - 1
        if best is None or abs(err) < abs(best[0]):
            best = (err, mesh)
        if abs(err) < 0.02:
            break
        h *= np.sqrt(mesh.n_elements / target_elements)
    err, mesh = best
    if abs(err) > 0.2:
        raise ValueError(
            f"cannot reach {target_elements} elements for {spec.electrode_count} electrodes "
            f"(closest: {mesh.n_elements}); each electrode and gap needs its own boundary edge"
        )
    return mesh
