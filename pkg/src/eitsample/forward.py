"""
Finite element forward solver for the complete electrode model.

For an applied electrode voltage vector ``U`` the potential solves the
weak problem

    int sigma grad(u).grad(v) + sum_l (1/Z_l) int_{E_l} u v ds
        = sum_l (U_l / Z_l) int_{E_l} v ds

and the electrode currents are recovered from the Robin relation,
``I_l = int_{E_l} (U_l - u) / Z_l ds``. The contact terms make the system
nonsingular, so no grounding node is needed.

Conductivity is piecewise constant per element; the potential is
continuous piecewise linear (``degree=1``) or quadratic (``degree=2``).
Assembly reuses a fixed sparsity pattern so building a system for a new
conductivity is one sparse product plus a sparse LU factorization, and
the factorization serves all right-hand sides.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .excitation import PatternSet
from .mesh import Mesh


@dataclass(frozen=True)
class ImpedanceSet:
    """Contact impedances, one per electrode."""

    Z: tuple

    def __post_init__(self):
        z = np.asarray(self.Z, dtype=float)
        if z.ndim != 1 or np.any(z <= 0):
            raise ValueError("contact impedances must be a 1-d sequence of positive values")
        object.__setattr__(self, "Z", tuple(float(v) for v in z))

    @classmethod
    def uniform(cls, m: int, value: float = 0.1) -> "ImpedanceSet":
        return cls((value,) * m)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.Z)

    def __len__(self):
        return len(self.Z)


# local P2 numbering: vertices 0,1,2 then edge midpoints opposite 0,1,2
_P2_EDGES = ((1, 2), (2, 0), (0, 1))
# three edge-midpoint quadrature points in barycentric coordinates, weight 1/3
_MID_QUAD = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])


def _p1_stiffness(mesh: Mesh) -> np.ndarray:
    """Unit-conductivity P1 element stiffness matrices, shape (n_el, 3, 3)."""
    p = mesh.vertices[mesh.triangles]
    # gradients of barycentric coordinates
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = mesh.element_areas
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])
    return area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)


def _p2_stiffness(mesh: Mesh) -> np.ndarray:
    """Unit-conductivity P2 element stiffness matrices, shape (n_el, 6, 6)."""
    p = mesh.vertices[mesh.triangles]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = mesh.element_areas
    gl = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])  # (n,3,2)
    K = np.zeros((len(area), 6, 6))
    for lam in _MID_QUAD:
        g = np.empty((len(area), 6, 2))
        for i in range(3):
            g[:, i] = (4 * lam[i] - 1) * gl[:, i]
        for k, (i, j) in enumerate(_P2_EDGES):
            g[:, 3 + k] = 4 * (lam[i] * gl[:, j] + lam[j] * gl[:, i])
        K += np.einsum("eid,ejd->eij", g, g) / 3
    return area[:, None, None] * K


class ForwardModel:
    """Precomputed discretization of the forward problem on one mesh.

    Parameters
    ----------
    mesh : Mesh
    impedance : ImpedanceSet
        One contact impedance per electrode.
    degree : int
        Polynomial degree of the potential space, 1 or 2.
    """

    def __init__(self, mesh: Mesh, impedance: ImpedanceSet, degree: int = 1):
        m = mesh.domain.electrode_count
        if len(impedance) != m:
            raise ValueError(f"expected {m} impedances, got {len(impedance)}")
        if degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {degree}")
        self.mesh = mesh
        self.impedance = impedance
        self.degree = degree
        self.m = m

        tri = mesh.triangles
        if degree == 1:
            self.element_dofs = tri
            self.n_dofs = mesh.n_vertices
            Ke = _p1_stiffness(mesh)
            edge_dofs = mesh.boundary_edges
        else:
            local = np.stack([tri[:, [i, j]] for i, j in _P2_EDGES], axis=1)  # (n,3,2)
            pairs = np.sort(local.reshape(-1, 2), axis=1)
            uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
            mid = mesh.n_vertices + inv.reshape(-1, 3)
            self.element_dofs = np.hstack([tri, mid])
            self.n_dofs = mesh.n_vertices + len(uniq)
            Ke = _p2_stiffness(mesh)
            be = np.sort(mesh.boundary_edges, axis=1)
            lookup = {tuple(e): k for k, e in enumerate(uniq)}
            bmid = mesh.n_vertices + np.array([lookup[tuple(e)] for e in be])
            edge_dofs = np.column_stack([mesh.boundary_edges, bmid])

        # contact (Robin) terms on electrode edges
        tags = mesh.boundary_tags
        on_el = tags > 0
        L = mesh.edge_lengths[on_el]
        inv_z = 1.0 / impedance.values[tags[on_el] - 1]
        edofs = edge_dofs[on_el]
        if degree == 1:
            Mloc = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6
            wloc = np.array([0.5, 0.5])
        else:
            Mloc = np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) / 30
            wloc = np.array([1.0, 1.0, 4.0]) / 6
        Me = (inv_z * L)[:, None, None] * Mloc

        # fixed CSC pattern shared by stiffness and contact contributions
        nl = self.element_dofs.shape[1]
        rows = np.concatenate([np.repeat(self.element_dofs, nl, axis=1).ravel(),
                               np.repeat(edofs, edofs.shape[1], axis=1).ravel()])
        cols = np.concatenate([np.tile(self.element_dofs, nl).ravel(),
                               np.tile(edofs, edofs.shape[1]).ravel()])
        key = cols.astype(np.int64) * self.n_dofs + rows
        ukey, slot = np.unique(key, return_inverse=True)
        n_stiff = Ke.size
        self._indices = (ukey % self.n_dofs).astype(np.int32)
        self._indptr = np.searchsorted(ukey // self.n_dofs, np.arange(self.n_dofs + 1)).astype(np.int32)
        self._nnz = len(ukey)
        # stiffness: csc data = S @ sigma
        self._S = sp.csr_matrix(
            (Ke.ravel(), (slot[:n_stiff], np.repeat(np.arange(mesh.n_elements), nl * nl))),
            shape=(self._nnz, mesh.n_elements),
        )
        self._contact = np.bincount(slot[n_stiff:], weights=Me.ravel(), minlength=self._nnz)

        # B[:, l] = (1/Z_l) int_{E_l} phi ds
        brow = edofs.ravel()
        bcol = np.repeat(tags[on_el] - 1, edofs.shape[1])
        bval = ((inv_z * L)[:, None] * wloc).ravel()
        self.B = sp.csc_matrix((bval, (brow, bcol)), shape=(self.n_dofs, m)).toarray()
        self.electrode_lengths = mesh.electrode_lengths()

    # ------------------------------------------------------------------

    def stiffness_data(self, sigma: np.ndarray) -> np.ndarray:
        return self._S @ sigma + self._contact

    def matrix(self, sigma: np.ndarray) -> sp.csc_matrix:
        sigma = self._check_sigma(sigma)
        return sp.csc_matrix((self.stiffness_data(sigma), self._indices, self._indptr),
                             shape=(self.n_dofs, self.n_dofs))

    def _check_sigma(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (self.mesh.n_elements,):
            raise ValueError(f"conductivity must have one value per element "
                             f"({self.mesh.n_elements}), got shape {sigma.shape}")
        if not np.all(sigma > 0):
            raise ValueError("conductivity must be strictly positive on every element")
        return sigma

    def assemble(self, sigma) -> "LinearSystem":
        A = self.matrix(sigma)
        try:
            lu = splu(A, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        except RuntimeError as err:
            raise np.linalg.LinAlgError(f"factorization failed: {err}") from err
        return LinearSystem(self, A, lu)

    def rhs(self, patterns: PatternSet) -> np.ndarray:
        """Right-hand sides for every pattern, shape (n_dofs, n_patterns)."""
        P = patterns.matrix
        if P.shape[1] != self.m:
            raise ValueError(f"patterns drive {P.shape[1]} electrodes, mesh has {self.m}")
        return self.B @ P.T

    def currents(self, fields: np.ndarray, patterns: PatternSet) -> np.ndarray:
        """Electrode currents from potentials ``fields`` (n_dofs, k): I[k, l]."""
        P = patterns.matrix
        z = self.impedance.values
        # B^T u = (1/Z_l) int_{E_l} u ds
        return P * (self.electrode_lengths / z) - (self.B.T @ fields).T

    def measure(self, sigma, patterns: PatternSet) -> np.ndarray:
        """Assemble, solve all patterns and return the (k, l) current matrix."""
        system = self.assemble(sigma)
        return self.currents(system.solve(self.rhs(patterns)), patterns)

    def conductance_matrix(self, sigma) -> np.ndarray:
        """G with I = G U for any drive U; from m unit-vector solves."""
        system = self.assemble(sigma)
        X = system.solve(self.B)
        return np.diag(self.electrode_lengths / self.impedance.values) - self.B.T @ X

    def digest(self) -> str:
        h = hashlib.sha256(self.mesh.digest().encode())
        h.update(np.asarray(self.impedance.values).tobytes())
        h.update(bytes([self.degree]))
        return h.hexdigest()[:16]


class LinearSystem:
    """Factorized system for one conductivity; immutable after construction."""

    def __init__(self, model: ForwardModel, A: sp.csc_matrix, lu):
        self.model = model
        self.A = A
        self._lu = lu

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def assemble(mesh: Mesh, sigma, impedance: ImpedanceSet, degree: int = 1) -> LinearSystem:
    return ForwardModel(mesh, impedance, degree).assemble(sigma)


def solve_patterns(system: LinearSystem, patterns: PatternSet) -> list[np.ndarray]:
    """One potential field per pattern, sharing the factorization."""
    X = system.solve(system.model.rhs(patterns))
    return [X[:, k].copy() for k in range(X.shape[1])]


def compute_currents(model: ForwardModel, fields, patterns: PatternSet) -> np.ndarray:
    return model.currents(np.column_stack(fields), patterns)


# measurement files -------------------------------------------------------------

def save_measurements(path, currents: np.ndarray, **header) -> None:
    """Write an m x m current matrix (rows = pattern k, columns = electrode l)."""
    out = io.StringIO()
    out.write("# eitsample measurements v1: rows = pattern k, columns = electrode l\n")
    for key, value in header.items():
        out.write(f"# {key} = {value}\n")
    np.savetxt(out, np.atleast_2d(currents), fmt="%.17g")
    Path(path).write_text(out.getvalue())


def load_measurements(path) -> tuple[np.ndarray, dict]:
    header = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") and " = " in line:
            key, value = line[1:].split(" = ", 1)
            header[key.strip()] = value.strip()
    return np.loadtxt(path, ndmin=2), header
