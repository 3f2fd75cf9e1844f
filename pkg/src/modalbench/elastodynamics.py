"""Plane-stress FEM assembly and modal analysis over triangle meshes.

Linear constant-strain triangles with a consistent mass matrix, free
boundary. The generalized eigenproblem K phi = lambda M phi yields the
modal basis; Rayleigh damping C = alpha M + beta K gives per-mode decay
rates sigma_i = (alpha + beta * lambda_i) / 2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DegenerateMeshError,
    IllConditionedSystemError,
    InvalidArgumentError,
    OutOfDomainError,
    SolverError,
)
from .geometry import TriMesh, cross2

#: Uniform sampling intervals for dataset materials: (low, high) per field.
MATERIAL_RANGES = {
    "rho": (500.0, 15000.0),
    "youngs": (8e9, 5e10),
    "poisson": (0.1, 0.4),
    "alpha": (1.0, 10.0),
    "beta": (3e-7, 2e-6),
}

#: Meshes up to this many DOFs use the dense full-spectrum eigensolver.
DENSE_DOF_LIMIT = 600

_MIN_AREA = 1e-14
_RIGID_REL_TOL = 1e-6

# consistent CST mass template: rho*t*A/12 * (I-interleaved 2/1 pattern)
_MASS_TEMPLATE = np.array(
    [
        [2, 0, 1, 0, 1, 0],
        [0, 2, 0, 1, 0, 1],
        [1, 0, 2, 0, 1, 0],
        [0, 1, 0, 2, 0, 1],
        [1, 0, 1, 0, 2, 0],
        [0, 1, 0, 1, 0, 2],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class Material:
    """Homogeneous isotropic material: (rho, E, nu) plus Rayleigh (alpha, beta)."""

    rho: float
    youngs: float
    poisson: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.rho <= 0 or self.youngs <= 0:
            raise InvalidArgumentError("rho and youngs must be positive")
        if not 0.0 < self.poisson < 0.5:
            raise InvalidArgumentError("poisson must be in (0, 0.5)")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError("damping coefficients must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "youngs": self.youngs,
            "poisson": self.poisson,
            "alpha": self.alpha,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Material":
        return cls(d["rho"], d["youngs"], d["poisson"], d["alpha"], d["beta"])


def elasticity_matrix(material: Material, plane: str = "stress") -> np.ndarray:
    E, nu = material.youngs, material.poisson
    if plane == "stress":
        return E / (1 - nu * nu) * np.array(
            [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1 - nu) / 2]]
        )
    if plane == "strain":
        c = E / ((1 + nu) * (1 - 2 * nu))
        return c * np.array(
            [[1 - nu, nu, 0.0], [nu, 1 - nu, 0.0], [0.0, 0.0, (1 - 2 * nu) / 2]]
        )
    raise InvalidArgumentError(f"plane must be 'stress' or 'strain', got {plane!r}")


@dataclass(frozen=True)
class SystemMatrices:
    """Sparse symmetric mass/stiffness pair; DOFs ordered [ux(v0), uy(v0), ux(v1), ...]."""

    mass: scipy.sparse.csr_matrix
    stiffness: scipy.sparse.csr_matrix

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]


def assemble(
    mesh: TriMesh,
    material: Material,
    plane: str = "stress",
    lumped_mass: bool = False,
    thickness: float = 1.0,
) -> SystemMatrices:
    """Assemble global consistent-mass CST matrices for a free 2D body."""
    V, F = mesh.V, mesh.F
    coords = V[F]  # (m, 3, 2)
    x, y = coords[..., 0], coords[..., 1]
    areas = mesh.areas()
    if np.any(areas < _MIN_AREA):
        bad = int(np.argmin(areas))
        raise DegenerateMeshError(f"triangle {bad} has area {areas[bad]:.3e} m^2")

    # B-matrix entries (before the 1/(2A) factor): b_i = y_j - y_k, c_i = x_k - x_j
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    m = F.shape[0]
    B0 = np.zeros((m, 3, 6))
    B0[:, 0, 0::2] = b
    B0[:, 1, 1::2] = c
    B0[:, 2, 0::2] = c
    B0[:, 2, 1::2] = b

    D = elasticity_matrix(material, plane)
    Ke = np.einsum("eji,jk,ekl->eil", B0, D, B0) * (thickness / (4.0 * areas))[:, None, None]
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    rho_t_a = material.rho * thickness * areas
    if lumped_mass:
        Me = (rho_t_a / 3.0)[:, None, None] * np.eye(6)[None]
    else:
        Me = (rho_t_a / 12.0)[:, None, None] * _MASS_TEMPLATE[None]

    dof = np.empty((m, 6), dtype=np.int64)
    dof[:, 0::2] = 2 * F
    dof[:, 1::2] = 2 * F + 1
    rows = np.repeat(dof, 6, axis=1).ravel()
    cols = np.tile(dof, (1, 6)).ravel()
    n = 2 * mesh.n_vertices
    K = scipy.sparse.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = scipy.sparse.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return SystemMatrices(M, K)


@dataclass(frozen=True)
class ModalModel:
    """Elastic modes of a (mesh, material) pair, rigid modes excluded.

    omegas ascend; shapes holds one mass-normalized 2|V| eigenvector per row.
    """

    omegas: np.ndarray
    sigmas: np.ndarray
    shapes: np.ndarray
    mesh: TriMesh
    material: Material

    @property
    def n_modes(self) -> int:
        return self.omegas.shape[0]


def solve_modes(
    sys: SystemMatrices,
    material: Material,
    mesh: TriMesh = None,
    n_modes: int = 32,
    solver: str = "auto",
) -> ModalModel:
    """Smallest n_modes elastic eigenpairs of K phi = lambda M phi.

    Exactly 3 near-zero rigid eigenvalues (lambda < 1e-6 x the 4th-smallest)
    must be present and are discarded; anything else raises. Eigenvectors are
    mass-normalized; overdamped modes (sigma >= omega) are dropped with a
    warning.
    """
    if n_modes < 1:
        raise InvalidArgumentError("n_modes must be >= 1")
    n_dof = sys.n_dof
    if n_modes + 3 > n_dof:
        raise InvalidArgumentError(f"n_modes + 3 = {n_modes + 3} exceeds {n_dof} DOFs")
    if solver == "auto":
        solver = "dense" if n_dof <= DENSE_DOF_LIMIT else "sparse"

    k_want = n_modes + 3
    if solver == "dense":
        vals, vecs = scipy.linalg.eigh(sys.stiffness.toarray(), sys.mass.toarray())
        vals, vecs = vals[:k_want], vecs[:, :k_want]
    elif solver == "sparse":
        scale = sys.stiffness.diagonal().mean() / sys.mass.diagonal().mean()
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(
                sys.stiffness, k=k_want, M=sys.mass, sigma=-1e-8 * scale, which="LM"
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverError(
                f"eigensolver converged {len(exc.eigenvalues)}/{k_want} pairs",
                residuals=exc.eigenvalues,
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise InvalidArgumentError(f"unknown solver {solver!r}")

    rigid_tol = _RIGID_REL_TOL * vals[3]
    n_rigid = int(np.sum(vals < rigid_tol))
    if n_rigid != 3:
        raise IllConditionedSystemError(
            f"found {n_rigid} rigid modes (expected 3); eigenvalues head: {vals[:6]}"
        )
    lam = vals[3 : 3 + n_modes]
    vecs = vecs[:, 3 : 3 + n_modes]

    # enforce exact M-normalization (solvers are normalized only to fp accuracy)
    mnorm = np.sqrt(np.einsum("ij,ij->j", vecs, sys.mass @ vecs))
    vecs = vecs / mnorm
    omegas = np.sqrt(lam)
    sigmas = (material.alpha + material.beta * lam) / 2.0
    under = sigmas < omegas
    if not np.all(under):
        warnings.warn(f"discarding {int((~under).sum())} overdamped modes", stacklevel=2)
        omegas, sigmas, vecs = omegas[under], sigmas[under], vecs[:, under]
    return ModalModel(omegas, sigmas, vecs.T.copy(), mesh, material)


def modal_gains(model: ModalModel, position, direction=(0.0, 1.0)) -> np.ndarray:
    """Per-mode gains: mode displacement at the position, dotted with direction.

    Displacement is barycentric-interpolated over the triangle containing the
    position; at a vertex this reduces to that vertex's DOF components.
    """
    mesh = model.mesh
    if mesh is None:
        raise InvalidArgumentError("model carries no mesh reference")
    p = np.asarray(position, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    tri, weights = _locate(mesh, p)
    nodes = mesh.F[tri]
    shapes = model.shapes  # (n_modes, 2|V|)
    disp_x = shapes[:, 2 * nodes] @ weights
    disp_y = shapes[:, 2 * nodes + 1] @ weights
    return disp_x * d[0] + disp_y * d[1]


def _locate(mesh: TriMesh, p, tol: float = 1e-12):
    v0 = mesh.V[mesh.F[:, 0]]
    e1 = mesh.V[mesh.F[:, 1]] - v0
    e2 = mesh.V[mesh.F[:, 2]] - v0
    dp = p[None, :] - v0
    det = cross2(e1, e2)
    w1 = cross2(dp, e2) / det
    w2 = cross2(e1, dp) / det
    w0 = 1.0 - w1 - w2
    inside = (w0 >= -tol) & (w1 >= -tol) & (w2 >= -tol)
    hits = np.flatnonzero(inside)
    if hits.size == 0:
        raise OutOfDomainError(f"position {p.tolist()} lies outside every triangle")
    t = int(hits[0])
    return t, np.array([w0[t], w1[t], w2[t]])
