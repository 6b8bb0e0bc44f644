"""Bi-quadratic (Q2) finite elements on quadtree meshes.

Provides the tensor-product Lagrange reference element with its 3x3
Gauss-Legendre rule, per-cell geometric factors, the (axisymmetric,
r-weighted) mass matrix, and the flattening of a discrete state into
structure-of-arrays quadrature-point data for the collision kernel.

Convention: the azimuthal 2*pi factor is dropped from every matrix built
here (it cancels between the mass and collision matrices in the evolution
system); moment integrals reinstate it explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import VelocityMesh

__all__ = [
    "ReferenceElement",
    "ElementGeometry",
    "StateVector",
    "QuadPointData",
    "build_reference_element",
    "element_geometry",
    "mass_matrix",
    "sample_state",
]

# 3-point Gauss-Legendre on [-1, 1]
_GP = np.sqrt(3.0 / 5.0)
_GAUSS_X = np.array([-_GP, 0.0, _GP])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 9.0


def _lag(x):
    """Quadratic Lagrange values (nodes -1, 0, 1) at x, shape (3,) + x.shape."""
    x = np.asarray(x, dtype=float)
    return np.stack([0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)])


def _dlag(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x - 0.5, -2.0 * x, x + 0.5])


@dataclass(frozen=True)
class ReferenceElement:
    """Q2 basis tabulated at the quadrature points of [-1, 1]^2.

    B[i, q] is the value of basis function i at point q, dB[i, q, :] its
    reference-coordinate gradient.  Local ordering for both nodes and
    quadrature points is z-major: index = 3*k_z + k_r.
    """

    Nq: int
    qpts: np.ndarray
    qwts: np.ndarray
    B: np.ndarray
    dB: np.ndarray


def build_reference_element() -> ReferenceElement:
    """Build the Q2 reference element with its 3x3 Gauss rule."""
    qr, qz = np.meshgrid(_GAUSS_X, _GAUSS_X, indexing="xy")
    qpts = np.stack([qr.ravel(), qz.ravel()], axis=1)  # q = 3*qz + qr
    qwts = (_GAUSS_W[None, :] * _GAUSS_W[:, None]).ravel()
    lr, lz = _lag(qpts[:, 0]), _lag(qpts[:, 1])  # (3, Nq)
    dlr, dlz = _dlag(qpts[:, 0]), _dlag(qpts[:, 1])
    B = np.empty((9, 9))
    dB = np.empty((9, 9, 2))
    for kz in range(3):
        for kr in range(3):
            i = 3 * kz + kr
            B[i] = lr[kr] * lz[kz]
            dB[i, :, 0] = dlr[kr] * lz[kz]
            dB[i, :, 1] = lr[kr] * dlz[kz]
    return ReferenceElement(Nq=9, qpts=qpts, qwts=qwts, B=B, dB=dB)


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric factors of every (cell, quadrature point).

    The map from the reference square is axis-aligned affine, so the
    Jacobian is the constant diag(dr/2, dz/2) per cell; detJ is stored
    per point anyway to keep the weight formula w = qwt * detJ * r local.
    """

    detJ: np.ndarray  # (ncell, Nq)
    Jinv: np.ndarray  # (ncell, 2, 2)
    coords: np.ndarray  # (ncell, Nq, 2)
    weights: np.ndarray  # (ncell, Nq), = qwt * detJ * r

    def __post_init__(self):
        if not (self.detJ > 0).all():
            raise ValueError("non-positive Jacobian determinant")


def element_geometry(mesh: VelocityMesh, ref: ReferenceElement) -> ElementGeometry:
    dr, dz = mesh.sizes[:, 0], mesh.sizes[:, 1]
    detJ = np.broadcast_to((dr * dz / 4.0)[:, None], (mesh.n_cells, ref.Nq)).copy()
    Jinv = np.zeros((mesh.n_cells, 2, 2))
    Jinv[:, 0, 0] = 2.0 / dr
    Jinv[:, 1, 1] = 2.0 / dz
    coords = (
        mesh.origins[:, None, :] + (ref.qpts[None, :, :] + 1.0) * 0.5 * mesh.sizes[:, None, :]
    )
    weights = ref.qwts[None, :] * detJ * coords[:, :, 0]
    return ElementGeometry(detJ=detJ, Jinv=Jinv, coords=coords, weights=weights)


@dataclass
class StateVector:
    """Per-species nodal coefficients on the unconstrained dofs, (S, nfree)."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))

    @property
    def n_species(self) -> int:
        return self.coeffs.shape[0]

    def copy(self) -> "StateVector":
        return StateVector(self.coeffs.copy())


@dataclass(frozen=True)
class QuadPointData:
    """Structure-of-arrays sampling of the state at all quadrature points.

    Every field is one contiguous array so the O(N^2) kernel can stream
    them as vector lanes; N = Nq * ncell and the point index is
    n = Nq*cell + q with the cell/point orders of the mesh and reference
    element.
    """

    N: int
    r: np.ndarray
    z: np.ndarray
    w: np.ndarray
    f: np.ndarray  # (S, N)
    df_r: np.ndarray  # (S, N)
    df_z: np.ndarray  # (S, N)


def mass_matrix(mesh: VelocityMesh, ref: ReferenceElement) -> sp.csr_matrix:
    """Assemble the r-weighted Q2 mass matrix on the unconstrained dofs.

    Entries are int psi_i psi_j r dr dz by the 3x3 rule (exact here: the
    integrand is degree 5 per direction).  Hanging-node constraints are
    condensed by the congruence P^T M P, which keeps the result symmetric
    positive definite.
    """
    geom = element_geometry(mesh, ref)
    elem = np.einsum("iq,jq,eq->eij", ref.B, ref.B, geom.weights)
    rows = np.repeat(mesh.cell_nodes, 9, axis=1).ravel()
    cols = np.tile(mesh.cell_nodes, (1, 9)).ravel()
    nn = mesh.n_nodes
    M = sp.csr_matrix((elem.ravel(), (rows, cols)), shape=(nn, nn))
    P = mesh.prolongation
    return (P.T @ M @ P).tocsr()


def sample_state(mesh: VelocityMesh, ref: ReferenceElement, state: StateVector) -> QuadPointData:
    """Evaluate values and physical-space gradients at all quadrature points.

    Hanging-node values are resolved through the constraint interpolation
    before sampling, so the result is the trace of the conforming finite
    element function regardless of which neighbour's cell evaluates it.
    """
    if state.coeffs.shape[1] != mesh.n_free:
        raise ValueError(
            f"state has {state.coeffs.shape[1]} dofs, mesh has {mesh.n_free} free nodes"
        )
    geom = element_geometry(mesh, ref)
    nodal = mesh.prolongation @ state.coeffs.T  # (nn, S)
    en = nodal.T[:, mesh.cell_nodes]  # (S, ncell, 9)
    S = en.shape[0]
    f = np.einsum("sei,iq->seq", en, ref.B)
    dref = np.einsum("sei,iqd->seqd", en, ref.dB)
    # physical gradients: axis-aligned affine map, J^-1 = diag(2/dr, 2/dz)
    df_r = dref[..., 0] * geom.Jinv[None, :, 0, 0, None]
    df_z = dref[..., 1] * geom.Jinv[None, :, 1, 1, None]
    N = ref.Nq * mesh.n_cells
    return QuadPointData(
        N=N,
        r=np.ascontiguousarray(geom.coords[:, :, 0].reshape(N)),
        z=np.ascontiguousarray(geom.coords[:, :, 1].reshape(N)),
        w=np.ascontiguousarray(geom.weights.reshape(N)),
        f=np.ascontiguousarray(f.reshape(S, N)),
        df_r=np.ascontiguousarray(df_r.reshape(S, N)),
        df_z=np.ascontiguousarray(df_z.reshape(S, N)),
    )
