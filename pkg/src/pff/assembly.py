"""Element kernels and global assembly of the coupled displacement/phase system.

Element dof order is ``[ux0, uy0, ..., ux3, uy3, phi0, ..., phi3]``.  The
kernels are evaluated for all active elements at once with 2x2 Gauss
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError
from .material import MaterialParams, degradation, dissipation_at2, split_energy, update_history
from .mesh import ConstraintMap, HierMesh, build_constraints

_A = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([(-_A, -_A), (_A, -_A), (_A, _A), (-_A, _A)])
_XI, _ETA = GAUSS_POINTS[:, 0], GAUSS_POINTS[:, 1]
# N[q, i] and dN/dxi[q, i, a] at the Gauss points
N_GP = 0.25 * np.stack(
    [(1 - _XI) * (1 - _ETA), (1 + _XI) * (1 - _ETA), (1 + _XI) * (1 + _ETA), (1 - _XI) * (1 + _ETA)], axis=1
)
DN_GP = 0.25 * np.stack(
    [
        np.stack([-(1 - _ETA), -(1 - _XI)], axis=1),
        np.stack([(1 - _ETA), -(1 + _XI)], axis=1),
        np.stack([(1 + _ETA), (1 + _XI)], axis=1),
        np.stack([-(1 + _ETA), (1 - _XI)], axis=1),
    ],
    axis=1,
)


def shape_gradients(xy: np.ndarray):
    """Physical shape-function gradients and ``detJ`` at the Gauss points.

    ``xy`` has shape ``(E, 4, 2)``; returns ``dNdx`` of shape ``(E, 4, 4, 2)``
    (element, Gauss point, node, direction) and ``detJ`` of shape ``(E, 4)``.
    """
    J = np.einsum("qia,eib->eqab", DN_GP, xy)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 1, 1] = J[..., 0, 0]
    inv[..., 0, 1] = -J[..., 0, 1]
    inv[..., 1, 0] = -J[..., 1, 0]
    with np.errstate(divide="ignore", invalid="ignore"):  # callers reject det <= 0
        inv /= det[..., None, None]
    dNdx = np.einsum("eqba,qia->eqib", inv, DN_GP)
    return dNdx, det


def strain_matrix(dNdx: np.ndarray) -> np.ndarray:
    """Voigt strain-displacement matrices, shape ``(..., 3, 8)``."""
    B = np.zeros(dNdx.shape[:-2] + (3, 8))
    B[..., 0, 0::2] = dNdx[..., 0]
    B[..., 1, 1::2] = dNdx[..., 1]
    B[..., 2, 0::2] = dNdx[..., 1]
    B[..., 2, 1::2] = dNdx[..., 0]
    return B


class ElementMatrices(NamedTuple):
    K_uu: np.ndarray
    K_uphi: np.ndarray
    K_phiu: np.ndarray
    K_phiphi: np.ndarray
    f_u: np.ndarray
    f_phi: np.ndarray
    K_lamphi: np.ndarray
    delta_G: np.ndarray
    H: np.ndarray
    driving: np.ndarray


def element_arrays(
    params: MaterialParams,
    dNdx: np.ndarray,
    detJ: np.ndarray,
    u_e: np.ndarray,
    phi_e: np.ndarray,
    H_old: np.ndarray,
    dphi_e: np.ndarray,
) -> ElementMatrices:
    """Blocks, internal forces and arc-length terms for a batch of elements.

    ``H_old`` is the history at the start of the step; the current history
    is recomputed from the strain of ``u_e``.
    """
    B = strain_matrix(dNdx)  # (E, q, 3, 8)
    wdet = detJ
    strain = np.einsum("eqvj,ej->eqv", B, u_e)
    phi = phi_e @ N_GP.T
    grad_phi = np.einsum("eqia,ei->eqa", dNdx, phi_e)
    dphi = dphi_e @ N_GP.T
    grad_dphi = np.einsum("eqia,ei->eqa", dNdx, dphi_e)

    mat = split_energy(params, strain)
    H, driving = update_history(H_old, mat.psi_f)
    g, dg, ddg = degradation(params, phi)
    g = g + params.residual_stiffness
    _, dw, ddw, _ = dissipation_at2(phi)
    c_w, Gc, l = params.c_w, params.Gc, params.length_l
    local = Gc / (c_w * l)
    grad_coef = 2.0 * Gc * l / c_w
    D = params.elastic_matrix

    BtD = np.einsum("eqvi,vw->eqwi", B, D)
    K_uu = np.einsum("eq,eqvi,eqvj->eij", wdet * g, BtD, B)
    Bt_sigma = np.einsum("eqvi,eqv->eqi", B, mat.stress)
    K_uphi = np.einsum("eq,eqi,qj->eij", wdet * dg, Bt_sigma, N_GP)
    dH = mat.dpsi_f * driving[..., None]
    K_phiu = np.einsum("eq,qi,eqv,eqvj->eij", wdet * dg, N_GP, dH, B)
    K_phiphi = grad_coef * np.einsum("eq,eqia,eqja->eij", wdet, dNdx, dNdx) + np.einsum(
        "eq,qi,qj->eij", wdet * (ddg * H + local * ddw), N_GP, N_GP
    )
    f_u = np.einsum("eq,eqi->ei", wdet * g, Bt_sigma)
    f_phi = grad_coef * np.einsum("eq,eqia,eqa->ei", wdet, dNdx, grad_phi) + np.einsum(
        "eq,qi->ei", wdet * (dg * H + local * dw), N_GP
    )
    K_lamphi = local * (
        np.einsum("eq,qi->ei", wdet * (ddw * dphi + dw), N_GP)
        + 2.0 * l**2 * np.einsum("eq,eqia,eqa->ei", wdet, dNdx, grad_dphi + grad_phi)
    )
    delta_G = local * np.einsum(
        "eq->e", wdet * (dw * dphi + 2.0 * l**2 * np.einsum("eqa,eqa->eq", grad_phi, grad_dphi))
    )
    return ElementMatrices(K_uu, K_uphi, K_phiu, K_phiphi, f_u, f_phi, K_lamphi, delta_G, H, driving)


def element_system(xy, params: MaterialParams, u_e, phi_e, H_old, dphi_e=None) -> ElementMatrices:
    """Element matrices of a single quadrilateral (convenience wrapper)."""
    xy = np.asarray(xy, dtype=float)[None]
    dNdx, det = shape_gradients(xy)
    if np.any(det <= 0) or not np.all(np.isfinite(det)):
        raise AssemblyError(-1, "degenerate element geometry")
    dphi_e = np.zeros(4) if dphi_e is None else dphi_e
    out = element_arrays(
        params,
        dNdx,
        det,
        np.asarray(u_e, float)[None],
        np.asarray(phi_e, float)[None],
        np.broadcast_to(np.asarray(H_old, float), (1, 4)),
        np.asarray(dphi_e, float)[None],
    )
    return ElementMatrices(*(a[0] for a in out))


class Discretization:
    """Active-element geometry plus the dof decomposition of one mesh generation."""

    def __init__(self, mesh: HierMesh, bcs):
        self.mesh = mesh
        self.bcs = list(bcs)
        self.cmap: ConstraintMap = build_constraints(mesh, self.bcs)
        self.elem_ids = mesh.active_ids
        conn = mesh.elements[self.elem_ids]
        self.conn = conn
        n = mesh.n_nodes
        udofs = np.stack([2 * conn, 2 * conn + 1], axis=2).reshape(len(conn), 8)
        self.dofs = np.concatenate([udofs, 2 * n + conn], axis=1)
        self.dNdx, self.detJ = shape_gradients(mesh.nodes[conn])
        if np.any(self.detJ <= 0):
            bad = self.elem_ids[np.flatnonzero(np.any(self.detJ <= 0, axis=1))[0]]
            raise AssemblyError(int(bad), "non-positive Jacobian determinant")
        rows = np.repeat(self.dofs, 12, axis=1).ravel()
        cols = np.tile(self.dofs, (1, 12)).ravel()
        self._rows, self._cols = rows, cols
        self.Tt = self.cmap.T.T.tocsr()

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_free(self) -> int:
        return self.cmap.n_free

    @property
    def u_free(self) -> np.ndarray:
        """Positions of displacement unknowns within the free vector."""
        return np.flatnonzero(self.cmap.free < 2 * self.n_nodes)

    @property
    def phi_free(self) -> np.ndarray:
        return np.flatnonzero(self.cmap.free >= 2 * self.n_nodes)

    def expand(self, x_free, lam):
        return self.cmap.expand(x_free, lam)

    def gather(self, x: np.ndarray):
        xe = x[self.dofs]
        return xe[:, :8], xe[:, 8:]


@dataclass
class LinearSystem:
    """Condensed Newton system; ``rhs`` is the negative residual."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    residual_norm: float
    constraint: float | None
    delta_G: float
    f_int: np.ndarray
    H: np.ndarray
    arc_length: bool

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def element_batch(disc: Discretization, params: MaterialParams, x, x_n, H_n) -> ElementMatrices:
    u_e, phi_e = disc.gather(x)
    _, phin_e = disc.gather(x_n)
    out = element_arrays(params, disc.dNdx, disc.detJ, u_e, phi_e, H_n[disc.elem_ids], phi_e - phin_e)
    bad = ~np.isfinite(out.f_u).all(axis=1) | ~np.isfinite(out.f_phi).all(axis=1)
    bad |= ~np.isfinite(out.K_uu).all(axis=(1, 2)) | ~np.isfinite(out.K_phiphi).all(axis=(1, 2))
    if np.any(bad):
        raise AssemblyError(int(disc.elem_ids[np.flatnonzero(bad)[0]]))
    return out


def assemble_global(
    disc: Discretization,
    params: MaterialParams,
    x: np.ndarray,
    x_n: np.ndarray,
    H_n: np.ndarray,
    arc_length: bool = False,
    delta_tau: float = 0.0,
) -> LinearSystem:
    """Assemble the condensed tangent and residual at the full state ``x``.

    In arc-length mode the system is bordered by the load-factor column
    ``K x_unit`` and the dissipation-constraint row.
    """
    em = element_batch(disc, params, x, x_n, H_n)
    E = len(disc.elem_ids)
    Ke = np.empty((E, 12, 12))
    Ke[:, :8, :8] = em.K_uu
    Ke[:, :8, 8:] = em.K_uphi
    Ke[:, 8:, :8] = em.K_phiu
    Ke[:, 8:, 8:] = em.K_phiphi
    ndof = disc.cmap.n_dofs
    K = sp.csr_matrix((Ke.ravel(), (disc._rows, disc._cols)), shape=(ndof, ndof))
    f = np.zeros(ndof)
    np.add.at(f, disc.dofs, np.concatenate([em.f_u, em.f_phi], axis=1))

    Tt = disc.Tt
    Kf = Tt @ K @ disc.cmap.T
    r = Tt @ f
    H = H_n.copy()
    H[disc.elem_ids] = em.H
    dG = float(em.delta_G.sum())
    res_norm = float(np.linalg.norm(r))

    if not arc_length:
        return LinearSystem(Kf.tocsc(), -r, res_norm, None, dG, f, H, False)

    k_lam = Tt @ (K @ disc.cmap.x_unit)
    k_row = np.zeros(ndof)
    np.add.at(k_row, disc.dofs[:, 8:], em.K_lamphi)
    k_row = Tt @ k_row
    Lam = dG - delta_tau
    A = sp.bmat([[Kf, k_lam[:, None]], [k_row[None, :], None]], format="csc")
    rhs = -np.concatenate([r, [Lam]])
    return LinearSystem(A, rhs, res_norm, Lam, dG, f, H, True)


def internal_forces(disc: Discretization, params: MaterialParams, x, x_n, H_n) -> np.ndarray:
    em = element_batch(disc, params, x, x_n, H_n)
    f = np.zeros(disc.cmap.n_dofs)
    np.add.at(f, disc.dofs, np.concatenate([em.f_u, em.f_phi], axis=1))
    return f


def reaction_load(cmap: ConstraintMap, f_int: np.ndarray) -> float:
    """Generalised reaction conjugate to the load factor (thickness 1 mm)."""
    d = cmap.driven
    return float(f_int[d] @ cmap.x_unit[d])
