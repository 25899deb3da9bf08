"""Pointwise constitutive layer for the hybrid AT2 phase-field model.

Strains and stresses use 2D Voigt notation ``[xx, yy, xy]`` with engineering
shear strain, so that ``stress @ strain`` is the work-conjugate product.
All functions are vectorised over leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

# Eigenvalue gap below which the principal directions are regularised.
EIG_GAP = 1e-12


@dataclass(frozen=True)
class Quadratic:
    pass


@dataclass(frozen=True)
class Cubic:
    s: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"cubic degradation requires 0 < s <= 1, got {self.s}")


@dataclass(frozen=True)
class Rational:
    a1: float
    a2: float = -0.5
    a3: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError(f"rational degradation requires p >= 2, got {self.p}")
        if self.a1 <= 0.0:
            raise ValueError(f"rational degradation requires a1 > 0, got {self.a1}")


Degradation = Union[Quadratic, Cubic, Rational]


class Split(str, enum.Enum):
    NOSPLIT = "nosplit"
    SPECTRAL = "spectral"
    RANKINE = "rankine"


@dataclass(frozen=True)
class MaterialParams:
    """Elastic and fracture constants in (mm, N, MPa).

    ``residual_stiffness`` is added to the degradation in the momentum
    balance only; it is zero unless a configuration asks for it.
    """

    lame_lambda: float
    shear_mu: float
    Gc: float
    length_l: float
    degradation: Degradation = field(default_factory=Quadratic)
    split: Split = Split.NOSPLIT
    c_w: float = 2.0
    residual_stiffness: float = 0.0

    def __post_init__(self):
        if self.shear_mu <= 0:
            raise ValueError("shear_mu must be positive")
        if self.lame_lambda < 0:
            raise ValueError("lame_lambda must be non-negative")
        if self.Gc <= 0:
            raise ValueError("Gc must be positive")
        if self.length_l <= 0:
            raise ValueError("length_l must be positive")
        if self.c_w <= 0:
            raise ValueError("c_w must be positive")
        if self.residual_stiffness < 0:
            raise ValueError("residual_stiffness must be non-negative")
        object.__setattr__(self, "split", Split(self.split))

    @property
    def youngs_modulus(self) -> float:
        lam, mu = self.lame_lambda, self.shear_mu
        return mu * (3.0 * lam + 2.0 * mu) / (lam + mu)

    @property
    def elastic_matrix(self) -> np.ndarray:
        """Plane-strain elasticity matrix in Voigt form."""
        lam, mu = self.lame_lambda, self.shear_mu
        return np.array(
            [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
        )


def degradation(params: MaterialParams, phi):
    """Return ``(g, g', g'')`` of the selected degradation function."""
    phi = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    d = 1.0 - phi
    kind = params.degradation
    if isinstance(kind, Quadratic):
        return d**2, -2.0 * d, np.full_like(d, 2.0)
    if isinstance(kind, Cubic):
        s = kind.s
        g = s * (d**3 - d**2) + 3.0 * d**2 - 2.0 * d**3
        # derivatives with respect to d, then chain rule dd/dphi = -1
        dg_dd = s * (3.0 * d**2 - 2.0 * d) + 6.0 * d - 6.0 * d**2
        d2g_dd2 = s * (6.0 * d - 2.0) + 6.0 - 12.0 * d
        return g, -dg_dd, d2g_dd2
    if isinstance(kind, Rational):
        a1, a2, a3, p = kind.a1, kind.a2, kind.a3, kind.p
        num = d**p
        dnum = -p * d ** (p - 1)
        ddnum = p * (p - 1) * d ** (p - 2)
        q = a1 * phi + a1 * a2 * phi**2 + a1 * a2 * a3 * phi**3
        dq = a1 + 2 * a1 * a2 * phi + 3 * a1 * a2 * a3 * phi**2
        ddq = 2 * a1 * a2 + 6 * a1 * a2 * a3 * phi
        den = num + q
        dden = dnum + dq
        ddden = ddnum + ddq
        g = num / den
        dg = (dnum * den - num * dden) / den**2
        ddg = (ddnum * den - num * ddden) / den**2 - 2.0 * dden * dg / den
        return g, dg, ddg
    raise TypeError(f"unknown degradation {kind!r}")


def dissipation_at2(phi):
    """Local dissipation ``w = phi**2`` with derivatives and ``c_w = 2``."""
    phi = np.asarray(phi, dtype=float)
    return phi**2, 2.0 * phi, np.full_like(phi, 2.0), 2.0


class SplitResult(NamedTuple):
    psi: np.ndarray
    psi_f: np.ndarray
    psi_r: np.ndarray
    stress: np.ndarray
    tangent: np.ndarray
    dpsi_f: np.ndarray


def _principal(t):
    """Eigenvalues and major projector of symmetric 2x2 tensors.

    ``t`` holds tensor components ``[xx, yy, xy]``.  Returns
    ``(e1, e2, p1, r)`` with ``e1 >= e2`` and ``p1 = n1 (x) n1`` as
    tensor components.
    """
    mean = 0.5 * (t[..., 0] + t[..., 1])
    half = 0.5 * (t[..., 0] - t[..., 1])
    r = np.sqrt(half**2 + t[..., 2] ** 2)
    rs = np.maximum(r, EIG_GAP)
    p1 = np.stack([0.5 + 0.5 * half / rs, 0.5 - 0.5 * half / rs, 0.5 * t[..., 2] / rs], axis=-1)
    # exactly isotropic states: any direction is principal, pick x
    iso = r == 0.0
    if np.any(iso):
        p1[iso] = (1.0, 0.0, 0.0)
    return mean + r, mean - r, p1, r


def _rankine_psi_f(stress, E):
    s1, _, _, _ = _principal(stress)
    return 0.5 * np.maximum(s1, 0.0) ** 2 / E


def split_energy(params: MaterialParams, strain) -> SplitResult:
    """Strain energy, its fracture-driving part and derivatives.

    The full energy drives the momentum balance (hybrid formulation); the
    fracture-driving part ``psi_f`` feeds the history variable.
    ``dpsi_f`` is the derivative of ``psi_f`` with respect to the Voigt
    strain.
    """
    eps = np.asarray(strain, dtype=float)
    lam, mu = params.lame_lambda, params.shear_mu
    D = params.elastic_matrix
    stress = eps @ D
    tr = eps[..., 0] + eps[..., 1]
    eps_dot = eps[..., 0] ** 2 + eps[..., 1] ** 2 + 0.5 * eps[..., 2] ** 2
    psi = 0.5 * lam * tr**2 + mu * eps_dot
    tangent = np.broadcast_to(D, eps.shape + (3,))

    split = params.split
    if split is Split.NOSPLIT:
        psi_f = psi
        psi_r = np.zeros_like(psi)
        dpsi_f = stress
    elif split is Split.SPECTRAL:
        tensor = eps * np.array([1.0, 1.0, 0.5])
        e1, e2, p1, _ = _principal(tensor)
        e1p, e2p = np.maximum(e1, 0.0), np.maximum(e2, 0.0)
        trp = np.maximum(tr, 0.0)
        psi_f = 0.5 * lam * trp**2 + mu * (e1p**2 + e2p**2)
        psi_r = psi - psi_f
        eye = np.array([1.0, 1.0, 0.0])
        p2 = eye - p1
        eps_plus = e1p[..., None] * p1 + e2p[..., None] * p2
        dpsi_f = lam * trp[..., None] * eye + 2.0 * mu * eps_plus
    elif split is Split.RANKINE:
        E = params.youngs_modulus
        s1, _, p1, r = _principal(stress)
        s1p = np.maximum(s1, 0.0)
        psi_f = 0.5 * s1p**2 / E
        psi_r = np.zeros_like(psi)
        ds1 = p1 * np.array([1.0, 1.0, 2.0])
        dpsi_f = (s1p / E)[..., None] * (ds1 @ D)
        degenerate = (r < 1e-10 * (np.abs(s1) + EIG_GAP)) & (s1p > 0)
        if np.any(degenerate):
            dpsi_f = np.array(dpsi_f)
            dpsi_f[degenerate] = _rankine_fd(eps[degenerate], D, E)
    else:  # pragma: no cover
        raise ValueError(split)
    return SplitResult(psi, psi_f, psi_r, stress, tangent, dpsi_f)


def _rankine_fd(eps, D, E):
    """Central differences of the Rankine energy at repeated principal stresses."""
    out = np.empty_like(eps)
    h = 1e-8 * np.maximum(np.linalg.norm(eps, axis=-1), 1e-300)
    for j in range(3):
        step = np.zeros_like(eps)
        step[:, j] = h
        fp = _rankine_psi_f((eps + step) @ D, E)
        fm = _rankine_psi_f((eps - step) @ D, E)
        out[:, j] = (fp - fm) / (2 * h)
    return out


def update_history(H_old, psi_f):
    """``H = max(H_old, psi_f)``; ties count as actively driving."""
    H_old = np.asarray(H_old, dtype=float)
    psi_f = np.asarray(psi_f, dtype=float)
    active = psi_f >= H_old
    return np.where(active, psi_f, H_old), active
