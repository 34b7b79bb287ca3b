"""Markovian generators for projected dynamics.

Notation: ``H'(t) = exp(-i H0 t) H' exp(i H0 t)``, ``A = -i[H', .]``,
``A(t) = U_{-t} A U_t``.  In the eigenbasis of ``H0`` (energies ``E_m``)
``H'(t)_{mn} = exp(-i w_mn t) H'_{mn}`` with ``w_mn = E_m - E_n``.

Gaussian integrals used throughout (``F`` is the Dawson function)::

    int dt exp(-t^2/2T^2) exp(-i w t)            = sqrt(2 pi) T exp(-w^2 T^2 / 2)
    int_0^inf dx exp(-x^2/4T^2) exp(-i c x / 2)  = g(c) = sqrt(pi) T exp(-c^2 T^2/4) - 2i T F(cT/2)
    iint_{t2<t1} exp(-(t1^2+t2^2)/2T^2) exp(-i a t1 - i b t2)
                                                 = sqrt(pi) T exp(-(a+b)^2 T^2/4) g(a - b)

The last one follows from ``t1 = q + x/2``, ``t2 = q - x/2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import dawsn

from . import opcore
from .opcore import BohrDecomposition, check_hermitian, commutator_superop, eigen_frame
from .projections import KrausProjection, identity_projection, require_gates

SQRT_PI = np.sqrt(np.pi)


def _check_T(T, name="T"):
    T = float(T)
    if not T > 0:
        raise ValueError(f"{name} must be positive, got {T}")
    return T


def half_line_gaussian(c, T):
    """``int_0^inf dx exp(-x^2/(4T^2)) exp(-i c x/2)``."""
    c = np.asarray(c, dtype=float)
    return SQRT_PI * T * np.exp(-(c * T) ** 2 / 4) - 2j * T * dawsn(c * T / 2)


def ordered_gaussian_pair(a, b, T):
    """``iint_{t2<t1} exp(-(t1^2+t2^2)/(2T^2)) exp(-i a t1 - i b t2) dt1 dt2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return SQRT_PI * T * np.exp(-((a + b) * T) ** 2 / 4) * half_line_gaussian(a - b, T)


def _eigen_frame(H0, Hp):
    H0 = check_hermitian(H0, "H0")
    Hp = check_hermitian(Hp, "H'")
    if H0.shape != Hp.shape:
        raise ValueError("H0 and H' must have the same shape")
    E, V = np.linalg.eigh(H0)
    h = V.conj().T @ Hp @ V
    return E, V, h


def _back(V, X):
    X = V @ X @ V.conj().T
    return (X + X.conj().T) / 2


def smoothed_interaction(H0, Hp, T):
    """``L_T = (2 sqrt(pi) T)^(-1/2) int dt exp(-t^2/2T^2) H'(t)``.

    Closed form: ``(L_T)_mn = pi^(1/4) sqrt(T) exp(-w_mn^2 T^2 / 2) H'_mn``.
    """
    T = _check_T(T)
    E, V, h = _eigen_frame(H0, Hp)
    w = E[:, None] - E[None, :]
    return _back(V, np.pi ** 0.25 * np.sqrt(T) * np.exp(-(w * T) ** 2 / 2) * h)


def second_order_hamiltonian(H0, Hp, T):
    """``H_T^(2) = i/(2 sqrt(pi) T) iint_{t2<t1} exp(-(t1^2+t2^2)/2T^2) [H'(t1), H'(t2)]``.

    Closed form::

        (H2)_mn = 2T exp(-w_mn^2 T^2/4) sum_k H'_mk H'_kn F((E_m + E_n - 2 E_k) T / 2)
    """
    T = _check_T(T)
    E, V, h = _eigen_frame(H0, Hp)
    return _back(V, _h2_eigen(E, h, T))


def _h2_eigen(E, h, T):
    w = E[:, None] - E[None, :]
    c = E[:, None, None] + E[None, None, :] - 2 * E[None, :, None]   # (m, k, n)
    F = dawsn(c * T / 2)
    inner = np.einsum("mk,kn,mkn->mn", h, h, F)
    return 2 * T * np.exp(-(w * T) ** 2 / 4) * inner


def lindblad_pieces(H0, Hp, T):
    """``(L_T, H2_T)`` sharing one eigendecomposition of ``H0``."""
    T = _check_T(T)
    E, V, h = _eigen_frame(H0, Hp)
    w = E[:, None] - E[None, :]
    L = np.pi ** 0.25 * np.sqrt(T) * np.exp(-(w * T) ** 2 / 2) * h
    return _back(V, L), _back(V, _h2_eigen(E, h, T))


def apply_ktilde(L, H2, X, dissipator_sign=1.0):
    """``-i[H2, X] - [L, [L, X]]``."""
    LX = L @ X - X @ L
    return -1j * (H2 @ X - X @ H2) - dissipator_sign * (L @ LX - LX @ L)


def lindblad_superop(L, H2, dissipator_sign=1.0):
    one = np.eye(L.shape[0])
    CL = np.kron(one, L) - np.kron(L.T, one)
    return -1j * (np.kron(one, H2) - np.kron(H2.T, one)) - dissipator_sign * (CL @ CL)


def ktilde_T(H0, Hp, T):
    """Unprojected Gaussian-averaged generator in Lindblad form."""
    L, H2 = lindblad_pieces(H0, Hp, T)
    return lindblad_superop(L, H2)


def k_T(P, H0, Hp, T, gate_tol=1e-10):
    """Projected generator ``K_T = P0 Ktilde_T P0`` (gated on ``[Z,P0]=0``, ``A00=0``)."""
    require_gates(P, H0, Hp, gate_tol)
    P0 = P.matrix
    return P0 @ ktilde_T(H0, Hp, T) @ P0


def _superop_frame(H0):
    bohr = H0 if isinstance(H0, BohrDecomposition) else eigen_frame(H0)
    return bohr, bohr.vec_frequencies


def k_T_from_blocks(P, H0, Hp, T):
    """``K_T`` assembled from ``A01`` and ``A10``.

    ``K_T = (1/sqrt(pi) T) iint_{t2<t1} exp(-(t1^2+t2^2)/2T^2) A01(t1) A10(t2)``,
    evaluated exactly in the eigenbasis of ``Z``.  Independent of the
    Lindblad assembly used by :func:`k_T`.
    """
    T = _check_T(T)
    bohr, nu = _superop_frame(check_hermitian(H0, "H0"))
    A = commutator_superop(Hp)
    P0 = P.matrix
    P1 = np.eye(P0.shape[0]) - P0
    A01 = bohr.to_eigen(P0 @ A @ P1)
    A10 = bohr.to_eigen(P1 @ A @ P0)
    a = nu[:, None] - nu[None, :]            # (i, k)
    weight = ordered_gaussian_pair(a[:, :, None], a[None, :, :], T)   # (i, k, j)
    K = np.einsum("ik,kj,ikj->ij", A01, A10, weight) / (SQRT_PI * T)
    return bohr.from_eigen(K)


def spectral_average(K, bohr):
    """``sum_w Q_w K Q_w``."""
    Ke = bohr.to_eigen(np.asarray(K))
    lab = bohr.vec_labels
    return bohr.from_eigen(np.where(lab[:, None] == lab[None, :], Ke, 0))


def gaussian_time_average(K, H0, T):
    """``(1/sqrt(pi) T) int dq exp(-q^2/T^2) U_{-q} K U_q``.

    The Bohr component ``Q_w K Q_w'`` is scaled by ``exp(-(w - w')^2 T^2/4)``.
    ``H0`` may also be a :class:`BohrDecomposition`.
    """
    T = _check_T(T)
    bohr, nu = _superop_frame(H0)
    Ke = bohr.to_eigen(np.asarray(K))
    delta = nu[:, None] - nu[None, :]
    return bohr.from_eigen(Ke * np.exp(-(delta * T) ** 2 / 4))


def ktilde_R_smoothed(H0, Hp, T_damp):
    """``int_0^inf dx exp(-(x/2)^2/T^2) A(x/2) A(-x/2)`` (unprojected)."""
    T = _check_T(T_damp, "T_damp")
    bohr, nu = _superop_frame(check_hermitian(H0, "H0"))
    Ae = bohr.to_eigen(commutator_superop(Hp))
    c = nu[:, None, None] + nu[None, None, :] - 2 * nu[None, :, None]   # (i, k, j)
    K = np.einsum("ik,kj,ikj->ij", Ae, Ae, half_line_gaussian(c, T))
    return bohr.from_eigen(K)


def k_R_smoothed(P, H0, Hp, T_damp):
    """Projected Gaussian-damped time-symmetric generator ``K^T = P0 Ktilde^T P0``.

    Stands in for the undamped half-line integral, which does not converge
    for discrete spectra.
    """
    P0 = P.matrix
    return P0 @ ktilde_R_smoothed(H0, Hp, T_damp) @ P0


def damped_davies(P, H0, Hp, eps):
    """``int_0^inf exp(-eps x) U_{-x} A01 U_x A10 dx``; Bohr weight ``1/(eps + i D)``.

    Demonstration object only: the undamped limit diverges for discrete
    spectra, and the generated dynamics need not be positive.
    """
    eps = float(eps)
    if not eps > 0:
        raise ValueError("eps must be positive")
    bohr, nu = _superop_frame(check_hermitian(H0, "H0"))
    A = commutator_superop(Hp)
    P0 = P.matrix
    P1 = np.eye(P0.shape[0]) - P0
    A01 = bohr.to_eigen(P0 @ A @ P1)
    A10 = bohr.to_eigen(P1 @ A @ P0)
    W = 1.0 / (eps + 1j * (nu[:, None] - nu[None, :]))
    return bohr.from_eigen((A01 * W) @ A10)


def commutator_norm(Hp):
    """Spectral norm of ``-i[H', .]``: the spread of the spectrum of ``H'``."""
    e = np.linalg.eigvalsh(check_hermitian(Hp, "H'"))
    return float(e[-1] - e[0])


def completed_collision_time(lam, A):
    """``T(lambda) = 1 / (|lambda| ||A||)``; ``A`` is a superoperator or its norm."""
    normA = float(A) if np.ndim(A) == 0 else opcore.superop_norm(A)
    if lam == 0:
        raise ValueError("completed collision time undefined at lambda = 0")
    if not normA > 0:
        raise ValueError("completed collision time undefined for A = 0")
    return 1.0 / (abs(lam) * normA)


def observation_time(lam, xi, T_tilde, normA=None):
    """``T(lambda) = T_tilde |lambda|^(-xi)``; ``T_tilde="collision"`` uses ``1/||A||``."""
    if isinstance(T_tilde, str):
        if T_tilde != "collision":
            raise ValueError(f"unknown T_tilde flag {T_tilde!r}")
        if normA is None:
            raise ValueError("normA required for the completed collision time")
        if xi == 1:
            return completed_collision_time(lam, normA)
        T_tilde = 1.0 / normA
    return float(T_tilde) * abs(lam) ** (-xi)


@dataclass
class GeneratorBundle:
    """Generator ``Z0 + lambda^2 K_T`` with its Lindblad pieces.

    Dense ``d^2 x d^2`` matrices are built lazily; ``reduced_generator``
    acts on the block algebra of ``projection.sectors`` and is cheap for any
    Hilbert dimension.
    """

    T: float
    lam: float
    L_T: np.ndarray
    H2_T: np.ndarray
    projection: KrausProjection
    H0: np.ndarray
    Hp: np.ndarray
    provenance: dict = field(default_factory=dict)
    dissipator_sign: float = 1.0

    @cached_property
    def Ktilde_T(self):
        return lindblad_superop(self.L_T, self.H2_T, self.dissipator_sign)

    @cached_property
    def K_T(self):
        P0 = self.projection.matrix
        return P0 @ self.Ktilde_T @ P0

    @cached_property
    def full_generator(self):
        P0 = self.projection.matrix
        return P0 @ (commutator_superop(self.H0) + self.lam ** 2 * self.Ktilde_T) @ P0

    def apply_generator(self, X):
        """``(Z + lambda^2 Ktilde_T) X`` at operator level."""
        H0 = self.H0
        return -1j * (H0 @ X - X @ H0) + self.lam ** 2 * apply_ktilde(
            self.L_T, self.H2_T, X, self.dissipator_sign)

    @cached_property
    def reduced_generator(self):
        sec = self.projection.sectors
        if sec is None:
            raise ValueError("projection has no sector map; use full_generator")
        return sec.restrict_with(self.apply_generator)

    def corrupted(self):
        """Copy with the dissipator sign flipped (a deliberately non-CP generator)."""
        return GeneratorBundle(self.T, self.lam, self.L_T, self.H2_T, self.projection,
                               self.H0, self.Hp, dict(self.provenance, corrupted=True),
                               dissipator_sign=-self.dissipator_sign)


def build_generator(P, H0, Hp, lam, T, gate_tol=1e-10):
    """Gate the projection, then assemble ``Z0 + lambda^2 K_T``."""
    T = _check_T(T)
    H0 = check_hermitian(H0, "H0")
    Hp = check_hermitian(Hp, "H'")
    if P is None:
        P = identity_projection(H0.shape[0])
    gates = require_gates(P, H0, Hp, gate_tol)
    L, H2 = lindblad_pieces(H0, Hp, T)
    prov = {
        "L_T": "closed form (Gaussian integral)",
        "H2_T": "closed form (Dawson function)",
        "quadrature_tol_achieved": 0.0,
        "gate_residuals": {g.name: g.residual for g in gates},
    }
    return GeneratorBundle(T, float(lam), L, H2, P, H0, Hp, prov)
