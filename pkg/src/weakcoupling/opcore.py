"""Dense operator and superoperator arithmetic.

Vectorization convention (used everywhere in the package): operators are
column-stacked, ``vec(X)[m + d*n] = X[m, n]``, i.e. ``X.flatten(order="F")``.
With this convention ``vec(A X B) = kron(B.T, A) @ vec(X)``.

Operators are plain ``numpy`` arrays of shape ``(d, d)``; superoperators are
arrays of shape ``(d*d, d*d)`` acting on ``vec`` of an operator.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

HERMITIAN_RTOL = 1e-12


class ClusterAmbiguityError(ValueError):
    """A Bohr frequency lies within tolerance of two distinct clusters."""


def _square(X, name="operator"):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {X.shape}")
    return X


def vec(X):
    """Column-stack a square operator into a vector of length d*d."""
    X = _square(X)
    return X.flatten(order="F")


def unvec(v, d=None):
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if v.size != d * d:
        raise ValueError(f"vector of length {v.size} is not a {d}x{d} operator")
    return v.reshape((d, d), order="F")


def sandwich(A, B):
    """Superoperator of ``X -> A @ X @ B``."""
    A = _square(A)
    B = _square(B)
    return np.kron(B.T, A)


def apply_superop(S, X):
    """Apply superoperator ``S`` to operator ``X``."""
    X = _square(X)
    d = X.shape[0]
    S = np.asarray(S)
    if S.shape != (d * d, d * d):
        raise ValueError(f"superoperator shape {S.shape} does not act on {d}x{d} operators")
    return unvec(S @ vec(X), d)


def identity_superop(d):
    return np.eye(d * d, dtype=complex)


def is_hermitian(H, rtol=HERMITIAN_RTOL):
    H = np.asarray(H)
    scale = max(1.0, np.abs(H).max(initial=0.0))
    return np.abs(H - H.conj().T).max(initial=0.0) <= rtol * scale


def check_hermitian(H, name="operator", rtol=HERMITIAN_RTOL):
    """Return ``H`` as a complex array, raising ValueError unless hermitian."""
    H = np.asarray(_square(H, name), dtype=complex)
    if not is_hermitian(H, rtol):
        resid = np.abs(H - H.conj().T).max()
        raise ValueError(f"{name} is not hermitian (max |H - H^dag| = {resid:.3e})")
    return H


def check_density_matrix(rho, name="density matrix", trace_tol=1e-10, eig_tol=1e-10):
    rho = check_hermitian(rho, name)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"{name} has trace {tr:.12g}, expected 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -eig_tol:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")
    return rho


def commutator_superop(H):
    """Superoperator of ``rho -> -i [H, rho]``."""
    H = check_hermitian(H, "H")
    one = np.eye(H.shape[0])
    return -1j * (np.kron(one, H) - np.kron(H.T, one))


def unitary_propagator(H0, t):
    """Superoperator of ``rho -> exp(-i H0 t) rho exp(i H0 t)``."""
    H0 = check_hermitian(H0, "H0")
    E, V = np.linalg.eigh(H0)
    U = (V * np.exp(-1j * E * t)) @ V.conj().T
    return sandwich(U, U.conj().T)


def superop_norm(S):
    """Operator norm induced by the Hilbert-Schmidt norm (largest singular value)."""
    S = np.asarray(S)
    if S.size == 0:
        return 0.0
    return float(np.linalg.norm(S, 2))


def superop_exp(S, t=1.0):
    """Matrix exponential ``exp(S t)`` (scaling and squaring, Pade)."""
    return expm(np.asarray(S, dtype=complex) * t)


def _cluster(values, tol):
    order = np.argsort(values, kind="stable")
    sv = values[order]
    starts = np.concatenate(([True], np.diff(sv) > tol))
    ids_sorted = np.cumsum(starts) - 1
    n = ids_sorted[-1] + 1
    centers = np.bincount(ids_sorted, weights=sv) / np.bincount(ids_sorted)
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    np.minimum.at(lo, ids_sorted, sv)
    np.maximum.at(hi, ids_sorted, sv)
    wide = np.nonzero(hi - lo > tol)[0]
    if wide.size:
        k = wide[0]
        raise ClusterAmbiguityError(
            f"Bohr frequencies in [{lo[k]:.6g}, {hi[k]:.6g}] chain together across "
            f"more than cluster_tol={tol:.3g}; spectrum is ambiguous at this tolerance"
        )
    # a value within tol of the next/previous cluster centre is ambiguous too
    gaps = np.diff(centers)
    if gaps.size and np.any(gaps <= 2 * tol):
        k = int(np.argmin(gaps))
        raise ClusterAmbiguityError(
            f"Bohr clusters at {centers[k]:.6g} and {centers[k + 1]:.6g} are within "
            f"2*cluster_tol={2 * tol:.3g} of each other"
        )
    ids = np.empty_like(ids_sorted)
    ids[order] = ids_sorted
    return centers, ids


@dataclass(frozen=True)
class BohrDecomposition:
    """Eigen-data of ``H0`` and the spectral projectors of ``Z = -i[H0, .]``.

    ``labels[m, n]`` is the index into ``bohr_frequencies`` of the basis
    element ``|m><n|`` (eigenbasis), whose Bohr frequency is ``E_n - E_m`` so
    that ``Z = sum_w i w Q_w`` and ``U_t Q_w = exp(i w t) Q_w``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    bohr_frequencies: np.ndarray
    labels: np.ndarray
    cluster_tol: float

    @property
    def dim(self):
        return self.eigenvalues.size

    @cached_property
    def basis_change(self):
        """Unitary ``M`` with ``vec(V Y V^dag) = M vec(Y)``."""
        V = self.eigenvectors
        return np.kron(V.conj(), V)

    @cached_property
    def vec_labels(self):
        """Cluster label of every eigen-coordinate, in ``vec`` order."""
        return self.labels.flatten(order="F")

    @cached_property
    def vec_frequencies(self):
        """Unclustered Bohr frequency ``E_n - E_m`` of every eigen-coordinate."""
        E = self.eigenvalues
        return (E[None, :] - E[:, None]).flatten(order="F")

    def to_eigen(self, S):
        M = self.basis_change
        return M.conj().T @ S @ M

    def from_eigen(self, S):
        M = self.basis_change
        return M @ S @ M.conj().T

    def projector(self, k):
        """Superoperator ``Q_w`` for ``w = bohr_frequencies[k]``."""
        mask = (self.vec_labels == k).astype(complex)
        M = self.basis_change
        return (M * mask) @ M.conj().T

    @property
    def projectors(self):
        return {float(w): self.projector(k) for k, w in enumerate(self.bohr_frequencies)}


def bohr_decompose(H0, cluster_tol=None):
    """Diagonalize ``H0`` and cluster its pairwise eigenvalue differences.

    ``cluster_tol`` defaults to ``1e-9 * max(1, spread of eigenvalues)``.
    Raises :class:`ClusterAmbiguityError` when the clustering is not
    unambiguous at the requested tolerance.
    """
    H0 = check_hermitian(H0, "H0")
    E, V = np.linalg.eigh(H0)
    if cluster_tol is None:
        cluster_tol = 1e-9 * max(1.0, float(E[-1] - E[0]))
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    diffs = (E[None, :] - E[:, None])
    centers, ids = _cluster(diffs.ravel(), cluster_tol)
    labels = ids.reshape(diffs.shape)
    return BohrDecomposition(E, V, centers, labels, float(cluster_tol))


def eigen_frame(H0):
    """Eigen-data of ``H0`` without Bohr clustering (labels unset)."""
    H0 = check_hermitian(H0, "H0")
    E, V = np.linalg.eigh(H0)
    return BohrDecomposition(E, V, None, None, 0.0)
