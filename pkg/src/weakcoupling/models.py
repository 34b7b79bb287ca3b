"""Seeded model generators satisfying the projection gates by construction.

All randomness goes through ``numpy.random.default_rng(seed)`` (PCG64), so a
seed fixes every matrix bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import projections as pj

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass
class Model:
    H0: np.ndarray
    Hp: np.ndarray
    projection: pj.KrausProjection
    info: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.H0.shape[0]


def random_hermitian(rng, d, scale=1.0):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (X + X.conj().T) / 2


def random_unitary(rng, d):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(X)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def gibbs(H, beta):
    E, V = np.linalg.eigh(H)
    w = np.exp(-beta * (E - E.min()))
    return (V * (w / w.sum())) @ V.conj().T


def _local(HA, HB):
    return np.kron(HA, np.eye(HB.shape[0])) + np.kron(np.eye(HA.shape[0]), HB)


def diagonal_model(rng, d):
    """Random ``H0`` with ``P0`` the pinching onto its eigenbasis; ``H'`` has zero diagonal there."""
    H0 = random_hermitian(rng, d)
    _, V = np.linalg.eigh(H0)
    h = random_hermitian(rng, d)
    np.fill_diagonal(h, 0)
    Hp = V @ h @ V.conj().T
    return Model(H0, (Hp + Hp.conj().T) / 2, pj.diagonal_projection(V), {"kind": "diagonal"})


def _blocks(rng, d, n_blocks):
    cuts = np.sort(rng.choice(np.arange(1, d), size=n_blocks - 1, replace=False))
    edges = [0, *cuts.tolist(), d]
    return [list(range(a, b)) for a, b in zip(edges, edges[1:])]


def block_model(rng, d, n_blocks=2):
    """Block-diagonal ``H0``, block-off-diagonal ``H'``."""
    sets = _blocks(rng, d, n_blocks)
    H0 = np.zeros((d, d), dtype=complex)
    Hp = random_hermitian(rng, d)
    for s in sets:
        ix = np.ix_(s, s)
        H0[ix] = random_hermitian(rng, len(s))
        Hp[ix] = 0
    return Model(H0, Hp, pj.block_diagonal_projection(sets, d), {"kind": "block_diagonal",
                                                                 "blocks": sets})


def _centered_coupling(rng, dA, bath_terms, n_terms=2):
    """``sum_j Phi_j (x) Psi_j`` with each ``Psi_j`` from ``bath_terms(rng)``."""
    dB = bath_terms(rng).shape[0]
    Hp = np.zeros((dA * dB, dA * dB), dtype=complex)
    for _ in range(n_terms):
        Hp += np.kron(random_hermitian(rng, dA), bath_terms(rng))
    return Hp


def partial_trace_model(rng, dA=2, dB=2, beta=1.0):
    """``H_A (x) 1 + 1 (x) H_B`` with Gibbs ``sigma`` and ``Tr(Psi sigma) = 0`` couplings."""
    HA = random_hermitian(rng, dA)
    HB = random_hermitian(rng, dB)
    sigma = gibbs(HB, beta)

    def psi(r):
        B = random_hermitian(r, dB)
        return B - np.trace(B @ sigma).real * np.eye(dB)

    Hp = _centered_coupling(rng, dA, psi)
    P = pj.partial_trace_projection(dA, dB, sigma)
    return Model(_local(HA, HB), Hp, P, {"kind": "partial_trace", "dim_A": dA, "dim_B": dB,
                                         "sigma": sigma})


def entangling_family(rng, dB, parts, beta=1.0, HB=None):
    """Family with ``A_n`` = projectors on ``parts`` (in a random bath basis) and
    ``B_n`` = normalized Gibbs states of ``H_B`` inside each part.

    Returns ``(family, H_B)``; ``H_B`` commutes with every ``A_n`` and ``B_n``.
    """
    W = random_unitary(rng, dB)
    if HB is None:
        HB = np.zeros((dB, dB), dtype=complex)
        for p in parts:
            HB[np.ix_(p, p)] = random_hermitian(rng, len(p))
        HB = W @ HB @ W.conj().T
    C, D = [], []
    for p in parts:
        Wp = W[:, p]
        An = Wp @ Wp.conj().T
        # Gibbs state of H_B restricted to the part, built in its own basis
        E, U = np.linalg.eigh(Wp.conj().T @ HB @ Wp)
        w = np.exp(-beta * (E - E.min()))
        w = w / w.sum()
        Up = Wp @ U
        C.append(An)           # C_n^dag C_n = A_n for a projector
        D.append((Up * np.sqrt(w)) @ Up.conj().T)
    return pj.EntanglingFamily(C, D), HB


def entangling_model(rng, dA=2, dB=4, n_parts=2, beta=1.0):
    parts = _blocks(rng, dB, n_parts)
    fam, HB = entangling_family(rng, dB, parts, beta)
    HA = random_hermitian(rng, dA)
    A, B = fam.A, fam.B

    def psi(r):
        X = random_hermitian(r, dB)
        return X - sum(np.trace(X @ Bn).real * An for An, Bn in zip(A, B))

    Hp = _centered_coupling(rng, dA, psi)
    P = pj.entangling_projection(fam, dA)
    return Model(_local(HA, HB), Hp, P, {"kind": "entangling", "dim_A": dA, "dim_B": dB,
                                         "parts": parts})


def bath_levels(rng, n, width, kind="stratified"):
    """``n`` levels on ``[-width/2, width/2]``.

    ``stratified``: one uniform draw per equal cell (no clustering, no exact
    revival); ``random``: i.i.d. uniform; ``grid``: equally spaced.
    """
    lo = -width / 2
    if kind == "stratified":
        return lo + (np.arange(n) + rng.uniform(size=n)) * width / n
    if kind == "random":
        return np.sort(rng.uniform(lo, -lo, size=n))
    if kind == "grid":
        return np.linspace(lo, -lo, n)
    raise ValueError(f"unknown level kind {kind!r}")


def random_coupling(rng, n, kind="phase"):
    """Random hermitian bath operator.

    ``phase``: unit-modulus off-diagonal entries with uniform random phases
    (flat coupling strength); ``gue``: Gaussian unitary ensemble.
    """
    if kind == "phase":
        B = np.triu(np.exp(2j * np.pi * rng.uniform(size=(n, n))), 1)
        return B + B.conj().T
    if kind == "gue":
        return random_hermitian(rng, n)
    raise ValueError(f"unknown coupling kind {kind!r}")


def quasi_continuum_model(seed=0, n_bath=60, width=6.0, beta=1.0, levels="stratified",
                          coupling="phase"):
    """Qubit ``H_A = sigma_z/2`` coupled through ``sigma_x (x) B`` to ``n_bath`` levels.

    Levels lie in ``[-width/2, width/2]``; ``sigma`` is the Gibbs state at
    ``beta``; ``Tr(B sigma) = 0`` and ``||H'|| = 1``.
    """
    rng = np.random.default_rng(seed)
    HB = np.diag(bath_levels(rng, n_bath, width, levels)).astype(complex)
    sigma = gibbs(HB, beta)
    B = random_coupling(rng, n_bath, coupling)
    B = B - np.trace(B @ sigma).real * np.eye(n_bath)
    Hp = np.kron(SIGMA_X, B)
    Hp = Hp / np.linalg.norm(Hp, 2)
    H0 = _local(SIGMA_Z / 2, HB)
    P = pj.partial_trace_projection(2, n_bath, sigma)
    return Model(H0, Hp, P, {"kind": "quasi_continuum", "n_bath": n_bath, "width": width,
                             "beta": beta, "seed": seed, "levels": levels,
                             "coupling": coupling})


def random_model(kind, seed, dim=4, **kw):
    """Seeded random model of the given projection kind."""
    rng = np.random.default_rng(seed)
    kind = pj.ProjectionKind(kind)
    if kind is pj.ProjectionKind.DIAGONAL:
        return diagonal_model(rng, dim)
    if kind is pj.ProjectionKind.BLOCK_DIAGONAL:
        return block_model(rng, dim, kw.get("n_blocks", 2))
    if kind is pj.ProjectionKind.PARTIAL_TRACE:
        dA = kw.get("dim_A", 2)
        return partial_trace_model(rng, dA, dim // dA, kw.get("beta", 1.0))
    if kind is pj.ProjectionKind.ENTANGLING:
        dA = kw.get("dim_A", 2)
        return entangling_model(rng, dA, dim // dA, kw.get("n_parts", 2), kw.get("beta", 1.0))
    raise ValueError(f"no random model for projection kind {kind.value}")
