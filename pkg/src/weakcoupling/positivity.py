"""Complete positivity and trace preservation tests.

Choi convention: ``C = sum_ij |i><j| (x) S(|i><j|)`` (input factor first,
unnormalized).  With column-stacking, the Choi vector of ``rho -> F rho G^dag``
is ``vec(F) vec(G)^dag``, so GKS coefficients are read off ``C`` directly.

Generators living on the image of a projection are handled on a block
algebra ``M_{m_1} (+) ... (+) M_{m_k}`` (see ``SectorMap``).  A generator on
such an algebra is conditionally completely positive iff its inter-block
parts are CP and its intra-block parts have PSD GKS matrices; the GKS matrix
assembled here covers both.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .opcore import superop_exp, unvec, vec

EIG_TOL = 1e-8
ALG_TOL = 1e-10


def choi(S):
    """Choi matrix of a superoperator acting on ``m x m`` operators."""
    S = np.asarray(S)
    m = int(round(np.sqrt(S.shape[0])))
    if S.shape != (m * m, m * m):
        raise ValueError(f"superoperator shape {S.shape} is not (m^2, m^2)")
    return S.reshape(m, m, m, m).transpose(3, 1, 2, 0).reshape(m * m, m * m)


def choi_to_superop(C):
    """Inverse of :func:`choi` (the reshuffle is an involution up to index order)."""
    C = np.asarray(C)
    m = int(round(np.sqrt(C.shape[0])))
    return C.reshape(m, m, m, m).transpose(3, 1, 2, 0).reshape(m * m, m * m)


@dataclass
class Verdict:
    passed: bool
    value: float
    tol: float
    name: str = ""

    def __bool__(self):
        return self.passed


def choi_min_eigenvalue(S):
    C = choi(S)
    return float(np.linalg.eigvalsh((C + C.conj().T) / 2).min())


def is_cp(S, tol=EIG_TOL):
    lo = choi_min_eigenvalue(S)
    return Verdict(lo >= -tol, lo, tol, "complete_positivity")


def trace_defect(S):
    """``max_ij |Tr S(|i><j|) - delta_ij|`` (spanning-set trace preservation)."""
    S = np.asarray(S)
    m = int(round(np.sqrt(S.shape[0])))
    one = vec(np.eye(m))
    return float(np.abs(one.conj() @ S - one.conj()).max())


def is_trace_preserving(S, tol=1e-9):
    r = trace_defect(S)
    return Verdict(r <= tol, r, tol, "trace_preservation")


def hermiticity_defect(S):
    C = choi(S)
    return float(np.abs(C - C.conj().T).max())


# ---------------------------------------------------------------------------
# GKS canonical form


def gell_mann_basis(m):
    """Orthonormal traceless hermitian basis of ``m x m`` matrices (HS norm 1)."""
    out = []
    for j in range(m):
        for k in range(j + 1, m):
            S = np.zeros((m, m), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            out.append(S)
            A = np.zeros((m, m), dtype=complex)
            A[j, k] = -1j / np.sqrt(2)
            A[k, j] = 1j / np.sqrt(2)
            out.append(A)
    for l in range(1, m):
        D = np.zeros((m, m), dtype=complex)
        D[np.arange(l), np.arange(l)] = 1.0
        D[l, l] = -l
        out.append(D / np.sqrt(l * (l + 1)))
    return out


def _block_slices(block_sizes):
    out, start = [], 0
    for s in block_sizes:
        out.append(slice(start, start + s))
        start += s
    return out


def gks_operator_basis(block_sizes):
    """Operator basis adapted to a block algebra.

    Returns ``(identities, basis)``: normalized block identities, and the
    remaining orthonormal operators (traceless Gell-Mann per block, then
    matrix units ``|j><i|`` connecting different blocks).
    """
    m = int(sum(block_sizes))
    slices = _block_slices(block_sizes)
    idents, basis = [], []
    for s in slices:
        size = s.stop - s.start
        I = np.zeros((m, m), dtype=complex)
        I[s, s] = np.eye(size) / np.sqrt(size)
        idents.append(I)
        for G in gell_mann_basis(size):
            F = np.zeros((m, m), dtype=complex)
            F[s, s] = G
            basis.append(F)
    for l, s_in in enumerate(slices):
        for k, s_out in enumerate(slices):
            if k == l:
                continue
            for i in range(s_in.start, s_in.stop):
                for j in range(s_out.start, s_out.stop):
                    F = np.zeros((m, m), dtype=complex)
                    F[j, i] = 1.0
                    basis.append(F)
    return idents, basis


@dataclass
class GKSForm:
    """``L(rho) = -i[H, rho] - {K, rho} + sum_ab c_ab (F_a rho F_b^dag - 1/2 {F_b^dag F_a, rho})``.

    ``anticommutator`` is ``K``; it vanishes for trace-preserving generators.
    """

    effective_hamiltonian: np.ndarray
    gks_matrix: np.ndarray
    basis: list
    block_sizes: tuple
    anticommutator: np.ndarray
    reconstruction_residual: float = float("nan")

    @property
    def min_eigenvalue(self):
        if self.gks_matrix.size == 0:
            return 0.0
        c = self.gks_matrix
        return float(np.linalg.eigvalsh((c + c.conj().T) / 2).min())

    def conditionally_cp(self, tol=EIG_TOL):
        lo = self.min_eigenvalue
        return Verdict(lo >= -tol, lo, tol, "conditional_complete_positivity")

    def rebuild(self):
        """Superoperator on the block algebra assembled from the GKS data."""
        m = int(sum(self.block_sizes))
        one = np.eye(m)
        H, K, c = self.effective_hamiltonian, self.anticommutator, self.gks_matrix
        S = -1j * (np.kron(one, H) - np.kron(H.T, one)) - (np.kron(one, K) + np.kron(K.T, one))
        F = self.basis
        for a in range(len(F)):
            for b in range(len(F)):
                if c[a, b] == 0:
                    continue
                FbFa = F[b].conj().T @ F[a]
                S = S + c[a, b] * (np.kron(F[b].conj(), F[a])
                                   - 0.5 * (np.kron(one, FbFa) + np.kron(FbFa.T, one)))
        mask = np.zeros((m, m), dtype=bool)
        for s in _block_slices(self.block_sizes):
            mask[s, s] = True
        return S * mask.flatten(order="F")[None, :]


def gks_canonical(L, block_sizes=None, tol=ALG_TOL):
    """Split a generator on a block algebra into Hamiltonian and GKS parts.

    ``L`` is an ``m^2 x m^2`` superoperator; only its action on
    block-diagonal inputs matters.  Raises ValueError when ``L`` does not
    preserve hermiticity or does not map the block algebra into itself.
    """
    L = np.asarray(L, dtype=complex)
    m = int(round(np.sqrt(L.shape[0])))
    if block_sizes is None:
        block_sizes = (m,)
    block_sizes = tuple(int(b) for b in block_sizes)
    if sum(block_sizes) != m:
        raise ValueError(f"block sizes {block_sizes} do not sum to {m}")
    mask = np.zeros((m, m), dtype=bool)
    for s in _block_slices(block_sizes):
        mask[s, s] = True
    mvec = mask.flatten(order="F")
    Lp = L * mvec[None, :]
    leak = float(np.abs(Lp[~mvec, :]).max(initial=0.0))
    scale = max(1.0, float(np.abs(Lp).max(initial=0.0)))
    if leak > tol * scale:
        raise ValueError(f"generator leaves the block algebra (residual {leak:.3e})")
    C = choi(Lp)
    herm = float(np.abs(C - C.conj().T).max())
    if herm > tol * scale:
        raise ValueError(f"generator does not preserve hermiticity (residual {herm:.3e})")
    C = (C + C.conj().T) / 2

    idents, basis = gks_operator_basis(block_sizes)
    Fi = np.stack([vec(F) for F in idents], axis=1)
    Fb = np.stack([vec(F) for F in basis], axis=1) if basis else np.zeros((m * m, 0))
    c = Fb.conj().T @ C @ Fb
    c_mixed = Fb.conj().T @ C @ Fi   # c_{a, 0_k}
    c_id = Fi.conj().T @ C @ Fi

    G = np.zeros((m, m), dtype=complex)
    for k, (s, I) in enumerate(zip(_block_slices(block_sizes), idents)):
        size = s.stop - s.start
        Gk = sum((c_mixed[a, k] * basis[a] for a in range(len(basis))), np.zeros((m, m), complex))
        Gk = Gk @ (I * np.sqrt(size)) / np.sqrt(size)
        Gk[s, s] += c_id[k, k] / (2 * size) * np.eye(size)
        G += Gk
    H = 0.5j * (G - G.conj().T)
    K_total = -0.5 * (G + G.conj().T)
    half_sum = np.zeros((m, m), dtype=complex)
    for a in range(len(basis)):
        for b in range(len(basis)):
            if c[a, b] != 0:
                half_sum += 0.5 * c[a, b] * (basis[b].conj().T @ basis[a])
    K = np.where(mask, K_total - half_sum, 0)
    K = (K + K.conj().T) / 2
    H = (H + H.conj().T) / 2
    form = GKSForm(H, c, basis, block_sizes, K)
    form.reconstruction_residual = float(np.abs(form.rebuild() - Lp).max())
    return form


# ---------------------------------------------------------------------------


@dataclass
class SemigroupAudit:
    entries: list = field(default_factory=list)
    generator_min_eig: float = float("nan")
    tol: float = EIG_TOL
    tp_tol: float = 1e-9

    @property
    def passed(self):
        gen_ok = self.generator_min_eig >= -self.tol
        return gen_ok and all(e["choi_min_eig"] >= -self.tol and e["trace_defect"] <= self.tp_tol
                              for e in self.entries)

    def rows(self):
        rows = [("generator conditional_cp", self.generator_min_eig,
                 "pass" if self.generator_min_eig >= -self.tol else "fail")]
        for e in self.entries:
            rows.append((f"semigroup cp t={e['t']:g}", e["choi_min_eig"],
                         "pass" if e["choi_min_eig"] >= -self.tol else "fail"))
            rows.append((f"semigroup tp t={e['t']:g}", e["trace_defect"],
                         "pass" if e["trace_defect"] <= self.tp_tol else "fail"))
        return rows


def restricted_channel(generator, block_sizes, t):
    """``exp(t L) o pinch`` on the block algebra."""
    m = int(sum(block_sizes))
    mask = np.zeros((m, m), dtype=bool)
    for s in _block_slices(block_sizes):
        mask[s, s] = True
    return superop_exp(generator, t) * mask.flatten(order="F")[None, :]


def cp_semigroup_audit(bundle, t_grid=(0.1, 1.0, 10.0), tol=EIG_TOL, tp_tol=1e-9):
    """CP/TP verdicts of ``exp(t L)`` on the image plus the generator GKS verdict.

    ``bundle`` needs ``reduced_generator`` and ``projection.sectors``.
    """
    sizes = bundle.projection.sectors.block_sizes
    ell = bundle.reduced_generator
    audit = SemigroupAudit(tol=tol, tp_tol=tp_tol)
    audit.generator_min_eig = gks_canonical(ell, sizes).min_eigenvalue
    for t in t_grid:
        ch = restricted_channel(ell, sizes, t)
        audit.entries.append({"t": float(t), "choi_min_eig": choi_min_eigenvalue(ch),
                              "trace_defect": trace_defect(ch)})
    return audit


def apply_map(S, X):
    X = np.asarray(X)
    return unvec(np.asarray(S) @ vec(X), X.shape[0])


@dataclass
class DaviesContrast:
    """GKS verdicts of the damped Davies generator and of ``K_T`` on one model."""

    lam: float
    eps: float
    T: float
    davies_min_eig: float
    k_T_min_eig: float
    tol: float = EIG_TOL

    @property
    def davies_fails(self):
        return self.davies_min_eig < -self.tol

    @property
    def k_T_passes(self):
        return self.k_T_min_eig >= -self.tol


def davies_contrast(P, H0, Hp, lam, eps, T, tol=EIG_TOL):
    """Compare ``Z0 + lam^2 K_D(eps)`` with ``Z0 + lam^2 K_T`` on the image of ``P``."""
    from .generators import build_generator, damped_davies
    from .opcore import commutator_superop

    sec = P.sectors
    if sec is None:
        raise ValueError("projection has no sector map")
    P0 = P.matrix
    L_D = P0 @ (commutator_superop(H0) + lam ** 2 * damped_davies(P, H0, Hp, eps)) @ P0
    davies = gks_canonical(sec.restrict(L_D), sec.block_sizes).min_eigenvalue
    bundle = build_generator(P, H0, Hp, lam, T)
    kt = gks_canonical(bundle.reduced_generator, sec.block_sizes).min_eigenvalue
    return DaviesContrast(float(lam), float(eps), float(T), davies, kt, tol)
