"""Projection superoperators in Kraus form.

Every projection ``P0`` exposes

* ``apply(rho)`` / ``apply_dual(X)``: fast closed-form action (Schroedinger
  and Heisenberg picture),
* ``kraus_ops``: the Kraus family ``V_a`` with ``P0(rho) = sum V_a rho V_a^dag``,
* ``matrix``: the cached ``d^2 x d^2`` superoperator (small ``d`` only),
* ``sectors``: a :class:`SectorMap` identifying the image of ``P0`` with a
  direct sum of full matrix algebras (used for positivity tests and for
  propagating large models on the image only).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import opcore
from .opcore import check_density_matrix, check_hermitian, vec, unvec

SMALL_DIM = 16  # build/compare full superoperator matrices up to this Hilbert dimension
ALGEBRA_TOL = 1e-10


class ProjectionKind(str, enum.Enum):
    PARTIAL_TRACE = "partial_trace"
    DIAGONAL = "diagonal"
    BLOCK_DIAGONAL = "block_diagonal"
    ENTANGLING = "entangling"
    CUSTOM = "custom"


class ProjectionValidationError(ValueError):
    """A projection hypothesis failed; carries the condition name and residual."""

    def __init__(self, condition, residual, detail=""):
        self.condition = condition
        self.residual = float(residual)
        msg = f"{condition} violated (residual {self.residual:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class GateError(ValueError):
    """Generator construction refused: a standing hypothesis does not hold."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"{report.name} gate failed: residual {report.residual:.3e} > tol {report.tol:.1e}")


# ---------------------------------------------------------------------------
# tensor helpers


def partial_trace_B(rho, dim_A, dim_B):
    return np.einsum("ibjb->ij", np.asarray(rho).reshape(dim_A, dim_B, dim_A, dim_B))


def _ptrace_weighted(rho, W, dim_A, dim_B):
    """``Tr_B(rho (1 (x) W))``."""
    r = np.asarray(rho).reshape(dim_A, dim_B, dim_A, dim_B)
    return np.einsum("ibjc,cb->ij", r, W)


def _commutator_norm(X, Y):
    return float(np.linalg.norm(X @ Y - Y @ X, 2))


# ---------------------------------------------------------------------------
# image of P0 as a direct sum of matrix algebras


@dataclass(frozen=True)
class SectorMap:
    """Identification of ``image(P0)`` with block-diagonal ``m x m`` matrices.

    ``extract`` (R) and ``embed`` (J) are trace preserving, completely
    positive, and satisfy ``R J = id`` on block-diagonal matrices and
    ``J R = P0``.  ``extract_adjoint`` is the Hilbert-Schmidt adjoint of R.
    """

    block_sizes: tuple
    dim: int
    extract: Callable
    embed: Callable
    extract_adjoint: Callable

    @property
    def m(self):
        return int(sum(self.block_sizes))

    @cached_property
    def block_slices(self):
        out, start = [], 0
        for s in self.block_sizes:
            out.append(slice(start, start + s))
            start += s
        return out

    @cached_property
    def block_mask(self):
        mask = np.zeros((self.m, self.m), dtype=bool)
        for s in self.block_slices:
            mask[s, s] = True
        return mask

    def pinch(self, Y):
        return np.where(self.block_mask, Y, 0)

    def algebra_basis(self):
        """Matrix units ``|i><j|`` of the block algebra, with their vec indices."""
        m = self.m
        out = []
        for i in range(m):
            for j in range(m):
                if self.block_mask[i, j]:
                    E = np.zeros((m, m), dtype=complex)
                    E[i, j] = 1.0
                    out.append((i + m * j, E))
        return out

    @cached_property
    def embed_matrix(self):
        """``d^2 x m^2`` matrix of ``J o pinch``."""
        d, m = self.dim, self.m
        J = np.zeros((d * d, m * m), dtype=complex)
        for k, E in self.algebra_basis():
            J[:, k] = vec(self.embed(E))
        return J

    @cached_property
    def extract_matrix(self):
        """``m^2 x d^2`` matrix of R."""
        d, m = self.dim, self.m
        Radj = np.zeros((d * d, m * m), dtype=complex)
        for k, E in self.algebra_basis():
            Radj[:, k] = vec(self.extract_adjoint(E))
        return Radj.conj().T

    def restrict_with(self, apply_fn):
        """``m^2 x m^2`` matrix of ``R o F o J o pinch`` for an operator map F."""
        m = self.m
        out = np.zeros((m * m, m * m), dtype=complex)
        for k, E in self.algebra_basis():
            out[:, k] = vec(self.extract(apply_fn(self.embed(E))))
        return out

    def restrict(self, S):
        """Restrict a ``d^2 x d^2`` superoperator to the block algebra."""
        return self.extract_matrix @ np.asarray(S) @ self.embed_matrix

    def lift(self, s):
        """``J s R`` as a ``d^2 x d^2`` superoperator (small d only)."""
        return self.embed_matrix @ s @ self.extract_matrix

    @cached_property
    def norm_weights(self):
        """Square roots of ``J^dag J`` and ``R R^dag`` on the algebra.

        ``||J s R|| = ||Jw @ s @ Rw||`` for any ``s`` acting on the algebra.
        """
        J = self.embed_matrix
        R = self.extract_matrix
        keep = self.block_mask.flatten(order="F")

        def _sqrt_psd(G):
            G = G[np.ix_(keep, keep)]
            w, U = np.linalg.eigh((G + G.conj().T) / 2)
            root = (U * np.sqrt(np.clip(w, 0, None))) @ U.conj().T
            full = np.zeros((keep.size, keep.size), dtype=complex)
            full[np.ix_(keep, keep)] = root
            return full

        return _sqrt_psd(J.conj().T @ J), _sqrt_psd(R @ R.conj().T)

    def lifted_norm(self, s):
        """Hilbert-Schmidt induced norm of ``J s R`` without forming it."""
        Jw, Rw = self.norm_weights
        return opcore.superop_norm(Jw @ s @ Rw)


# ---------------------------------------------------------------------------


class KrausProjection:
    """A completely positive projection ``P0(rho) = sum_a V_a rho V_a^dag``."""

    def __init__(self, dim, kind, apply, apply_dual, kraus_builder, sectors=None,
                 metadata=None, check=True):
        self.dim = int(dim)
        self.kind = ProjectionKind(kind)
        self._apply = apply
        self._apply_dual = apply_dual
        self._kraus_builder = kraus_builder
        self.sectors = sectors
        self.metadata = dict(metadata or {})
        if check and self.dim <= SMALL_DIM:
            resid = np.abs(self.matrix - self.kraus_matrix()).max()
            if resid > ALGEBRA_TOL:
                raise ProjectionValidationError(
                    "Kraus form / closed form consistency", resid,
                    f"{self.kind.value} projection disagrees with its own Kraus family")

    def __repr__(self):
        return f"KrausProjection(kind={self.kind.value}, dim={self.dim})"

    def apply(self, rho):
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"operator of shape {rho.shape} does not match projection dim {self.dim}")
        return self._apply(rho)

    def apply_dual(self, X):
        X = np.asarray(X)
        if X.shape != (self.dim, self.dim):
            raise ValueError(f"operator of shape {X.shape} does not match projection dim {self.dim}")
        return self._apply_dual(X)

    @cached_property
    def kraus_ops(self):
        return list(self._kraus_builder())

    def kraus_matrix(self):
        d = self.dim
        S = np.zeros((d * d, d * d), dtype=complex)
        for V in self.kraus_ops:
            S += np.kron(V.conj(), V)
        return S

    @cached_property
    def matrix(self):
        d = self.dim
        S = np.zeros((d * d, d * d), dtype=complex)
        for k in range(d * d):
            e = np.zeros(d * d, dtype=complex)
            e[k] = 1.0
            S[:, k] = vec(self._apply(unvec(e, d)))
        return S

    @cached_property
    def complement(self):
        """``P1 = 1 - P0`` as a superoperator matrix."""
        return np.eye(self.dim ** 2) - self.matrix


def _sector_check(P):
    """Assert R J = id and J R = P0 on a few random operators."""
    sec = P.sectors
    rng = np.random.default_rng(0)
    m = sec.m
    for _ in range(3):
        Y = sec.pinch(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))
        r = np.abs(sec.extract(sec.embed(Y)) - Y).max()
        X = rng.normal(size=(P.dim, P.dim)) + 1j * rng.normal(size=(P.dim, P.dim))
        r = max(r, np.abs(sec.embed(sec.extract(X)) - P.apply(X)).max())
        if r > 1e-9 * max(1.0, np.abs(X).max()):
            raise ProjectionValidationError("sector map consistency", r)


# ---------------------------------------------------------------------------
# constructors


def partial_trace_projection(dim_A, dim_B, sigma):
    """``P0 rho = Tr_B(rho) (x) sigma``."""
    sigma = check_density_matrix(sigma, "sigma")
    if sigma.shape != (dim_B, dim_B):
        raise ValueError(f"sigma must be {dim_B}x{dim_B}")
    d = dim_A * dim_B
    s, chi = np.linalg.eigh(sigma)
    s = np.clip(s, 0, None)
    one_A = np.eye(dim_A)
    one_B = np.eye(dim_B)

    def apply(rho):
        return np.kron(partial_trace_B(rho, dim_A, dim_B), sigma)

    def apply_dual(X):
        return np.kron(_ptrace_weighted(X, sigma, dim_A, dim_B), one_B)

    def kraus():
        for k in np.nonzero(s > 1e-15)[0]:
            amp = np.sqrt(s[k]) * chi[:, k]
            for a in range(dim_B):
                K = np.zeros((dim_B, dim_B), dtype=complex)
                K[:, a] = amp
                yield np.kron(one_A, K)

    sectors = SectorMap(
        (dim_A,), d,
        extract=lambda rho: partial_trace_B(rho, dim_A, dim_B),
        embed=lambda Y: np.kron(Y, sigma),
        extract_adjoint=lambda Y: np.kron(Y, one_B),
    )
    P = KrausProjection(d, ProjectionKind.PARTIAL_TRACE, apply, apply_dual, kraus, sectors,
                        {"dim_A": dim_A, "dim_B": dim_B, "sigma": sigma})
    _sector_check(P)
    return P


def diagonal_projection(basis):
    """``P0 rho = sum_a |a><a| rho |a><a|`` for the columns ``|a>`` of ``basis``."""
    U = np.asarray(basis, dtype=complex)
    d = U.shape[0]
    resid = np.abs(U.conj().T @ U - np.eye(d)).max()
    if U.shape != (d, d) or resid > 1e-10:
        raise ProjectionValidationError("basis unitarity", resid)

    def diag_in_basis(rho):
        return np.einsum("ia,ij,ja->a", U.conj(), rho, U)

    def apply(rho):
        return (U * diag_in_basis(rho)) @ U.conj().T

    def kraus():
        for a in range(d):
            yield np.outer(U[:, a], U[:, a].conj())

    sectors = SectorMap(
        (1,) * d, d,
        extract=lambda rho: np.diag(diag_in_basis(rho)),
        embed=lambda Y: (U * np.diag(Y)) @ U.conj().T,
        extract_adjoint=lambda Y: (U * np.diag(Y)) @ U.conj().T,
    )
    P = KrausProjection(d, ProjectionKind.DIAGONAL, apply, apply, kraus, sectors, {"basis": U})
    _sector_check(P)
    return P


def block_diagonal_projection(index_sets, dim=None):
    """``P0 rho = sum_a V_a rho V_a`` for coordinate projectors ``V_a`` onto blocks.

    ``index_sets`` are 0-based lists of basis indices forming a partition of
    ``range(dim)``.
    """
    sets = [sorted(int(i) for i in s) for s in index_sets]
    flat = [i for s in sets for i in s]
    if dim is None:
        dim = len(flat)
    if any(len(s) == 0 for s in sets):
        raise ProjectionValidationError("partition", 1.0, "empty block")
    if sorted(flat) != list(range(dim)):
        dup = len(flat) - len(set(flat))
        missing = sorted(set(range(dim)) - set(flat))
        raise ProjectionValidationError(
            "partition", max(dup, len(missing)),
            f"index sets must partition range({dim}); duplicates={dup}, missing={missing}")
    labels = np.empty(dim, dtype=int)
    for a, s in enumerate(sets):
        labels[s] = a
    mask = labels[:, None] == labels[None, :]
    perm = np.array(flat)
    inv = np.argsort(perm)
    sizes = tuple(len(s) for s in sets)

    def apply(rho):
        return np.where(mask, rho, 0)

    def kraus():
        for s in sets:
            V = np.zeros((dim, dim), dtype=complex)
            V[s, s] = 1.0
            yield V

    sectors = SectorMap(
        sizes, dim,
        extract=lambda rho: np.where(mask[np.ix_(perm, perm)], np.asarray(rho)[np.ix_(perm, perm)], 0),
        embed=lambda Y: np.where(mask, np.asarray(Y)[np.ix_(inv, inv)], 0),
        extract_adjoint=lambda Y: np.where(mask, np.asarray(Y)[np.ix_(inv, inv)], 0),
    )
    P = KrausProjection(dim, ProjectionKind.BLOCK_DIAGONAL, apply, apply, kraus, sectors,
                        {"index_sets": sets})
    _sector_check(P)
    return P


@dataclass
class EntanglingFamily:
    """Bath operators ``C_n``, ``D_n`` defining an entangling projection."""

    C: list
    D: list
    bath_basis: np.ndarray = field(default=None)

    def __post_init__(self):
        self.C = [np.asarray(c, dtype=complex) for c in self.C]
        self.D = [np.asarray(x, dtype=complex) for x in self.D]
        if len(self.C) != len(self.D) or not self.C:
            raise ValueError("C and D must be non-empty lists of equal length")
        dB = self.C[0].shape[0]
        for X in self.C + self.D:
            if X.shape != (dB, dB):
                raise ValueError("all C_n, D_n must be square of the bath dimension")
        if self.bath_basis is None:
            self.bath_basis = np.eye(dB, dtype=complex)

    @property
    def N(self):
        return len(self.C)

    @property
    def dim_B(self):
        return self.C[0].shape[0]

    @property
    def A(self):
        return [c.conj().T @ c for c in self.C]

    @property
    def B(self):
        return [x.conj().T @ x for x in self.D]

    def residuals(self):
        """Residual norms of the four family hypotheses, keyed by name.

        Values are ``(residual, (n, n'))`` with the worst index pair.
        """
        A, B, D = self.A, self.B, self.D
        N = self.N
        one = np.eye(self.dim_B)

        def worst(fn):
            best, pair = 0.0, None
            for n in range(N):
                for k in range(N):
                    r = fn(n, k)
                    if pair is None or r > best:
                        best, pair = r, (n, k)
            return float(best), pair

        return {
            "D_n^dag D_n' = delta B_n": worst(
                lambda n, k: np.linalg.norm(D[n].conj().T @ D[k] - (B[n] if n == k else 0), 2)),
            "sum_n A_n = 1": (float(np.linalg.norm(sum(A) - one, 2)), None),
            "A_n A_n' = delta A_n": worst(
                lambda n, k: np.linalg.norm(A[n] @ A[k] - (A[n] if n == k else 0), 2)),
            "Tr(A_n B_n') = delta": worst(
                lambda n, k: abs(np.trace(A[n] @ B[k]) - (1.0 if n == k else 0.0))),
        }

    def validate(self, tol=ALGEBRA_TOL):
        for name, (r, pair) in self.residuals().items():
            if r > tol:
                where = f" at (n, n') = {pair}" if pair is not None else ""
                raise ProjectionValidationError(name, r, f"entangling family{where}")
        return self


def entangling_projection(family, dim_A, validate=True):
    """Entangling projection built from Kraus operators
    ``V_{aa'} = 1_A (x) sum_n D_n^dag |a><a'| C_n``.

    Closed form: ``P0 rho = sum_n Tr_B(rho (1 (x) A_n)) (x) B_n``.
    """
    if validate:
        family.validate()
    dB = family.dim_B
    d = dim_A * dB
    A, B = family.A, family.B
    N = family.N
    one_A = np.eye(dim_A)
    one_B = np.eye(dB)
    basis = family.bath_basis

    def apply(rho):
        return sum(np.kron(_ptrace_weighted(rho, A[n], dim_A, dB), B[n]) for n in range(N))

    def apply_dual(X):
        return sum(np.kron(_ptrace_weighted(X, B[n], dim_A, dB), A[n]) for n in range(N))

    def kraus():
        for a in range(dB):
            for b in range(dB):
                ket = basis[:, a][:, None]
                bra = basis[:, b].conj()[None, :]
                W = sum(family.D[n].conj().T @ ket @ bra @ family.C[n] for n in range(N))
                yield np.kron(one_A, W)

    def extract(rho):
        out = np.zeros((N * dim_A, N * dim_A), dtype=complex)
        for n in range(N):
            s = slice(n * dim_A, (n + 1) * dim_A)
            out[s, s] = _ptrace_weighted(rho, A[n], dim_A, dB)
        return out

    def embed(Y):
        return sum(np.kron(Y[n * dim_A:(n + 1) * dim_A, n * dim_A:(n + 1) * dim_A], B[n])
                   for n in range(N))

    def extract_adjoint(Y):
        return sum(np.kron(Y[n * dim_A:(n + 1) * dim_A, n * dim_A:(n + 1) * dim_A], A[n])
                   for n in range(N))

    sectors = SectorMap((dim_A,) * N, d, extract, embed, extract_adjoint)
    P = KrausProjection(d, ProjectionKind.ENTANGLING, apply, apply_dual, kraus, sectors,
                        {"dim_A": dim_A, "family": family})
    _sector_check(P)
    return P


def custom_projection(kraus_ops, check=True):
    """Projection defined only by a Kraus family (no sector structure)."""
    ops = [np.asarray(V, dtype=complex) for V in kraus_ops]
    d = ops[0].shape[0]

    def apply(rho):
        return sum(V @ rho @ V.conj().T for V in ops)

    def apply_dual(X):
        return sum(V.conj().T @ X @ V for V in ops)

    P = KrausProjection(d, ProjectionKind.CUSTOM, apply, apply_dual, lambda: ops, None, {}, check=False)
    if check:
        r = np.abs(P.matrix @ P.matrix - P.matrix).max()
        if r > ALGEBRA_TOL:
            raise ProjectionValidationError("idempotence", r)
    return P


def identity_projection(dim):
    """``P0 = 1`` as a single-block projection."""
    return block_diagonal_projection([list(range(dim))], dim)


def apply_projection(P, rho):
    """``sum_a V_a rho V_a^dag`` via the projection's closed form."""
    return P.apply(rho)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(np.isfinite(self.residual) and self.residual <= self.tol)


@dataclass
class AuditReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def rows(self):
        return [(c.name, c.residual, "pass" if c.passed else "fail") for c in self.checks]


def _map_norm(apply_fn, adjoint_fn, d):
    """Induced Hilbert-Schmidt norm of an operator map, dense or iterative."""
    if d <= SMALL_DIM:
        S = np.zeros((d * d, d * d), dtype=complex)
        for k in range(d * d):
            e = np.zeros(d * d, dtype=complex)
            e[k] = 1.0
            S[:, k] = vec(apply_fn(unvec(e, d)))
        return opcore.superop_norm(S)
    from scipy.sparse.linalg import LinearOperator, svds

    op = LinearOperator(
        (d * d, d * d), dtype=complex,
        matvec=lambda v: vec(apply_fn(unvec(np.ravel(v), d))),
        rmatvec=lambda v: vec(adjoint_fn(unvec(np.ravel(v), d))),
    )
    try:
        s = svds(op, k=1, return_singular_vectors=False, tol=1e-12, random_state=0)
    except Exception:  # ARPACK breakdown on an exactly-zero map
        v = np.random.default_rng(0).normal(size=d * d).astype(complex)
        w = op.matvec(v)
        return float(np.linalg.norm(w) / np.linalg.norm(v))
    return float(s[0])


def _comm(H, X):
    return -1j * (H @ X - X @ H)


def check_dynamical_compatibility(P, H0, tol=1e-10):
    """Residual ``||Z P0 - P0 Z||`` with ``Z = -i[H0, .]``.

    For entangling projections the per-``n`` commutators ``[H_B, A_n]`` and
    ``[H_B, B_n]`` are reported too when ``H0`` has the local form
    ``H_A (x) 1 + 1 (x) H_B``.
    """
    H0 = check_hermitian(H0, "H0")

    def fwd(X):
        return _comm(H0, P.apply(X)) - P.apply(_comm(H0, X))

    def adj(X):
        return -P.apply_dual(_comm(H0, X)) + _comm(H0, P.apply_dual(X))

    resid = _map_norm(fwd, adj, P.dim)
    details = {}
    if P.kind is ProjectionKind.ENTANGLING:
        fam = P.metadata["family"]
        HB = local_bath_part(H0, P.metadata["dim_A"], fam.dim_B)
        if HB is not None:
            details["per_n"] = [(_commutator_norm(HB, A), _commutator_norm(HB, B))
                                for A, B in zip(fam.A, fam.B)]
    return CheckResult("dynamical_compatibility [Z,P0]=0", resid, tol, details)


def local_bath_part(H0, dim_A, dim_B, tol=1e-10):
    """Return ``H_B`` if ``H0 = H_A (x) 1 + 1 (x) H_B`` (traceless-split), else None."""
    H = np.asarray(H0).reshape(dim_A, dim_B, dim_A, dim_B)
    HA = np.einsum("ibjb->ij", H) / dim_B
    HB = np.einsum("aiaj->ij", H) / dim_A
    shift = np.trace(HA) / dim_A
    HB_full = HB
    rebuilt = np.kron(HA, np.eye(dim_B)) + np.kron(np.eye(dim_A), HB_full) - shift * np.eye(dim_A * dim_B)
    if np.abs(rebuilt - H0).max() > tol * max(1.0, np.abs(H0).max()):
        return None
    return HB_full


def check_no_first_order(P, Hp, tol=1e-10):
    """Residual ``||P0 A P0||`` with ``A = -i[H', .]``."""
    Hp = check_hermitian(Hp, "H'")

    def fwd(X):
        return P.apply(_comm(Hp, P.apply(X)))

    def adj(X):
        return -P.apply_dual(_comm(Hp, P.apply_dual(X)))

    return CheckResult("no_first_order A00=0", _map_norm(fwd, adj, P.dim), tol)


def require_gates(P, H0, Hp, tol=1e-10):
    """Raise :class:`GateError` unless ``[Z,P0]=0`` and ``A00=0`` within ``tol``."""
    reports = [check_dynamical_compatibility(P, H0, tol), check_no_first_order(P, Hp, tol)]
    for r in reports:
        if not r.passed:
            raise GateError(r)
    return reports


def projection_audit(P, tol=1e-10, n_random=50, seed=0):
    """Idempotence, complete positivity, dual unitality and trace preservation."""
    from .positivity import choi

    d = P.dim
    rng = np.random.default_rng(seed)
    checks = []

    idem = _map_norm(lambda X: P.apply(P.apply(X)) - P.apply(X),
                     lambda X: P.apply_dual(P.apply_dual(X)) - P.apply_dual(X), d)
    checks.append(CheckResult("idempotence ||P0^2-P0||", idem, tol))

    if d <= SMALL_DIM:
        lo = float(np.linalg.eigvalsh(choi(P.matrix)).min())
        checks.append(CheckResult("complete_positivity choi_min_eig", max(0.0, -lo), tol,
                                  {"min_eig": lo}))
    else:
        # Kraus form is CP by construction; the dense Choi test is skipped at this size
        checks.append(CheckResult("complete_positivity choi_min_eig", 0.0, tol,
                                  {"method": "kraus-form"}))

    unital = float(np.linalg.norm(P.apply_dual(np.eye(d)) - np.eye(d), 2))
    checks.append(CheckResult("dual_unitality sum V^dag V = 1", unital, tol))

    worst = 0.0
    for _ in range(n_random):
        rho = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        worst = max(worst, abs(np.trace(P.apply(rho)) - np.trace(rho)))
    checks.append(CheckResult("trace_preservation", float(worst), tol))

    if P.kind is ProjectionKind.ENTANGLING:
        for name, (r, pair) in P.metadata["family"].residuals().items():
            checks.append(CheckResult(f"family {name}", r, tol, {"pair": pair}))
    return AuditReport(checks)
