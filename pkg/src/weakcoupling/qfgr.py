"""Coupled master equation for quantum populations.

For a block-diagonal projection with index sets ``I_a`` the populations are
``rho_a = rho[I_a, I_a]`` and the generator ``Z0 + lam^2 K_T`` acts as::

    d rho_a = -i[H_a + lam^2 H2_a, rho_a]
              + lam^2 sum_{b != a} ( 2 D_ab rho_b D_ab^dag - {D_ba^dag D_ba, rho_a} )

with scattering operators ``D_ab = L_T[I_a, I_b]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .generators import lindblad_pieces
from .opcore import check_hermitian

RTOL = 1e-10
ATOL = 1e-12


def _index_sets(index_sets, d=None):
    sets = [np.asarray(s, dtype=int) for s in index_sets]
    flat = np.sort(np.concatenate(sets))
    n = flat.size if d is None else d
    if flat.size != n or np.any(flat != np.arange(n)):
        raise ValueError("index sets must partition range(d)")
    return sets


@dataclass
class QuantumPopulations:
    index_sets: list
    blocks: list
    time: float = 0.0

    @classmethod
    def from_density(cls, rho, index_sets, time=0.0):
        rho = np.asarray(rho, dtype=complex)
        sets = _index_sets(index_sets, rho.shape[0])
        return cls(sets, [rho[np.ix_(s, s)].copy() for s in sets], time)

    @property
    def dim(self):
        return sum(len(s) for s in self.index_sets)

    def traces(self):
        return np.array([np.trace(b).real for b in self.blocks])

    def min_eigenvalues(self):
        return np.array([np.linalg.eigvalsh((b + b.conj().T) / 2).min() for b in self.blocks])

    def hermiticity_defect(self):
        return max(float(np.abs(b - b.conj().T).max()) for b in self.blocks)

    def assemble(self):
        d = self.dim
        rho = np.zeros((d, d), dtype=complex)
        for s, b in zip(self.index_sets, self.blocks):
            rho[np.ix_(s, s)] = b
        return rho

    def to_vector(self):
        return np.concatenate([b.ravel() for b in self.blocks])

    def with_vector(self, y, time):
        out, k = [], 0
        for s in self.index_sets:
            n = len(s)
            out.append(np.asarray(y[k:k + n * n]).reshape(n, n))
            k += n * n
        return QuantumPopulations(self.index_sets, out, float(time))


@dataclass
class ScatteringSet:
    index_sets: list
    D: dict
    T: float
    diagonal_residual: float = 0.0

    def __getitem__(self, pair):
        return self.D[pair]


def scattering_operators(index_sets, L_T, T=float("nan"), tol=1e-10):
    """``D_ab = L_T[I_a, I_b]`` for all block pairs.

    ``diagonal_residual`` records ``max_a ||D_aa||``; it should vanish when
    ``H'`` has no block-diagonal part.
    """
    L_T = np.asarray(L_T, dtype=complex)
    sets = _index_sets(index_sets, L_T.shape[0])
    D = {}
    for a, sa in enumerate(sets):
        for b, sb in enumerate(sets):
            D[a, b] = L_T[np.ix_(sa, sb)]
    diag = max(float(np.abs(D[a, a]).max(initial=0.0)) for a in range(len(sets)))
    return ScatteringSet(sets, D, float(T), diag)


def block_parts(H, index_sets):
    H = np.asarray(H, dtype=complex)
    return [H[np.ix_(s, s)] for s in index_sets]


@dataclass
class QFGRSystem:
    scat: ScatteringSet
    H_blocks: list
    H2_blocks: list
    lam: float

    @property
    def index_sets(self):
        return self.scat.index_sets


def qfgr_system(H0, Hp, index_sets, T, lam):
    """Scattering operators and block Hamiltonians for a block-diagonal model."""
    H0 = check_hermitian(H0, "H0")
    L, H2 = lindblad_pieces(H0, Hp, T)
    sets = _index_sets(index_sets, H0.shape[0])
    return QFGRSystem(scattering_operators(sets, L, T), block_parts(H0, sets),
                      block_parts(H2, sets), float(lam))


def qfgr_rhs(pops, scat, H_blocks, H2_blocks, lam):
    """Block derivatives ``d rho_a / dt``."""
    rho = pops.blocks
    n = len(rho)
    if not (len(H_blocks) == len(H2_blocks) == n):
        raise ValueError("block count mismatch")
    for r, H, H2 in zip(rho, H_blocks, H2_blocks):
        if not (r.shape == H.shape == H2.shape):
            raise ValueError(f"block shape mismatch {r.shape}, {H.shape}, {H2.shape}")
    lam2 = lam ** 2
    out = []
    for a in range(n):
        Ha = H_blocks[a] + lam2 * H2_blocks[a]
        d = -1j * (Ha @ rho[a] - rho[a] @ Ha)
        for b in range(n):
            if b == a:
                continue
            loss = scat[b, a].conj().T @ scat[b, a]
            Dab = scat[a, b]
            d = d + lam2 * (2 * Dab @ rho[b] @ Dab.conj().T - loss @ rho[a] - rho[a] @ loss)
        out.append(d)
    return out


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.time for s in self.samples])

    def trace_drift(self):
        return max(abs(s.traces().sum() - 1.0) for s in self.samples)

    def min_eigenvalue(self):
        return min(s.min_eigenvalues().min() for s in self.samples)


class IntegrationError(RuntimeError):
    def __init__(self, message, t_reached):
        self.t_reached = float(t_reached)
        super().__init__(f"{message} (integration reached t={self.t_reached:.6g})")


def evolve_qfgr(initial, system, t_grid, rtol=RTOL, atol=ATOL):
    """Integrate the block equation with an adaptive Dormand-Prince 8(5,3) pair."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and be strictly increasing")
    scat, Hb, H2b, lam = system.scat, system.H_blocks, system.H2_blocks, system.lam

    def f(t, y):
        d = qfgr_rhs(initial.with_vector(y, t), scat, Hb, H2b, lam)
        return np.concatenate([x.ravel() for x in d])

    if t_grid.size == 1:
        return Trajectory([initial.with_vector(initial.to_vector(), 0.0)])
    sol = solve_ivp(f, (0.0, t_grid[-1]), initial.to_vector().astype(complex), method="DOP853",
                    t_eval=t_grid, rtol=rtol, atol=atol)
    if sol.status != 0:
        reached = sol.t[-1] if sol.t.size else 0.0
        raise IntegrationError(sol.message, reached)
    return Trajectory([initial.with_vector(sol.y[:, k], t) for k, t in enumerate(sol.t)])


def generator_matrix(system):
    """Matrix of the block equation on the stacked (row-major) block vector."""
    sets = system.index_sets
    sizes = [len(s) for s in sets]
    n = sum(k * k for k in sizes)
    template = QuantumPopulations(sets, [np.zeros((k, k), complex) for k in sizes])
    G = np.zeros((n, n), dtype=complex)
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1.0
        d = qfgr_rhs(template.with_vector(e, 0.0), system.scat, system.H_blocks,
                     system.H2_blocks, system.lam)
        G[:, j] = np.concatenate([x.ravel() for x in d])
    return G


@dataclass
class SteadyState:
    T: float
    populations: QuantumPopulations
    residual: float
    kernel_dim: int

    @property
    def unique(self):
        return self.kernel_dim == 1


def steady_state(system, kernel_tol=1e-10):
    """Null vector of the block generator, normalized to unit total trace."""
    G = generator_matrix(system)
    sets = system.index_sets
    _, s, Vh = np.linalg.svd(G)
    scale = max(1.0, s[0])
    kdim = int(np.sum(s <= kernel_tol * scale))
    null = Vh[-max(kdim, 1):].conj().T
    template = QuantumPopulations(sets, [np.zeros((len(x), len(x)), complex) for x in sets])
    # trace functional on the stacked vector; project it onto the kernel
    tr_vec = np.concatenate([np.eye(len(x)).ravel() for x in sets])
    v = null @ (null.conj().T @ tr_vec)
    tr = tr_vec @ v
    if abs(tr) < 1e-12:
        raise ValueError("kernel of the block generator contains no state of nonzero trace")
    pops = template.with_vector(v / tr, np.inf)
    pops.blocks = [(b + b.conj().T) / 2 for b in pops.blocks]
    resid = float(np.linalg.norm(G @ pops.to_vector()))
    return SteadyState(system.scat.T, pops, resid, kdim)


def steady_state_scan(builder, T_grid, kernel_tol=1e-10):
    """``builder(T) -> QFGRSystem``; one :class:`SteadyState` per ``T``."""
    return [steady_state(builder(float(T)), kernel_tol) for T in T_grid]


def two_level_populations(p1_0, rate, t):
    """Closed form ``p1(t)`` of ``dp1/dt = rate (p2 - p1)``, ``p1 + p2 = 1``."""
    t = np.asarray(t, dtype=float)
    return 0.5 + (p1_0 - 0.5) * np.exp(-2 * rate * t)
