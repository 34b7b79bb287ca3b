"""Exact and Markovian propagation of projected dynamics.

Exact: ``W_t = P0 exp((Z + lam A) t) P0`` with ``Z = -i[H0, .]``, ``A = -i[H', .]``.
Markovian: ``exp((Z + lam^2 K_T) t) P0`` from a :class:`GeneratorBundle`.

For projections with a sector map both are handled on the block algebra
(``W_t = J s_t R``), which keeps large models cheap.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .generators import build_generator, commutator_norm, observation_time
from .opcore import check_hermitian, commutator_superop, sandwich, superop_exp, superop_norm
from .positivity import restricted_channel

DEFAULT_POINTS = 64


class PropagatorKind(str, enum.Enum):
    EXACT = "exact"
    SEMIGROUP = "semigroup"


@dataclass
class PropagatorGrid:
    times: np.ndarray
    propagators: list
    kind: PropagatorKind

    def semigroup_defect(self):
        """Worst ``||W_{t+s} - W_t W_s||`` over grid-compatible pairs."""
        t = np.asarray(self.times)
        worst = 0.0
        for i in range(len(t)):
            for j in range(i, len(t)):
                k = np.nonzero(np.isclose(t, t[i] + t[j], rtol=0, atol=1e-12))[0]
                if k.size:
                    D = self.propagators[k[0]] - self.propagators[i] @ self.propagators[j]
                    worst = max(worst, superop_norm(D))
        return worst


@dataclass
class ConvergenceReport:
    lambdas: list
    xi: float
    T_tilde: object
    tau_bar: float
    T_values: list = field(default_factory=list)
    t_grid_per_lambda: list = field(default_factory=list)
    sup_errors: list = field(default_factory=list)

    @property
    def ratios(self):
        e = self.sup_errors
        return [e[k + 1] / e[k] if e[k] > 0 else 0.0 for k in range(len(e) - 1)]

    @property
    def monotone_decreasing(self):
        """Each error at most 0.9 times the previous (errors at round-off count as converged)."""
        e = self.sup_errors
        return all(e[k + 1] <= 0.9 * e[k] or e[k + 1] <= 1e-10 for k in range(len(e) - 1))

    def rows(self):
        return [(lam, T, self.tau_bar, err)
                for lam, T, err in zip(self.lambdas, self.T_values, self.sup_errors)]


def _hamiltonians(H0, Hp, lam):
    H0 = check_hermitian(H0, "H0")
    Hp = check_hermitian(Hp, "H'")
    if H0.shape != Hp.shape:
        raise ValueError(f"H0 {H0.shape} and H' {Hp.shape} differ in shape")
    return H0, Hp, H0 + lam * Hp


def exact_projected(P, H0, Hp, lam, t):
    """``P0 exp((Z + lam A) t) P0`` as a dense superoperator."""
    H0, Hp, _ = _hamiltonians(H0, Hp, lam)
    if P.dim != H0.shape[0]:
        raise ValueError(f"projection dim {P.dim} does not match H0 {H0.shape}")
    P0 = P.matrix
    L = commutator_superop(H0) + lam * commutator_superop(Hp)
    return P0 @ superop_exp(L, t) @ P0


def exact_projected_conjugation(P, H0, Hp, lam, t):
    """Same as :func:`exact_projected`, through ``exp(-iHt) . exp(iHt)``."""
    _, _, H = _hamiltonians(H0, Hp, lam)
    E, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * E * t)) @ V.conj().T
    P0 = P.matrix
    return P0 @ sandwich(U, U.conj().T) @ P0


def exact_reduced(P, H0, Hp, lam, times):
    """``R exp((Z + lam A) t) J`` on the block algebra for every ``t`` in ``times``.

    Returns an array of shape ``(len(times), m^2, m^2)``; columns outside the
    block algebra are zero.
    """
    sec = P.sectors
    if sec is None:
        raise ValueError("projection has no sector map")
    _, _, H = _hamiltonians(H0, Hp, lam)
    E, V = np.linalg.eigh(H)
    m = sec.m
    basis = sec.algebra_basis()
    # eigenbasis images of J(E_k)
    Y = np.stack([V.conj().T @ sec.embed(Ek) @ V for _, Ek in basis])
    out = np.zeros((len(times), m * m, m * m), dtype=complex)
    for n, t in enumerate(times):
        ph = np.exp(-1j * E * t)
        rot = ph[:, None] * ph.conj()[None, :]
        for (k, _), Yk in zip(basis, Y):
            X = V @ (Yk * rot) @ V.conj().T
            out[n, :, k] = sec.extract(X).flatten(order="F")
    return out


def markov_propagator(bundle, t):
    """``exp((Z0 + lam^2 K_T) t) P0`` as a dense superoperator."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return superop_exp(bundle.full_generator, t) @ bundle.projection.matrix


def markov_reduced(bundle, times):
    """``exp(l t) o pinch`` on the block algebra, ``l = R (Z + lam^2 Ktilde_T) J``."""
    sizes = bundle.projection.sectors.block_sizes
    ell = bundle.reduced_generator
    return np.stack([restricted_channel(ell, sizes, t) for t in times])


def propagator_grid(P, H0, Hp, lam, times, bundle=None):
    """Dense propagators on a time grid: exact if ``bundle`` is None, else semigroup."""
    times = np.asarray(times, dtype=float)
    if bundle is None:
        props = [exact_projected(P, H0, Hp, lam, t) for t in times]
        return PropagatorGrid(times, props, PropagatorKind.EXACT)
    props = [markov_propagator(bundle, t) for t in times]
    return PropagatorGrid(times, props, PropagatorKind.SEMIGROUP)


# ---------------------------------------------------------------------------
# Nakajima-Zwanzig residual


def _powers(S, n):
    out = np.empty((n,) + S.shape, dtype=complex)
    out[0] = np.eye(S.shape[0])
    for k in range(1, n):
        out[k] = out[k - 1] @ S
    return out


def _trap_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    if n == 1:
        w[0] = 0.0
    return w


def _conv(w, F, G):
    """``sum_j w_j F_j @ G_j``."""
    return np.tensordot(F * w[:, None, None], G, axes=([0, 2], [0, 1]))


def nz_residual(P, H0, Hp, lam, t_max, step, drop_second_order=False):
    """Residual of the Nakajima-Zwanzig identity on ``t = 0, step, ..., t_max``.

    ``W_t = U_t P0 + lam^2 int_0^t ds int_0^s du U_{t-s} A01 V_{s-u} A10 W_u``
    with ``V`` generated by ``Z + lam A11``; both integrals by the trapezoid
    rule.  Returns ``max_t ||lhs - rhs||``.
    """
    H0, Hp, _ = _hamiltonians(H0, Hp, lam)
    n = int(round(t_max / step)) + 1
    if abs((n - 1) * step - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("t_max must be a multiple of step")
    P0 = P.matrix
    P1 = np.eye(P0.shape[0]) - P0
    Z = commutator_superop(H0)
    A = commutator_superop(Hp)
    A01 = P0 @ A @ P1
    A10 = P1 @ A @ P0
    A11 = P1 @ A @ P1
    U = _powers(superop_exp(Z, step), n)
    V = _powers(superop_exp(Z + lam * A11, step), n)
    W = P0 @ _powers(superop_exp(Z + lam * A, step), n) @ P0

    X = np.einsum("ab,nbc->nac", A10, W)
    inner = np.empty_like(X)
    for k in range(n):
        w = _trap_weights(k + 1)
        inner[k] = step * _conv(w, V[k::-1], X[:k + 1])
    Y = np.einsum("ab,nbc->nac", A01, inner)
    worst = 0.0
    for k in range(n):
        rhs = U[k] @ P0
        if not drop_second_order:
            w = _trap_weights(k + 1)
            rhs = rhs + lam ** 2 * step * _conv(w, U[k::-1], Y[:k + 1])
        worst = max(worst, superop_norm(W[k] - rhs))
    return worst


# ---------------------------------------------------------------------------
# sup-norm comparison


def time_grid(lam, tau_bar, n_points=DEFAULT_POINTS):
    """Uniform grid on ``[0, tau_bar / lam^2]`` (``[0, tau_bar]`` when lam = 0)."""
    if n_points < 16:
        raise ValueError("n_points must be at least 16")
    horizon = tau_bar / lam ** 2 if lam != 0 else tau_bar
    return np.linspace(0.0, horizon, n_points)


def sup_error(P, H0, Hp, lam, bundle, tau_bar, n_points=DEFAULT_POINTS):
    """``max_t ||W_t - exp(L t) P0||`` over :func:`time_grid`."""
    times = time_grid(lam, tau_bar, n_points)
    sec = P.sectors
    if sec is None:
        return max(superop_norm(exact_projected(P, H0, Hp, lam, t) - markov_propagator(bundle, t))
                   for t in times)
    ex = exact_reduced(P, H0, Hp, lam, times)
    mk = markov_reduced(bundle, times)
    return max(sec.lifted_norm(a - b) for a, b in zip(ex, mk))


def convergence_sweep(P, H0, Hp, lambdas, xi, T_tilde, tau_bar, n_points=DEFAULT_POINTS,
                      gate_tol=1e-10):
    """Sup errors for bundles built at ``T(lam) = T_tilde |lam|^(-xi)`` (or ``"collision"``)."""
    lambdas = [float(x) for x in lambdas]
    if not 0 < xi < 2:
        raise ValueError(f"xi={xi} out of (0,2)")
    mags = [abs(x) for x in lambdas]
    if any(not 0 < x < 1 for x in mags):
        raise ValueError("lambdas must lie in (0,1)")
    if any(b >= a for a, b in zip(mags, mags[1:])):
        raise ValueError("lambdas must be strictly decreasing in magnitude")
    normA = commutator_norm(Hp)
    report = ConvergenceReport(lambdas, float(xi), T_tilde, float(tau_bar))
    for lam in lambdas:
        if normA > 0:
            T = observation_time(lam, xi, T_tilde, normA)
        elif isinstance(T_tilde, str):
            T = abs(lam) ** (-xi)  # H' = 0: generator vanishes for any T
        else:
            T = float(T_tilde) * abs(lam) ** (-xi)
        try:
            bundle = build_generator(P, H0, Hp, lam, T, gate_tol)
        except ValueError as exc:
            raise ValueError(f"lambda={lam}: {exc}") from exc
        report.T_values.append(T)
        report.t_grid_per_lambda.append(time_grid(lam, tau_bar, n_points))
        report.sup_errors.append(sup_error(P, H0, Hp, lam, bundle, tau_bar, n_points))
    return report
