"""Acceptance criteria 1-9; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py``.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from weakcoupling import dynamics as dy  # noqa: E402
from weakcoupling import generators as g  # noqa: E402
from weakcoupling import models, opcore, qfgr  # noqa: E402
from weakcoupling import positivity as pos  # noqa: E402
from weakcoupling import projections as pj  # noqa: E402

KINDS = ("diagonal", "block_diagonal", "entangling", "partial_trace")
RESULTS = {}

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


def _model(kind, seed):
    """Seeded model of ``kind`` with dimension between 2 and 8."""
    if kind in ("diagonal", "block_diagonal"):
        d = 2 + seed % 7
        if kind == "block_diagonal":
            return models.random_model(kind, seed, d, n_blocks=min(2 + seed % 2, d))
        return models.random_model(kind, seed, d)
    if kind == "partial_trace":
        return models.random_model(kind, seed, (4, 6, 8)[seed % 3])
    return models.random_model(kind, seed, (6, 8)[seed % 2], n_parts=2 + seed % 2)


def criterion_1():
    worst_gen, worst_cp, worst_tp, n = np.inf, np.inf, 0.0, 0
    for kind in KINDS:
        for seed in range(20):
            m = _model(kind, seed)
            for T in (0.5, 1.0, 5.0):
                for lam in (0.1, 0.3):
                    b = g.build_generator(m.projection, m.H0, m.Hp, lam, T)
                    a = pos.cp_semigroup_audit(b, (0.1, 1.0, 10.0), 1e-8, 1e-9)
                    worst_gen = min(worst_gen, a.generator_min_eig)
                    worst_cp = min(worst_cp, min(e["choi_min_eig"] for e in a.entries))
                    worst_tp = max(worst_tp, max(e["trace_defect"] for e in a.entries))
                    n += 1
    ok = worst_gen >= -1e-8 and worst_cp >= -1e-8 and worst_tp <= 1e-9
    return ok, (f"{n} bundles, min GKS eig {worst_gen:.3e}, min Choi eig {worst_cp:.3e}, "
                f"max trace defect {worst_tp:.3e}")


def criterion_2():
    errs = {}
    worst = 0.0
    for d in (2, 4, 6):
        for T in (0.5, 1.0, 5.0):
            rng = np.random.default_rng(1000 + 10 * d + int(T * 2))
            H0, Hp = models.random_hermitian(rng, d), models.random_hermitian(rng, d)
            worst = max(worst, np.abs(g.smoothed_interaction(H0, Hp, T)
                                      - oracles.smoothed_interaction(H0, Hp, T)).max())
    errs["L_T"] = worst
    rng = np.random.default_rng(7)
    H0, Hp = models.random_hermitian(rng, 3), models.random_hermitian(rng, 3)
    errs["H2"] = max(np.abs(g.second_order_hamiltonian(SZ / 2, SX, 1.0) - 1.076159013825534 * SZ).max(),
                     np.abs(g.second_order_hamiltonian(H0, Hp, 0.7)
                            - oracles.second_order_hamiltonian(H0, Hp, 0.7)).max())
    H0, Hp = models.random_hermitian(rng, 2), models.random_hermitian(rng, 2)
    errs["Ktilde"] = max(np.abs(g.ktilde_T(SZ / 2, SX, 1.0)
                                - oracles.ktilde_double_commutator(SZ / 2, SX, 1.0)).max(),
                         np.abs(g.ktilde_T(H0, Hp, 0.8)
                                - oracles.ktilde_double_commutator(H0, Hp, 0.8)).max())
    worst = 0.0
    for kind in KINDS:
        for seed in range(5):
            m = _model(kind, seed)
            for T in (0.5, 1.0, 5.0):
                worst = max(worst, np.abs(g.k_T(m.projection, m.H0, m.Hp, T)
                                          - g.k_T_from_blocks(m.projection, m.H0, m.Hp, T)).max())
    errs["K_T two-path"] = worst
    ok = errs["L_T"] <= 1e-8 and errs["H2"] <= 1e-8 and errs["Ktilde"] <= 1e-7 \
        and errs["K_T two-path"] <= 1e-9
    return ok, ", ".join(f"{k} {v:.2e}" for k, v in errs.items())


def _nondegenerate(rng, d, gap=0.2):
    while True:
        E = np.sort(rng.uniform(-2, 2, size=d))
        if d == 1 or np.min(np.diff(E)) >= gap:
            break
    U = models.random_unitary(rng, d)
    return (U * E) @ U.conj().T


def criterion_3():
    worst, idem = 0.0, 0.0
    for d in (2, 3, 4, 5):
        for seed in range(3):
            rng = np.random.default_rng(300 + 10 * d + seed)
            H0 = _nondegenerate(rng, d)
            bohr = opcore.bohr_decompose(H0)
            K = rng.normal(size=(d * d, d * d)) + 1j * rng.normal(size=(d * d, d * d))
            nat = g.spectral_average(K, bohr)
            worst = max(worst, np.abs(nat - g.gaussian_time_average(K, H0, 1e3)).max())
            idem = max(idem, np.abs(g.spectral_average(nat, bohr) - nat).max())
    return worst <= 1e-5 and idem <= 1e-12, f"max |nat - avg_T=1e3| {worst:.2e}, idempotence {idem:.2e}"


def criterion_4():
    worst_excess, checked = -np.inf, 0
    for kind in ("diagonal", "block_diagonal", "partial_trace"):
        for seed in range(3):
            m = models.random_model(kind, seed, (4, 6)[seed % 2])
            bohr = opcore.bohr_decompose(m.H0)
            w = bohr.bohr_frequencies
            Q = [bohr.projector(k) for k in range(len(w))]
            for T in (0.5, 1.0):
                KT = g.k_T(m.projection, m.H0, m.Hp, T)
                KR = g.k_R_smoothed(m.projection, m.H0, m.Hp, T)
                for i in range(len(Q)):
                    for j in range(len(Q)):
                        if i == j:
                            continue
                        lhs = opcore.superop_norm(Q[i] @ KT @ Q[j])
                        rhs = np.exp(-(w[i] - w[j]) ** 2 * T ** 2 / 4) \
                            * opcore.superop_norm(Q[i] @ KR @ Q[j])
                        worst_excess = max(worst_excess, lhs - rhs)
                        checked += 1
    return worst_excess <= 1e-9, f"{checked} Bohr pairs, max excess over bound {worst_excess:.2e}"


def criterion_5():
    # 240 bath levels: the 60-level bath recurs before t = 1/lambda^2 at lambda = 0.1
    m = models.quasi_continuum_model(seed=0, n_bath=240)
    rep = dy.convergence_sweep(m.projection, m.H0, m.Hp, [0.4, 0.2, 0.1], 1.0, "collision", 1.0, 64)
    ok = all(b < a for a, b in zip(rep.sup_errors, rep.sup_errors[1:])) and rep.monotone_decreasing
    errs = ", ".join(f"{e:.4f}" for e in rep.sup_errors)
    return ok, f"N=240, sup errors [{errs}], ratios [{', '.join(f'{r:.3f}' for r in rep.ratios)}]"


def _qubit_pair():
    HB = np.diag([0.3, -0.7]).astype(complex)
    sigma = models.gibbs(HB, 1.0)
    B = np.array([[0.2, 0.7 - 0.3j], [0.7 + 0.3j, -0.4]])
    B = B - np.trace(B @ sigma).real * I2
    SY = np.array([[0, -1j], [1j, 0]])
    C = 0.5 * B @ B
    Hp = np.kron(SX, B) + np.kron(SY, C - np.trace(C @ sigma).real * I2)
    H0 = np.kron(SZ / 2, I2) + np.kron(I2, HB)
    return H0, Hp, pj.partial_trace_projection(2, 2, sigma)


def criterion_6():
    H0, Hp, P = _qubit_pair()
    coarse = dy.nz_residual(P, H0, Hp, 0.3, 4.0, 0.01)
    fine = dy.nz_residual(P, H0, Hp, 0.3, 4.0, 0.005)
    ok = coarse <= 1e-4 and coarse / fine >= 3
    return ok, f"residual {coarse:.2e} at step 0.01, {fine:.2e} at 0.005 (ratio {coarse / fine:.2f})"


def criterion_7():
    drift, lo, path, diag = 0.0, np.inf, 0.0, 0.0
    for seed, d, nb in ((0, 4, 2), (4, 5, 3), (9, 6, 2), (12, 6, 3)):
        m = models.random_model("block_diagonal", seed, d, n_blocks=nb)
        sets = m.info["blocks"]
        system = qfgr.qfgr_system(m.H0, m.Hp, sets, 0.8, 0.4)
        diag = max(diag, system.scat.diagonal_residual)
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = X @ X.conj().T
        pops = qfgr.QuantumPopulations.from_density(rho / np.trace(rho).real, sets)
        traj = qfgr.evolve_qfgr(pops, system, np.linspace(0, 30, 16))
        drift = max(drift, traj.trace_drift())
        lo = min(lo, traj.min_eigenvalue())
        b = g.build_generator(m.projection, m.H0, m.Hp, 0.4, 0.8)
        for s in traj.samples:
            ref = opcore.apply_superop(dy.markov_propagator(b, s.time), pops.assemble())
            path = max(path, np.abs(s.assemble() - ref).max())
    H0c, Hpc, lam = 0.6 * SZ, 0.8 * SX, 0.3
    system = qfgr.qfgr_system(H0c, Hpc, [[0], [1]], 1.0, lam)
    rate = 2 * lam ** 2 * abs(g.smoothed_interaction(H0c, Hpc, 1.0)[0, 1]) ** 2
    t = np.linspace(0, 40, 41)
    pops = qfgr.QuantumPopulations.from_density(np.diag([0.9, 0.1]), [[0], [1]])
    traj = qfgr.evolve_qfgr(pops, system, t)
    p1 = np.array([s.blocks[0][0, 0].real for s in traj.samples])
    classical = np.abs(p1 - qfgr.two_level_populations(0.9, rate, t)).max()
    ok = drift <= 1e-8 and lo >= -1e-8 and path <= 1e-7 and diag <= 1e-10 and classical <= 1e-6
    return ok, (f"trace drift {drift:.1e}, min block eig {lo:.2e}, ODE vs exp {path:.1e}, "
                f"D_aa {diag:.1e}, classical limit {classical:.1e}")


def criterion_8():
    m = models.random_model("partial_trace", 0, 4)
    c = pos.davies_contrast(m.projection, m.H0, m.Hp, 0.5, 0.1, 1.0)
    ok = c.davies_min_eig <= -1e-6 and c.k_T_passes
    return ok, (f"random partial_trace seed 0, lambda=0.5, eps=0.1, T=1: Davies GKS min eig "
                f"{c.davies_min_eig:.4f}, K_T GKS min eig {c.k_T_min_eig:.4f}")


def criterion_9():
    worst = 0.0
    for seed in range(10):
        m = models.random_model("entangling", seed, (6, 8)[seed % 2])
        worst = max(worst, np.abs(m.projection.kraus_matrix() - m.projection.matrix).max())
        res = m.projection.metadata["family"].residuals()
        worst = max(worst, max(r for r, _ in res.values()))
    A = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    bad = {
        "D_n^dag D_n' = delta B_n": pj.EntanglingFamily(A, [np.diag([1.0, 0.0]), np.diag([0.6, 0.8])]),
        "sum_n A_n = 1": pj.EntanglingFamily([np.diag([1.0, 0.0])], [np.diag([1.0, 0.0])]),
        "A_n A_n' = delta A_n": pj.EntanglingFamily([I2 / np.sqrt(2)] * 2, A),
        "Tr(A_n B_n') = delta": pj.EntanglingFamily(A, [np.diag([0.0, 1.0]), np.diag([1.0, 0.0])]),
    }
    rejected = 0
    for name, fam in bad.items():
        try:
            pj.entangling_projection(fam, 2)
        except pj.ProjectionValidationError as exc:
            rejected += name in str(exc)
    P = pj.entangling_projection(pj.EntanglingFamily(A, A), 2)
    commuting = np.kron(SZ / 2, I2) + np.kron(I2, np.diag([0.2, 1.1]))
    tunnelling = np.kron(SZ / 2, I2) + np.kron(I2, np.diag([0.2, 1.1]) + 0.3 * SX)
    forward = pj.check_dynamical_compatibility(P, commuting).passed
    backward = not pj.check_dynamical_compatibility(P, tunnelling).passed
    ok = worst <= 1e-10 and rejected == 4 and forward and backward
    return ok, (f"Kraus vs closed form and family residuals {worst:.1e}, {rejected}/4 violated "
                f"families rejected, commutation iff: commuting {forward}, non-commuting "
                f"rejected {backward}")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def _line(n, ok, detail):
    return f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_acceptance(n):
    ok, detail = CRITERIA[n]()
    RESULTS[n] = _line(n, ok, detail)
    print(RESULTS[n])
    assert ok, RESULTS[n]


if __name__ == "__main__":
    failed = 0
    for n, fn in CRITERIA.items():
        ok, detail = fn()
        failed += not ok
        print(_line(n, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
