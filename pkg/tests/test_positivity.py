import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weakcoupling import generators as g
from weakcoupling import models, opcore
from weakcoupling import positivity as pos
from weakcoupling import projections as pj

from conftest import SX, SY, SZ, rand_herm, rand_op, rand_superop


def _transpose_map(d):
    S = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1
            S[:, opcore.vec(E).argmax()] = opcore.vec(E.T)
    return S


def _random_lindbladian(rng, m, n_jumps=2, sizes=None):
    H = rand_herm(rng, m)
    one = np.eye(m)
    S = -1j * (np.kron(one, H) - np.kron(H.T, one))
    for _ in range(n_jumps):
        L = rand_op(rng, m)
        LL = L.conj().T @ L
        S += np.kron(L.conj(), L) - 0.5 * (np.kron(one, LL) + np.kron(LL.T, one))
    return S


def test_choi_identity_channel():
    C = pos.choi(np.eye(4))
    w = np.linalg.eigvalsh(C)
    assert np.allclose(w, [0, 0, 0, 2])
    psi = np.array([1, 0, 0, 1.0])
    assert np.allclose(C, np.outer(psi, psi))


def test_transpose_not_cp_but_tp():
    T = _transpose_map(2)
    assert pos.choi_min_eigenvalue(T) == pytest.approx(-1.0)
    assert not pos.is_cp(T)
    assert pos.is_trace_preserving(T)


def test_unitary_conjugation_cp_tp(rng):
    U = models.random_unitary(rng, 3)
    S = opcore.sandwich(U, U.conj().T)
    assert pos.is_cp(S) and pos.is_trace_preserving(S)


def test_choi_round_trip_and_linearity(rng):
    A, B = rand_superop(rng, 3), rand_superop(rng, 3)
    assert np.allclose(pos.choi_to_superop(pos.choi(A)), A)
    assert np.abs(pos.choi(2 * A - 1j * B) - (2 * pos.choi(A) - 1j * pos.choi(B))).max() <= 1e-12


@pytest.mark.parametrize("kind", ["diagonal", "block_diagonal", "partial_trace", "entangling"])
def test_kraus_projections_are_cp(kind):
    for seed in range(3):
        m = models.random_model(kind, seed, 4 if kind != "entangling" else 8)
        assert pos.choi_min_eigenvalue(m.projection.matrix) >= -1e-10


def test_gks_hamiltonian_only(rng):
    H = rand_herm(rng, 3)
    form = pos.gks_canonical(opcore.commutator_superop(H))
    assert np.abs(form.gks_matrix).max() < 1e-12
    diff = form.effective_hamiltonian - H
    assert np.abs(diff - np.trace(diff) / 3 * np.eye(3)).max() < 1e-12


def test_gks_ktilde_rank_one(rng):
    H0, Hp = rand_herm(rng, 3), rand_herm(rng, 3)
    form = pos.gks_canonical(g.ktilde_T(H0, Hp, 1.0))
    w = np.linalg.eigvalsh(form.gks_matrix)
    assert w.min() >= -1e-10
    assert np.sum(w > 1e-10 * w.max()) == 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 4))
def test_gks_round_trip_full_algebra(seed, m):
    rng = np.random.default_rng(seed)
    L = _random_lindbladian(rng, m)
    form = pos.gks_canonical(L)
    assert form.reconstruction_residual <= 1e-9
    assert form.min_eigenvalue >= -1e-9
    assert np.abs(form.anticommutator).max() <= 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 4))
def test_gks_round_trip_hermiticity_preserving(seed, m):
    # hermiticity-preserving but not CP: a signed sum of Lindblad terms
    rng = np.random.default_rng(seed)
    L = _random_lindbladian(rng, m, 1) - 1.5 * _random_lindbladian(rng, m, 1)
    form = pos.gks_canonical(L)
    assert form.reconstruction_residual <= 1e-9


def test_gks_block_algebra_round_trip(rng):
    sec_model = models.random_model("block_diagonal", 3, 5, n_blocks=3)
    b = g.build_generator(sec_model.projection, sec_model.H0, sec_model.Hp, 0.3, 1.0)
    sizes = sec_model.projection.sectors.block_sizes
    form = pos.gks_canonical(b.reduced_generator, sizes)
    assert form.reconstruction_residual <= 1e-9
    assert form.min_eigenvalue >= -1e-8


def test_gks_rejects_non_hermiticity_preserving(rng):
    S = 1j * np.eye(4)
    with pytest.raises(ValueError, match="hermiticity"):
        pos.gks_canonical(S)
    with pytest.raises(ValueError, match="block sizes"):
        pos.gks_canonical(np.eye(9), (1, 1))


def test_semigroup_audit_passes_and_corrupt_fails():
    m = models.random_model("block_diagonal", 0, 4)
    b = g.build_generator(m.projection, m.H0, m.Hp, 0.3, 1.0)
    good = pos.cp_semigroup_audit(b)
    assert good.passed, good.rows()
    bad = pos.cp_semigroup_audit(b.corrupted())
    assert not bad.passed
    assert bad.generator_min_eig < -1e-8
    assert min(e["choi_min_eig"] for e in bad.entries) < -1e-8


def test_semigroup_audit_lambda_zero(qubit_pair):
    H0, Hp, P = qubit_pair
    a = pos.cp_semigroup_audit(g.build_generator(P, H0, Hp, 0.0, 1.0))
    assert a.passed
    assert abs(a.generator_min_eig) < 1e-12


def test_davies_contrast_committed_model():
    m = models.random_model("partial_trace", 0, 4)
    c = pos.davies_contrast(m.projection, m.H0, m.Hp, 0.5, 0.1, 1.0)
    assert c.davies_min_eig <= -1e-6 and c.davies_fails
    assert c.k_T_passes


def test_gell_mann_orthonormal():
    for m in (2, 3, 4):
        B = pos.gell_mann_basis(m)
        assert len(B) == m * m - 1
        G = np.array([[np.trace(a.conj().T @ b) for b in B] for a in B])
        assert np.allclose(G, np.eye(m * m - 1))
        assert all(abs(np.trace(b)) < 1e-14 for b in B)
