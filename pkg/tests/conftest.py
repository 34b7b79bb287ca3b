import sys

import numpy as np
import pytest

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def rand_herm(rng, d, scale=1.0):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (X + X.conj().T) / 2


def rand_density(rng, d):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def rand_op(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def rand_superop(rng, d):
    return rand_op(rng, d * d)


def heisenberg(H0, Hp, t):
    """``exp(-i H0 t) H' exp(i H0 t)`` by direct diagonalization."""
    E, V = np.linalg.eigh(H0)
    U = (V * np.exp(-1j * E * t)) @ V.conj().T
    return U @ Hp @ U.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def qubit_pair():
    """qubit (x) qubit partial-trace model with commuting bath Gibbs state."""
    from weakcoupling import models, projections as pj
    HA = 0.5 * SZ
    HB = np.diag([0.3, -0.7]).astype(complex)
    sigma = models.gibbs(HB, 1.0)
    B = np.array([[0.2, 0.7 - 0.3j], [0.7 + 0.3j, -0.4]])
    B = B - np.trace(B @ sigma).real * I2
    Hp = np.kron(SX, B) + np.kron(SY, 0.5 * B @ B - np.trace(0.5 * B @ B @ sigma).real * I2)
    H0 = np.kron(HA, I2) + np.kron(I2, HB)
    return H0, Hp, pj.partial_trace_projection(2, 2, sigma)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
