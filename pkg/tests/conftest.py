import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_stack_oracle(domains, phase_rows):
    """Brute-force product of explicit F^H D F and D factors."""
    K = len(phase_rows[0])
    j = np.arange(K)
    F = np.exp(-2j * np.pi * np.outer(j, j) / K) / np.sqrt(K)
    V = np.eye(K, dtype=complex)
    for dom, ph in zip(domains, phase_rows):
        D = np.diag(np.exp(1j * np.asarray(ph)))
        V = V @ (F.conj().T @ D @ F if dom == "ANGLE" else D)
    return V
