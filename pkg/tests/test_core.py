import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_stack_oracle
from oamgate.core import (
    ANGLE,
    SPECTRUM,
    ChannelWindow,
    DiagonalPhase,
    LayerStack,
    central_block,
    circulant_from_phases,
    compose_stack,
    dft_matrix,
    fidelity,
    hadamard,
    haar_unitary,
    is_unitary,
    named_target,
    phase_test_fidelity,
    success_probability,
)


def test_dft_small_cases():
    assert np.allclose(dft_matrix(1), [[1]])
    assert np.allclose(dft_matrix(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    assert np.allclose(dft_matrix(2), hadamard(2))
    F = dft_matrix(4)
    assert np.max(np.abs(F @ F.conj().T - np.eye(4))) < 1e-14


def test_dft_sign():
    F = dft_matrix(8)
    assert np.isclose(F[1, 1], np.exp(-2j * np.pi / 8) / np.sqrt(8))


def test_circulant_matches_conjugated_diagonal(rng):
    ph = rng.uniform(0, 2 * np.pi, 16)
    F = dft_matrix(16)
    assert np.allclose(circulant_from_phases(ph), F.conj().T @ np.diag(np.exp(1j * ph)) @ F,
                       atol=1e-14)


def test_zero_stack_is_identity():
    for M in (1, 2, 3, 5):
        layers = [(ANGLE if i % 2 == 0 else SPECTRUM, np.zeros(8)) for i in range(M)]
        assert np.allclose(compose_stack(LayerStack(layers)), np.eye(8), atol=1e-15)


def test_three_layer_matches_oracle_k4(rng):
    ph = rng.uniform(-np.pi, np.pi, (3, 4))
    V = compose_stack(LayerStack.three_layer(*ph))
    ref = dense_stack_oracle((ANGLE, SPECTRUM, ANGLE), ph)
    assert np.max(np.abs(V - ref)) < 1e-12


def test_stack_rejects_bad_layers():
    with pytest.raises(ValueError):
        LayerStack(((ANGLE, np.zeros(4)), (SPECTRUM, np.zeros(5))))
    with pytest.raises(ValueError):
        LayerStack(((ANGLE, np.zeros(4)), (ANGLE, np.zeros(4))))
    with pytest.raises(ValueError):
        LayerStack(())


def test_projector_placement():
    # a single SPECTRUM layer between projectors keeps only window channels
    w = ChannelWindow.centered(8, 2, 1)
    V = compose_stack(LayerStack(((SPECTRUM, np.full(8, 0.3)),)), w.projector_mask())
    diag = np.diag(V)
    assert np.allclose(diag[w.working_indices], np.exp(0.3j))
    assert np.count_nonzero(np.abs(diag) > 0) == w.working_indices.size


def test_clock_shaper_is_angle_rotation():
    # exp(i l theta) on spectrum index equals a cyclic shift of angle bins
    K, s = 64, 8
    theta = 2 * np.pi * s / K
    assert np.isclose(theta, np.pi / 4)
    l = np.arange(K) - K // 2
    D = np.diag(np.exp(1j * theta * l))
    F = dft_matrix(K)
    shift = np.roll(np.eye(K), s, axis=0)
    rot = np.exp(-1j * theta * (K // 2)) * F.conj().T @ shift @ F
    assert np.max(np.abs(D - rot)) < 1e-12


def test_window_centered_geometry():
    w2 = ChannelWindow.centered(64, 2, 3)
    assert w2.channel_indices == (31, 32)
    assert w2.working_span == (28, 35)
    w3 = ChannelWindow.centered(64, 3, 2)
    assert w3.channel_indices == (31, 32, 33)
    ws = ChannelWindow.centered(64, 3, 0, stride=4)
    assert ws.channel_indices == (28, 32, 36)
    assert ws.stride == 4


def test_window_validation():
    with pytest.raises(ValueError):
        ChannelWindow(8, 2, 4, 4, (3, 4))
    with pytest.raises(ValueError):
        ChannelWindow(64, 2, 3, 1, (0, 1))
    with pytest.raises(ValueError):
        ChannelWindow(64, 3, 0, 32, (31, 33, 34))


def test_central_block():
    w = ChannelWindow.centered(64, 2, 3)
    assert np.allclose(central_block(np.eye(64), w), np.eye(2))
    F = dft_matrix(64)
    blk = central_block(F, w)
    j = np.array([31, 32])
    assert np.allclose(blk, np.exp(-2j * np.pi * np.outer(j, j) / 64) / 8)
    ws = ChannelWindow.centered(64, 3, 0, stride=4)
    assert np.allclose(central_block(np.diag(np.arange(64.0)), ws), np.diag([28.0, 32.0, 36.0]))
    with pytest.raises(ValueError):
        central_block(np.eye(8), w)


def test_fidelity_cases(rng):
    U = haar_unitary(3, 7)
    assert np.isclose(fidelity(U, U), 1)
    assert np.isclose(fidelity(U, np.exp(0.7j) * U), 1)
    assert np.isclose(fidelity(U, 0.2 * U), 1)
    X = np.array([[0, 1], [1, 0]])
    assert fidelity(np.eye(2), X) == 0
    V = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.isclose(fidelity(U, V), fidelity(V, U))
    with pytest.raises(ValueError):
        fidelity(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        fidelity(np.eye(2), np.zeros((2, 2)))


def test_success_probability_cases():
    assert success_probability(np.eye(3)) == 1
    assert np.isclose(success_probability(np.eye(2) / np.sqrt(2)), 0.5)
    with pytest.raises(ValueError):
        success_probability(np.ones((2, 3)))


def test_success_probability_permutation_leak():
    # permutation that sends one encoding channel outside the window
    K = 8
    w = ChannelWindow.centered(K, 2, 0)
    P = np.eye(K)[:, [0, 1, 2, 7, 4, 5, 6, 3]]
    assert success_probability(central_block(np.eye(K), w)) == 1
    assert np.isclose(success_probability(central_block(P, w)), 0.5)


def test_phase_test_fidelity():
    assert phase_test_fidelity(np.eye(3), np.eye(3)) == 1
    assert np.isclose(phase_test_fidelity(np.eye(3), np.full((3, 3), 1 / np.sqrt(3))), 1 / 3)
    with pytest.raises(ValueError):
        phase_test_fidelity(np.eye(2), -np.eye(2))


def test_diagonal_phase_modulo():
    a = DiagonalPhase([0.1, 2.0])
    b = DiagonalPhase([0.1 + 2 * np.pi, 2.0 - 4 * np.pi])
    assert a.equivalent(b)
    assert not a.equivalent(DiagonalPhase([0.1, 2.1]))
    assert is_unitary(a.operator())


def test_named_targets():
    w = np.exp(2j * np.pi / 3)
    H3 = np.array([[1, 1, 1], [1, w, w * w], [1, w * w, w]]) / np.sqrt(3)
    assert np.allclose(named_target("hadamard3"), H3)
    assert np.allclose(named_target("identity", 3), np.eye(3))
    assert np.allclose(named_target("random-haar", 3, 11), named_target("random-haar", 3, 11))
    assert is_unitary(named_target("dft5"), 1e-12)
    with pytest.raises(ValueError):
        named_target("nope", 2)


@settings(max_examples=40, deadline=None)
@given(K=st.integers(2, 64), M=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_composed_stack_unitary(K, M, seed):
    rng = np.random.default_rng(seed)
    layers = [(ANGLE if i % 2 == 0 else SPECTRUM, rng.uniform(-10, 10, K)) for i in range(M)]
    V = compose_stack(LayerStack(layers))
    assert np.max(np.abs(V.conj().T @ V - np.eye(K))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 5))
def test_fidelity_bounded(seed, n):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    V = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    f = fidelity(U, V)
    assert 0 <= f <= 1
