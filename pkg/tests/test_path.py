import numpy as np
import pytest

from oamgate.core import ChannelWindow, fidelity, named_target, success_probability
from oamgate.path import (
    PathLayout,
    PathModel,
    amplitude_scan,
    build_path_operator,
    channel_mask,
    grating_phase,
    path_input_field,
    phase_test,
    _to_position,
)
from oamgate.synthesis import (
    FILTERED,
    OPEN,
    GateSpec,
    OptimizerConfig,
    ShaperFunction,
    SineSeries,
    evaluate_gate,
    optimize,
)

LAYOUT = PathLayout()


def zero_params(window):
    return ((SineSeries.zeros(), SineSeries.zeros()),
            (ShaperFunction(np.zeros(window.N + 2 * window.d), window.working_span[0]),))


def random_params(window, seed):
    rng = np.random.default_rng(seed)
    s = [SineSeries(rng.uniform(0, 2 * np.pi, 3), rng.uniform(0, 2 * np.pi, 3), 2.0)
         for _ in range(2)]
    g = ShaperFunction(rng.uniform(0, 2 * np.pi, window.N + 2 * window.d), window.working_span[0])
    return tuple(s), (g,)


def test_layout_wavevector():
    assert LAYOUT.k_y == pytest.approx(np.pi * 2e-3 / (1.55e-6 * 0.4))
    # grating period 2*pi/k_y = 2*lambda*f/L, exactly n_channels samples
    assert 2 * np.pi / LAYOUT.k_y == pytest.approx(2 * 1.55e-6 * 0.4 / 2e-3)
    assert 2 * np.pi / LAYOUT.k_y / LAYOUT.dy_momentum == pytest.approx(LAYOUT.n_channels)


def test_layout_for_window():
    assert PathLayout.for_window(ChannelWindow.centered(64, 3, 2)).n_channels == 64
    assert PathLayout.for_window(ChannelWindow.centered(64, 2, 1)).n_channels == 32


def test_input_field_cases():
    y = LAYOUT.momentum_coords()
    E0 = path_input_field([1.0], [0], LAYOUT)
    assert np.allclose(np.angle(E0[np.abs(E0) > 1e-3 * np.abs(E0).max()]), 0)
    assert np.linalg.norm(E0) == pytest.approx(1)
    E1 = path_input_field([1.0], [1], LAYOUT)
    assert np.allclose(E1, E0 * np.exp(-1j * LAYOUT.k_y * y))
    with pytest.raises(ValueError):
        path_input_field([1.0], [40], LAYOUT)
    with pytest.raises(ValueError):
        path_input_field([1.0, 1.0], [0, 1], LAYOUT)


def test_tilt_focuses_at_channel_position():
    Y = LAYOUT.position_coords()
    for n in (-3, -1, 0, 2, 5):
        I = np.abs(_to_position(path_input_field([1.0], [n], LAYOUT))) ** 2
        yc = np.sum(I * Y) / np.sum(I)
        assert abs(yc - n * LAYOUT.L) < LAYOUT.dy_position / 2


def test_grating_phase():
    assert np.all(grating_phase(SineSeries.zeros(), LAYOUT) == 0)
    s = SineSeries((1.0, 0.3, 0.0), (0.2, 1.0, 0.0))
    f = grating_phase(s, LAYOUT)
    y = LAYOUT.momentum_coords()
    assert np.allclose(f, np.sin(LAYOUT.k_y * y + 0.2) + 0.3 * np.sin(2 * LAYOUT.k_y * y + 1.0))
    period = LAYOUT.n_channels
    assert np.allclose(f[:-period], f[period:])


def test_weak_first_harmonic_couples_neighbours():
    A = 0.05
    E = path_input_field([1.0], [0], LAYOUT) * np.exp(1j * grating_phase(
        SineSeries((A,), (0.0,), 1.0), LAYOUT))
    out = _to_position(E)
    spc = LAYOUT.samples_per_channel
    c = LAYOUT.samples // 2
    power = [np.sum(np.abs(out[c + n * spc - spc // 2:c + n * spc + spc // 2]) ** 2)
             for n in range(-2, 3)]
    assert power[1] == pytest.approx(power[3])
    assert power[1] > 100 * power[0]
    assert power[1] == pytest.approx((A / 2) ** 2, rel=0.01)


def test_channel_mask_strips():
    assert np.all(channel_mask(ShaperFunction(np.zeros(5), -2), LAYOUT) == 0)
    g = ShaperFunction([1.0, 2.0, 3.0], -1)
    m = channel_mask(g, LAYOUT)
    Y = LAYOUT.position_coords()
    L = LAYOUT.L
    assert np.all(m[np.abs(Y) < L / 2 - 1e-12] == 2.0)
    assert np.all(m[(Y > L / 2 + 1e-12) & (Y < 1.5 * L - 1e-12)] == 3.0)
    assert np.all(m[(Y < -L / 2 - 1e-12) & (Y > -1.5 * L + 1e-12)] == 1.0)
    assert np.all(m[np.abs(Y) > 1.5 * L + 1e-12] == 0.0)


def test_zero_parameters_identity():
    w = ChannelWindow.centered(64, 3, 2)
    V = build_path_operator(zero_params(w), w)
    assert fidelity(np.eye(3), V) >= 0.999
    m = PathModel(zero_params(w), w)
    assert np.allclose(amplitude_scan(m), np.eye(3), atol=1e-9)


@pytest.mark.parametrize("policy", [OPEN, FILTERED])
def test_matches_abstract_model(policy):
    w = ChannelWindow.centered(64, 3, 2)
    params = random_params(w, 3)
    V = build_path_operator(params, w, policy=policy)
    Va, _, _ = evaluate_gate(params, GateSpec(np.eye(3), w, 3, policy))
    assert np.max(np.abs(V - Va)) < 1e-10


def test_energy_accounting():
    w = ChannelWindow.centered(64, 3, 2)
    params = random_params(w, 8)
    m = PathModel(params, w, policy=OPEN)
    V = m.operator()
    outside = 0.0
    for j in range(3):
        c = np.zeros(3)
        c[j] = 1
        out = m.drive(c)
        total = np.sum(np.abs(out) ** 2)
        outside += (total - m.channel_powers(out).sum()) / total
    assert abs((1 - success_probability(V)) - outside / 3) < 1e-6


def test_phase_test_identity():
    w = ChannelWindow.centered(64, 2, 1)
    assert phase_test(PathModel(zero_params(w), w), np.eye(2)) == pytest.approx(1)


def test_h2_on_first_and_third_channel():
    # encoding channels two apart with the middle one acting as a guard
    w = ChannelWindow(64, 2, 1, 32, (31, 33))
    spec = GateSpec(named_target("h2"), w, 3, FILTERED)
    r = optimize(spec, OptimizerConfig(restarts=8, seed=1))
    V = build_path_operator(r, w)
    Va, F, _ = evaluate_gate(r, spec)
    assert np.max(np.abs(V - Va)) < 1e-10
    assert fidelity(spec.target, V) == pytest.approx(F, abs=1e-10)


def test_rejects_non_three_layer():
    w = ChannelWindow.centered(64, 2, 1)
    s, g = zero_params(w)
    with pytest.raises(ValueError):
        PathModel((s + s, g + g), w)
