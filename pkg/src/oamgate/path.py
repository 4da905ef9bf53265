"""1-D path-encoded gate model: gratings in momentum space, channel masks in focus.

Path channel n sits at ``y = n*L`` in the focal (position) planes and is
carried by the tilt ``exp(-i n k_y y)`` in the grating (momentum) planes,
with ``k_y = pi*L/(lambda*f)``. Adjacent SLMs are 2f apart, so the effective
Fourier focal length between a grating plane and a focal plane is ``2f``.

The sampled model alternates Fourier kernels (momentum -> position uses
``exp(+2i*pi*y*Y/(lambda*F))``, position -> momentum the conjugate), which is
a physical lens pair with the last grating mirrored about y = 0.
"""

from dataclasses import dataclass

import numpy as np

from .core import ChannelWindow, phase_test_fidelity
from .optics import round_half_away
from .synthesis import FILTERED, OPEN, ShaperFunction, SineSeries


@dataclass(frozen=True)
class PathLayout:
    """Geometry of the path-encoded setup (meters).

    ``n_channels`` is the number of channel slots spanned by the sampled
    focal plane; ``samples`` is the grid length.
    """

    L: float = 2e-3
    f: float = 0.4
    wavelength: float = 1.55e-6
    n_channels: int = 64
    samples: int = 2 ** 14

    def __post_init__(self):
        if min(self.L, self.f, self.wavelength) <= 0:
            raise ValueError("L, f and wavelength must be positive")
        if self.samples % self.n_channels:
            raise ValueError("samples must be a multiple of n_channels")

    @classmethod
    def for_window(cls, window: ChannelWindow, **kw) -> "PathLayout":
        """Layout whose slot count is the smallest power of two >= 8*(N + 2d)."""
        need = 8 * (window.N + 2 * window.d)
        n = 1 << max(0, int(np.ceil(np.log2(need))))
        return cls(n_channels=n, **kw)

    @property
    def k_y(self) -> float:
        return np.pi * self.L / (self.wavelength * self.f)

    @property
    def fourier_length(self) -> float:
        return 2 * self.f

    @property
    def samples_per_channel(self) -> int:
        return self.samples // self.n_channels

    @property
    def dy_position(self) -> float:
        return self.L / self.samples_per_channel

    @property
    def dy_momentum(self) -> float:
        return self.wavelength * self.fourier_length / (self.samples * self.dy_position)

    @property
    def envelope_waist(self) -> float:
        return self.samples * self.dy_momentum / 12

    def momentum_coords(self) -> np.ndarray:
        return (np.arange(self.samples) - self.samples // 2) * self.dy_momentum

    def position_coords(self) -> np.ndarray:
        return (np.arange(self.samples) - self.samples // 2) * self.dy_position


def _to_position(E):
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(E), norm="ortho"))


def _to_momentum(E):
    return np.fft.fftshift(np.fft.fft(np.fft.ifftshift(E), norm="ortho"))


def path_input_field(coeffs, channels, layout: PathLayout) -> np.ndarray:
    """Momentum-plane field ``env(y) * sum_n c_n exp(-i n k_y y)`` with unit norm.

    Parameters
    ----------
    coeffs : array_like of complex
        Normalized amplitudes.
    channels : array_like of int
        Path channel numbers n (0 on axis).
    """
    c = np.asarray(coeffs, dtype=complex)
    n = np.asarray(channels, dtype=int)
    if c.shape != n.shape:
        raise ValueError("one coefficient per channel required")
    if abs(np.vdot(c, c).real - 1) > 1e-9:
        raise ValueError("coefficients must be normalized")
    if np.any(np.abs(n) >= layout.n_channels // 2):
        raise ValueError("channel number exceeds the grid Nyquist limit")
    y = layout.momentum_coords()
    env = np.exp(-(y / layout.envelope_waist) ** 2)
    E = env * (np.exp(-1j * layout.k_y * np.outer(y, n)) @ c)
    return E / np.linalg.norm(env)


def grating_phase(series: SineSeries, layout: PathLayout, offset: float = 0.0) -> np.ndarray:
    """``f(y) = sum A_n sin(n (k_y y + offset) + theta_n)`` on the momentum grid."""
    return series(layout.k_y * layout.momentum_coords() + offset)


def channel_mask(g: ShaperFunction, layout: PathLayout, ref_channel: int = 0) -> np.ndarray:
    """Strip phases ``g(ref_channel + round(Y/L))`` on the position grid."""
    j = round_half_away(layout.position_coords() / layout.L) + ref_channel
    return g.value(j)


def channel_aperture(window: ChannelWindow, layout: PathLayout, ref_channel: int) -> np.ndarray:
    """Transmission 1 on the working-window strips, 0 elsewhere."""
    j = round_half_away(layout.position_coords() / layout.L) + ref_channel
    lo, hi = window.working_span
    return ((j >= lo) & (j <= hi)).astype(float)


class PathModel:
    """Sampled three-layer path gate.

    Parameters
    ----------
    result : OptimizationResult or (series, shapers)
        Abstract three-layer parameters in product order.
    window : ChannelWindow
        Abstract window; DFT channel ``ref_channel`` is the on-axis path.
    layout : PathLayout
    policy : {"OPEN", "FILTERED"}
        FILTERED places an aperture on the working strips at the mask plane.
    ref_channel : int, optional
        Defaults to ``window.K // 2``.
    """

    def __init__(self, result, window: ChannelWindow, layout: PathLayout | None = None,
                 policy: str = FILTERED, ref_channel: int | None = None):
        series, shapers = (result.series, result.shapers) if hasattr(result, "series") else result
        if len(series) != 2 or len(shapers) != 1:
            raise ValueError("the path model implements three-layer gates")
        self.window = window
        self.layout = layout or PathLayout.for_window(window)
        self.ref = window.K // 2 if ref_channel is None else int(ref_channel)
        lay = self.layout
        if window.N + 2 * window.d > lay.n_channels:
            raise ValueError("working window does not fit in the sampled focal plane")
        # abstract angle bins span [-pi, pi): grating argument is k_y*y - pi
        self.first = np.exp(1j * grating_phase(series[1], lay, -np.pi))
        self.last = np.exp(1j * grating_phase(series[0], lay, -np.pi))
        mask = np.exp(1j * channel_mask(shapers[0], lay, self.ref))
        if policy == FILTERED:
            mask = mask * channel_aperture(window, lay, self.ref)
        elif policy != OPEN:
            raise ValueError(f"unknown policy {policy!r}")
        self.mask = mask
        self.policy = policy
        self.channels = np.asarray(window.channel_indices) - self.ref
        self._spot = _to_position(path_input_field([1.0], [0], lay))
        self._center = lay.samples // 2

    def drive(self, coeffs, channels=None) -> np.ndarray:
        """Readout-plane field for an input superposition (default: encoding channels)."""
        ch = self.channels if channels is None else np.asarray(channels)
        E = path_input_field(coeffs, ch, self.layout) * self.first
        E = _to_position(E) * self.mask
        E = _to_momentum(E) * self.last
        return _to_position(E)

    def _bin(self, n):
        spc = self.layout.samples_per_channel
        lo = self._center + n * spc - spc // 2
        return slice(lo, lo + spc)

    def channel_amplitudes(self, out: np.ndarray, channels=None) -> np.ndarray:
        """Overlap with the on-axis spot shifted to each channel, within its width-L bin."""
        ch = self.channels if channels is None else np.asarray(channels)
        ref = self._spot[self._bin(0)]
        ref = ref / np.linalg.norm(ref)
        return np.array([np.vdot(ref, out[self._bin(int(n))]) for n in ch])

    def channel_powers(self, out: np.ndarray, channels=None) -> np.ndarray:
        ch = self.channels if channels is None else np.asarray(channels)
        return np.array([np.sum(np.abs(out[self._bin(int(n))]) ** 2) for n in ch])

    def operator(self) -> np.ndarray:
        N = self.channels.size
        V = np.zeros((N, N), dtype=complex)
        for j in range(N):
            c = np.zeros(N)
            c[j] = 1
            V[:, j] = self.channel_amplitudes(self.drive(c))
        return V


def build_path_operator(result, window: ChannelWindow, layout: PathLayout | None = None,
                        policy: str = FILTERED) -> np.ndarray:
    """N x N operator of the sampled path gate (columns from basis inputs)."""
    return PathModel(result, window, layout, policy).operator()


def amplitude_scan(model: PathModel) -> np.ndarray:
    """Output channel magnitudes for basis inputs, each column scaled by
    the square root of that input's total output power."""
    N = model.channels.size
    M = np.zeros((N, N))
    for j in range(N):
        c = np.zeros(N)
        c[j] = 1
        out = model.drive(c)
        total = np.sum(np.abs(out) ** 2)
        M[:, j] = np.abs(model.channel_amplitudes(out)) / np.sqrt(total)
    return M


def phase_test(model: PathModel, U) -> float:
    """Drive the columns of U^H, record output magnitudes of V U^H and score them."""
    U = np.asarray(U, dtype=complex)
    Uh = U.conj().T
    N = U.shape[0]
    M = np.zeros((N, N))
    for j in range(N):
        out = model.drive(Uh[:, j])
        M[:, j] = np.abs(model.channel_amplitudes(out))
    return phase_test_fidelity(U, M)
