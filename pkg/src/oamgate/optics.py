"""Scalar-wave simulation of OAM gates: masks, sorter, propagation, mode matching.

Array axis 0 is the x coordinate and axis 1 is y. The log-polar sorter maps
the azimuth onto y, so OAM charge l focuses at ``y = f*lambda*l/(2*pi*a)``.
2f Fourier stages are exact centered FFTs; with the default focal length
``f = W*pitch**2/lambda`` the focal-plane pitch equals the input pitch.
"""

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core import DiagonalPhase  # noqa: F401  (re-exported for mask builders)
from .synthesis import SineSeries, ShaperFunction


class SamplingError(ValueError):
    """Raised when a propagation step would alias."""


@lru_cache(maxsize=4)
def _coords(shape, pitch):
    x = (np.arange(shape[0]) - shape[0] // 2) * pitch
    y = (np.arange(shape[1]) - shape[1] // 2) * pitch
    X, Y = np.meshgrid(x, y, indexing="ij")
    R = np.hypot(X, Y)
    TH = np.arctan2(Y, X)
    for a in (X, Y, R, TH):
        a.setflags(write=False)
    return X, Y, R, TH


@dataclass(frozen=True)
class ScalarField:
    """Sampled complex field on a square-pixel grid.

    Power is ``sum(|E|^2) * pitch**2``.
    """

    data: np.ndarray
    pitch: float
    wavelength: float

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 2:
            raise ValueError("field data must be 2-D")
        if self.pitch <= 0 or self.wavelength <= 0:
            raise ValueError("pitch and wavelength must be positive")
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    def power(self) -> float:
        return float(np.vdot(self.data, self.data).real * self.pitch ** 2)

    def coords(self):
        """``X, Y, R, TH`` grids (meters, radians), origin at the center pixel."""
        return _coords(self.shape, self.pitch)

    def with_data(self, data) -> "ScalarField":
        return replace(self, data=data)

    def intensity(self) -> np.ndarray:
        return np.abs(self.data) ** 2


@dataclass(frozen=True)
class PhaseMask:
    """Real phase profile applied as ``exp(i*phases)``."""

    phases: np.ndarray
    pitch: float

    def __post_init__(self):
        p = np.asarray(self.phases, dtype=float)
        if p.ndim != 2 or not np.all(np.isfinite(p)):
            raise ValueError("mask phases must be a finite 2-D array")
        object.__setattr__(self, "phases", p)

    def apply(self, field_: ScalarField, conjugate: bool = False) -> ScalarField:
        if field_.shape != self.phases.shape:
            raise ValueError("mask and field shapes differ")
        s = -1j if conjugate else 1j
        return field_.with_data(field_.data * np.exp(s * self.phases))

    def wrapped(self) -> np.ndarray:
        return np.mod(self.phases, 2 * np.pi)


@dataclass(frozen=True)
class SorterParams:
    """Log-polar sorter scale ``a``, unwrap offset ``b`` and Fourier lens ``f`` (meters)."""

    a: float
    b: float
    f: float

    def __post_init__(self):
        if min(self.a, self.b, self.f) <= 0:
            raise ValueError("a, b and f must be positive")

    @classmethod
    def default(cls, width: int, pitch: float, wavelength: float) -> "SorterParams":
        a = width * pitch / (4 * np.pi)
        return cls(a, a, width * pitch ** 2 / wavelength)

    def check_grid(self, width: int, pitch: float):
        if 2 * np.pi * self.a > width * pitch:
            raise ValueError("unwrapped strip 2*pi*a is wider than the grid")

    def spacing(self, wavelength: float) -> float:
        """Focal-plane distance between adjacent charges."""
        return self.f * wavelength / (2 * np.pi * self.a)


@dataclass(frozen=True)
class OamBasisSpec:
    """OAM modes ``R(r) exp(i l phi)`` sharing one annular Gaussian profile."""

    charges: tuple
    ring_radius: float
    ring_width: float
    stride: int = 1

    def __post_init__(self):
        ch = tuple(int(c) for c in self.charges)
        if len(set(ch)) != len(ch) or not ch:
            raise ValueError("charges must be distinct and non-empty")
        if self.ring_radius <= 0 or self.ring_width <= 0 or self.stride < 1:
            raise ValueError("ring radius, width and stride must be positive")
        object.__setattr__(self, "charges", ch)

    @classmethod
    def default(cls, charges, width: int, pitch: float, stride: int = 1) -> "OamBasisSpec":
        r0 = 0.5 * (width // 2) * pitch
        return cls(tuple(charges), r0, r0 / 4, stride)

    def check_grid(self, pitch: float):
        lmax = max(abs(c) for c in self.charges)
        if lmax >= np.pi * self.ring_radius / pitch:
            raise ValueError(f"charge {lmax} exceeds the azimuthal Nyquist limit of the ring")


@dataclass(frozen=True)
class ChannelMap:
    """Physical charge of DFT channel j: ``l = stride*(j - ref_channel) + ref_charge``."""

    stride: int = 1
    ref_channel: int = 32
    ref_charge: int = 0

    def charge(self, j):
        return self.stride * (np.asarray(j) - self.ref_channel) + self.ref_charge

    def channel_coordinate(self, l):
        """Fractional channel index for a (possibly fractional) charge coordinate."""
        return (np.asarray(l, dtype=float) - self.ref_charge) / self.stride + self.ref_channel


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(int)


# -- fields ------------------------------------------------------------------

def _ring(basis: OamBasisSpec, shape, pitch):
    _, _, R, _ = _coords(shape, pitch)
    env = np.exp(-((R - basis.ring_radius) ** 2) / basis.ring_width ** 2)
    return env / (np.linalg.norm(env) * pitch)


def oam_mode(l: int, basis: OamBasisSpec, shape, pitch) -> np.ndarray:
    _, _, _, TH = _coords(shape, pitch)
    return _ring(basis, shape, pitch) * np.exp(1j * l * TH)


def make_oam_superposition(coeffs, basis: OamBasisSpec, shape, pitch: float,
                           wavelength: float) -> ScalarField:
    """Field ``sum_l c_l R(r) exp(i l phi)`` with unit power."""
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != (len(basis.charges),):
        raise ValueError("one coefficient per charge required")
    if abs(np.vdot(c, c).real - 1) > 1e-9:
        raise ValueError("coefficients must be normalized")
    basis.check_grid(pitch)
    shape = tuple(shape)
    _, _, _, TH = _coords(shape, pitch)
    ring = _ring(basis, shape, pitch)
    data = np.zeros(shape, dtype=complex)
    for cl, l in zip(c, basis.charges):
        data += cl * np.exp(1j * l * TH)
    return ScalarField(ring * data, pitch, wavelength)


def mode_match_spectrum(field_: ScalarField, basis: OamBasisSpec, charges=None) -> np.ndarray:
    """Overlaps ``<mode_l | E> * pitch**2`` for each charge (default: the basis charges)."""
    charges = basis.charges if charges is None else charges
    _, _, _, TH = field_.coords()
    ring = _ring(basis, field_.shape, field_.pitch)
    w = ring * field_.data
    return np.array([np.vdot(np.exp(1j * l * TH), w) for l in charges]) * field_.pitch ** 2


# -- propagation -------------------------------------------------------------

def _ft(a):
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(a), norm="ortho"))


def _ift(a):
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(a), norm="ortho"))


def fourier_stage(field_: ScalarField, f: float, inverse: bool = False) -> ScalarField:
    """Exact 2f lens system: the output is the scaled Fourier transform.

    Output pitch is ``lambda*f/(W*pitch)``. ``inverse`` undoes a forward
    stage exactly (used for the reverse sorter).
    """
    W = field_.shape[0]
    out_pitch = field_.wavelength * f / (W * field_.pitch)
    if inverse:
        return ScalarField(1j * _ift(field_.data), out_pitch, field_.wavelength)
    return ScalarField(-1j * _ft(field_.data), out_pitch, field_.wavelength)


def propagate(field_: ScalarField, distance: float, pad: int = 2,
              spectral_tol: float = 1e-9, return_loss: bool = False):
    """Paraxial angular-spectrum propagation with a hard aperture at the grid edge.

    The field is zero-padded by ``pad`` to suppress wraparound; power that
    lands outside the original grid is cropped and reported as clipping
    loss. The transfer-function chirp is band-limited to frequencies where
    it is sampled above Nyquist; if more than ``spectral_tol`` of the power
    lies beyond that limit a :class:`SamplingError` is raised.
    """
    if distance == 0:
        return (field_, 0.0) if return_loss else field_
    W, H = field_.shape
    P = max(1, int(pad))
    big = np.zeros((P * W, P * H), dtype=complex)
    ox, oy = (P * W - W) // 2, (P * H - H) // 2
    big[ox:ox + W, oy:oy + H] = field_.data
    p = field_.pitch
    lam = field_.wavelength
    fx = np.fft.fftfreq(P * W, p)[:, None]
    fy = np.fft.fftfreq(P * H, p)[None, :]
    spec = np.fft.fft2(big)
    z = abs(distance)
    flim_x = P * W * p / (2 * lam * z)
    flim_y = P * H * p / (2 * lam * z)
    keep = (np.abs(fx) <= flim_x) & (np.abs(fy) <= flim_y)
    total = np.vdot(spec, spec).real
    if total > 0:
        lost = np.sum(np.abs(spec[~np.broadcast_to(keep, spec.shape)]) ** 2) / total
        if lost > spectral_tol:
            raise SamplingError(
                f"{lost:.2e} of the spectrum exceeds the band limit for z={distance:g} m; "
                "increase pad or reduce the distance")
    Hz = np.exp(-1j * np.pi * lam * distance * (fx ** 2 + fy ** 2)) * keep
    out = np.fft.ifft2(spec * Hz)
    crop = out[ox:ox + W, oy:oy + H]
    res = field_.with_data(crop)
    p_in = field_.power()
    loss = 0.0 if p_in == 0 else max(0.0, 1 - res.power() / p_in)
    return (res, loss) if return_loss else res


def apply_lens(field_: ScalarField, focal_length: float) -> ScalarField:
    """Thin lens ``exp(-i*pi*r**2/(lambda*f))``; infinite focal length is identity."""
    if np.isinf(focal_length):
        return field_
    X, Y, _, _ = field_.coords()
    return field_.with_data(
        field_.data * np.exp(-1j * np.pi * (X ** 2 + Y ** 2) / (field_.wavelength * focal_length)))


def asm_fourier_stage(field_: ScalarField, f: float, pad: int = 2) -> ScalarField:
    """2f stage as free space f, thin lens f, free space f (slow reference path)."""
    return propagate(apply_lens(propagate(field_, f, pad), f), f, pad)


# -- masks -------------------------------------------------------------------

def sorter_masks(params: SorterParams, shape, pitch: float, wavelength: float):
    """Unwrapper ``phi1(x, y)`` and phase corrector ``phi2(u, v)``.

    The center pixel of ``phi1`` (log/arctan singularity) is set to 0.
    """
    X, Y, R, TH = _coords(tuple(shape), pitch)
    a, b, f = params.a, params.b, params.f
    k = 2 * np.pi * a / (wavelength * f)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = k * (Y * TH - X * np.log(R / b) + X)
    phi1[R == 0] = 0.0
    phi2 = -2 * np.pi * a * b / (wavelength * f) * np.exp(-X / a) * np.cos(Y / a)
    return PhaseMask(phi1, pitch), PhaseMask(phi2, pitch)


def focus_position(l, params: SorterParams, wavelength: float):
    """Focal-plane y coordinate of charge l."""
    return params.f * wavelength * np.asarray(l) / (2 * np.pi * params.a)


def oam_shaper_mask(g: ShaperFunction, params: SorterParams, shape, pitch: float,
                    wavelength: float, channel_map: ChannelMap | None = None) -> PhaseMask:
    """Focal-plane strips carrying ``g`` of the channel focused there.

    The charge coordinate ``2*pi*a*y/(f*lambda)`` is mapped to a channel
    through ``channel_map`` and rounded half away from zero, so each channel
    owns a strip one channel wide (``stride`` charges) centered on its focus.
    """
    cmap = channel_map or ChannelMap()
    _, Y, _, _ = _coords(tuple(shape), pitch)
    lcoord = 2 * np.pi * params.a * Y[0] / (params.f * wavelength)
    jf = cmap.channel_coordinate(lcoord) - cmap.ref_channel
    j = round_half_away(jf) + cmap.ref_channel
    col = g.value(j)
    return PhaseMask(np.broadcast_to(col[None, :], tuple(shape)).copy(), pitch)


def angular_mask(func, shape, pitch: float) -> PhaseMask:
    """Radius-independent mask ``f(phi)`` for a callable or SineSeries."""
    _, _, _, TH = _coords(tuple(shape), pitch)
    return PhaseMask(np.asarray(func(TH), dtype=float), pitch)


def physical_angle_function(series: SineSeries, stride: int = 1):
    """Angle function ``phi -> f(pi - stride*phi)`` realizing an abstract ANGLE layer.

    The abstract layer acts on DFT channels; channel j is carried by charge
    ``stride*j + const``, and the DFT sign convention reflects the angle.
    """
    return lambda phi: series(np.pi - stride * np.asarray(phi))


# -- pipelines ---------------------------------------------------------------

@dataclass
class PipelineResult:
    output: ScalarField
    snapshots: list = field(default_factory=list)
    power_log: list = field(default_factory=list)
    clipping_loss: float = 0.0


def _sort(E, m1, m2, params, stage, log):
    E = m1.apply(E)
    log.append(("phi1", E.power()))
    E = fourier_stage(E, params.f) if stage == "fft" else asm_fourier_stage(E, params.f)
    log.append(("fourier1", E.power()))
    E = m2.apply(E)
    log.append(("phi2", E.power()))
    snap = E
    E = fourier_stage(E, params.f) if stage == "fft" else asm_fourier_stage(E, params.f)
    log.append(("focal", E.power()))
    return E, snap


def _unsort(E, m1, m2, params, log):
    E = fourier_stage(E, params.f, inverse=True)
    E = m2.apply(E, conjugate=True)
    E = fourier_stage(E, params.f, inverse=True)
    E = m1.apply(E, conjugate=True)
    log.append(("unsorted", E.power()))
    return E


def run_shaper_pipeline(field_: ScalarField, g: ShaperFunction, params: SorterParams,
                        channel_map: ChannelMap | None = None, stage: str = "fft",
                        masks=None) -> PipelineResult:
    """Sorter, focal-plane shaper mask, reverse sorter.

    Snapshots (in order): input, after phi1, after phi2, focal plane before
    the shaper, focal plane after the shaper, output. The reverse sorter is
    the exact inverse of the forward one.
    """
    params.check_grid(field_.shape[1], field_.pitch)
    if masks is None:
        masks = sorter_masks(params, field_.shape, field_.pitch, field_.wavelength)
    m1, m2 = masks
    p0 = field_.power()
    log = [("input", p0)]
    snaps = [field_, m1.apply(field_)]
    focal, after2 = _sort(field_, m1, m2, params, stage, log)
    snaps.append(after2)
    snaps.append(focal)
    shaper = oam_shaper_mask(g, params, focal.shape, focal.pitch, focal.wavelength, channel_map)
    shaped = shaper.apply(focal)
    log.append(("shaper", shaped.power()))
    snaps.append(shaped)
    out = _unsort(shaped, m1, m2, params, log)
    snaps.append(out)
    loss = 0.0 if p0 == 0 else max(0.0, 1 - out.power() / p0)
    return PipelineResult(out, snaps, log, loss)


def run_three_layer(field_: ScalarField, first: SineSeries, g: ShaperFunction,
                    last: SineSeries, params: SorterParams,
                    channel_map: ChannelMap | None = None, masks=None) -> PipelineResult:
    """Angular mask, shaper pipeline, angular mask, in the order light meets them.

    ``first`` is the rightmost ANGLE layer of the abstract product and
    ``last`` the leftmost. Snapshots: input, after the first angular mask,
    focal plane before and after the shaper, after the reverse sorter,
    output.
    """
    cmap = channel_map or ChannelMap()
    shape, pitch = field_.shape, field_.pitch
    m_first = angular_mask(physical_angle_function(first, cmap.stride), shape, pitch)
    m_last = angular_mask(physical_angle_function(last, cmap.stride), shape, pitch)
    E1 = m_first.apply(field_)
    mid = run_shaper_pipeline(E1, g, params, cmap, masks=masks)
    out = m_last.apply(mid.output)
    snaps = [field_, E1, mid.snapshots[3], mid.snapshots[4], mid.output, out]
    log = [("input", field_.power()), ("angular1", E1.power())] + mid.power_log[1:] \
        + [("angular2", out.power())]
    p0 = field_.power()
    loss = 0.0 if p0 == 0 else max(0.0, 1 - out.power() / p0)
    return PipelineResult(out, snaps, log, loss)


def wave_gate_operator(result, window, channel_map: ChannelMap, shape=(1080, 1080),
                       pitch: float = 8e-6, wavelength: float = 1.55e-6,
                       params: SorterParams | None = None, ring=None) -> np.ndarray:
    """N x N operator measured by driving each encoding charge through the field model.

    ``result`` holds a three-layer gate (``series``, ``shapers``) in product
    order. Entry ``[i, j]`` is the overlap of output mode i with the field
    produced from input mode j.
    """
    params = params or SorterParams.default(shape[0], pitch, wavelength)
    charges = [int(channel_map.charge(j)) for j in window.channel_indices]
    if ring is None:
        basis = OamBasisSpec.default(charges, shape[0], pitch, channel_map.stride)
    else:
        basis = OamBasisSpec(tuple(charges), ring[0], ring[1], channel_map.stride)
    masks = sorter_masks(params, shape, pitch, wavelength)
    N = len(charges)
    V = np.zeros((N, N), dtype=complex)
    for j in range(N):
        c = np.zeros(N)
        c[j] = 1
        E = make_oam_superposition(c, basis, shape, pitch, wavelength)
        res = run_three_layer(E, result.series[1], result.shapers[0], result.series[0],
                              params, channel_map, masks)
        V[:, j] = mode_match_spectrum(res.output, basis)
    return V


def angular_profile(field_: ScalarField, bins: int = 720) -> np.ndarray:
    """Intensity summed over radius in equal azimuth bins over [-pi, pi)."""
    _, _, _, TH = field_.coords()
    idx = np.floor((TH + np.pi) / (2 * np.pi) * bins).astype(int) % bins
    return np.bincount(idx.ravel(), weights=field_.intensity().ravel(), minlength=bins)


def estimate_rotation(before: ScalarField, after: ScalarField, harmonics: int = 64,
                      resolution: float = 1e-4) -> float:
    """Angle theta (radians, in [-pi, pi)) maximizing the correlation of
    ``I_after(phi)`` with ``I_before(phi + theta)``.

    With this sign, multiplying OAM coefficients by ``exp(i l theta)``
    yields ``theta``. The correlation is built from azimuthal intensity
    moments, which avoids angle binning on the pixel grid.
    """
    _, _, _, TH = before.coords()
    m = np.arange(1, harmonics + 1)
    Ia = before.intensity()
    Ib = after.intensity()
    step = np.exp(1j * TH)
    z = np.ones_like(step)
    a = np.empty(harmonics, dtype=complex)
    b = np.empty(harmonics, dtype=complex)
    for k in range(harmonics):
        z = z * step
        a[k] = np.sum(z * Ia)
        b[k] = np.sum(z * Ib)
    theta = np.arange(-np.pi, np.pi, resolution)
    corr = np.real((b * np.conj(a)) @ np.exp(1j * np.outer(m, theta)))
    return float(theta[int(np.argmax(corr))])


def sorter_centroids(charges, basis: OamBasisSpec, params: SorterParams, shape,
                     pitch: float, wavelength: float) -> np.ndarray:
    """Focal-plane intensity centroid along y for each pure charge."""
    masks = sorter_masks(params, shape, pitch, wavelength)
    _, Y, _, _ = _coords(tuple(shape), pitch)
    out = []
    for l in charges:
        b = replace(basis, charges=(int(l),))
        E = make_oam_superposition([1.0], b, shape, pitch, wavelength)
        focal, _ = _sort(E, masks[0], masks[1], params, "fft", [])
        I = focal.intensity()
        out.append(float(np.sum(I * Y) / np.sum(I)))
    return np.array(out)


# -- export ------------------------------------------------------------------

def write_pgm(path, phases):
    """8-bit binary PGM with phase mod 2*pi mapped linearly onto 0..255."""
    v = np.mod(np.asarray(phases, dtype=float), 2 * np.pi) / (2 * np.pi)
    img = np.minimum(np.floor(v * 256), 255).astype(np.uint8)
    H, W = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    W, H, mx = int(parts[1]), int(parts[2]), int(parts[3])
    if mx != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(parts[4][:W * H], dtype=np.uint8).reshape(H, W)


def write_raw(path_prefix, array, pitch: float, wavelength: float, kind: str):
    """float32 little-endian dump plus a JSON sidecar with geometry."""
    a = np.asarray(array, dtype="<f4")
    a.tofile(f"{path_prefix}.f32")
    meta = {"W": int(a.shape[1]), "H": int(a.shape[0]), "pitch_m": pitch,
            "wavelength_m": wavelength, "kind": kind, "dtype": "float32-le",
            "order": "row-major"}
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_mask(mask: PhaseMask, path_prefix, wavelength: float):
    write_pgm(f"{path_prefix}.pgm", mask.phases)
    write_raw(path_prefix, mask.wrapped(), mask.pitch, wavelength, "phase_rad")


def export_field(field_: ScalarField, path_prefix):
    mag = np.abs(field_.data)
    write_pgm(f"{path_prefix}_mag.pgm", 2 * np.pi * mag / max(mag.max(), 1e-300) * (255 / 256))
    write_raw(f"{path_prefix}_mag", mag, field_.pitch, field_.wavelength, "magnitude")
    write_pgm(f"{path_prefix}_phase.pgm", np.angle(field_.data))
    write_raw(f"{path_prefix}_phase", np.angle(field_.data), field_.pitch,
              field_.wavelength, "phase_rad")
