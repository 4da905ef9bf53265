"""Finite-dimensional algebra of the Fourier-diagonal gate decomposition.

State vectors are indexed in the SPECTRUM domain (OAM charge or path index).
A SPECTRUM layer is the bare diagonal ``D``; an ANGLE layer is the diagonal
conjugated by the unitary DFT, ``F^H D F``, which is a circulant matrix.
Layers in a :class:`LayerStack` are listed in matrix-product order, so the
last layer in the list is the first one to act on a column vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ANGLE = "ANGLE"
SPECTRUM = "SPECTRUM"
DOMAINS = (ANGLE, SPECTRUM)

UNITARY_TOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D complex array with finite entries."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < tol)


def dft_matrix(K: int) -> np.ndarray:
    """Unitary DFT matrix ``F[j, k] = exp(-2i*pi*j*k/K) / sqrt(K)``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    j = np.arange(K)
    return np.exp(-2j * np.pi * np.outer(j, j) / K) / np.sqrt(K)


def circulant_from_phases(phases: np.ndarray) -> np.ndarray:
    """Dense ``F^H diag(exp(i*phases)) F``.

    Entry ``[j, m]`` depends only on ``(j - m) mod K`` and equals the inverse
    DFT of the phase factors at that offset.
    """
    phases = np.asarray(phases, dtype=float)
    K = phases.size
    c = np.fft.ifft(np.exp(1j * phases))
    idx = np.arange(K)
    return c[(idx[:, None] - idx[None, :]) % K]


@dataclass(frozen=True)
class DiagonalPhase:
    """Phase-only diagonal ``Diag(exp(i*phase_k))`` over K channels."""

    phases: np.ndarray

    def __post_init__(self):
        p = np.array(self.phases, dtype=float).ravel()
        if p.size < 1 or not np.all(np.isfinite(p)):
            raise ValueError("phases must be a non-empty finite vector")
        p.setflags(write=False)
        object.__setattr__(self, "phases", p)

    @classmethod
    def zeros(cls, K: int) -> "DiagonalPhase":
        return cls(np.zeros(K))

    @property
    def K(self) -> int:
        return self.phases.size

    def operator(self) -> np.ndarray:
        return np.diag(np.exp(1j * self.phases))

    def equivalent(self, other: "DiagonalPhase", atol: float = 1e-12) -> bool:
        """Compare phases modulo 2*pi."""
        if other.K != self.K:
            return False
        diff = np.angle(np.exp(1j * (self.phases - other.phases)))
        return bool(np.all(np.abs(diff) <= atol))


@dataclass(frozen=True)
class ChannelWindow:
    """Placement of an N-channel gate inside a K-point DFT space.

    ``channel_indices`` are the N encoding channels. The working window
    (encoding channels plus ``d`` guard channels on each side) is the span
    that may carry amplitude during optimization.
    """

    K: int
    N: int
    d: int
    center: int
    channel_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.channel_indices)
        object.__setattr__(self, "channel_indices", idx)
        if self.N < 1 or self.d < 0 or self.K < 1:
            raise ValueError("need N >= 1, d >= 0, K >= 1")
        if len(idx) != self.N:
            raise ValueError(f"expected {self.N} channel indices, got {len(idx)}")
        if self.N + 2 * self.d > self.K:
            raise ValueError(f"N + 2d = {self.N + 2 * self.d} exceeds K = {self.K}")
        steps = np.diff(idx)
        if steps.size and (np.any(steps <= 0) or np.any(steps != steps[0])):
            raise ValueError("channel indices must be increasing and evenly strided")
        lo, hi = self.working_span
        if lo < 0 or hi > self.K - 1:
            raise ValueError(f"working window [{lo}, {hi}] does not fit in 0..{self.K - 1}")

    @classmethod
    def centered(cls, K: int, N: int, d: int, center: int | None = None,
                 stride: int = 1) -> "ChannelWindow":
        """Window whose middle encoding channel sits at ``center`` (default K//2).

        For even N the lower of the two middle channels is at ``center``-1.
        """
        if center is None:
            center = K // 2
        first = center - stride * (N // 2)
        return cls(K, N, d, center, tuple(first + stride * np.arange(N)))

    @property
    def stride(self) -> int:
        return 1 if self.N == 1 else self.channel_indices[1] - self.channel_indices[0]

    @property
    def working_span(self) -> tuple:
        return self.channel_indices[0] - self.d, self.channel_indices[-1] + self.d

    @property
    def working_indices(self) -> np.ndarray:
        lo, hi = self.working_span
        return np.arange(lo, hi + 1)

    def shifted(self, offset: int) -> "ChannelWindow":
        return ChannelWindow(self.K, self.N, self.d, self.center + offset,
                             tuple(np.asarray(self.channel_indices) + offset))

    def projector_mask(self) -> np.ndarray:
        m = np.zeros(self.K, dtype=bool)
        m[self.working_indices] = True
        return m


@dataclass(frozen=True)
class LayerStack:
    """Ordered diagonal layers, listed left to right as in the matrix product."""

    layers: tuple
    K: int = field(default=0)

    def __post_init__(self):
        layers = tuple((dom, ph if isinstance(ph, DiagonalPhase) else DiagonalPhase(ph))
                       for dom, ph in self.layers)
        if not layers:
            raise ValueError("stack needs at least one layer")
        K = self.K or layers[0][1].K
        for i, (dom, ph) in enumerate(layers):
            if dom not in DOMAINS:
                raise ValueError(f"unknown domain {dom!r}")
            if ph.K != K:
                raise ValueError(f"layer {i} has dimension {ph.K}, expected {K}")
            if i and dom == layers[i - 1][0]:
                raise ValueError("layer domains must alternate")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "K", K)

    @classmethod
    def three_layer(cls, f_left, g, f_right) -> "LayerStack":
        return cls(((ANGLE, f_left), (SPECTRUM, g), (ANGLE, f_right)))

    @property
    def M(self) -> int:
        return len(self.layers)


def layer_operator(domain: str, phase: DiagonalPhase) -> np.ndarray:
    if domain == ANGLE:
        return circulant_from_phases(phase.phases)
    return np.diag(np.exp(1j * phase.phases))


def compose_stack(stack: LayerStack, projector: np.ndarray | None = None) -> np.ndarray:
    """Dense K x K operator of a layer stack.

    ``projector`` is an optional boolean channel mask inserted before the
    first layer, between layers and after the last one.
    """
    K = stack.K
    if projector is not None:
        P = np.diag(np.asarray(projector, dtype=float))
        if P.shape != (K, K):
            raise ValueError("projector length must equal K")
    V = np.eye(K, dtype=complex) if projector is None else P.astype(complex)
    for dom, ph in stack.layers:
        V = V @ layer_operator(dom, ph)
        if projector is not None:
            V = V @ P
    return V


def central_block(V, w: ChannelWindow) -> np.ndarray:
    V = as_matrix(V, "V")
    if V.shape != (w.K, w.K):
        raise ValueError(f"V has shape {V.shape}, window expects {(w.K, w.K)}")
    idx = np.asarray(w.channel_indices)
    if idx.min() < 0 or idx.max() >= w.K:
        raise IndexError("window channel index out of range")
    return V[np.ix_(idx, idx)]


def fidelity(U, V) -> float:
    """Normalized squared trace overlap ``|Tr(U^H V)|^2 / (Tr(U^H U) Tr(V^H V))``."""
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    if U.shape != V.shape:
        raise ValueError(f"shape mismatch {U.shape} vs {V.shape}")
    nu = np.vdot(U, U).real
    nv = np.vdot(V, V).real
    if nu == 0 or nv == 0:
        raise ValueError("fidelity undefined for an all-zero matrix")
    f = abs(np.vdot(U, V)) ** 2 / (nu * nv)
    return float(min(max(f, 0.0), 1.0))


def success_probability(V_central) -> float:
    """``Tr(V V^H) / N``: fraction of input power left in the encoding channels."""
    V = as_matrix(V_central, "V_central")
    if V.shape[0] != V.shape[1]:
        raise ValueError("central block must be square")
    return float(np.vdot(V, V).real / V.shape[0])


def phase_test_fidelity(U_target, measured_amplitudes) -> float:
    """Fidelity estimate from measured magnitudes of ``V U^H``.

    The inputs are the columns of ``U^H``; the diagonal of ``V U^H`` is taken
    to be real and positive (residual diagonal phases are correctable by
    output phase shifters), so only magnitudes are needed.
    """
    U = as_matrix(U_target, "U_target")
    M = np.asarray(measured_amplitudes, dtype=float)
    if M.shape != U.shape or U.shape[0] != U.shape[1]:
        raise ValueError("measured amplitudes must match the square target shape")
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise ValueError("measured magnitudes must be finite and non-negative")
    total = np.sum(M ** 2)
    if total == 0:
        raise ValueError("all measured amplitudes are zero")
    N = U.shape[0]
    return float(np.trace(M) ** 2 / (N * total))


# ---------------------------------------------------------------- targets

def hadamard(N: int) -> np.ndarray:
    """H2 and H3 as used for the OAM beam splitter / tritter."""
    if N == 2:
        return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    if N == 3:
        return dft_target(3)
    raise ValueError("hadamard targets are defined for N = 2 and N = 3")


def dft_target(N: int) -> np.ndarray:
    """``exp(+2i*pi*j*k/N)/sqrt(N)``; equals H3 for N = 3."""
    j = np.arange(N)
    return np.exp(2j * np.pi * np.outer(j, j) / N) / np.sqrt(N)


def clock_target(N: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(N) / N))


def haar_unitary(N: int, seed) -> np.ndarray:
    """Haar-random unitary (QR of a complex Ginibre matrix with phase fix)."""
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def named_target(name: str, n: int | None = None, seed: int | None = None) -> np.ndarray:
    name = name.lower()
    if name in ("hadamard2", "h2"):
        return hadamard(2)
    if name in ("hadamard3", "h3"):
        return hadamard(3)
    if name.startswith("dft") and name[3:].isdigit():
        return dft_target(int(name[3:]))
    if n is None:
        raise ValueError(f"target {name!r} needs a dimension n")
    if name == "identity":
        return np.eye(n, dtype=complex)
    if name in ("dft", "dftn"):
        return dft_target(n)
    if name == "clock":
        return clock_target(n)
    if name in ("random-haar", "haar"):
        if seed is None:
            raise ValueError("random-haar needs a seed")
        return haar_unitary(n, seed)
    raise ValueError(f"unknown target {name!r}")


def block_diag(*blocks: Sequence) -> np.ndarray:
    blocks = [np.asarray(b, dtype=complex) for b in blocks]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=complex)
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out
