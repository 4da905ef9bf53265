"""Gate synthesis: layer parameterization, constrained optimization and sweeps.

Angle-domain layers are smooth sine series; spectrum-domain layers carry one
free phase per working-window channel. The constrained problem (maximize
success probability with fidelity above a floor) is solved by multi-start
L-BFGS-B on a quadratic-penalty objective with a ramped weight, then an
SLSQP polish on the exact constraint.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .core import (
    ANGLE,
    SPECTRUM,
    ChannelWindow,
    DiagonalPhase,
    LayerStack,
    as_matrix,
    central_block,
    compose_stack,
    fidelity,
    is_unitary,
    success_probability,
)

OPEN = "OPEN"
FILTERED = "FILTERED"
POLICIES = (OPEN, FILTERED)

TWO_PI = 2.0 * np.pi


def angle_grid(K: int) -> np.ndarray:
    """Bin angles ``2 pi k / K - pi`` covering [-pi, pi)."""
    return TWO_PI * np.arange(K) / K - np.pi


def default_amplitude_bound(N: int) -> float:
    """Amplitude multiplier m: 1 for qubits, 2 for qutrits and larger."""
    return 1.0 if N <= 2 else 2.0


@dataclass(frozen=True)
class SineSeries:
    """Angular modulation ``f(phi) = sum_n A_n sin(n phi + theta_n)``, n = 1..p."""

    amplitudes: tuple
    phases: tuple
    m: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.amplitudes, dtype=float).ravel()
        th = np.asarray(self.phases, dtype=float).ravel()
        if A.shape != th.shape or A.size == 0:
            raise ValueError("amplitudes and phases must be non-empty and equal length")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(th))):
            raise ValueError("series coefficients must be finite")
        if np.any(A < 0) or np.any(A > self.m * np.pi + 1e-12):
            raise ValueError(f"amplitudes must lie in [0, {self.m}*pi]")
        object.__setattr__(self, "amplitudes", tuple(A.tolist()))
        object.__setattr__(self, "phases", tuple(np.mod(th, TWO_PI).tolist()))

    @classmethod
    def zeros(cls, p: int = 3, m: float = 1.0) -> "SineSeries":
        return cls((0.0,) * p, (0.0,) * p, m)

    @classmethod
    def from_raw(cls, amplitudes, phases, m: float = 1.0) -> "SineSeries":
        """Fold negative amplitudes into a pi phase shift, then wrap phases."""
        A = np.asarray(amplitudes, dtype=float)
        th = np.asarray(phases, dtype=float) + np.where(A < 0, np.pi, 0.0)
        A = np.minimum(np.abs(A), m * np.pi)
        return cls(tuple(A), tuple(th), m)

    @property
    def p(self) -> int:
        return len(self.amplitudes)

    def __call__(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        n = np.arange(1, self.p + 1).reshape((-1,) + (1,) * phi.ndim)
        A = np.asarray(self.amplitudes).reshape(n.shape)
        th = np.asarray(self.phases).reshape(n.shape)
        return np.sum(A * np.sin(n * phi + th), axis=0)


@dataclass(frozen=True)
class ShaperFunction:
    """Per-channel phase on a contiguous run of channels starting at ``start``.

    Channels outside the run carry zero phase.
    """

    values: tuple
    start: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("shaper phases must be finite")
        object.__setattr__(self, "values", tuple(v.tolist()))
        object.__setattr__(self, "start", int(self.start))

    @classmethod
    def on_window(cls, values, window: ChannelWindow) -> "ShaperFunction":
        return cls(values, window.working_span[0])

    @property
    def stop(self) -> int:
        return self.start + len(self.values)

    def value(self, j) -> np.ndarray:
        j = np.asarray(j)
        v = np.asarray(self.values)
        inside = (j >= self.start) & (j < self.stop)
        return np.where(inside, v[np.clip(j - self.start, 0, len(v) - 1)], 0.0)

    def full(self, K: int) -> np.ndarray:
        if self.start < 0 or self.stop > K:
            raise ValueError(f"shaper span [{self.start}, {self.stop}) exceeds 0..{K - 1}")
        return self.value(np.arange(K))


def sample_angular_diagonal(series: SineSeries, K: int):
    """Phases of an angle-domain diagonal sampled on K bins over [-pi, pi)."""
    if K < 2:
        raise ValueError("K must be at least 2")
    return DiagonalPhase(series(angle_grid(K)))


@dataclass(frozen=True)
class GateSpec:
    """What to synthesize and how to score it."""

    target: np.ndarray
    window: ChannelWindow
    layer_count: int = 3
    boundary_policy: str = OPEN
    fidelity_floor: float = 0.999

    def __post_init__(self):
        U = as_matrix(self.target, "target")
        if U.shape != (self.window.N, self.window.N):
            raise ValueError(f"target shape {U.shape} does not match window N={self.window.N}")
        if not is_unitary(U, 1e-10):
            raise ValueError("target must be unitary to 1e-10")
        if self.layer_count < 3 or self.layer_count % 2 == 0:
            raise ValueError("layer_count must be odd and >= 3")
        if self.boundary_policy not in POLICIES:
            raise ValueError(f"boundary_policy must be one of {POLICIES}")
        U.setflags(write=False)
        object.__setattr__(self, "target", U)

    @property
    def domains(self) -> tuple:
        return tuple(ANGLE if i % 2 == 0 else SPECTRUM for i in range(self.layer_count))

    def with_window(self, window: ChannelWindow) -> "GateSpec":
        return replace(self, window=window)


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 32
    maxiter: int = 3000
    seed: int = 0
    p: int = 3
    m: float | None = None
    workers: int | None = None
    penalty_margin: float = 2e-5
    penalty_weights: tuple = tuple(10.0 ** np.arange(-1.0, 5.01, 0.5))
    polish: bool = True

    def amplitude_bound(self, N: int) -> float:
        return default_amplitude_bound(N) if self.m is None else float(self.m)

    def worker_count(self) -> int:
        if self.workers is not None:
            return max(1, int(self.workers))
        return max(1, int(os.environ.get("OAMGATE_WORKERS", "1")))


@dataclass(frozen=True)
class OptimizationResult:
    series: tuple
    shapers: tuple
    fidelity: float
    probability: float
    restarts: int
    converged: bool
    seed: int = 0
    V_central: np.ndarray = field(default=None, repr=False, compare=False)


# -- parameter packing -------------------------------------------------------

class _Layout:
    """Flat parameter vector <-> layer phases, in product order."""

    def __init__(self, spec: GateSpec, p: int):
        self.spec = spec
        self.p = p
        self.K = spec.window.K
        self.work = spec.window.working_indices
        self.slices = []
        pos = 0
        for dom in spec.domains:
            n = 2 * p if dom == ANGLE else self.work.size
            self.slices.append(slice(pos, pos + n))
            pos += n
        self.size = pos
        self.nphi = np.arange(1, p + 1)[:, None] * angle_grid(self.K)[None, :]

    def bounds(self, m: float):
        b = []
        for dom in self.spec.domains:
            if dom == ANGLE:
                b += [(0.0, m * np.pi)] * self.p + [(None, None)] * self.p
            else:
                b += [(None, None)] * self.work.size
        return b

    def random(self, rng, m: float) -> np.ndarray:
        parts = []
        for dom in self.spec.domains:
            if dom == ANGLE:
                parts += [rng.uniform(0, m * np.pi, self.p), rng.uniform(0, TWO_PI, self.p)]
            else:
                parts.append(rng.uniform(0, TWO_PI, self.work.size))
        return np.concatenate(parts)

    def phases(self, x):
        """Full K-length phase per layer plus the angle arguments for chaining."""
        out, args = [], []
        for dom, sl in zip(self.spec.domains, self.slices):
            v = x[sl]
            if dom == ANGLE:
                arg = self.nphi + v[self.p:, None]
                out.append(np.sum(v[:self.p, None] * np.sin(arg), axis=0))
                args.append(arg)
            else:
                g = np.zeros(self.K)
                g[self.work] = v
                out.append(g)
                args.append(None)
        return out, args

    def chain(self, x, args, dphases) -> np.ndarray:
        grad = np.empty(self.size)
        for dom, sl, arg, dph in zip(self.spec.domains, self.slices, args, dphases):
            if dom == ANGLE:
                A = x[sl][:self.p]
                grad[sl] = np.concatenate([np.sin(arg) @ dph, A * (np.cos(arg) @ dph)])
            else:
                grad[sl] = dph[self.work]
        return grad

    def unpack(self, x, m: float):
        series, shapers = [], []
        for dom, sl in zip(self.spec.domains, self.slices):
            v = x[sl]
            if dom == ANGLE:
                series.append(SineSeries.from_raw(v[:self.p], v[self.p:], m))
            else:
                shapers.append(ShaperFunction(v, int(self.work[0])))
        return tuple(series), tuple(shapers)


class GateObjective:
    """Fidelity and probability with analytic gradients for one spec.

    Three-layer stacks use the compiled kernel when available; longer stacks
    fall back to a generic numpy forward/adjoint pass.
    """

    def __init__(self, spec: GateSpec, p: int = 3, backend: str | None = None):
        self.spec = spec
        self.layout = _Layout(spec, p)
        self.backend = backend
        w = spec.window
        self.enc = np.asarray(w.channel_indices, dtype=np.int64)
        self.U = np.ascontiguousarray(spec.target, dtype=complex)
        self.filtered = spec.boundary_policy == FILTERED
        self.ks = (w.working_indices if self.filtered else np.arange(w.K)).astype(np.int64)
        self.mask = w.projector_mask() if self.filtered else None

    def __call__(self, x):
        """Return ``F, P, dF/dx, dP/dx``."""
        ph, args = self.layout.phases(x)
        if self.spec.layer_count == 3:
            e = [np.exp(1j * q) for q in ph]
            _, F, P, gF, gP = kernels.three_layer_grad(
                e[0], e[2], e[1], self.enc, self.ks, self.U, backend=self.backend)
            gF = (gF[0], gF[2], gF[1])
            gP = (gP[0], gP[2], gP[1])
        else:
            _, F, P, gF, gP = kernels.stack_grad(
                self.spec.domains, np.array(ph), self.enc, self.mask, self.U)
        return F, P, self.layout.chain(x, args, gF), self.layout.chain(x, args, gP)


def _params_to_stack(params, spec: GateSpec) -> LayerStack:
    series, shapers = params
    if len(series) != (spec.layer_count + 1) // 2 or len(shapers) != spec.layer_count // 2:
        raise ValueError("parameter counts do not match the layer count")
    K = spec.window.K
    layers = []
    for i, dom in enumerate(spec.domains):
        if dom == ANGLE:
            layers.append((ANGLE, sample_angular_diagonal(series[i // 2], K)))
        else:
            layers.append((SPECTRUM, shapers[i // 2].full(K)))
    return LayerStack(tuple(layers))


def evaluate_gate(params, spec: GateSpec):
    """Compose the stack densely and score its central block.

    Parameters
    ----------
    params : OptimizationResult or (series, shapers)
        Layer parameters; series for ANGLE layers and shapers for SPECTRUM
        layers, each in product order.
    spec : GateSpec

    Returns
    -------
    V_central : ndarray
        N x N block on the encoding channels.
    fidelity, probability : float
    """
    if isinstance(params, OptimizationResult):
        params = (params.series, params.shapers)
    stack = _params_to_stack(params, spec)
    proj = spec.window.projector_mask() if spec.boundary_policy == FILTERED else None
    Vc = central_block(compose_stack(stack, proj), spec.window)
    if not np.any(Vc):
        return Vc, 0.0, 0.0
    return Vc, fidelity(spec.target, Vc), success_probability(Vc)


# -- optimizer ---------------------------------------------------------------

def _local_solve(obj: GateObjective, x, floor: float, cfg: OptimizerConfig, m: float):
    bounds = obj.layout.bounds(m)
    target = floor + cfg.penalty_margin
    for lam in cfg.penalty_weights:
        def f(z, lam=lam):
            F, P, dF, dP = obj(z)
            v = max(0.0, target - F)
            return -(P - lam * v * v), -(dP + 2.0 * lam * v * dF)
        x = minimize(f, x, jac=True, method="L-BFGS-B", bounds=bounds,
                     options={"maxiter": cfg.maxiter}).x
    if cfg.polish:
        cons = {"type": "ineq", "fun": lambda z: obj(z)[0] - floor,
                "jac": lambda z: obj(z)[2]}
        res = minimize(lambda z: (-obj(z)[1], -obj(z)[3]), x, jac=True, method="SLSQP",
                       bounds=bounds, constraints=[cons],
                       options={"maxiter": 200, "ftol": 1e-12})
        if np.all(np.isfinite(res.x)):
            F0, P0 = obj(x)[:2]
            F1, P1 = obj(res.x)[:2]
            # keep the polish only if it is at least as good in feasibility order
            if (F1 >= floor and (F0 < floor or P1 >= P0)) or (F0 < floor and F1 > F0):
                x = res.x
    return x


def _restart(task):
    spec, cfg, r, backend = task
    m = cfg.amplitude_bound(spec.window.N)
    obj = GateObjective(spec, cfg.p, backend)
    rng = np.random.default_rng([cfg.seed, r])
    x = _local_solve(obj, obj.layout.random(rng, m), spec.fidelity_floor, cfg, m)
    return x


def optimize(spec: GateSpec, config: OptimizerConfig | None = None,
             backend: str | None = None) -> OptimizationResult:
    """Multi-start constrained synthesis.

    Returns the best feasible parameter set (highest probability with
    fidelity at or above ``spec.fidelity_floor``). Ties within 1e-9 in
    probability go to the smaller parameter norm. If nothing is feasible the
    highest-fidelity point is returned with ``converged=False``.
    """
    cfg = config or OptimizerConfig()
    m = cfg.amplitude_bound(spec.window.N)
    obj = GateObjective(spec, cfg.p, backend)
    floor = spec.fidelity_floor

    tasks = [(spec, cfg, r, backend) for r in range(cfg.restarts)]
    workers = min(cfg.worker_count(), max(1, cfg.restarts))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            xs = list(ex.map(_restart, tasks))
    else:
        xs = [_restart(t) for t in tasks]

    # the flat point (identity stack) is always a candidate
    candidates = [np.zeros(obj.layout.size)] + xs
    best = None
    for x in candidates:
        F, P = obj(x)[:2]
        if best is None:
            best = (F, P, x)
            continue
        bF, bP, bx = best
        if (F >= floor) != (bF >= floor):
            better = F >= floor
        elif F >= floor:
            if abs(P - bP) <= 1e-9:
                better = np.linalg.norm(x) < np.linalg.norm(bx)
            else:
                better = P > bP
        else:
            better = F > bF
        if better:
            best = (F, P, x)

    series, shapers = obj.layout.unpack(best[2], m)
    Vc, F, P = evaluate_gate((series, shapers), spec)
    return OptimizationResult(series, shapers, F, P, cfg.restarts, bool(F >= floor),
                              cfg.seed, Vc)


# -- sweeps and parallel gates -----------------------------------------------

def _resize_params(result: OptimizationResult, window: ChannelWindow):
    """Re-express shapers on another window: keep overlapping channels, zero the rest."""
    lo, hi = window.working_span
    shapers = []
    for s in result.shapers:
        j = np.arange(lo, hi + 1)
        shapers.append(ShaperFunction(s.value(j), lo))
    return result.series, tuple(shapers)


def guard_band_sweep(spec: GateSpec, d_values, config: OptimizerConfig | None = None,
                     mode: str = "reoptimize", policies=POLICIES,
                     reference: OptimizationResult | None = None):
    """Fidelity/probability against guard-band count.

    Parameters
    ----------
    mode : {"reoptimize", "fixed"}
        ``reoptimize`` synthesizes afresh at every d. ``fixed`` evaluates one
        parameter set (``reference``, or the optimum at ``spec``'s own window)
        with its shaper truncated or zero-padded to each window.

    Returns
    -------
    dict
        policy -> list of ``(d, fidelity, probability)``.
    """
    if mode not in ("reoptimize", "fixed"):
        raise ValueError("mode must be 'reoptimize' or 'fixed'")
    w0 = spec.window
    curves = {}
    for pol in policies:
        ref = reference
        if mode == "fixed" and ref is None:
            ref = optimize(replace(spec, boundary_policy=pol), config)
        rows = []
        for d in d_values:
            if d < 0:
                raise ValueError("guard counts must be nonnegative")
            w = ChannelWindow(w0.K, w0.N, int(d), w0.center, w0.channel_indices)
            s = replace(spec, window=w, boundary_policy=pol)
            if mode == "reoptimize":
                r = optimize(s, config)
                rows.append((int(d), r.fidelity, r.probability))
            else:
                _, F, P = evaluate_gate(_resize_params(ref, w), s)
                rows.append((int(d), F, P))
        curves[pol] = rows
    return curves


def replicate_parallel(g: ShaperFunction, window: ChannelWindow, centers,
                       allow_overlap: bool = False) -> ShaperFunction:
    """Copy a shaper pattern so its window is centered at each of ``centers``.

    Equivalent to convolving g with a comb of deltas at the center offsets.
    Replica working windows must be disjoint unless ``allow_overlap``, in
    which case overlapping phases add.
    """
    centers = [int(c) for c in centers]
    if not centers:
        raise ValueError("need at least one center")
    offsets = [c - window.center for c in centers]
    spans = sorted((window.working_span[0] + o, window.working_span[1] + o) for o in offsets)
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 <= a1 and not allow_overlap:
            raise ValueError(f"replica windows [{a0}, {a1}] and [{b0}, {b1}] overlap")
    lo = min(s[0] for s in spans)
    hi = max(s[1] for s in spans)
    if lo < 0 or hi > window.K - 1:
        raise ValueError("replicas do not fit inside the DFT space")
    base = np.asarray(g.value(np.arange(window.K)))
    out = np.zeros(hi - lo + 1)
    for o in offsets:
        # shift by o channels; no wraparound since spans fit
        shifted = np.zeros(window.K)
        src = np.arange(window.K)
        dst = src + o
        ok = (dst >= 0) & (dst < window.K)
        shifted[dst[ok]] = base[src[ok]]
        out += shifted[lo:hi + 1]
    return ShaperFunction(out, lo)


def parallel_blocks(result: OptimizationResult, spec: GateSpec, centers,
                    allow_overlap: bool = False, policy: str | None = None):
    """Operator of a replicated three-layer gate and its per-replica blocks.

    The angular series are reused unchanged; only the shaper is replicated.
    Under FILTERED the projector is the union of replica working windows.

    Returns
    -------
    V : ndarray
        Full K x K operator.
    windows : list of ChannelWindow
    blocks : list of ndarray
    """
    if spec.layer_count != 3:
        raise ValueError("parallel replication is defined for three-layer gates")
    w = spec.window
    g = replicate_parallel(result.shapers[0], w, centers, allow_overlap)
    K = w.K
    stack = LayerStack.three_layer(sample_angular_diagonal(result.series[0], K),
                                   g.full(K),
                                   sample_angular_diagonal(result.series[1], K))
    windows = [w.shifted(int(c) - w.center) for c in centers]
    pol = policy or spec.boundary_policy
    proj = None
    if pol == FILTERED:
        proj = np.zeros(K, dtype=bool)
        for ww in windows:
            proj |= ww.projector_mask()
    V = compose_stack(stack, proj)
    return V, windows, [central_block(V, ww) for ww in windows]


def dual_centers(window: ChannelWindow, separation: int):
    """Centers of two replicas whose encoding runs are ``separation`` channels apart.

    Separation is the index distance from the last encoding channel of the
    lower replica to the first encoding channel of the upper one. The pair is
    placed as symmetrically as possible about the original center.
    """
    if separation < 1:
        raise ValueError("separation must be positive")
    span = window.channel_indices[-1] - window.channel_indices[0]
    s0 = -((span + separation) // 2)
    s1 = s0 + span + separation
    return window.center + s0, window.center + s1


def crosstalk_vs_separation(spec: GateSpec, separations, result: OptimizationResult | None = None,
                            config: OptimizerConfig | None = None, policy: str | None = None):
    """Worst per-replica fidelity of a dual gate as a function of separation.

    Returns
    -------
    list of tuple
        ``(separation, worst_fidelity, per_replica_fidelities)``; replicas
        whose windows overlap are evaluated with overlapping shaper phases
        added.
    """
    if result is None:
        result = optimize(spec, config)
    rows = []
    for sep in separations:
        centers = dual_centers(spec.window, int(sep))
        _, _, blocks = parallel_blocks(result, spec, centers, allow_overlap=True, policy=policy)
        fids = [fidelity(spec.target, b) if np.any(b) else 0.0 for b in blocks]
        rows.append((int(sep), min(fids), tuple(fids)))
    return rows


def off_block_mass(V: np.ndarray, windows) -> float:
    """Fraction of |V|^2 on replica encoding rows/columns that couples different replicas."""
    idx = [np.asarray(w.channel_indices) for w in windows]
    allidx = np.concatenate(idx)
    sub = np.abs(V[np.ix_(allidx, allidx)]) ** 2
    total = sub.sum()
    on = 0.0
    pos = 0
    for i in idx:
        n = i.size
        on += sub[pos:pos + n, pos:pos + n].sum()
        pos += n
    return float((total - on) / total) if total > 0 else 0.0
