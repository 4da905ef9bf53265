"""Compare the compiled and numpy three-layer kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--restarts N]

Prints per-call kernel time, full objective time and an end-to-end
H3 synthesis time for each backend, plus the maximum output difference.
"""

import argparse
import time
import timeit

import numpy as np

from oamgate import kernels
from oamgate.core import ChannelWindow, hadamard
from oamgate.synthesis import FILTERED, OPEN, GateObjective, GateSpec, OptimizerConfig, optimize


def kernel_inputs(policy, rng):
    w = ChannelWindow.centered(64, 3, 2)
    ks = w.working_indices if policy == FILTERED else np.arange(64)
    e1, e3, eg = (np.exp(1j * rng.uniform(-np.pi, np.pi, 64)) for _ in range(3))
    return e1, e3, eg, np.asarray(w.channel_indices), ks, hadamard(3)


def per_call(fn, repeat):
    t = timeit.repeat(fn, number=repeat, repeat=5)
    return min(t) / repeat * 1e6


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--restarts", type=int, default=8)
    args = ap.parse_args()
    backends = ["numpy"] + (["cython"] if kernels._ckernel is not None else [])
    print(f"default backend: {kernels.BACKEND}")
    rng = np.random.default_rng(0)
    for policy in (OPEN, FILTERED):
        inp = kernel_inputs(policy, rng)
        outs = {}
        for b in backends:
            us = per_call(lambda: kernels.three_layer_grad(*inp, backend=b), args.repeat)
            outs[b] = kernels.three_layer_grad(*inp, backend=b)
            print(f"kernel     {policy:<8} {b:<6} {us:9.1f} us/call")
        if len(outs) == 2:
            a, c = outs["numpy"], outs["cython"]
            diff = max(np.max(np.abs(a[0] - c[0])),
                       *(np.max(np.abs(x - y)) for x, y in zip(a[3] + a[4], c[3] + c[4])))
            print(f"kernel     {policy:<8} max |numpy - cython| = {diff:.2e}")
    spec = GateSpec(hadamard(3), ChannelWindow.centered(64, 3, 3))
    x = np.random.default_rng(1).uniform(0, 1, GateObjective(spec).layout.size)
    for b in backends:
        obj = GateObjective(spec, backend=b)
        print(f"objective  OPEN     {b:<6} {per_call(lambda: obj(x), args.repeat // 4):9.1f} us/call")
    cfg = OptimizerConfig(restarts=args.restarts, seed=0)
    for b in backends:
        t0 = time.perf_counter()
        r = optimize(spec, cfg, backend=b)
        dt = time.perf_counter() - t0
        print(f"synthesis  H3 d=3   {b:<6} {dt:7.2f} s  ({args.restarts} restarts) "
              f"F={r.fidelity:.6f} P={r.probability:.4f}")


if __name__ == "__main__":
    main()
