"""Gate reports: JSON persistence of specs, parameters and metrics.

Complex numbers are stored as ``[re, im]`` pairs and matrices row-major.
Serialization is canonical (sorted keys, fixed indentation), so
serialize -> parse -> serialize is byte-identical.
"""

import datetime
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import ChannelWindow, fidelity
from .synthesis import (
    GateSpec,
    OptimizationResult,
    ShaperFunction,
    SineSeries,
    evaluate_gate,
    off_block_mass,
    parallel_blocks,
    replicate_parallel,
)

FORMAT = "oamgate-report/1"


def complex_to_json(M) -> list:
    M = np.asarray(M, dtype=complex)
    if M.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in M]
    return [complex_to_json(row) for row in M]


def complex_from_json(data) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


@dataclass
class GateReport:
    spec: GateSpec
    series: tuple
    shapers: tuple
    metrics: dict
    optimizer: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    target_name: str | None = None
    parallel: dict | None = None

    @classmethod
    def from_result(cls, spec: GateSpec, result: OptimizationResult, optimizer: dict,
                    target_name: str | None = None, stamp: bool = False) -> "GateReport":
        prov = {"seed": result.seed, "version": __version__, "timestamp": None}
        if stamp:
            prov["timestamp"] = timestamp()
        metrics = {"abstract": {"fidelity": result.fidelity, "probability": result.probability},
                   "wave": None, "path": None}
        return cls(spec, result.series, result.shapers, metrics,
                   dict(optimizer, converged=result.converged), prov, target_name)

    @property
    def params(self):
        return self.series, self.shapers

    def result(self) -> OptimizationResult:
        a = self.metrics["abstract"]
        return OptimizationResult(self.series, self.shapers, a["fidelity"], a["probability"],
                                  self.optimizer.get("restarts", 0),
                                  bool(self.optimizer.get("converged", False)),
                                  self.provenance.get("seed", 0))

    def to_dict(self) -> dict:
        w = self.spec.window
        d = {
            "format": FORMAT,
            "spec": {
                "target": complex_to_json(self.spec.target),
                "target_name": self.target_name,
                "window": {"K": w.K, "N": w.N, "d": w.d, "center": w.center,
                           "channel_indices": list(w.channel_indices)},
                "layer_count": self.spec.layer_count,
                "boundary_policy": self.spec.boundary_policy,
                "fidelity_floor": self.spec.fidelity_floor,
            },
            "parameters": {
                "series": [{"amplitudes": list(s.amplitudes), "phases": list(s.phases), "m": s.m}
                           for s in self.series],
                "shapers": [{"start": g.start, "values": list(g.values)} for g in self.shapers],
            },
            "metrics": self.metrics,
            "optimizer": self.optimizer,
            "provenance": self.provenance,
        }
        if self.parallel is not None:
            d["parallel"] = self.parallel
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "GateReport":
        if d.get("format") != FORMAT:
            raise ValueError(f"unsupported report format {d.get('format')!r}")
        s = d["spec"]
        w = s["window"]
        window = ChannelWindow(w["K"], w["N"], w["d"], w["center"], tuple(w["channel_indices"]))
        spec = GateSpec(complex_from_json(s["target"]), window, s["layer_count"],
                        s["boundary_policy"], s["fidelity_floor"])
        p = d["parameters"]
        series = tuple(SineSeries(x["amplitudes"], x["phases"], x["m"]) for x in p["series"])
        shapers = tuple(ShaperFunction(x["values"], x["start"]) for x in p["shapers"])
        return cls(spec, series, shapers, d["metrics"], d.get("optimizer", {}),
                   d.get("provenance", {}), s.get("target_name"), d.get("parallel"))

    @classmethod
    def from_json(cls, text: str) -> "GateReport":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "GateReport":
        with open(path) as fh:
            return cls.from_json(fh.read())


def timestamp() -> str:
    """UTC ISO time, taken from SOURCE_DATE_EPOCH when set (reproducible builds)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = (datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc) if epoch
         else datetime.datetime.now(datetime.timezone.utc))
    return t.replace(microsecond=0).isoformat()


def evaluate_report(report: GateReport) -> dict:
    """Recompute abstract metrics (and replica metrics for parallel reports)."""
    _, F, P = evaluate_gate(report.params, report.spec)
    out = {"fidelity": F, "probability": P}
    if report.parallel is not None:
        out["parallel"] = parallel_metrics(report, report.parallel["centers"])
    return out


def parallel_metrics(report: GateReport, centers) -> dict:
    base = report.result()
    g = replicate_parallel(base.shapers[0], report.spec.window, centers)
    V, windows, blocks = parallel_blocks(base, report.spec, centers)
    fids = [fidelity(report.spec.target, b) if np.any(b) else 0.0 for b in blocks]
    return {"centers": [int(c) for c in centers],
            "replica_channels": [list(w.channel_indices) for w in windows],
            "replica_fidelities": fids,
            "off_block_mass": off_block_mass(V, windows),
            "shaper": {"start": g.start, "values": list(g.values)}}
