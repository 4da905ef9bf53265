"""Command-line entry points.

Exit codes: 0 success, 1 runtime error, 2 bad input (config, options,
report file), 3 synthesized or parallel gate below the fidelity floor.
"""

import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, load_config
from .core import ChannelWindow, fidelity, named_target
from .report import GateReport, complex_from_json, evaluate_report, parallel_metrics
from .synthesis import (
    GateSpec,
    OptimizerConfig,
    ShaperFunction,
    crosstalk_vs_separation,
    guard_band_sweep,
    optimize,
)

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
DEFAULT_N = 2

GUARD_COLUMNS = ("policy", "d", "fidelity", "probability")
SEPARATION_COLUMNS = ("separation", "worst_fidelity", "replica_fidelities")


class InputError(click.ClickException):
    exit_code = EXIT_INPUT


def _int_list(text: str | None):
    if text is None:
        return None
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InputError(f"expected a comma separated integer list, got {text!r}") from exc


def _load_cfg(path) -> RunConfig:
    try:
        return load_config(path) if path else RunConfig()
    except ConfigError as exc:
        raise InputError(str(exc)) from exc


def _load_report(path) -> GateReport:
    try:
        return GateReport.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc


def _apply_overrides(cfg: RunConfig, **kw) -> RunConfig:
    t, w, g, o = cfg.target, cfg.window, cfg.gate, cfg.optimizer
    if kw.get("target") is not None:
        t = replace(t, name=kw["target"], matrix=None)
    if kw.get("n") is not None:
        t = replace(t, n=kw["n"])
    if kw.get("seed") is not None:
        o = replace(o, seed=kw["seed"])
    if kw.get("K") is not None:
        w = replace(w, K=kw["K"])
    if kw.get("guard") is not None:
        w = replace(w, guard=kw["guard"])
    if kw.get("layers") is not None:
        g = replace(g, layers=kw["layers"])
    if kw.get("policy") is not None:
        g = replace(g, policy=kw["policy"].upper())
    if kw.get("floor") is not None:
        g = replace(g, fidelity_floor=kw["floor"])
    if kw.get("restarts") is not None:
        o = replace(o, restarts=kw["restarts"])
    if kw.get("maxiter") is not None:
        o = replace(o, maxiter=kw["maxiter"])
    return replace(cfg, target=t, window=w, gate=g, optimizer=o)


def build_target(cfg: RunConfig):
    """Target matrix and display name from the [target] table."""
    t = cfg.target
    if t.matrix is not None:
        try:
            U = complex_from_json(t.matrix)
        except (ValueError, IndexError) as exc:
            raise InputError(f"target.matrix must be rows of [re, im] pairs: {exc}") from exc
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise InputError("target.matrix must be square")
        return U, "inline"
    name = t.name.lower()
    seed = t.seed if t.seed is not None else cfg.optimizer.seed
    n = t.n
    try:
        try:
            U = named_target(name, n, seed)
        except ValueError as exc:
            if n is not None or "dimension" not in str(exc):
                raise
            U = named_target(name, DEFAULT_N, seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    label = name if name != "random-haar" else f"random-haar-n{U.shape[0]}-seed{seed}"
    return U, label


def build_spec(cfg: RunConfig):
    U, label = build_target(cfg)
    w = cfg.window
    try:
        window = ChannelWindow.centered(w.K, U.shape[0], w.guard, w.center, w.stride)
        spec = GateSpec(U, window, cfg.gate.layers, cfg.gate.policy, cfg.gate.fidelity_floor)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return spec, label


def optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    o = cfg.optimizer
    return OptimizerConfig(restarts=o.restarts, maxiter=o.maxiter, seed=o.seed,
                           p=o.harmonics, m=o.amplitude_bound)


def _echo_json(obj):
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _common_synthesis_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="TOML run configuration."),
        click.option("--target", help="hadamard2, hadamard3, dftN, clock, identity, random-haar."),
        click.option("--n", type=int, help="Gate dimension for sized targets."),
        click.option("--seed", type=int, help="Optimizer seed (also seeds random-haar)."),
        click.option("--K", "K", type=int, help="DFT size."),
        click.option("--guard", type=int, help="Guard channels on each side."),
        click.option("--layers", type=int, help="Number of diagonal layers (odd)."),
        click.option("--policy", type=click.Choice(["OPEN", "FILTERED"], case_sensitive=False)),
        click.option("--floor", type=float, help="Fidelity floor."),
        click.option("--restarts", type=int),
        click.option("--maxiter", type=int),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Synthesize and verify diagonal-phase-layer unitary gates."""


@main.command()
@_common_synthesis_options
@click.option("--out", type=click.Path(dir_okay=False), default="report.json", show_default=True)
@click.option("--stamp/--no-stamp", default=False,
              help="Record a UTC timestamp (honours SOURCE_DATE_EPOCH).")
def synthesize(config_path, out, stamp, **kw):
    """Optimize a gate and write a JSON report."""
    cfg = _apply_overrides(_load_cfg(config_path), **kw)
    spec, label = build_spec(cfg)
    ocfg = optimizer_config(cfg)
    result = optimize(spec, ocfg)
    optimizer = {"restarts": ocfg.restarts, "maxiter": ocfg.maxiter, "harmonics": ocfg.p,
                 "amplitude_bound": ocfg.amplitude_bound(spec.window.N)}
    report = GateReport.from_result(spec, result, optimizer, label, stamp)
    report.save(out)
    click.echo(f"{label}: fidelity {result.fidelity:.6f} probability {result.probability:.6f} "
               f"converged {result.converged} -> {out}")
    if not result.converged:
        sys.exit(EXIT_INFEASIBLE)


def default_channel_map(window: ChannelWindow, stride: int, ref_charge: int | None = None):
    """Charges ``stride*(j - first) + ref`` placed symmetrically about 0 by default."""
    from .optics import ChannelMap

    first = window.channel_indices[0]
    if ref_charge is None:
        ref_charge = -int(np.floor(stride * (window.N - 1) / 2))
    return ChannelMap(stride, first, ref_charge)


def _wave_metrics(report: GateReport, cfg: RunConfig, charges):
    from .optics import ChannelMap, wave_gate_operator

    w = report.spec.window
    o = cfg.optics
    if charges is not None:
        steps = np.diff(charges)
        if len(charges) != w.N or (steps.size and (np.any(steps <= 0) or np.any(steps != steps[0]))):
            raise InputError(f"--charges needs {w.N} increasing evenly spaced charges")
        stride = int(steps[0]) if steps.size else o.stride
        cmap = ChannelMap(stride, w.channel_indices[0], int(charges[0]))
    else:
        cmap = default_channel_map(w, o.stride, o.ref_charge)
    ring = None
    if o.ring_radius_m is not None:
        ring = (o.ring_radius_m, o.ring_width_m or o.ring_radius_m / 4)
    from .optics import SorterParams

    params = None
    if o.sorter_a_m is not None:
        base = SorterParams.default(o.grid, o.pitch_m, o.wavelength_m)
        params = SorterParams(o.sorter_a_m, o.sorter_b_m or o.sorter_a_m, base.f)
    V = wave_gate_operator(report.result(), w, cmap, (o.grid, o.grid), o.pitch_m,
                           o.wavelength_m, params, ring)
    from .synthesis import evaluate_gate

    Vc, _, _ = evaluate_gate(report.params, report.spec)
    U = report.spec.target
    return {"fidelity": fidelity(U, V), "agreement": fidelity(Vc, V),
            "probability": float(np.sum(np.abs(V) ** 2) / w.N),
            "charges": [int(c) for c in cmap.charge(np.asarray(w.channel_indices))],
            "grid": o.grid}


def _path_metrics(report: GateReport, cfg: RunConfig):
    from .path import PathLayout, PathModel, phase_test
    from .synthesis import FILTERED, evaluate_gate

    w = report.spec.window
    p = cfg.path
    base = PathLayout.for_window(w)
    layout = PathLayout(p.L_m, p.f_m, p.wavelength_m, base.n_channels, p.samples)
    model = PathModel(report.result(), w, layout, FILTERED)
    V = model.operator()
    spec = replace(report.spec, boundary_policy=FILTERED)
    Vc, _, _ = evaluate_gate(report.params, spec)
    U = report.spec.target
    return {"phase_test_fidelity": phase_test(model, U), "fidelity": fidelity(U, V),
            "agreement": fidelity(Vc, V),
            "probability": float(np.sum(np.abs(V) ** 2) / w.N)}


@main.command()
@click.argument("report_path", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["abstract", "wave", "path"]), default="abstract",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="TOML file supplying [optics] / [path] geometry.")
@click.option("--grid", type=int, help="Override the wave-optics grid size (pixels).")
@click.option("--charges", help="Encoded OAM charges for wave mode, e.g. -3,3.")
@click.option("--write/--no-write", default=False, help="Store the metrics in the report.")
def verify(report_path, mode, config_path, grid, charges, write):
    """Recompute a report's metrics in the abstract, wave or path model."""
    report = _load_report(report_path)
    cfg = _load_cfg(config_path)
    if grid is not None:
        cfg = replace(cfg, optics=replace(cfg.optics, grid=grid))
    if mode == "abstract":
        metrics = evaluate_report(report)
        stored = report.metrics["abstract"]
        metrics["matches_report"] = bool(
            abs(metrics["fidelity"] - stored["fidelity"]) <= 1e-9
            and abs(metrics["probability"] - stored["probability"]) <= 1e-9)
    elif report.spec.layer_count != 3:
        raise InputError(f"{mode} verification needs a three-layer gate")
    elif mode == "wave":
        metrics = _wave_metrics(report, cfg, _int_list(charges))
    else:
        metrics = _path_metrics(report, cfg)
    _echo_json({"mode": mode, **metrics})
    if write and mode != "abstract":
        report.metrics[mode] = metrics
        report.save(report_path)


@main.command()
@_common_synthesis_options
@click.option("--kind", type=click.Choice(["guard", "separation"]), required=True)
@click.option("--d-values", default="0,1,2,3", show_default=True,
              help="Guard counts for --kind guard.")
@click.option("--separations", default="1,2,3,4,5,6,7,8", show_default=True,
              help="Encoding-run separations for --kind separation.")
@click.option("--mode", type=click.Choice(["reoptimize", "fixed"]), default="reoptimize",
              show_default=True, help="Guard sweep: re-synthesize at each d or reuse one gate.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              help="Separation sweep: replicate this gate instead of synthesizing one.")
@click.option("--both-policies/--one-policy", default=True, show_default=True,
              help="Guard sweep: emit OPEN and FILTERED curves.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV file.")
def sweep(config_path, kind, d_values, separations, mode, report_path, both_policies, out, **kw):
    """Write a guard-band or replica-separation curve as CSV.

    Guard columns: policy, d, fidelity, probability. Separation columns:
    separation, worst_fidelity, replica_fidelities (semicolon separated).
    """
    ocfg = None
    if report_path:
        report = _load_report(report_path)
        spec, result = report.spec, report.result()
    else:
        cfg = _apply_overrides(_load_cfg(config_path), **kw)
        spec, _ = build_spec(cfg)
        ocfg = optimizer_config(cfg)
        result = None
    rows = []
    if kind == "guard":
        ds = _int_list(d_values)
        pols = ("OPEN", "FILTERED") if both_policies else (spec.boundary_policy,)
        try:
            curves = guard_band_sweep(spec, ds, ocfg, mode, pols, result)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        header = GUARD_COLUMNS
        for pol in pols:
            for d, F, P in curves[pol]:
                rows.append((pol, d, repr(float(F)), repr(float(P))))
    else:
        seps = _int_list(separations)
        try:
            data = crosstalk_vs_separation(spec, seps, result, ocfg)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        header = SEPARATION_COLUMNS
        for sep, worst, fids in data:
            rows.append((sep, repr(float(worst)), ";".join(repr(float(x)) for x in fids)))
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    click.echo(f"{len(rows)} rows -> {out}")


@main.command()
@click.argument("report_path", type=click.Path(dir_okay=False))
@click.option("--centers", required=True, help="Replica center channels, e.g. 28,36.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def parallelize(report_path, centers, out):
    """Replicate a three-layer gate's shaper at several centers."""
    report = _load_report(report_path)
    cs = _int_list(centers)
    try:
        par = parallel_metrics(report, cs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    new = replace(report, parallel=par)
    new.save(out)
    fids = par["replica_fidelities"]
    click.echo("replica fidelities " + " ".join(f"{x:.6f}" for x in fids) + f" -> {out}")
    if min(fids) < report.spec.fidelity_floor:
        sys.exit(EXIT_INFEASIBLE)


@main.command("export-masks")
@click.argument("report_path", required=False, type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--grid", type=int, help="Override the mask size (pixels).")
@click.option("--clock", is_flag=True,
              help="Export the clock shaper g(l) = pi*l/4 instead of a report's masks.")
@click.option("--sorter/--no-sorter", default=True, show_default=True,
              help="Also export the two sorter elements.")
def export_masks(report_path, out_dir, config_path, grid, clock, sorter):
    """Write SLM phase masks as PGM (P5) plus float32 raw with JSON sidecars."""
    from .optics import (
        ChannelMap,
        SorterParams,
        angular_mask,
        export_mask,
        oam_shaper_mask,
        physical_angle_function,
        sorter_masks,
    )

    cfg = _load_cfg(config_path)
    o = cfg.optics
    W = grid or o.grid
    shape, pitch, lam = (W, W), o.pitch_m, o.wavelength_m
    params = SorterParams.default(W, pitch, lam)
    if o.sorter_a_m is not None:
        params = SorterParams(o.sorter_a_m, o.sorter_b_m or o.sorter_a_m, params.f)
    outdir = Path(out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if clock:
        lmax = 40
        g = ShaperFunction(np.pi * np.arange(-lmax, lmax + 1) / 4, -lmax)
        export_mask(oam_shaper_mask(g, params, shape, pitch, lam, ChannelMap(1, 0, 0)),
                    outdir / "clock_shaper", lam)
        written.append("clock_shaper")
    else:
        if report_path is None:
            raise InputError("give a REPORT or --clock")
        report = _load_report(report_path)
        if report.spec.layer_count != 3:
            raise InputError("mask export needs a three-layer gate")
        w = report.spec.window
        cmap = default_channel_map(w, o.stride, o.ref_charge)
        g = report.shapers[0]
        if report.parallel is not None:
            g = ShaperFunction(report.parallel["shaper"]["values"],
                               report.parallel["shaper"]["start"])
        first, last = report.series[1], report.series[0]
        export_mask(angular_mask(physical_angle_function(first, cmap.stride), shape, pitch),
                    outdir / "angular_first", lam)
        export_mask(oam_shaper_mask(g, params, shape, pitch, lam, cmap), outdir / "shaper", lam)
        export_mask(angular_mask(physical_angle_function(last, cmap.stride), shape, pitch),
                    outdir / "angular_last", lam)
        written += ["angular_first", "shaper", "angular_last"]
    if sorter:
        m1, m2 = sorter_masks(params, shape, pitch, lam)
        export_mask(m1, outdir / "sorter_unwrapper", lam)
        export_mask(m2, outdir / "sorter_corrector", lam)
        written += ["sorter_unwrapper", "sorter_corrector"]
    for name in written:
        click.echo(str(outdir / f"{name}.pgm"))


@main.command("report")
@click.argument("report_path", type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Print the stored metrics as JSON.")
def report_cmd(report_path, as_json):
    """Summarize a stored report."""
    r = _load_report(report_path)
    if as_json:
        _echo_json({"target": r.target_name, "metrics": r.metrics, "provenance": r.provenance,
                    "parallel": r.parallel})
        return
    w = r.spec.window
    a = r.metrics["abstract"]
    lines = [
        f"target        {r.target_name} (N={w.N})",
        f"window        K={w.K} d={w.d} channels={list(w.channel_indices)}",
        f"layers        {r.spec.layer_count} policy={r.spec.boundary_policy}",
        f"fidelity      {a['fidelity']:.6f} (floor {r.spec.fidelity_floor})",
        f"probability   {a['probability']:.6f}",
        f"converged     {r.optimizer.get('converged')}",
    ]
    for mode in ("wave", "path"):
        m = r.metrics.get(mode)
        if m:
            key = "phase_test_fidelity" if mode == "path" else "fidelity"
            lines.append(f"{mode:<13} fidelity {m[key]:.6f} agreement {m['agreement']:.6f}")
    if r.parallel:
        fids = " ".join(f"{x:.6f}" for x in r.parallel["replica_fidelities"])
        lines.append(f"parallel      centers={r.parallel['centers']} fidelities {fids}")
    for i, s in enumerate(r.series):
        amps = " ".join(f"{x:.4f}" for x in s.amplitudes)
        lines.append(f"series[{i}]     A=({amps})")
    lines.append(f"provenance    seed={r.provenance.get('seed')} "
                 f"version={r.provenance.get('version')} "
                 f"timestamp={r.provenance.get('timestamp')}")
    click.echo("\n".join(lines))


if __name__ == "__main__":
    main()
