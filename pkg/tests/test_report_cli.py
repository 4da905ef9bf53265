import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from oamgate.cli import main
from oamgate.config import ConfigError, RunConfig, parse_config
from oamgate.core import ChannelWindow, hadamard
from oamgate.optics import read_pgm
from oamgate.report import GateReport, complex_from_json, complex_to_json, evaluate_report
from oamgate.synthesis import GateSpec, OptimizerConfig, optimize


@pytest.fixture(scope="module")
def h2_report():
    spec = GateSpec(hadamard(2), ChannelWindow.centered(64, 2, 3))
    res = optimize(spec, OptimizerConfig(restarts=4, seed=3))
    return GateReport.from_result(spec, res, {"restarts": 4}, "hadamard2")


def run(args, **kw):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kw)


def test_complex_json_round_trip():
    M = np.array([[1 + 2j, -0.5j], [3.25, 1e-17 - 1j]])
    assert np.array_equal(complex_from_json(json.loads(json.dumps(complex_to_json(M)))), M)


def test_report_serialization_byte_identical(h2_report):
    text = h2_report.to_json()
    again = GateReport.from_json(text).to_json()
    assert again == text
    assert GateReport.from_json(again).to_json() == text


def test_evaluate_reproduces_stored_metrics(h2_report):
    r = GateReport.from_json(h2_report.to_json())
    m = evaluate_report(r)
    assert abs(m["fidelity"] - r.metrics["abstract"]["fidelity"]) <= 1e-9
    assert abs(m["probability"] - r.metrics["abstract"]["probability"]) <= 1e-9


def test_unknown_report_format_rejected(h2_report):
    d = h2_report.to_dict()
    d["format"] = "something-else"
    with pytest.raises(ValueError):
        GateReport.from_dict(d)


def test_timestamp_honours_source_date_epoch(monkeypatch, h2_report):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    spec = h2_report.spec
    r = GateReport.from_result(spec, h2_report.result(), {}, "x", stamp=True)
    assert r.provenance["timestamp"] == "1970-01-01T00:00:00+00:00"


def test_config_defaults_and_units():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.window.K == 64 and cfg.window.guard == 2
    assert cfg.optimizer.harmonics == 3
    assert cfg.optics.wavelength_m == pytest.approx(1.55e-6)
    assert cfg.optics.pitch_m == pytest.approx(8e-6)
    assert cfg.optics.stride == 4
    assert cfg.path.f_m == pytest.approx(0.4) and cfg.path.L_m == pytest.approx(2e-3)


def test_config_rejects_unknown_keys_and_bad_toml():
    with pytest.raises(ConfigError):
        parse_config("[window]\nKK = 3\n")
    with pytest.raises(ConfigError):
        parse_config("[nonsense]\n")
    with pytest.raises(ConfigError):
        parse_config("x = [")
    with pytest.raises(ConfigError):
        parse_config('[gate]\npolicy = "CLOSED"\n')


def test_cli_synthesize_identity_zero_parameters(tmp_path):
    out = tmp_path / "id.json"
    res = run(["synthesize", "--target", "identity", "--restarts", "2", "--out", str(out)])
    assert res.exit_code == 0, res.output
    r = GateReport.load(out)
    assert all(a == 0 for s in r.series for a in s.amplitudes)
    assert all(v == 0 for v in r.shapers[0].values)
    assert r.metrics["abstract"]["fidelity"] == pytest.approx(1.0, abs=1e-12)


def test_cli_random_haar_bitwise_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["synthesize", "--target", "random-haar", "--n", "3", "--seed", "11",
            "--restarts", "3", "--maxiter", "300"]
    codes = [run(args + ["--out", str(p)]).exit_code for p in (a, b)]
    assert codes[0] == codes[1]
    assert a.read_bytes() == b.read_bytes()


def test_cli_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[target]\nname = "hadamard2"\n[window]\nguard = 3\n'
                   '[optimizer]\nrestarts = 2\nseed = 5\n')
    out = tmp_path / "r.json"
    res = run(["synthesize", "--config", str(cfg), "--guard", "1", "--out", str(out)])
    assert res.exit_code in (0, 3)
    r = GateReport.load(out)
    assert r.spec.window.d == 1
    assert r.provenance["seed"] == 5


def test_cli_inline_matrix_target(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[target]\nmatrix = [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]\n"
                   "[optimizer]\nrestarts = 4\n")
    out = tmp_path / "x.json"
    res = run(["synthesize", "--config", str(cfg), "--out", str(out)])
    r = GateReport.load(out)
    assert np.allclose(r.spec.target, [[0, 1], [1, 0]])
    assert res.exit_code == (0 if r.optimizer["converged"] else 3)


def test_cli_parse_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("x = [")
    assert run(["synthesize", "--config", str(bad)]).exit_code == 2
    assert run(["synthesize", "--target", "no-such-gate"]).exit_code == 2
    assert run(["verify", str(tmp_path / "missing.json")]).exit_code == 2
    assert run(["synthesize", "--K", "4", "--guard", "3"]).exit_code == 2


def test_cli_infeasible_exit_3(tmp_path):
    out = tmp_path / "x.json"
    res = run(["synthesize", "--target", "hadamard3", "--guard", "0", "--policy", "FILTERED",
               "--restarts", "1", "--maxiter", "100", "--floor", "0.999999", "--out", str(out)])
    assert res.exit_code == 3
    assert GateReport.load(out).optimizer["converged"] is False


def test_cli_verify_abstract_and_path(tmp_path, h2_report):
    p = tmp_path / "h2.json"
    h2_report.save(p)
    res = run(["verify", str(p), "--mode", "abstract"])
    assert json.loads(res.output)["matches_report"] is True
    res = run(["verify", str(p), "--mode", "path", "--write"])
    m = json.loads(res.output)
    assert m["agreement"] > 0.995
    assert GateReport.load(p).metrics["path"]["agreement"] == m["agreement"]


def test_cli_verify_wave_small_grid(tmp_path, h2_report):
    p = tmp_path / "h2.json"
    h2_report.save(p)
    res = run(["verify", str(p), "--mode", "wave", "--grid", "384", "--charges", "-3,3"])
    m = json.loads(res.output)
    assert m["charges"] == [-3, 3]
    assert m["agreement"] > 0.98


def test_cli_parallelize_and_report(tmp_path):
    src = tmp_path / "h2f.json"
    run(["synthesize", "--target", "hadamard2", "--policy", "FILTERED", "--guard", "2",
         "--restarts", "8", "--out", str(src)])
    out = tmp_path / "par.json"
    res = run(["parallelize", str(src), "--centers", "26,36", "--out", str(out)])
    r = GateReport.load(out)
    assert r.parallel["centers"] == [26, 36]
    assert res.exit_code == (0 if min(r.parallel["replica_fidelities"]) >= 0.999 else 3)
    assert GateReport.from_json(out.read_text()).to_json() == out.read_text()
    summary = run(["report", str(out)]).output
    assert "parallel" in summary and "hadamard2" in summary
    assert run(["parallelize", str(src), "--centers", "30,32", "--out", str(out)]).exit_code == 2


def test_cli_sweep_csv_columns(tmp_path, h2_report):
    p = tmp_path / "h2.json"
    h2_report.save(p)
    g = tmp_path / "g.csv"
    run(["sweep", "--kind", "guard", "--mode", "fixed", "--report", str(p),
         "--d-values", "0,3", "--out", str(g)])
    rows = list(csv.reader(g.open()))
    assert rows[0] == ["policy", "d", "fidelity", "probability"]
    assert [r[:2] for r in rows[1:]] == [["OPEN", "0"], ["OPEN", "3"],
                                         ["FILTERED", "0"], ["FILTERED", "3"]]
    s = tmp_path / "s.csv"
    run(["sweep", "--kind", "separation", "--report", str(p), "--separations", "2,9",
         "--out", str(s)])
    rows = list(csv.reader(s.open()))
    assert rows[0] == ["separation", "worst_fidelity", "replica_fidelities"]
    assert len(rows[2][2].split(";")) == 2


def test_cli_export_masks(tmp_path, h2_report):
    p = tmp_path / "h2.json"
    h2_report.save(p)
    d = tmp_path / "m"
    res = run(["export-masks", str(p), "--out-dir", str(d), "--grid", "64"])
    assert res.exit_code == 0
    for name in ("angular_first", "shaper", "angular_last", "sorter_unwrapper",
                 "sorter_corrector"):
        assert read_pgm(d / f"{name}.pgm").shape == (64, 64)
        meta = json.loads((d / f"{name}.json").read_text())
        raw = np.fromfile(d / f"{name}.f32", dtype="<f4")
        assert raw.size == meta["W"] * meta["H"]


def test_cli_export_clock_staircase(tmp_path):
    d = tmp_path / "m"
    run(["export-masks", "--clock", "--no-sorter", "--out-dir", str(d), "--grid", "256"])
    meta = json.loads((d / "clock_shaper.json").read_text())
    mask = np.fromfile(d / "clock_shaper.f32", dtype="<f4").reshape(meta["H"], meta["W"])
    row = mask[0]
    assert np.allclose(mask, row[None, :])
    levels = np.unique(np.round(row / (np.pi / 4)).astype(int) % 8)
    quarters = row / (np.pi / 4)
    assert np.allclose(quarters, np.round(quarters), atol=1e-4)
    assert set(levels.tolist()) == set(range(8))
    steps = np.mod(np.diff(row), 2 * np.pi)
    nz = steps[steps > 1e-4]
    assert np.allclose(nz, np.pi / 4, atol=1e-5)
