import json

import numpy as np
import pytest

from qmtk.cli import (
    EXIT_OK,
    EXIT_USAGE,
    EXPERIMENTS,
    RunConfig,
    UsageError,
    main,
    random_audit,
    run_experiment,
)


def small_config(experiment, **params):
    return RunConfig.from_dict({"experiment": experiment, "seed": 3, "trials": 4, **params})


def test_unknown_experiment_is_usage_error():
    with pytest.raises(UsageError):
        RunConfig.from_dict({"experiment": "make-coffee"})
    with pytest.raises(UsageError):
        RunConfig.from_dict({"experiment": "ozawa-audit", "trials": 0})


def test_reports_are_deterministic():
    cfg = {"experiment": "ozawa-audit", "seed": 11, "trials": 6}
    r1 = run_experiment(RunConfig.from_dict(cfg))
    r2 = run_experiment(RunConfig.from_dict(cfg))
    assert r1.json_body() == r2.json_body()
    assert r1.csv_body() == r2.csv_body()


def test_threaded_run_matches_serial(monkeypatch):
    cfg = {"experiment": "realization-roundtrip", "seed": 2, "trials": 8}
    serial = run_experiment(RunConfig.from_dict(cfg))
    monkeypatch.setenv("QMTK_THREADS", "2")
    threaded = run_experiment(RunConfig.from_dict(cfg))
    assert serial.json_body() == threaded.json_body()
    assert serial.csv_body() == threaded.csv_body()


def test_random_audit_suites():
    report = random_audit("roundtrip", seed=1, trials=5)
    assert report.summary["violations"] == 0
    assert report.summary["max_distance"] < 1e-9
    report = random_audit("cp-check", seed=1, trials=5)
    assert report.summary["counterexample_flagged"]
    assert report.summary["counterexample_min_eigenvalue"] <= -0.4
    with pytest.raises(UsageError):
        random_audit("nonsense")


def test_ozawa_audit_has_no_violations():
    report = run_experiment(small_config("ozawa-audit"))
    assert report.violations == 0
    assert report.summary["min_margin"] >= -1e-9
    assert len(report.rows) == 4


def test_way_and_yanase_audits():
    report = run_experiment(small_config("way-audit"))
    assert report.violations == 0
    report = run_experiment(RunConfig.from_dict(
        {"experiment": "yanase-bound", "seed": 5, "trials": 3, "sampled_states": 6}))
    assert report.violations == 0


def test_gate_audit_small():
    report = run_experiment(RunConfig.from_dict(
        {"experiment": "gate-infidelity-audit", "seed": 1, "trials": 1,
         "N": 1, "theta": np.pi, "cb_starts": 3}))
    assert report.violations == 0
    assert report.summary["min_margin"] >= -1e-9
    assert report.fieldnames[:4] == ["seed", "trial", "N", "theta"]


def test_grid_experiments_on_small_grid():
    grid = {"n_points": 64, "length": 1.0, "probe_width": 1 / 24}
    cm = run_experiment(RunConfig.from_dict(
        {"experiment": "contractive-model", "grid": grid, "object_width": 1 / 20}))
    assert cm.violations == 0
    row = cm.rows[0]
    assert row["epsilon"] == 0.0 and row["epsilon_exactly_zero"]
    assert not row["heisenberg_holds"] and row["universal_holds"]
    vn = run_experiment(RunConfig.from_dict(
        {"experiment": "vn-model", "grid": grid, "object_width": 1 / 20}))
    assert vn.violations == 0
    assert vn.rows[0]["heisenberg_holds"]
    demo = run_experiment(RunConfig.from_dict(
        {"experiment": "heisenberg-violation-demo", "grid": grid, "object_width": 1 / 20}))
    assert demo.violations == 0
    assert demo.rows[0]["heisenberg_violated"]


def test_logic_and_simultaneity_experiments():
    report = run_experiment(RunConfig.from_dict({
        "experiment": "logic-eval",
        "operators": {"sz": "pauli-z", "sx": "pauli-x"},
        "state": "maximally-mixed",
        "proposition": {"and": [{"atom": {"obs": "sz", "set": [1.0]}},
                                {"atom": {"obs": "sx", "set": [1.0]}}]},
    }))
    assert report.summary["rank"] == 0  # no common eigenvector
    assert report.summary["probability"] == 0.0
    sim = run_experiment(RunConfig.from_dict({"experiment": "simultaneity-demo"}))
    assert sim.violations == 0


def test_main_run_and_artifacts(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(
        {"experiment": "realization-roundtrip", "seed": 4, "trials": 3}))
    out_dir = tmp_path / "out"
    code = main(["run", "--config", str(cfg_path), "--out", str(out_dir)])
    assert code == EXIT_OK
    stdout = capsys.readouterr().out
    assert json.loads(stdout)["summary"]["violations"] == 0
    assert (out_dir / "realization-roundtrip.json").exists()
    assert (out_dir / "realization-roundtrip.csv").exists()
    csv_text = (out_dir / "realization-roundtrip.csv").read_text()
    assert csv_text.splitlines()[0].startswith("trial,")
    assert len(csv_text.splitlines()) == 4


def test_main_flag_selection(tmp_path, capsys):
    out_dir = tmp_path / "o2"
    code = main(["audit", "roundtrip", "--seed", "1", "--trials", "2",
                 "--out", str(out_dir), "--csv"])
    capsys.readouterr()
    assert code == EXIT_OK
    assert not (out_dir / "realization-roundtrip.json").exists()
    assert (out_dir / "realization-roundtrip.csv").exists()


def test_main_usage_errors(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"experiment": "not-a-thing"}))
    assert main(["run", "--config", str(cfg_path)]) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    assert main(["audit", "not-a-suite"]) == EXIT_USAGE
    capsys.readouterr()


def test_tolerance_overrides_apply_and_are_recorded():
    strict = run_experiment(RunConfig.from_dict(
        {"experiment": "realization-roundtrip", "seed": 2, "trials": 3,
         "tolerances": {"relation": 1e-18}}))
    assert strict.violations == 3  # machine-precision roundtrips fail a 1e-18 gate
    assert '"relation": 1e-18' in strict.json_body()
    default = run_experiment(RunConfig.from_dict(
        {"experiment": "realization-roundtrip", "seed": 2, "trials": 3}))
    assert default.violations == 0


def test_experiment_registry_covers_documented_names():
    required = {
        "ozawa-audit", "heisenberg-violation-demo", "vn-model", "contractive-model",
        "way-audit", "yanase-bound", "gate-infidelity-audit", "logic-eval",
        "simultaneity-demo", "realization-roundtrip",
    }
    assert required <= set(EXPERIMENTS)
