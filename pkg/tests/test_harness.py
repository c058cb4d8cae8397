"""
Experiment harness tests: presets, configuration parsing, assumption
validation, end-to-end runs with their artifacts, the run registry and
the command-line exit codes.
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from optneq.cli import main
from optneq.config import (
    DSGT_VARIANTS,
    PP_VARIANTS,
    PRESETS,
    Algorithm,
    ExperimentConfig,
    build_setup,
    dump_config,
    load_config,
    preset,
)
from optneq.errors import ConfigurationError
from optneq.metrics import CSV_COLUMNS, read_metrics_csv
from optneq.registry import RunRegistry, registry_url
from optneq.runner import load_manifest, logged_iterations, run_experiment
from optneq.validation import validate_setup
from setup_results_db import setup_results_database


LIGHT_ORACLE = {"enabled": True, "lambda_stop": 1e-4, "stages": 4, "tol": 1e-7}


def _small(name, tmp_path, **updates):
    data = preset(name).model_dump(mode="json")
    data.update(iterations=200, log_every=50, output_dir=str(tmp_path / "out"))
    data.update(updates)
    return ExperimentConfig.model_validate(data)


def _write(cfg, path):
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path


# ============================================================================
# PRESETS AND CONFIGURATION
# ============================================================================
def test_four_presets_with_their_schedules():
    assert set(PRESETS) == {"StarPP", "RandomDigraphPP", "PetersenDSGT", "RandomUndirectedDSGT"}
    star = preset("starpp")
    assert star.algorithm is Algorithm.IR_PUSH_PULL
    assert [(v.a, v.b) for v in star.schedule.variants] == PP_VARIANTS
    petersen = preset("PetersenDSGT")
    assert [(v.a, v.b) for v in petersen.schedule.variants] == DSGT_VARIANTS
    assert petersen.paths == 10
    assert preset("RandomDigraphPP").topology.edge_target == 460


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("Hypercube")


def test_config_round_trips_through_json(tmp_path):
    cfg = preset("PetersenDSGT")
    assert load_config(_write(cfg, tmp_path / "cfg.json")) == cfg


def test_unknown_keys_and_bad_topologies_are_rejected():
    data = preset("StarPP").model_dump(mode="json")
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({**data, "colour": "blue"})
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({**data, "topology": {"kind": "petersen", "m": 12}})
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({**data, "topology": {"m": 10}})


def test_variant_labels():
    assert [v.label for v in preset("StarPP").schedule.variants] == ["a0.5_b0.3", "a0.6_b0.25", "a0.675_b0.2"]


def test_push_pull_presets_use_max_degree_weights():
    for name in ("StarPP", "RandomDigraphPP"):
        assert preset(name).topology.weighting == "max_degree"
    # star: d_max = 9, alpha = 1/18, hub keeps half its mass
    setup = build_setup(preset("StarPP"))
    R = setup.R.entries
    assert R[0, 0] == pytest.approx(0.5)
    assert R[1, 0] == pytest.approx(1.0 / 18.0)
    assert R[1, 1] == pytest.approx(17.0 / 18.0)
    assert preset("PetersenDSGT").topology.weighting == "uniform"


def test_logged_iterations_include_the_last_one():
    assert logged_iterations(200, 50) == [0, 50, 100, 150, 200]
    assert logged_iterations(120, 50) == [0, 50, 100, 120]


# ============================================================================
# VALIDATION
# ============================================================================
@pytest.mark.parametrize("name", list(PRESETS))
def test_every_preset_passes_validation(name):
    report = validate_setup(preset(name))
    assert report.passed, report.render()
    names = {c.name for c in report.checks}
    if name.endswith("PP"):
        assert {"R row-stochastic", "C column-stochastic", "root intersection"} <= names
    else:
        assert "W doubly stochastic" in names
        assert "sampled oracle unbiased" in names
        rho = next(c for c in report.checks if c.name.startswith("rho_W"))
        assert rho.measured < 0.99


def test_stochasticity_deviations_are_tiny():
    for name in ("StarPP", "RandomDigraphPP"):
        setup = build_setup(preset(name))
        assert setup.R.row_deviation() <= 1e-12
        assert setup.C.column_deviation() <= 1e-12
    setup = build_setup(preset("RandomUndirectedDSGT"))
    assert setup.W.deviation() <= 1e-12


def test_dsgt_schedule_on_push_pull_fails_validation(tmp_path):
    cfg = _small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.4}]})
    report = validate_setup(cfg)
    assert not report.passed
    failed = [c for c in report.checks if not c.passed]
    assert [c.name for c in failed] == ["schedule a0.5_b0.4"]
    assert "2a + 3b < 2" in failed[0].detail


def test_disconnected_network_fails_dsgt_validation(tmp_path):
    edges = tmp_path / "split.edges"
    edges.write_text("4 undirected\n0 1\n2 3\n", encoding="utf-8")
    cfg = _small("PetersenDSGT", tmp_path, topology={"edge_list": str(edges), "m": 4})
    report = validate_setup(cfg)
    assert not report.passed
    status = {c.name: c.passed for c in report.checks}
    assert status["connected"] is False
    assert status["mixing matrices"] is False


def test_missing_edge_list_file_is_reported(tmp_path):
    cfg = _small("PetersenDSGT", tmp_path, topology={"edge_list": str(tmp_path / "nope.edges"), "m": 4})
    report = validate_setup(cfg)
    assert not report.passed
    assert report.checks[0].name == "topology"


def test_malformed_edge_list_is_reported(tmp_path):
    edges = tmp_path / "short_row.edges"
    edges.write_text("3 undirected\n0\n1 2\n", encoding="utf-8")
    cfg = _small("PetersenDSGT", tmp_path, topology={"edge_list": str(edges), "m": 3})
    report = validate_setup(cfg)
    assert not report.passed
    assert [c.name for c in report.checks] == ["topology"]
    assert "line 2" in report.checks[0].detail


def test_agent_multiplier_count_must_match_the_agents(tmp_path):
    cfg = _small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.3}], "agent_multipliers": [1.0, 1.0]})
    report = validate_setup(cfg)
    assert not report.passed
    failed = [c for c in report.checks if not c.passed]
    assert [c.name for c in failed] == ["agent multipliers"]
    assert failed[0].measured == 2

    fitting = _small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.3}], "agent_multipliers": [1.0] * 10})
    assert validate_setup(fitting).passed


def test_report_renders_marks():
    text = validate_setup(preset("StarPP")).render()
    assert "✅ ALL CHECKS PASSED" in text
    assert "root intersection" in text


# ============================================================================
# RUNS
# ============================================================================
def test_push_pull_run_writes_one_csv_per_variant(tmp_path):
    cfg = _small("StarPP", tmp_path)
    summary = run_experiment(cfg)
    assert not summary.diverged
    assert [t.csv for t in summary.tasks] == ["a0.5_b0.3.csv", "a0.6_b0.25.csv", "a0.675_b0.2.csv"]
    for task in summary.tasks:
        frame = read_metrics_csv(summary.out_dir / task.csv)
        assert list(frame.columns) == list(CSV_COLUMNS)
        assert frame["k"].tolist() == [0, 50, 100, 150, 200]
        assert frame["upper"].notna().all()
        assert frame["dist_opt"].isna().all()
        assert np.all(frame[["lower", "consensus_x", "consensus_y"]].to_numpy() >= 0)
    assert (summary.out_dir / "problem.json").exists()


def test_runs_are_byte_identical_across_worker_counts(tmp_path):
    serial = run_experiment(_small("StarPP", tmp_path), tmp_path / "serial", workers=1)
    parallel = run_experiment(_small("StarPP", tmp_path), tmp_path / "parallel", workers=3)
    for task in serial.tasks:
        assert (serial.out_dir / task.csv).read_bytes() == (parallel.out_dir / task.csv).read_bytes()
    assert (serial.out_dir / "problem.json").read_bytes() == (parallel.out_dir / "problem.json").read_bytes()


def test_dsgt_run_writes_paths_means_and_oracle(tmp_path):
    cfg = _small("PetersenDSGT", tmp_path, paths=2, iterations=100, log_every=25,
                 schedule={"variants": [{"a": 0.5, "b": 0.4}]}, oracle=LIGHT_ORACLE)
    summary = run_experiment(cfg)
    assert [t.csv for t in summary.tasks] == ["a0.5_b0.4_path00.csv", "a0.5_b0.4_path01.csv"]
    assert summary.means == ["a0.5_b0.4_mean.csv"]
    p0 = read_metrics_csv(summary.out_dir / "a0.5_b0.4_path00.csv")
    p1 = read_metrics_csv(summary.out_dir / "a0.5_b0.4_path01.csv")
    mean = read_metrics_csv(summary.out_dir / "a0.5_b0.4_mean.csv")
    np.testing.assert_allclose(mean["consensus_x"], 0.5 * (p0["consensus_x"] + p1["consensus_x"]))
    assert p0["dist_opt"].notna().all()
    assert not np.array_equal(p0["consensus_x"].to_numpy(), p1["consensus_x"].to_numpy())
    oracle = json.loads((summary.out_dir / "oracle.json").read_text())
    assert len(oracle["trajectory"]) == cfg.oracle.stages

    assert summary.envelopes == ["a0.5_b0.4_min.csv", "a0.5_b0.4_max.csv"]
    low = read_metrics_csv(summary.out_dir / "a0.5_b0.4_min.csv")
    high = read_metrics_csv(summary.out_dir / "a0.5_b0.4_max.csv")
    assert low["k"].tolist() == mean["k"].tolist() == [0, 25, 50, 75, 100]
    for col in ("lower", "consensus_x", "dist_opt"):
        np.testing.assert_array_equal(low[col], np.minimum(p0[col], p1[col]))
        np.testing.assert_array_equal(high[col], np.maximum(p0[col], p1[col]))
        assert np.all(low[col] <= mean[col]) and np.all(mean[col] <= high[col])
    manifest = json.loads(summary.manifest_path.read_text())
    assert manifest["envelopes"] == summary.envelopes


def test_snapshots_are_written_on_request(tmp_path):
    summary = run_experiment(_small("StarPP", tmp_path, save_snapshots=True,
                                    schedule={"variants": [{"a": 0.5, "b": 0.3}]}))
    with np.load(summary.out_dir / "a0.5_b0.3.npz") as data:
        assert data["k"].tolist() == [0, 50, 100, 150, 200]
        assert data["X"].shape == (5, 10, 10)


def test_manifest_echoes_the_config(tmp_path):
    cfg = _small("StarPP", tmp_path)
    summary = run_experiment(cfg)
    manifest = json.loads(summary.manifest_path.read_text())
    assert load_manifest(summary.manifest_path) == cfg
    assert manifest["seeds"] == {"topology": 0, "problem": 0, "noise": 0, "init": 0}
    assert manifest["versions"]["optneq"] == "0.1.0"
    assert len(manifest["tasks"]) == 3
    assert manifest["spectral"]["sigma_r"] < 1


def test_failed_validation_blocks_the_run_unless_forced(tmp_path):
    cfg = _small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.4}]})
    with pytest.raises(ConfigurationError):
        run_experiment(cfg)
    summary = run_experiment(cfg, force=True)
    assert summary.tasks[0].status == "ok"
    assert json.loads(summary.manifest_path.read_text())["forced"] is True


def test_divergence_is_recorded_per_variant(tmp_path):
    cfg = _small("StarPP", tmp_path, schedule={"gamma_hat": 1e200, "variants": [{"a": 0.5, "b": 0.3}]})
    summary = run_experiment(cfg)
    assert summary.diverged
    task = summary.tasks[0]
    assert task.status == "diverged"
    assert "diverged" in task.error
    assert (summary.out_dir / task.csv).exists()


def test_registry_records_runs(tmp_path):
    cfg = _small("StarPP", tmp_path, registry=True)
    summary = run_experiment(cfg)
    registry = RunRegistry(registry_url(output_dir=summary.out_dir))
    experiments = registry.experiments_frame()
    assert experiments["name"].tolist() == ["star_pp"]
    tasks = registry.tasks_frame(int(experiments["id"].iloc[0]))
    assert tasks["variant"].tolist() == ["a0.5_b0.3", "a0.6_b0.25", "a0.675_b0.2"]
    assert set(tasks["status"]) == {"ok"}


def test_registry_setup_and_reset(tmp_path):
    location = tmp_path / "db" / "runs.db"
    registry = setup_results_database(location)
    registry.record_experiment("x", "ir_dsgt", str(tmp_path), {}, 1.0, "ok", [])
    assert len(registry.experiments_frame()) == 1
    assert len(setup_results_database(location, reset=True).experiments_frame()) == 0


# ============================================================================
# COMMAND LINE
# ============================================================================
def test_cli_preset_dump(capsys):
    assert main(["preset", "PetersenDSGT", "--dump"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["algorithm"] == "ir_dsgt"


def test_cli_check_exit_codes(tmp_path):
    good = _write(_small("StarPP", tmp_path), tmp_path / "good.json")
    bad = _write(_small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.4}]}), tmp_path / "bad.json")
    assert main(["check", str(good)]) == 0
    assert main(["check", str(bad), "--json"]) == 1
    assert main(["check", str(tmp_path / "missing.json")]) == 3


def test_cli_rejects_malformed_configs(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"algorithm": "ir_push_pull"}', encoding="utf-8")
    assert main(["check", str(path)]) == 1


def test_cli_reports_bad_inputs_as_validation_failures(tmp_path):
    edges = tmp_path / "bad.edges"
    edges.write_text("4 undirected\n0 one\n", encoding="utf-8")
    cfg = _small("PetersenDSGT", tmp_path, topology={"edge_list": str(edges), "m": 4})
    assert main(["check", str(_write(cfg, tmp_path / "edges.json"))]) == 1

    cfg = _small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.3}], "agent_multipliers": [1.0, 1.0]})
    assert main(["run", str(_write(cfg, tmp_path / "mult.json")), "--out", str(tmp_path / "m")]) == 1
    assert main(["run", str(tmp_path / "mult.json"), "--out", str(tmp_path / "m"), "--force"]) == 1


def test_cli_run_and_rates(tmp_path, capsys):
    cfg_path = _write(_small("StarPP", tmp_path, schedule={"variants": [{"a": 0.5, "b": 0.3}]}), tmp_path / "c.json")
    out = tmp_path / "cli_out"
    assert main(["run", str(cfg_path), "--out", str(out)]) == 0
    assert "a0.5_b0.3.csv" in capsys.readouterr().out
    code = main(["rates", str(out / "a0.5_b0.3.csv"), "--field", "consensus_x", "--exponent", "0.2",
                 "--gamma", "9", "--window", "0:200"])
    assert code == 0
    assert "log-log slope" in capsys.readouterr().out


def test_cli_run_reports_divergence(tmp_path):
    cfg = _small("StarPP", tmp_path, schedule={"gamma_hat": 1e200, "variants": [{"a": 0.5, "b": 0.3}]})
    assert main(["run", str(_write(cfg, tmp_path / "d.json")), "--out", str(tmp_path / "d")]) == 2


def test_cli_oracle(tmp_path):
    cfg = _small("StarPP", tmp_path, oracle=LIGHT_ORACLE)
    out = tmp_path / "oracle"
    assert main(["oracle", str(_write(cfg, tmp_path / "o.json")), "--out", str(out)]) == 0
    assert (out / "oracle.json").exists()
