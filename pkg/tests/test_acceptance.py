"""
End-to-end convergence checks on the reference experiments.

The long-horizon runs are marked ``slow``; deselect them with
``pytest -m "not slow"``.
"""

import numpy as np
import pandas as pd
import pytest

from optneq.config import ExperimentConfig, build_setup, preset
from optneq.graph import TopologyKind, build_pull_matrix, build_push_matrix, build_topology, spectral_report
from optneq.metrics import fit_decay, network_average, read_metrics_csv
from optneq.runner import run_experiment
from optneq.schedule import AlgorithmMode, ScheduleParams
from optneq.solvers import (
    geometric_lambdas,
    initial_point,
    run_dsgt,
    run_push_pull,
    sequential_regularization,
    tracking_deviation,
)


def _single_variant(name, a, b, tmp_path, **updates):
    data = preset(name).model_dump(mode="json")
    data["schedule"]["variants"] = [{"a": a, "b": b}]
    data.update(output_dir=str(tmp_path), **updates)
    return ExperimentConfig.model_validate(data)


# ============================================================================
# TRACKING OVER 5000 ITERATIONS
# ============================================================================
def test_star_push_pull_tracks_the_gradient_sum():
    cfg = preset("StarPP")
    setup = build_setup(cfg)
    sched = cfg.schedule.params(cfg.schedule.variants[0], cfg.mode)
    states = run_push_pull(setup.inst, sched, setup.R, setup.C, initial_point(setup.inst, cfg.init_seed), 5000)
    assert max(tracking_deviation(s) for s in states) <= 1e-8


def test_petersen_dsgt_tracks_the_sampled_gradient_sum():
    cfg = preset("PetersenDSGT")
    setup = build_setup(cfg)
    sched = cfg.schedule.params(cfg.schedule.variants[0], cfg.mode)
    states = run_dsgt(setup.inst, sched, setup.W, initial_point(setup.inst, cfg.init_seed), 5000, cfg.seed, 0)
    assert max(tracking_deviation(s) for s in states) <= 1e-8


# ============================================================================
# LONG RUNS
# ============================================================================
@pytest.mark.slow
def test_push_pull_reaches_the_sequential_regularization_point(cournot5):
    _, inst = cournot5
    oracle = sequential_regularization(inst, geometric_lambdas(1.0, 1e-8, 9), 1e-9)
    assert oracle.trajectory[-1].residual <= 1e-8

    t = build_topology(TopologyKind.STAR_DIGRAPH, m=5)
    R, C = build_pull_matrix(t), build_push_matrix(t)
    u = spectral_report(R=R, C=C).u
    sched = ScheduleParams(gamma_hat=1.0, lambda_coef=1.0, big_gamma=10.0, a=0.5, b=0.3,
                           mode=AlgorithmMode.PUSH_PULL)
    x0 = initial_point(inst, 0)
    for last in run_push_pull(inst, sched, R, C, x0, 200_000):
        pass

    start = np.linalg.norm(network_average(x0, u) - oracle.x_star)
    end = np.linalg.norm(network_average(last.X, u) - oracle.x_star)
    assert end <= 0.05 * start


@pytest.mark.slow
def test_push_pull_consensus_error_respects_its_bound(tmp_path):
    cfg = _single_variant("StarPP", 0.5, 0.3, tmp_path, iterations=100_000, log_every=100)
    summary = run_experiment(cfg)
    frame = read_metrics_csv(summary.out_dir / summary.tasks[0].csv)
    fit = fit_decay(frame, "consensus_x", (1_000, 100_000), 0.2, cfg.schedule.big_gamma - 1.0)
    assert fit.non_growing(0.05), fit


@pytest.mark.slow
def test_dsgt_mean_square_consensus_respects_its_bound(tmp_path):
    cfg = _single_variant("PetersenDSGT", 0.5, 0.4, tmp_path, iterations=10_000, log_every=100,
                          oracle={"enabled": True})
    summary = run_experiment(cfg)
    assert len(summary.tasks) == 10
    frames = [read_metrics_csv(summary.out_dir / t.csv) for t in summary.tasks]

    squared = pd.DataFrame({"k": frames[0]["k"]})
    squared["consensus_x"] = np.mean([f["consensus_x"].to_numpy() ** 2 for f in frames], axis=0)
    fit = fit_decay(squared, "consensus_x", (100, 10_000), 1.0, cfg.schedule.big_gamma - 1.0)
    assert fit.non_growing(0.05), fit

    dist = np.mean([f.set_index("k")["dist_opt"].loc[[100, 10_000]].to_numpy() for f in frames], axis=0)
    assert dist[1] < dist[0]
