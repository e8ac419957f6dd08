import json
import logging
import math
from pathlib import Path

import numpy as np
import pytest

import config
from conftest import roster_of
from errors import ConfigError, ValidationError
from estimator.clustering import Method, generate_candidates
from estimator.crossval import Criterion
from estimator.model_core import ClusterAssignment, DesignMatrix, fit_wmprc, outcomes_from_differences
from ingestor.ingest import read_matches_csv
from simulator.sampler import generator, replication_key, standard_normals, uniforms
from simulator.simulator import (
    BaseScenario,
    TruthSpec,
    block_assignment,
    generate_y,
    load_experiment_config,
    make_scenario,
    mse_strengths,
    oracle_mspe,
    run_experiment,
    separability_ratios,
    synthetic_schedule,
    true_means,
    write_summary,
)
from reporting import provenance

EXPERIMENTS = Path(__file__).resolve().parent.parent / "config" / "experiments"
ROEBLING = config.DATA_DIR / "2019roe.csv"


@pytest.fixture(scope="module")
def m1_schedule():
    return synthetic_schedule(67, 114, seed=0)


def _three_cluster_truth(sigma):
    return TruthSpec(block_assignment([4, 4, 4]), np.array([-10.0, 0.0, 10.0]), sigma)


# ---------------------------------------------------------------------- #
#  Scenarios
# ---------------------------------------------------------------------- #
def test_scenario_error_scales(m1_schedule):
    assert make_scenario(BaseScenario.M1, 1.0, m1_schedule).sigma == pytest.approx(11.056)
    assert make_scenario(BaseScenario.M1, 0.25, m1_schedule).sigma == pytest.approx(2.764)
    m2 = make_scenario(BaseScenario.M2, 0.25, synthetic_schedule(68, 114, seed=0))
    assert round(m2.sigma, 3) == 2.569


def test_scenario_strengths_are_zero_sum(m1_schedule):
    truth = make_scenario(BaseScenario.M1, 1.0, m1_schedule)
    assert abs(truth.beta.sum()) < 1e-10
    assert truth.sizes.tolist() == [9, 25, 24, 9]
    # recorded values shifted by a common constant
    np.testing.assert_allclose(np.diff(truth.strengths), np.diff([-15.07, -4.75, 4.76, 14.52]))
    assert truth.recorded_strengths == (-15.07, -4.75, 4.76, 14.52)
    assert truth.strengths[0] - truth.recorded_strengths[0] == pytest.approx(0.1411940, abs=1e-6)


def test_scenario_rejects_wrong_roster_size():
    with pytest.raises(ValidationError):
        make_scenario(BaseScenario.M1, 1.0, synthetic_schedule(60, 100, seed=0))


def test_scenario_rejects_mismatched_assignment(m1_schedule):
    with pytest.raises(ValidationError):
        make_scenario(BaseScenario.M1, 1.0, m1_schedule, block_assignment([10, 24, 24, 9]))


def test_scenario_multiplier_checks(m1_schedule, caplog):
    with pytest.raises(ValidationError):
        make_scenario(BaseScenario.M1, -1.0, m1_schedule)
    with caplog.at_level(logging.WARNING):
        truth = make_scenario(BaseScenario.M1, 3.0, m1_schedule)
    assert truth.sigma == pytest.approx(33.168)
    assert "outside the standard grid" in caplog.text


def test_separability_ratios(m1_schedule):
    truth = make_scenario(BaseScenario.M1, 1.0, m1_schedule)
    np.testing.assert_allclose(separability_ratios(truth), np.array([10.32, 9.51, 9.76]) / 11.056)
    noiseless = make_scenario(BaseScenario.M1, 0.0, m1_schedule)
    assert np.all(np.isinf(separability_ratios(noiseless)))


# ---------------------------------------------------------------------- #
#  Schedules and sampling
# ---------------------------------------------------------------------- #
def test_synthetic_schedule_is_balanced():
    design = synthetic_schedule(20, 37, seed=4)
    appearances = np.abs(design.x).sum(axis=0)

    assert appearances.max() - appearances.min() <= 1
    assert np.all((design.x == 1).sum(axis=1) == 3)
    assert np.all((design.x == -1).sum(axis=1) == 3)
    assert design.match_ids[:2] == ("qm1", "qm2")
    np.testing.assert_array_equal(design.x, synthetic_schedule(20, 37, seed=4).x)


def test_streams_are_keyed_by_replication():
    first = standard_normals((7, 3), 50)
    np.testing.assert_array_equal(first, standard_normals((7, 3), 50))
    assert not np.array_equal(first, standard_normals((7, 4), 50))
    assert replication_key(5) == (5, 0)
    np.testing.assert_array_equal(uniforms((1, 2), 10), generator((1, 2)).random(10))
    with pytest.raises(ValidationError):
        replication_key((1, 2, 3))


def test_normal_stream_moments():
    z = standard_normals((20190420, 0), 100_000)
    assert np.all(np.isfinite(z))
    assert abs(z.mean()) < 0.02
    assert z.std() == pytest.approx(1.0, abs=0.02)


def test_generate_y(m1_schedule):
    truth = make_scenario(BaseScenario.M1, 0.5, m1_schedule)
    mean = true_means(truth, m1_schedule)
    np.testing.assert_allclose(mean, m1_schedule.x @ truth.beta, atol=1e-10)

    y = generate_y(truth, m1_schedule, (3, 9))
    np.testing.assert_allclose(y, mean + truth.sigma * standard_normals((3, 9), m1_schedule.m))

    exact = generate_y(make_scenario(BaseScenario.M1, 0.0, m1_schedule), m1_schedule, (3, 9))
    np.testing.assert_array_equal(exact, mean)


def test_even_alliances_have_zero_margin():
    truth = _three_cluster_truth(0.0)
    # one robot of each cluster per alliance
    row = np.zeros((1, 12))
    row[0, [0, 4, 8]] = 1.0
    row[0, [1, 5, 9]] = -1.0
    design = DesignMatrix(row, np.zeros(1), roster_of(12))
    assert true_means(truth, design).tolist() == [0.0]


# ---------------------------------------------------------------------- #
#  Oracles
# ---------------------------------------------------------------------- #
def test_oracle_of_true_strengths(m1_schedule):
    truth = make_scenario(BaseScenario.M1, 1.0, m1_schedule)
    data = m1_schedule.with_response(true_means(truth, m1_schedule))
    fitted = fit_wmprc(data, truth.assignment)

    assert mse_strengths(fitted, truth) < 1e-18
    assert oracle_mspe(fitted, truth, data).mspe_y == pytest.approx(11.056 ** 2)


def test_oracle_matches_monte_carlo():
    truth = _three_cluster_truth(6.0)
    design = synthetic_schedule(12, 30, seed=1)
    data = design.with_response(generate_y(truth, design, (1, 0)))
    model = fit_wmprc(data, ClusterAssignment(np.array([0] * 6 + [1] * 6), 2))
    oracle = oracle_mspe(model, truth, data)

    rng = np.random.default_rng(99)
    mean = true_means(truth, data)
    predicted = data.x @ model.beta
    p_hat = 1.0 - model.cdf(-predicted)
    future = mean[:, None] + truth.sigma * rng.normal(size=(data.m, 4000))
    d_future = outcomes_from_differences(future)

    assert oracle.mspe_y == pytest.approx(np.mean((future - predicted[:, None]) ** 2), rel=0.03)
    assert oracle.mspe_p == pytest.approx(np.mean((d_future - p_hat[:, None]) ** 2), abs=0.01)


def test_mse_of_collapsed_model(m1_schedule):
    truth = make_scenario(BaseScenario.M1, 1.0, m1_schedule)
    data = m1_schedule.with_response(generate_y(truth, m1_schedule, (0, 0)))
    collapsed = fit_wmprc(data, ClusterAssignment(np.zeros(67, dtype=int), 1))
    # sum over clusters of size times squared centered strength
    assert mse_strengths(collapsed, truth) == pytest.approx(5047.93, abs=0.01)


# ---------------------------------------------------------------------- #
#  Noiseless recovery
# ---------------------------------------------------------------------- #
def test_exact_data_recovers_the_designed_clusters(m1_schedule):
    truth = make_scenario(BaseScenario.M1, 0.0, m1_schedule)
    data = m1_schedule.with_response(generate_y(truth, m1_schedule, (0, 0)))
    chain = generate_candidates(data, Method.TCL)

    candidate = chain.by_c(4)
    assert candidate.model.assignment.same_partition(truth.assignment)
    assert candidate.model.rss < 1e-16


def test_noiseless_experiment_selects_true_count():
    design = synthetic_schedule(67, 114, seed=7)
    truth = make_scenario(BaseScenario.M1, 0.0, design)
    summary = run_experiment(truth, design, reps=1, methods=[Method.TCL, Method.LCT], threads=1)

    for method in ("tcl", "lct"):
        for criterion in Criterion:
            row = summary.row(method, str(criterion))
            assert row.c_mean == 4, (method, str(criterion))
            assert row.mse < 1e-12
            assert row.minr == 1.0
            assert row.rc == 1.0
    assert summary.row("TRUE").estimated_mspe_y == 0.0
    assert summary.metadata["c_o"] == 4


def test_summary_files_do_not_depend_on_worker_count(tmp_path):
    truth = _three_cluster_truth(4.0)
    design = synthetic_schedule(12, 30, seed=3)
    kwargs = dict(reps=3, methods=[Method.LCT, Method.TCL], master_seed=5)

    serial = run_experiment(truth, design, threads=1, **kwargs)
    parallel = run_experiment(truth, design, threads=3, **kwargs)
    stamp = provenance("abc123", 5)
    serial_paths = write_summary(serial, tmp_path / "serial", "unit", stamp)
    parallel_paths = write_summary(parallel, tmp_path / "parallel", "unit", stamp)

    for name, path in serial_paths.items():
        assert path.read_bytes() == parallel_paths[name].read_bytes(), name


def test_write_summary(tmp_path):
    truth = _three_cluster_truth(2.0)
    summary = run_experiment(truth, synthetic_schedule(12, 30, seed=3), reps=2,
                             methods=[Method.LCT], criteria=[Criterion.MSPE_D], threads=1)
    paths = write_summary(summary, tmp_path, "unit", provenance("abc123", 0))

    lines = paths["summary"].read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# tool_version=1.0.0 input_digest=abc123 seed=0"
    assert lines[1].startswith("method,criterion,reps,c_mean")
    assert [line.split(",")[0] for line in lines[2:]] == ["lct", "WMPR", "TRUE"]

    curves = paths["curves"].read_text(encoding="utf-8").splitlines()
    assert len(curves) == 2 + 11
    document = json.loads(paths["metadata"].read_text(encoding="utf-8"))
    assert document["reps"] == 2
    assert document["metadata"]["c_o"] == 3


# ---------------------------------------------------------------------- #
#  Experiment files
# ---------------------------------------------------------------------- #
@pytest.mark.parametrize("name", ["m1_desk", "m1_underestimation", "m2_synthetic", "noiseless"])
def test_shipped_experiments_load(name):
    experiment = load_experiment_config(EXPERIMENTS / f"{name}.yaml")
    assert experiment.reps >= 1
    assert experiment.methods


def test_experiment_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "missing.yaml")

    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("scenario: M1\nsigma_multiplier: 1.0\nreps: 2\nrepetitions: 3\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="repetitions"):
        load_experiment_config(unknown)

    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: M3\nsigma_multiplier: 1.0\nreps: 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment_config(bad)


# ---------------------------------------------------------------------- #
#  Desk-scale checks on the recorded division schedule
# ---------------------------------------------------------------------- #
requires_roebling = pytest.mark.skipif(not ROEBLING.is_file(), reason=f"{ROEBLING} not available")


@pytest.mark.slow
@requires_roebling
def test_penalized_criteria_select_fewer_clusters():
    design = read_matches_csv(ROEBLING).design()
    truth = make_scenario(BaseScenario.M1, 0.25, design)
    summary = run_experiment(truth, design, reps=500, methods=[Method.TCL], master_seed=20190420,
                             threads=config.DEFAULT_THREADS)

    assert summary.row("tcl", "mspeb_d").c_mean <= summary.row("tcl", "mspe_d").c_mean - 1.5
    for criterion in ("mspeb_y", "mspeb_p", "mspeb_d"):
        assert summary.row("tcl", criterion).c_mean < summary.row("tcl", criterion.replace("mspeb", "mspe")).c_mean
        assert summary.row("tcl", criterion).minr >= 0.99
    assert summary.row("tcl", "mspeb_p").rc > summary.row("tcl", "mspe_p").rc


@pytest.mark.slow
@requires_roebling
def test_selected_model_error_is_underestimated():
    design = read_matches_csv(ROEBLING).design()
    truth = make_scenario(BaseScenario.M1, 1.0, design)
    summary = run_experiment(truth, design, reps=200, methods=[Method.TCL], master_seed=11056,
                             criteria=[Criterion.MSPE_Y], threads=config.DEFAULT_THREADS)

    row = summary.row("tcl", "mspe_y")
    assert row.estimated_mspe_y < row.oracle_mspe_y
    assert not math.isnan(row.estimated_mspe_y)
