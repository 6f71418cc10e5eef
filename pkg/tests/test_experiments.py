from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from perf_retrain import experiments as ex
from perf_retrain.dynamics import Mode, RegSchedule, SampleSchedule
from perf_retrain.errors import WrongRegimeError
from perf_retrain.experiments import ExperimentName, ScheduleCase, ScheduleCheck, StatSummary, Verdict
from perf_retrain.loss import QuadraticLoss
from perf_retrain.shift_model import LinearShiftModel, ScalarShiftModel


def test_stat_summary():
    single = StatSummary.from_values([3.0])
    assert single.std_error == 0.0
    assert single.ci95 == (3.0, 3.0)
    summary = StatSummary.from_values([1.0, 2.0, 3.0, 4.0])
    assert summary.mean == 2.5
    assert summary.std_error == pytest.approx(np.sqrt(5.0 / 3.0 / 4.0))
    lo, hi = summary.ci95
    assert hi - summary.mean == pytest.approx(1.96 * summary.std_error)
    assert summary.mean - lo == pytest.approx(1.96 * summary.std_error)
    with pytest.raises(ValueError):
        StatSummary.from_values([])


def test_tolerance_policy():
    policy = ex.TolerancePolicy(rel_tol=0.02, se_mult=3.0)
    assert policy.agrees(StatSummary(1.015, 0.001, 10), 1.0)
    assert policy.agrees(StatSummary(1.05, 0.02, 10), 1.0)
    assert not policy.agrees(StatSummary(1.05, 0.01, 10), 1.0)
    with pytest.raises(ValueError):
        ex.TolerancePolicy(rel_tol=0.0)


def _standard_normal(stream):
    return stream.generator().standard_normal()


def test_run_replicated_clt():
    spec = ex.default_spec("gap-identity", replications=10_000, seed=17)
    summary = ex.run_replicated(spec, _standard_normal)
    assert summary.count == 10_000
    assert abs(summary.mean) < 0.04
    assert summary.std_error == pytest.approx(0.01, rel=0.05)
    single = ex.run_replicated(dataclasses.replace(spec, replications=1), _standard_normal)
    assert single.std_error == 0.0


def test_run_replicated_independent_of_threads():
    spec = ex.default_spec("gap-identity", replications=5000, seed=4)
    sequential = ex.run_replicated(spec, _standard_normal)
    threaded = ex.run_replicated(dataclasses.replace(spec, threads=8), _standard_normal)
    assert sequential == threaded


def test_spec_validation():
    with pytest.raises(ValueError):
        ex.default_spec("rerm-mse", replications=0)
    with pytest.raises(ValueError):
        ex.default_spec("not-an-experiment")
    spec = ex.default_spec("rerm-mse", horizon=3)
    assert spec.grid() == [1, 2, 3]


def test_fixed_point_default():
    result = ex.run_experiment(ex.default_spec("fixed-point", mc_samples=100_000))
    assert result.verdict is Verdict.PASS
    assert result.observed[0] == pytest.approx(2.0, abs=1e-10)
    assert result.predicted == pytest.approx((2.0,))


def test_fixed_point_zero_offset():
    model = LinearShiftModel.mean_shift([0.0], 0.5)
    result = ex.exp_fixed_point_coincidence(ex.default_spec("fixed-point", model=model, mc_samples=10_000))
    assert result.passed
    assert result.observed == (0.0,)


def test_fixed_point_random_vector_instance(rng):
    d = 3
    b = rng.normal(size=(d, d))
    mu_map = rng.normal(size=(d, d))
    mu_map *= 0.7 / np.linalg.norm(mu_map, 2)
    model = LinearShiftModel.mean_shift(rng.normal(size=d), mu_map)
    spec = ex.default_spec(
        "fixed-point", model=model, loss=QuadraticLoss(b @ b.T + np.eye(d)), mc_samples=100_000, seed=1
    )
    result = ex.exp_fixed_point_coincidence(spec)
    assert result.passed, result.notes
    assert len(result.details) == d


def test_fixed_point_wrong_regime(po_instance):
    with pytest.raises(WrongRegimeError):
        ex.exp_fixed_point_coincidence(ex.default_spec("fixed-point", model=po_instance))


def test_gap_identity_default():
    result = ex.run_experiment(ex.default_spec("gap-identity", mc_samples=200_000))
    assert result.passed
    assert result.predicted == pytest.approx(0.1)
    assert result.observed.mean == pytest.approx(0.1, abs=5 * result.observed.std_error + 1e-3)
    assert {row["check"] for row in result.details} == {"identity", "theta_po", "monte_carlo_gap"}


def test_gap_identity_without_covariance_shift():
    spec = ex.default_spec("gap-identity", model=ScalarShiftModel(1.0, 0.0, 1.0, 0.5), mc_samples=1000)
    result = ex.exp_gap_identity(spec)
    assert result.passed
    assert result.predicted == 0.0
    assert result.observed.mean == 0.0


def test_lambda_star_default():
    result = ex.exp_lambda_star_convergence(ex.default_spec("lambda-star"))
    assert result.passed
    assert result.observed == pytest.approx(0.6, abs=1e-10)
    baseline = result.details[1]
    assert baseline["theta_T"] == pytest.approx(1.0)


def test_lambda_star_invalid_regime_is_skipped():
    spec = ex.default_spec("lambda-star", model=ScalarShiftModel(1.0, 0.5, 1.0, 0.5))
    result = ex.exp_lambda_star_convergence(spec)
    assert result.verdict is Verdict.SKIPPED
    assert not result.passed


def test_lambda_star_without_covariance_shift():
    spec = ex.default_spec("lambda-star", model=ScalarShiftModel(1.0, 0.0, 1.0, 0.5))
    result = ex.exp_lambda_star_convergence(spec)
    assert result.passed
    assert result.observed == pytest.approx(2.0, abs=1e-8)


def test_rerm_mse_single_step():
    spec = ex.default_spec("rerm-mse", samples=4, horizon=1, replications=20_000, seed=3)
    result = ex.exp_rerm_mse_curve(spec)
    assert result.passed
    assert result.predicted == pytest.approx((1.25,))
    assert result.observed[0].mean == pytest.approx(1.25, rel=0.03)
    kinds = [row["kind"] for row in result.details]
    assert kinds == ["curve", "comparison"]
    assert any("too short" in note for note in result.notes)


def test_rerm_mse_noise_free_curve():
    model = LinearShiftModel.mean_shift([1.0], 0.5, sigma0=0.0)
    spec = ex.default_spec("rerm-mse", model=model, replications=3, horizon=5, horizons=(1, 3))
    result = ex.exp_rerm_mse_curve(spec)
    assert result.passed
    np.testing.assert_allclose(result.predicted, [1.0, 4.0 * 0.5**6, 4.0 * 0.5**10])
    assert all(summary.std_error == 0.0 for summary in result.observed)


def test_rerm_mse_needs_mean_shift(po_instance):
    with pytest.raises(WrongRegimeError):
        ex.exp_rerm_mse_curve(ex.default_spec("rerm-mse", model=po_instance))


def test_reg_rerm_schedule_tracking():
    case = ScheduleCase(
        "unit-samples/linear-lambda",
        SampleSchedule.constant(1),
        RegSchedule.linear(0.0),
        Mode.INTEGER,
        ScheduleCheck.TRACK,
    )
    spec = ex.default_spec(
        "reg-rerm-schedules", replications=4000, horizon=100, horizons=(10, 100), cases=(case,), seed=2
    )
    result = ex.exp_reg_rerm_schedules(spec)
    assert result.passed, result.notes
    assert [row["t"] for row in result.details] == [10, 100]
    row = result.details[-1]
    assert row["predicted"] == pytest.approx(row["t1"] + row["t2"])


def test_reg_rerm_schedules_reject_ridge():
    case = ScheduleCase("ridge", SampleSchedule.constant(1), RegSchedule.constant(1.0, "ridge"))
    spec = ex.default_spec("reg-rerm-schedules", replications=10, horizon=5, horizons=(5,), cases=(case,))
    with pytest.raises(WrongRegimeError):
        ex.exp_reg_rerm_schedules(spec)


@pytest.mark.parametrize(
    ("mu", "verdict", "ratio"),
    [(0.5, Verdict.PASS, 0.5), (0.0, Verdict.PASS, 0.0), (1.5, Verdict.SKIPPED, 1.5)],
)
def test_sensitivity_diagnostic(mu, verdict, ratio):
    model = LinearShiftModel.mean_shift([1.0], mu)
    result = ex.exp_sensitivity_diagnostic(ex.default_spec("sensitivity", model=model))
    assert result.verdict is verdict
    assert result.observed == pytest.approx(ratio)
    assert result.predicted == pytest.approx(abs(mu))
    if verdict is Verdict.SKIPPED:
        assert "not certified" in result.notes


def test_compare_modes():
    spec = ex.default_spec("rerm-mse", samples=4, horizon=10, replications=4000, seed=12)
    comparison = ex.compare_modes(spec)
    assert comparison.integer.count == comparison.effective.count == 4000
    assert not comparison.rejected
    assert 0.0 <= comparison.p_value <= 1.0


def test_result_is_json_serializable():
    result = ex.exp_sensitivity_diagnostic(ex.default_spec("sensitivity"))
    data = json.loads(json.dumps(result.to_dict()))
    assert data["name"] == "sensitivity"
    assert data["verdict"] == "pass"
    assert data["details"][0]["t"] == 0


@pytest.mark.slow
@pytest.mark.parametrize("name", list(ExperimentName))
def test_default_checks_pass(name):
    result = ex.run_experiment(ex.default_spec(name, threads=4))
    assert result.passed, result.notes


@pytest.mark.slow
def test_run_all():
    results = ex.run_all(seed=1, threads=4)
    assert [result.name for result in results] == list(ExperimentName)
    assert all(result.passed for result in results)


@pytest.mark.slow
def test_rerm_mse_default_grid_reaches_plateau():
    spec = ex.default_spec("rerm-mse", replications=10**5, threads=4, seed=11)
    assert spec.grid() == [1, 5, 10, 50]
    result = ex.exp_rerm_mse_curve(spec)
    assert result.passed, result.notes
    curve = [row for row in result.details if row["kind"] == "curve"]
    assert [row["t"] for row in curve] == [1, 5, 10, 50]
    assert curve[0]["predicted"] == pytest.approx(1.25)
    (plateau,) = [row for row in result.details if row["kind"] == "plateau"]
    assert plateau["predicted"] == pytest.approx(1.0 / 3.0)
    assert plateau["mean"] == pytest.approx(1.0 / 3.0, rel=0.02)
