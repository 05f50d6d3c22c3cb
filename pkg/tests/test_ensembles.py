import math

import numpy as np
import pandas as pd
import pytest
from scipy.stats import expon

from app.exceptions import DimensionError, DomainError
from app.ensembles import (
    FIGURE1_SUMMARY_COLUMNS,
    Distribution,
    EmpiricalCDF,
    draw_instance,
    exp_rate2_cdf,
    gap_statistic_sample,
    gaussian_rows,
    ks_distance,
    reciprocal_scale,
    run_figure1,
    run_theorem24,
    summarize_figure1,
    target_law,
    trial_generator,
    z_event_rate,
)


def test_trial_generator_is_keyed():
    first = trial_generator(7, 3, 100).standard_normal(5)
    again = trial_generator(7, 3, 100).standard_normal(5)
    other = trial_generator(7, 4, 100).standard_normal(5)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)
    assert not np.array_equal(first, trial_generator(7, 3, 101).standard_normal(5))


def test_distribution_labels_and_validation():
    assert Distribution.exp1().label == "exp1"
    assert Distribution.normal(1.0, 1e-4).label == "normal(1,0.0001)"
    assert Distribution.normal(1.0, 1e-4).sigma == pytest.approx(0.01)
    with pytest.raises(DomainError):
        Distribution(kind="exp1", Sigma=np.eye(2))


def test_distribution_moments():
    rng = trial_generator(1, 0)
    assert Distribution.exp1().sample(rng, 200, 100).mean() == pytest.approx(1.0, abs=0.02)
    assert Distribution.uniform01().sample(rng, 200, 100).mean() == pytest.approx(0.5, abs=0.01)
    normal = Distribution.normal(1.0, 0.04).sample(rng, 200, 100)
    assert normal.mean() == pytest.approx(1.0, abs=0.005)
    assert normal.std() == pytest.approx(0.2, abs=0.005)


def test_gaussian_rows_covariance():
    Sigma = np.array([[1.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 1.5]])
    rows = gaussian_rows(trial_generator(2, 0), 40_000, 3, Sigma)
    np.testing.assert_allclose(np.cov(rows, rowvar=False), Sigma, atol=0.05)
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    rows = gaussian_rows(trial_generator(2, 1), 10, 2, singular)
    np.testing.assert_allclose(rows[:, 0], rows[:, 1], atol=1e-8)
    with pytest.raises(DimensionError):
        gaussian_rows(trial_generator(2, 2), 4, 2, np.eye(3))


def test_draw_instance_broadcasts_y():
    inst = draw_instance(Distribution.uniform01(), N=5, m=3, seed=4, trial=1, y=2.0, lam=0.1)
    assert inst.A.shape == (3, 5)
    assert inst.y.tolist() == [2.0, 2.0, 2.0]
    same = draw_instance(Distribution.uniform01(), N=5, m=3, seed=4, trial=1, y=2.0, lam=0.1)
    np.testing.assert_array_equal(inst.A, same.A)
    with pytest.raises(DimensionError):
        draw_instance(Distribution.exp1(), N=0, m=1, seed=0)


def test_empirical_cdf():
    cdf = EmpiricalCDF([3.0, 1.0, 2.0, 2.0])
    assert len(cdf) == 4
    assert cdf.values.tolist() == [1.0, 2.0, 2.0, 3.0]
    assert cdf(0.5) == 0.0
    assert cdf(2.0) == pytest.approx(0.75)
    assert cdf(10.0) == 1.0
    with pytest.raises(DomainError):
        EmpiricalCDF([])


def test_ks_distance_trivial_cases():
    median = math.log(2.0)
    assert ks_distance(EmpiricalCDF([median] * 5), expon.cdf) == pytest.approx(0.5)
    # a single point at the left end of the support
    assert ks_distance(EmpiricalCDF([0.0]), expon.cdf) == pytest.approx(1.0)


def test_ks_distance_window():
    upper = 0.99
    # every point beyond the window: only the edge term counts
    assert ks_distance(EmpiricalCDF([5.0, 6.0]), exp_rate2_cdf, upper) == pytest.approx(exp_rate2_cdf(upper))
    sample = expon(scale=0.5).ppf((np.arange(1, 1001) - 0.5) / 1000)
    assert ks_distance(EmpiricalCDF(sample), exp_rate2_cdf, upper) <= 1e-3


def test_laws_and_scalings():
    assert exp_rate2_cdf(1.0) == pytest.approx(1.0 - math.exp(-2.0))
    assert target_law(Distribution.normal(1.0, 4.0))(1.0) == pytest.approx(1.0 - math.exp(-0.5))
    assert target_law(Distribution.uniform01())(1.0) == pytest.approx(1.0 - math.exp(-1.0))
    assert reciprocal_scale(Distribution.exp1(), 50) == 1.0
    assert reciprocal_scale(Distribution.uniform01(), 50) == 100.0
    assert reciprocal_scale(Distribution.normal(), 50) == pytest.approx(2.0 * math.sqrt(2.0 * math.log(50)))
    with pytest.raises(DomainError):
        target_law(Distribution(kind="gaussian_rows"))


def test_reciprocal_condition_small_run():
    result = run_theorem24(Distribution.exp1(), [20, 40], trials=30, y=1.0, lam=0.01, seed=5)
    assert len(result.records) == 60
    assert list(result.records.columns) == ["dist", "trial", "N", "stsp", "tie", "zero_boundary", "scaled_inv_cond"]
    assert result.summary["N"].tolist() == [20, 40]
    assert (result.summary["n_kept"] == 30).all()
    assert set(result.cdfs) == {20, 40}
    assert (result.records["stsp"] > 0).all()


def test_reciprocal_condition_zero_trials():
    result = run_theorem24(Distribution.uniform01(), [10], trials=0, y=1.0, lam=0.01, seed=5)
    assert result.records.empty
    assert result.summary.loc[0, "n_kept"] == 0
    assert math.isnan(result.summary.loc[0, "ks_distance"])


def test_uniform_ensemble_needs_nonzero_support():
    with pytest.raises(DomainError):
        run_theorem24(Distribution.uniform01(), [10], trials=5, y=0.001, lam=0.01, seed=0)


def test_reciprocal_condition_independent_of_workers():
    serial = run_theorem24(Distribution.normal(1.0, 1.0), [30], trials=16, y=1.0, lam=0.01, seed=8, workers=1)
    parallel = run_theorem24(Distribution.normal(1.0, 1.0), [30], trials=16, y=1.0, lam=0.01, seed=8, workers=2)
    pd.testing.assert_frame_equal(serial.records, parallel.records)


def test_success_rate_small_run():
    trials, summary = run_figure1([10, 30], trials=6, thresholds=[1e-3, 1e-12], lam=0.01, seed=3)
    assert len(trials) == 3 * 2 * 6 * 2
    assert list(summary.columns) == FIGURE1_SUMMARY_COLUMNS
    assert len(summary) == 3 * 2 * 2
    assert summary["success_rate"].between(0.0, 1.0).all()
    assert (summary["n_trials"] == 6).all()
    assert set(trials["dist"]) == {"exp1", "normal(1,0.0001)", "uniform01"}


def test_success_rate_independent_of_workers():
    kwargs = dict(N_grid=[20], trials=8, thresholds=[1e-6], lam=0.01, seed=11, dists=[Distribution.exp1()])
    serial, _ = run_figure1(workers=1, **kwargs)
    parallel, _ = run_figure1(workers=2, **kwargs)
    pd.testing.assert_frame_equal(serial, parallel)


def test_success_rate_empty_run():
    trials, summary = run_figure1([10], trials=0, thresholds=[1e-3], lam=0.01, seed=0)
    assert trials.empty and summary.empty
    assert summarize_figure1(trials).columns.tolist() == FIGURE1_SUMMARY_COLUMNS


def test_gap_statistic_for_exponential_entries():
    sample = gap_statistic_sample(Distribution.exp1(), 100, 2000, seed=4)
    assert sample.mean() == pytest.approx(1.0, abs=0.1)
    with pytest.raises(DimensionError):
        gap_statistic_sample(Distribution.exp1(), 1, 10, seed=4)


def test_z_event_rate():
    assert z_event_rate(Distribution.exp1(), 100, 1.0, 0.01, 0.0, 50, seed=1) == 1.0
    assert z_event_rate(Distribution.uniform01(), 10, 1.0, 0.01, 1.0, 50, seed=1) == 0.0
    assert math.isnan(z_event_rate(Distribution.exp1(), 10, 1.0, 0.01, 0.0, 0, seed=1))


@pytest.mark.slow
def test_exponential_law_of_reciprocal_condition():
    result = run_theorem24(Distribution.exp1(), [2000], trials=2000, y=1.0, lam=0.01, seed=2024)
    assert result.summary.loc[0, "ks_distance"] <= 0.05


@pytest.mark.slow
def test_uniform_law_of_reciprocal_condition():
    result = run_theorem24(Distribution.uniform01(), [2000], trials=2000, y=1.0, lam=0.01, seed=2025)
    assert result.summary.loc[0, "ks_distance"] <= 0.05


@pytest.mark.slow
def test_gaussian_law_of_reciprocal_condition():
    result = run_theorem24(Distribution.normal(1.0, 1.0), [10_000], trials=2000, y=1.0, lam=0.01, seed=2026)
    assert result.summary.loc[0, "ks_distance"] <= 0.10


@pytest.mark.slow
def test_solver_success_ordering():
    _, summary = run_figure1([100, 10_000], trials=100, thresholds=[1e-12], lam=0.01, seed=42, workers=4)
    rate = summary.set_index(["dist", "N"])["success_rate"]
    assert rate[("exp1", 10_000)] >= rate[("normal(1,0.0001)", 10_000)] >= rate[("uniform01", 10_000)]
    assert rate[("uniform01", 100)] - rate[("uniform01", 10_000)] >= 0.2
