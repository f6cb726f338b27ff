"""
Tests for data generation, replicated RMSE studies and the rate, band,
contraction and MMLE experiments.

Full-size experiments are marked ``slow``; run them with ``pytest -m slow``.
"""

import logging
import math

import numpy as np
import pandas as pd
import pytest

from gpplugin import (
    Analytic,
    BandStudyConfig,
    ContractError,
    Holder,
    KernelSpec,
    MethodSpec,
    NumericalError,
    RateStudyConfig,
    StudyConfig,
    StudyFailure,
    StudySimulator,
    fit,
    rate_study,
    replicate_study,
    rmse,
    simulate_dataset,
    true_target,
)
from gpplugin.simulator import (
    contraction_probe,
    contraction_study,
    coverage_study,
    evaluation_grid,
    expected_rate_slope,
    mmle_consistency_study,
    variance_bound_study,
)
from gpplugin.utils import GPUtils


def small_study(threads=1, **overrides):
    params = dict(
        n_values=[30, 60],
        replications=3,
        methods=[MethodSpec(name="se", kernel=KernelSpec.squared_exponential()),
                 MethodSpec(name="matern", tuning="loocv", nu_candidates=[2.5, 3.5],
                            lambda_grid=[1e-5, 1e-4, 1e-3, 1e-2])],
        threads=threads,
    )
    params.update(overrides)
    return StudyConfig(**params)


# ---------------------------------------------------------------------------
# Truth, data and metric
# ---------------------------------------------------------------------------

def test_true_target_derivative_vanishes_at_origin():
    assert true_target(1, 0.0) == 0.0


def test_true_target_truncation_is_stable():
    grid = evaluation_grid()
    np.testing.assert_allclose(true_target(0, grid, 2000), true_target(0, grid, 4000),
                               rtol=0, atol=1e-9)


def test_evaluation_grid():
    grid = evaluation_grid()
    assert grid.size == 100
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert grid[33] == pytest.approx(1.0 / 3.0)


def test_simulate_dataset_support_and_determinism():
    a = simulate_dataset(50, 0.1, GPUtils.replicate_rng(1, 50, 0))
    b = simulate_dataset(50, 0.1, GPUtils.replicate_rng(1, 50, 0))
    c = simulate_dataset(50, 0.1, GPUtils.replicate_rng(1, 50, 1))
    assert np.all((a.X >= 0.0) & (a.X <= 1.0))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Y, b.Y)
    assert not np.array_equal(a.X, c.X)


def test_simulated_noise_variance():
    data = simulate_dataset(100_000, 0.1, np.random.default_rng(2))
    residual = data.Y - true_target(0, data.X)
    assert abs(np.var(residual) - 0.1) < 0.005
    assert abs(np.mean(data.X) - 0.5) < 0.01


def test_simulate_dataset_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        simulate_dataset(0, 0.1, rng)
    with pytest.raises(ContractError):
        simulate_dataset(10, 0.0, rng)


def test_rmse():
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    with pytest.raises(ContractError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ContractError):
        rmse([], [])


# ---------------------------------------------------------------------------
# Replicated study
# ---------------------------------------------------------------------------

def test_replicate_study_layout():
    result = replicate_study(small_study())
    summary = result.summary
    assert list(summary.columns) == ["method", "n", "order", "mean_rmse", "median_rmse",
                                     "se_of_mean", "reps", "failures"]
    assert len(summary) == 2 * 2 * 2
    assert set(summary["method"]) == {"se", "matern"}
    assert (summary["reps"] == 3).all()
    assert (summary["failures"] == 0).all()
    assert len(result.records) == 2 * 3 * 2 * 2
    assert result.records["success"].all()
    assert set(result.records.loc[result.records["method"] == "matern", "nu"]) <= {2.5, 3.5}


def test_replicate_study_independent_of_thread_count():
    """Aggregates are identical for 1, 4 and 8 worker threads."""
    frames = [replicate_study(small_study(threads=t)).summary for t in (1, 4, 8)]
    for frame in frames[1:]:
        pd.testing.assert_frame_equal(frames[0], frame, check_exact=True)


def test_replicate_study_writes_outputs(tmp_path):
    config = small_study(n_values=[30], output_dir=str(tmp_path))
    simulator = StudySimulator(config)
    simulator.run_study()
    assert (tmp_path / "table.csv").exists()
    assert (tmp_path / "replicate_summary.csv").exists()
    summary = simulator.get_results_summary()
    assert summary["failed"] == 0
    assert summary["parameter_combinations"] == 3


def test_study_keeps_caller_log_level(tmp_path):
    package_logger = GPUtils.setup_logging(level="DEBUG")
    try:
        StudySimulator(small_study(n_values=[30], output_dir=str(tmp_path)))
        assert package_logger.level == logging.DEBUG
        assert len(package_logger.handlers) == 1
    finally:
        package_logger.handlers.clear()
        package_logger.setLevel(logging.NOTSET)


def test_replicate_study_raises_when_replicates_fail(monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalError("factorization failed")

    monkeypatch.setattr("gpplugin.simulator.fit", broken)
    with pytest.raises(StudyFailure):
        replicate_study(small_study(n_values=[30]))


def test_study_config_rejects_unsupported_orders():
    with pytest.raises(ValueError):
        StudyConfig(methods=[MethodSpec(name="sob", kernel=KernelSpec.sobolev2())],
                    derivative_orders=[2])


# ---------------------------------------------------------------------------
# Contraction probe
# ---------------------------------------------------------------------------

def test_contraction_probe_extremes():
    data = simulate_dataset(60, 0.1, np.random.default_rng(3))
    fitted = fit(KernelSpec.squared_exponential(), data, 1e-3, 0.1)
    grid = evaluation_grid(50)
    truth = true_target(0, grid)
    rng = np.random.default_rng(4)
    assert contraction_probe(fitted, 0, "L2", 1e6, 200, rng, truth, grid) == 0.0
    assert contraction_probe(fitted, 0, "Linf", 0.0, 200, rng, truth, grid) == 1.0
    with pytest.raises(ContractError):
        contraction_probe(fitted, 0, "L2", 1.0, 50, rng, truth, grid)
    with pytest.raises(ContractError):
        contraction_probe(fitted, 0, "L1", 1.0, 200, rng, truth, grid)


def test_expected_rate_slopes():
    assert expected_rate_slope(Holder(2.0), 0) == pytest.approx(-0.4)
    assert expected_rate_slope(Holder(2.0), 1) == pytest.approx(-0.2)
    assert expected_rate_slope(Analytic(1.0), 0) == -1.0


# ---------------------------------------------------------------------------
# Full-size experiments
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_rmse_table_magnitudes():
    """SE/EB cells sit within 15% of the reference RMSE figures and every cell decreases with n."""
    config = StudyConfig(n_values=[100, 500, 1000], replications=100, threads=4)
    summary = replicate_study(config).summary

    def cells(method, order):
        rows = summary[(summary["method"] == method) & (summary["order"] == order)]
        return rows.sort_values("n")["mean_rmse"].to_numpy()

    se_f0, se_f1 = cells("se", 0), cells("se", 1)
    assert se_f0[0] == pytest.approx(0.05, rel=0.15)
    assert se_f0[2] == pytest.approx(0.02, rel=0.15)
    assert se_f1[0] == pytest.approx(0.31, rel=0.15)
    assert se_f1[2] == pytest.approx(0.18, rel=0.15)

    for method in ("matern", "se", "sobolev2"):
        for order in (0, 1):
            values = cells(method, order)
            assert len(values) == 3
            assert values[0] > values[1] > values[2]
        # f̂′ ≡ 0 would score about 1.4
        assert cells(method, 0)[0] < 0.08
        assert cells(method, 1)[0] < 0.6


@pytest.mark.slow
def test_holder_rate_slopes():
    config = RateStudyConfig(function_class=Holder(2.0), orders=[0, 1],
                             n_values=[200, 400, 800, 1600], replications=50, threads=4)
    result = rate_study(config)
    slopes = result.slopes.set_index("order")
    assert abs(slopes.loc[0, "deviation"]) < 0.12
    assert abs(slopes.loc[1, "deviation"]) < 0.15
    assert result.slope(0) < result.slope(1) < 0.0


@pytest.mark.slow
def test_analytic_rate_slope():
    """Finite-n error decays at least as fast as the n^{-1} rate (measured near -1.34)."""
    config = RateStudyConfig(function_class=Analytic(1.0), orders=[0],
                             n_values=[200, 400, 800, 1600], replications=50, threads=4)
    slope = rate_study(config).slope(0)
    assert -2.0 < slope <= -0.8


@pytest.mark.slow
def test_contraction_mass_shrinks():
    df = contraction_study(Holder(2.0), 0, [200, 800, 3200], seeds=20, seed=5, threads=4)
    masses = df["median_mass"].to_numpy()
    radii = df["radius"].to_numpy()
    assert (df["seeds"] == 20).all()
    assert np.all(np.diff(masses) <= 0.0)
    assert np.all(np.diff(radii) < 0.0)
    assert masses[-1] < 0.5


@pytest.mark.slow
def test_posterior_variance_bound_holds():
    df = variance_bound_study(alpha=2.0, n=500, replications=100, seed=6, threads=4)
    assert (df["fraction_holding"] >= 0.95).all()


@pytest.mark.slow
def test_mmle_consistency():
    """σ̂² within 0.02 of σ₀² = 0.1 in at least 95 of 100 replicates at n = 2000."""
    outcome = mmle_consistency_study(n=2000, replications=100, tol=0.02, seed=7, threads=4)
    assert outcome["failures"] == 0
    assert outcome["fraction_within"] >= 0.95


@pytest.mark.slow
def test_credible_band_coverage():
    """95% SE/EB bands contain f₀ on the grid in at least 85% of 200 datasets at n = 500."""
    config = BandStudyConfig(n=500, replications=200, draws=500, seed=8, threads=4)
    result = coverage_study(config)
    row = result.summary.iloc[0]
    assert row["coverage"] >= 0.85
    assert row["failures"] == 0
    assert list(result.example_band.columns) == ["x", "truth_0", "mean_0", "band_lo_0", "band_hi_0"]
