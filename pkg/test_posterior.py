"""
Tests for the exact GP posterior, KRR agreement, path sampling and credible bands.
"""

import math

import numpy as np
import pytest

from gpplugin import (
    CapabilityError,
    ContractError,
    Dataset,
    GPUtils,
    KernelSpec,
    NumericalError,
    credible_band,
    export_summary,
    fit,
    krr_check,
    noise_free_bias,
    posterior_cov,
    posterior_mean,
    posterior_var,
    sample_paths,
)


def random_dataset(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=n)
    Y = np.sin(2.0 * np.pi * X) + 0.3 * rng.normal(size=n)
    return Dataset(X, Y)


# ---------------------------------------------------------------------------
# Single observation
# ---------------------------------------------------------------------------

def test_single_observation_fit():
    """n = 1, SE, x₁ = 0, y₁ = 1, λ = 1: weight 1/2, mean 1/2, variance 1/2."""
    data = Dataset([0.0], [1.0])
    fitted = fit(KernelSpec.squared_exponential(), data, lam=1.0, sigma2=1.0)
    assert fitted.weights[0] == pytest.approx(0.5)
    assert posterior_mean(fitted, 0, 0.0) == pytest.approx(0.5)
    assert posterior_cov(fitted, 0, 0.0, 0.0) == pytest.approx(0.5)
    assert fitted.mean(0.0) == pytest.approx(0.5)
    assert fitted.var(0.0) == pytest.approx(0.5)


def test_dataset_validation():
    with pytest.raises(ContractError):
        Dataset([0.1, 0.2], [1.0])
    with pytest.raises(ContractError):
        Dataset([], [])
    with pytest.raises(ContractError):
        Dataset([0.1, np.nan], [1.0, 2.0])
    data = Dataset([0.1, 0.2], [1.0, 2.0])
    assert data.n == 2
    np.testing.assert_array_equal(data.with_response([3.0, 4.0]).Y, [3.0, 4.0])


def test_fit_rejects_nonpositive_hyperparameters():
    data = random_dataset(5, 0)
    with pytest.raises(ContractError):
        fit(KernelSpec.squared_exponential(), data, lam=0.0, sigma2=1.0)
    with pytest.raises(ContractError):
        fit(KernelSpec.squared_exponential(), data, lam=1e-3, sigma2=-1.0)


def test_factor_reconstructs_regularized_gram():
    data = random_dataset(40, 1)
    kernel = KernelSpec.matern(2.5)
    lam = 1e-3
    fitted = fit(kernel, data, lam, 0.1)
    target = kernel.gram(data.X) + data.n * lam * np.eye(data.n)
    error = np.linalg.norm(fitted.factor @ fitted.factor.T - target) / np.linalg.norm(target)
    assert error < 1e-8
    np.testing.assert_allclose(target @ fitted.solve(data.Y), data.Y, rtol=0, atol=1e-8)
    np.testing.assert_allclose(fitted.solve(data.Y), fitted.weights, rtol=1e-10)


# ---------------------------------------------------------------------------
# Mean and covariance
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kernel", [KernelSpec.squared_exponential(), KernelSpec.matern(2.5)],
                         ids=lambda k: k.label)
def test_posterior_mean_matches_kernel_ridge_regression(kernel):
    """20 random n = 40 instances: sup-grid discrepancy below 1e-8."""
    grid = np.linspace(0.0, 1.0, 101)
    rng = np.random.default_rng(7)
    for seed in range(20):
        lam = 10.0 ** rng.uniform(-4, -1)
        assert krr_check(kernel, random_dataset(40, seed), lam, grid) < 1e-8


def test_krr_agreement_across_lambda_decades():
    data = random_dataset(40, 3)
    grid = np.linspace(0.0, 1.0, 101)
    for lam in np.logspace(-7, -1, 7):
        assert krr_check(KernelSpec.squared_exponential(), data, lam, grid) < 1e-6


def test_huge_lambda_shrinks_mean_to_zero():
    data = random_dataset(30, 4)
    fitted = fit(KernelSpec.squared_exponential(), data, lam=1e12, sigma2=1.0)
    assert np.max(np.abs(posterior_mean(fitted, 0, np.linspace(0, 1, 11)))) < 1e-10


def test_mean_is_linear_in_response():
    kernel = KernelSpec.matern(2.5)
    data = random_dataset(25, 5)
    other = np.random.default_rng(6).normal(size=25)
    grid = np.linspace(0.0, 1.0, 31)
    lam = 1e-3

    def mean(Y, k):
        return posterior_mean(fit(kernel, data.with_response(Y), lam, 1.0), k, grid)

    for k in (0, 1):
        np.testing.assert_allclose(mean(data.Y + other, k), mean(data.Y, k) + mean(other, k),
                                   rtol=0, atol=1e-10)


def test_covariance_does_not_depend_on_response():
    kernel = KernelSpec.squared_exponential()
    data = random_dataset(20, 8)
    grid = np.linspace(0.0, 1.0, 9)
    a = posterior_cov(fit(kernel, data, 1e-3, 0.2), 1, grid, grid)
    b = posterior_cov(fit(kernel, data.with_response(-3.0 * data.Y), 1e-3, 0.2), 1, grid, grid)
    np.testing.assert_array_equal(a, b)


def test_permutation_invariance():
    kernel = KernelSpec.sobolev2()
    data = random_dataset(30, 9)
    order = np.random.default_rng(10).permutation(30)
    shuffled = Dataset(data.X[order], data.Y[order])
    grid = np.linspace(0.0, 1.0, 21)
    np.testing.assert_allclose(posterior_mean(fit(kernel, data, 1e-3, 1.0), 0, grid),
                               posterior_mean(fit(kernel, shuffled, 1e-3, 1.0), 0, grid),
                               rtol=0, atol=1e-10)


def test_interpolation_limit():
    """λ = 1e-10 on a well-separated design reproduces the observations."""
    X = np.linspace(0.05, 0.95, 10)
    Y = np.cos(3.0 * X)
    fitted = fit(KernelSpec.matern(0.5), Dataset(X, Y), lam=1e-10, sigma2=1.0)
    np.testing.assert_allclose(posterior_mean(fitted, 0, X), Y, atol=1e-4)


def test_duplicated_design_points():
    kernel = KernelSpec.squared_exponential()
    X = np.array([0.1, 0.1, 0.4, 0.4, 0.4, 0.8])
    Y = np.array([1.0, 1.2, 0.3, 0.2, 0.25, -0.5])
    lam = 1e-3
    fitted = fit(kernel, Dataset(X, Y), lam, 1.0)
    A = kernel.gram(X) + X.size * lam * np.eye(X.size)
    assert np.max(np.abs(A @ fitted.weights - Y)) < 1e-6


def test_jittered_cholesky():
    factor, jitter = GPUtils.jittered_cholesky(np.ones((3, 3)))
    assert jitter > 0
    np.testing.assert_allclose(factor @ factor.T, np.ones((3, 3)) + jitter * np.eye(3), atol=1e-12)

    with pytest.raises(NumericalError) as excinfo:
        GPUtils.jittered_cholesky(-np.eye(3))
    assert excinfo.value.diagnostics["size"] == 3


def test_posterior_variance_bounds():
    """0 ≤ V(x, x) ≤ σ²(nλ)⁻¹K(x, x)."""
    kernel = KernelSpec.matern(2.5)
    data = random_dataset(40, 11)
    fitted = fit(kernel, data, 1e-3, 0.5)
    grid = np.linspace(0.0, 1.0, 101)
    var = posterior_var(fitted, 0, grid)
    assert np.all(var >= -1e-10)
    assert np.all(var <= fitted.scale * kernel.eval(grid, grid) + 1e-12)
    np.testing.assert_allclose(var, np.diag(posterior_cov(fitted, 0, grid, grid)), rtol=1e-10,
                               atol=1e-14)


@pytest.mark.parametrize("k", [0, 1])
def test_variance_equals_noise_free_bias(k):
    """σ⁻²nλ·V(x, x′) equals K(x, x′) minus the noise-free KRR fit of K(·, x′)."""
    kernel = KernelSpec.squared_exponential()
    data = random_dataset(50, 12)
    lam, sigma2 = 1e-3, 0.3
    fitted = fit(kernel, data, lam, sigma2)
    grid = np.linspace(0.0, 1.0, 21)
    for xp in (0.0, 0.37, 0.9):
        direct = posterior_cov(fitted, k, grid, [xp])[:, 0] * data.n * lam / sigma2
        np.testing.assert_allclose(noise_free_bias(fitted, k, grid, xp), direct, rtol=0, atol=1e-8)


def test_derivative_mean_matches_finite_differences():
    kernel = KernelSpec.squared_exponential()
    fitted = fit(kernel, random_dataset(40, 13), 1e-3, 1.0)
    x = np.linspace(0.05, 0.95, 19)
    h = 1e-5
    numeric = (posterior_mean(fitted, 0, x + h) - posterior_mean(fitted, 0, x - h)) / (2.0 * h)
    np.testing.assert_allclose(posterior_mean(fitted, 1, x), numeric, rtol=0, atol=1e-4)


def test_unsupported_order_raises():
    fitted = fit(KernelSpec.sobolev2(), random_dataset(10, 14), 1e-3, 1.0)
    with pytest.raises(CapabilityError):
        posterior_mean(fitted, 2, 0.5)


# ---------------------------------------------------------------------------
# Sampling and bands
# ---------------------------------------------------------------------------

def test_sample_paths_moments():
    """Monte Carlo mean and covariance of 50 000 draws match the posterior."""
    fitted = fit(KernelSpec.matern(2.5), random_dataset(20, 15), 1e-2, 0.5)
    grid = np.linspace(0.0, 1.0, 6)
    m = 50_000
    draws = sample_paths(fitted, 0, grid, m, np.random.default_rng(16))
    assert draws.shape == (m, grid.size)

    center = posterior_mean(fitted, 0, grid)
    cov = posterior_cov(fitted, 0, grid, grid)
    sd = np.sqrt(np.diag(cov))
    assert np.all(np.abs(draws.mean(axis=0) - center) <= 4.0 * sd / math.sqrt(m))

    sample_cov = np.cov(draws, rowvar=False)
    mc_error = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / m)
    assert np.all(np.abs(sample_cov - cov) <= 5.0 * mc_error)


def test_sample_paths_are_reproducible():
    fitted = fit(KernelSpec.squared_exponential(), random_dataset(15, 17), 1e-3, 1.0)
    grid = np.linspace(0.0, 1.0, 11)
    a = sample_paths(fitted, 1, grid, 10, np.random.default_rng(18))
    b = sample_paths(fitted, 1, grid, 10, np.random.default_rng(18))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ContractError):
        sample_paths(fitted, 0, grid, 0, np.random.default_rng(18))


def test_credible_band_radius_monotone_in_level():
    fitted = fit(KernelSpec.squared_exponential(), random_dataset(30, 19), 1e-3, 0.1)
    grid = np.linspace(0.0, 1.0, 25)
    radii = []
    for level in (1e-6, 0.5, 0.95, 0.999):
        center, radius = credible_band(fitted, 0, grid, level, 500, np.random.default_rng(20))
        radii.append(radius)
    np.testing.assert_allclose(center, posterior_mean(fitted, 0, grid))
    assert radii == sorted(radii)
    assert radii[0] > 0.0
    assert radii[0] < 0.5 * radii[2]


def test_credible_band_validation():
    fitted = fit(KernelSpec.squared_exponential(), random_dataset(10, 21), 1e-3, 0.1)
    grid = np.linspace(0.0, 1.0, 5)
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        credible_band(fitted, 0, grid, 1.0, 200, rng)
    with pytest.raises(ContractError):
        credible_band(fitted, 0, grid, 0.95, 50, rng)


def test_export_summary_columns():
    fitted = fit(KernelSpec.matern(2.5), random_dataset(30, 22), 1e-3, 0.1)
    grid = np.linspace(0.0, 1.0, 11)
    df = export_summary(fitted, [0, 1], grid, level=0.9, m=200, rng=np.random.default_rng(23))
    assert list(df.columns) == ["x", "mean_0", "var_0", "band_lo_0", "band_hi_0",
                                "mean_1", "var_1", "band_lo_1", "band_hi_1"]
    assert np.all(df["band_lo_1"] <= df["mean_1"])
    assert np.all(df["mean_1"] <= df["band_hi_1"])
    np.testing.assert_allclose(df["var_0"], posterior_var(fitted, 0, grid))
