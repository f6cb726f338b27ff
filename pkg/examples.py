"""
Example script showing how to use gpplugin for GP regression with
derivative posteriors and simulation studies.
"""

import numpy as np

from gpplugin import (
    EigenSequence,
    Holder,
    KernelSpec,
    MethodSpec,
    RateStudyConfig,
    StudyConfig,
    StudySimulator,
    credible_band,
    effective_dims,
    fit,
    posterior_mean,
    rate_study,
    select_lambda,
    simulate_dataset,
    true_target,
)
from gpplugin.selection import default_lambda_grid


def example_single_fit():
    """Empirical-Bayes fit of the SE kernel and a 95% band for f'."""
    print("Running single posterior fit...")

    rng = np.random.default_rng(42)
    data = simulate_dataset(200, 0.1, rng)

    kernel = KernelSpec.squared_exponential()
    selection = select_lambda(kernel, data, default_lambda_grid())
    fitted = fit(kernel, data, selection.lam, selection.sigma2)

    grid = np.linspace(0.0, 1.0, 101)
    center, radius = credible_band(fitted, 1, grid, level=0.95, m=1000, rng=rng)
    error = np.max(np.abs(posterior_mean(fitted, 1, grid) - true_target(1, grid)))

    print(f"lambda={selection.lam:.3g}, sigma2={selection.sigma2:.3g}")
    print(f"Sup error of f' estimate: {error:.3f}, band radius: {radius:.3f}")
    return fitted


def example_rmse_table():
    """Small replicated RMSE study over three methods."""
    print("Running RMSE study...")

    config = StudyConfig(
        n_values=[100, 200],
        replications=10,
        methods=[
            MethodSpec(name="matern", tuning="loocv"),
            MethodSpec(name="se", kernel=KernelSpec.squared_exponential()),
            MethodSpec(name="sobolev2", kernel=KernelSpec.sobolev2()),
        ],
        threads=4,
        output_dir="example_table",
    )

    simulator = StudySimulator(config)
    result = simulator.run_study()
    print(result.summary.to_string(index=False))

    summary = simulator.get_results_summary()
    print(f"Completed {summary['successful']}/{summary['total_records']} records")
    return result


def example_rate_study():
    """Oracle-λ rates for the spectral Polynomial(2) kernel."""
    print("Running rate study...")

    config = RateStudyConfig(function_class=Holder(2.0), orders=[0, 1],
                             n_values=[200, 400, 800], replications=10, threads=4)
    result = rate_study(config)
    print(result.slopes.to_string(index=False))
    return result


def example_effective_dimensions():
    """κ̂ and κ̃ effective dimensions across λ."""
    print("Computing effective dimensions...")

    for lam in (1e-6, 1e-4, 1e-2):
        dims = effective_dims(EigenSequence.polynomial(2.0), "fourier", lam, orders=[0, 1])
        print(f"lambda={lam:g}: kappa_hat_01^2={dims.kappa_hat_01_sq:.2f}, "
              f"kappa_tilde_11^2={dims.kappa_tilde_kk_sq[1]:.2f}")


if __name__ == "__main__":
    print("gpplugin Examples")
    print("=" * 30)

    example_single_fit()
    print()
    example_effective_dimensions()
    print()

    # Uncomment to run the longer studies
    # example_rmse_table()
    # example_rate_study()
