"""
gpplugin: Gaussian-process regression with exact derivative posteriors,
empirical-Bayes tuning, effective-dimension diagnostics and a simulation
harness for RMSE and rate studies.
"""

__version__ = "0.1.0"

from .exceptions import (
    CapabilityError,
    ConfigError,
    ContractError,
    GPPluginError,
    KernelDomainError,
    NumericalError,
    SelectionError,
    StudyFailure,
    UnsupportedKernelError,
)
from .kernels import (
    COSINE_HALF,
    FOURIER,
    EigenSequence,
    KernelSpec,
    basis_matrix,
    equivalent_kernel,
    gram,
)
from .spectral import (
    Analytic,
    EffectiveDims,
    Holder,
    SeriesFunction,
    bound_constant,
    effective_dims,
    f_lambda,
    rate_schedule,
    rkhs_norm,
    series_eval,
    space_norm,
    spectra_sweep,
)
from .posterior import (
    Dataset,
    FittedGP,
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
from .selection import (
    SelectionResult,
    log_marginal_likelihood,
    loocv_select,
    mmle_sigma2,
    select_lambda,
)
from .config import (
    BandStudyConfig,
    CliConfig,
    FitConfig,
    MethodSpec,
    RateStudyConfig,
    SpectraConfig,
    StudyConfig,
)
from .simulator import (
    StudyResult,
    StudySimulator,
    contraction_probe,
    rate_study,
    replicate_study,
    rmse,
    simulate_dataset,
    true_target,
)
from .utils import GPUtils

__all__ = [
    "CapabilityError", "ConfigError", "ContractError", "GPPluginError", "KernelDomainError",
    "NumericalError", "SelectionError", "StudyFailure", "UnsupportedKernelError",
    "COSINE_HALF", "FOURIER", "EigenSequence", "KernelSpec", "basis_matrix",
    "equivalent_kernel", "gram",
    "Analytic", "EffectiveDims", "Holder", "SeriesFunction", "bound_constant",
    "effective_dims", "f_lambda", "rate_schedule", "rkhs_norm", "series_eval",
    "space_norm", "spectra_sweep",
    "Dataset", "FittedGP", "credible_band", "export_summary", "fit", "krr_check",
    "noise_free_bias", "posterior_cov", "posterior_mean", "posterior_var", "sample_paths",
    "SelectionResult", "log_marginal_likelihood", "loocv_select", "mmle_sigma2",
    "select_lambda",
    "BandStudyConfig", "CliConfig", "FitConfig", "MethodSpec", "RateStudyConfig",
    "SpectraConfig", "StudyConfig",
    "StudyResult", "StudySimulator", "contraction_probe", "rate_study",
    "replicate_study", "rmse", "simulate_dataset", "true_target",
    "GPUtils",
]
