"""
Exact Gaussian-process posterior under the prior GP(0, σ²(nλ)⁻¹K).

The posterior mean of the k-th derivative is K_{k0}(x, X)(K + nλI)⁻¹Y and
its covariance is σ²(nλ)⁻¹{K_{kk}(x, x′) − K_{k0}(x, X)(K + nλI)⁻¹K_{0k}(X, x′)}.
All queries go through the Cholesky factor cached by ``fit``.
"""

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from .exceptions import ContractError
from .kernels import KernelSpec
from .utils import GPUtils

logger = logging.getLogger("gpplugin.posterior")

DEFAULT_GRID_POINTS = 101


@dataclass(frozen=True, eq=False)
class Dataset:
    """Regression sample Yᵢ = f(Xᵢ) + εᵢ."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float).ravel()
        Y = np.array(self.Y, dtype=float).ravel()
        if X.size < 1:
            raise ContractError("Dataset needs at least one observation")
        if X.size != Y.size:
            raise ContractError(f"X and Y lengths differ: {X.size} != {Y.size}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ContractError("Dataset contains non-finite values")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.size

    def with_response(self, Y: Any) -> "Dataset":
        """Same design, different response."""
        return Dataset(self.X, Y)


@dataclass(frozen=True, eq=False)
class FittedGP:
    """Fitted posterior state; immutable and safe to query from many threads."""

    kernel: KernelSpec
    lam: float
    sigma2: float
    X: np.ndarray
    factor: np.ndarray
    weights: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.X.size

    @property
    def scale(self) -> float:
        """Prior scale σ²(nλ)⁻¹."""
        return self.sigma2 / (self.n * self.lam)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(K(X, X) + nλI)⁻¹ rhs via the cached factor."""
        return scipy.linalg.cho_solve((self.factor, True), rhs, check_finite=False)

    def whiten(self, rhs: np.ndarray) -> np.ndarray:
        """L⁻¹ rhs, where L Lᵀ = K(X, X) + nλI."""
        return scipy.linalg.solve_triangular(self.factor, rhs, lower=True, check_finite=False)

    def mean(self, x: Any, k: int = 0) -> Any:
        return posterior_mean(self, k, x)

    def var(self, x: Any, k: int = 0) -> np.ndarray:
        return posterior_var(self, k, x)


def _regularized_gram(kernel: KernelSpec, X: np.ndarray, lam: float) -> np.ndarray:
    n = X.size
    GPUtils.check_memory_requirements(n, n, logger)
    matrix = kernel.gram(X)
    matrix[np.diag_indices(n)] += n * lam
    return matrix


def fit(kernel: KernelSpec, data: Dataset, lam: float, sigma2: float) -> FittedGP:
    """
    Factorize K(X, X) + nλI once and cache the weights (K + nλI)⁻¹Y.

    Args:
        kernel: prior kernel
        data: regression sample
        lam: regularization parameter λ > 0
        sigma2: noise variance σ² > 0

    Returns:
        FittedGP
    """
    if not lam > 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    if not sigma2 > 0:
        raise ContractError(f"sigma2 must be positive, got {sigma2}")

    matrix = _regularized_gram(kernel, data.X, lam)
    factor, jitter = GPUtils.jittered_cholesky(matrix, what="K(X, X) + n*lambda*I", logger=logger)
    weights = scipy.linalg.cho_solve((factor, True), data.Y, check_finite=False)
    for arr in (factor, weights):
        arr.setflags(write=False)
    return FittedGP(kernel=kernel, lam=float(lam), sigma2=float(sigma2), X=data.X,
                    factor=factor, weights=weights, jitter=jitter)


def _as_points(x: Any) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr).ravel(), arr.ndim == 0


def posterior_mean(fit: FittedGP, k: int, x: Any) -> Any:
    """Posterior mean of f^{(k)} at x: K_{k0}(x, X) · weights."""
    points, scalar = _as_points(x)
    values = fit.kernel.cross(points, fit.X, k, 0) @ fit.weights
    return float(values[0]) if scalar else values


def posterior_cov(fit: FittedGP, k: int, x: Any, xp: Any) -> Any:
    """
    Posterior covariance of f^{(k)}; a scalar for scalar inputs, else the
    matrix over (x, xp).
    """
    pa, scalar_a = _as_points(x)
    pb, scalar_b = _as_points(xp)
    va = fit.whiten(fit.kernel.cross(fit.X, pa, 0, k))
    vb = va if x is xp else fit.whiten(fit.kernel.cross(fit.X, pb, 0, k))
    cov = fit.scale * (fit.kernel.cross(pa, pb, k, k) - va.T @ vb)
    if scalar_a and scalar_b:
        return float(cov[0, 0])
    return cov


def posterior_var(fit: FittedGP, k: int, x: Any) -> Any:
    """Diagonal of posterior_cov at the points x."""
    points, scalar = _as_points(x)
    v = fit.whiten(fit.kernel.cross(fit.X, points, 0, k))
    prior = fit.kernel.eval_deriv(k, k, points, points)
    var = fit.scale * (prior - np.sum(v * v, axis=0))
    return float(var[0]) if scalar else var


def krr_check(kernel: KernelSpec, data: Dataset, lam: float, grid: Any) -> float:
    """
    Sup over the grid of |KRR − posterior mean|.

    The KRR solution is obtained from the normal equations
    (K² + nλK)c = KY of min (1/n)‖Y − Kc‖² + λcᵀKc, solved in the
    eigenbasis of K with the common factor K cancelled.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    gram_matrix = kernel.gram(data.X)
    eigvals, eigvecs = scipy.linalg.eigh(gram_matrix)
    n_lam = data.n * lam
    coeffs = eigvecs @ ((eigvecs.T @ data.Y) / (eigvals + n_lam))
    krr = kernel.cross(grid, data.X) @ coeffs

    gp = posterior_mean(fit(kernel, data, lam, 1.0), 0, grid)
    return float(np.max(np.abs(krr - gp)))


def noise_free_bias(fitted: FittedGP, k: int, x: Any, xp: float) -> Any:
    """
    K_{kk}(x, x′) minus the k-th derivative of the noise-free KRR fit of
    g = K_{0k}(·, x′) from the design.

    Equals σ⁻²nλ·posterior_cov(fit, k, x, x′).
    """
    points, scalar = _as_points(x)
    xp = float(xp)
    kernel = fitted.kernel
    target = kernel.cross(fitted.X, [xp], 0, k)[:, 0]
    noise_free = fit(kernel, Dataset(fitted.X, target), fitted.lam, fitted.sigma2)
    values = kernel.cross(points, [xp], k, k)[:, 0] - posterior_mean(noise_free, k, points)
    return float(values[0]) if scalar else values


def sample_paths(fit: FittedGP, k: int, grid: Any, m: int,
                 rng: np.random.Generator) -> np.ndarray:
    """
    Draws of f^{(k)} on the grid from the posterior.

    Returns:
        Array of shape (m, len(grid))
    """
    if m < 1:
        raise ContractError(f"Number of draws must be >= 1, got {m}")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    center = posterior_mean(fit, k, grid)
    cov = posterior_cov(fit, k, grid, grid)
    cov = 0.5 * (cov + cov.T)
    factor, _ = GPUtils.jittered_cholesky(cov, what="grid posterior covariance", logger=logger)
    normals = rng.standard_normal((m, grid.size))
    return center + normals @ factor.T


def credible_band(fit: FittedGP, k: int, grid: Any, level: float, m: int,
                  rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """
    Simultaneous sup-norm credible band of fixed width.

    Returns:
        Tuple of (posterior mean on grid, radius), where the radius is the
        empirical ``level`` quantile of max |draw − mean| over m draws
    """
    if not 0.0 < level < 1.0:
        raise ContractError(f"level must be in (0, 1), got {level}")
    if m < 100:
        raise ContractError(f"Credible bands need at least 100 draws, got {m}")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    center = posterior_mean(fit, k, grid)
    draws = sample_paths(fit, k, grid, m, rng)
    deviations = np.max(np.abs(draws - center), axis=1)
    return center, float(np.quantile(deviations, level))


def export_summary(fit: FittedGP, orders: Iterable[int], grid: Optional[Any] = None,
                   level: float = 0.95, m: int = 1000,
                   rng: Optional[np.random.Generator] = None) -> pd.DataFrame:
    """
    Per-point posterior summary with columns x, mean_k, var_k, band_lo_k and
    band_hi_k for each requested order k.
    """
    lo, hi = fit.kernel.domain
    grid = np.linspace(lo, hi, DEFAULT_GRID_POINTS) if grid is None else np.asarray(grid, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)

    columns = {"x": grid}
    for k in sorted(set(orders)):
        center, radius = credible_band(fit, k, grid, level, m, rng)
        columns[f"mean_{k}"] = center
        columns[f"var_{k}"] = posterior_var(fit, k, grid)
        columns[f"band_lo_{k}"] = center - radius
        columns[f"band_hi_{k}"] = center + radius
    return pd.DataFrame(columns)

