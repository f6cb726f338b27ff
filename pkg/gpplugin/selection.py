"""
Empirical-Bayes hyperparameter selection and leave-one-out cross-validation.

Under the prior GP(0, σ²(nλ)⁻¹K) the marginal law of the responses is
Y ~ N(0, σ²B) with B = (nλ)⁻¹K(X, X) + I.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from .exceptions import ContractError, NumericalError, SelectionError
from .kernels import KernelSpec
from .posterior import Dataset
from .utils import GPUtils

logger = logging.getLogger("gpplugin.selection")

DEFAULT_LAMBDA_RANGE = (1e-8, 1.0)
DEFAULT_LAMBDA_POINTS = 30
DEFAULT_NU_CANDIDATES = (2.0, 2.5, 3.0, 3.5, 4.0)

# 1 - H_ii below this counts as a numerically interpolating candidate
LEVERAGE_TOL = 1e-12


@dataclass
class SelectionResult:
    """Chosen hyperparameters plus the full candidate trace."""

    lam: float
    sigma2: float
    nu: Optional[float] = None
    score_trace: List[Tuple[Any, float]] = field(default_factory=list)
    criterion: str = "marginal_likelihood"
    endpoint_hit: bool = False

    def trace_frame(self) -> pd.DataFrame:
        """Trace as a DataFrame with columns nu, lambda, score."""
        rows = []
        for candidate, score in self.score_trace:
            if isinstance(candidate, tuple):
                nu, lam = candidate
            else:
                nu, lam = self.nu, candidate
            rows.append({"nu": nu, "lambda": lam, "score": score})
        return pd.DataFrame(rows, columns=["nu", "lambda", "score"])

    def summary(self) -> Dict[str, Any]:
        return {
            "criterion": self.criterion,
            "lambda": self.lam,
            "sigma2": self.sigma2,
            "nu": self.nu,
            "endpoint_hit": self.endpoint_hit,
            "candidates": len(self.score_trace),
        }


def default_lambda_grid(points: int = DEFAULT_LAMBDA_POINTS,
                        low: float = DEFAULT_LAMBDA_RANGE[0],
                        high: float = DEFAULT_LAMBDA_RANGE[1]) -> np.ndarray:
    """Log-spaced λ candidates, ascending."""
    return np.logspace(math.log10(low), math.log10(high), points)


def _marginal_terms(gram_matrix: np.ndarray, Y: np.ndarray, lam: float) -> Tuple[float, float]:
    """log det B and YᵀB⁻¹Y from one factorization of B = (nλ)⁻¹K + I."""
    n = Y.size
    matrix = gram_matrix / (n * lam)
    matrix[np.diag_indices(n)] += 1.0
    factor, _ = GPUtils.jittered_cholesky(matrix, what="(n*lambda)^-1 K + I", logger=logger)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor))))
    z = scipy.linalg.solve_triangular(factor, Y, lower=True, check_finite=False)
    return logdet, float(z @ z)


def _check_positive(lam: float, name: str = "lambda") -> None:
    if not lam > 0:
        raise ContractError(f"{name} must be positive, got {lam}")


def log_marginal_likelihood(kernel: KernelSpec, data: Dataset, lam: float, sigma2: float) -> float:
    """Gaussian log-density of Y under N(0, σ²((nλ)⁻¹K(X, X) + I))."""
    _check_positive(lam)
    _check_positive(sigma2, "sigma2")
    logdet, quad = _marginal_terms(kernel.gram(data.X), data.Y, lam)
    n = data.n
    return -0.5 * (n * math.log(2.0 * math.pi * sigma2) + logdet + quad / sigma2)


def mmle_sigma2(kernel: KernelSpec, data: Dataset, lam: float) -> float:
    """σ̂² = λYᵀ(K(X, X) + nλI)⁻¹Y, the maximizer of the marginal likelihood in σ²."""
    _check_positive(lam)
    _, quad = _marginal_terms(kernel.gram(data.X), data.Y, lam)
    return quad / data.n


def select_lambda(kernel: KernelSpec, data: Dataset, lam_grid: Sequence[float]) -> SelectionResult:
    """
    Grid search of the profile marginal likelihood with σ² = σ̂²(λ).

    Ties go to the smaller λ. Candidates whose factorization fails are
    recorded with score NaN.
    """
    lam_grid = np.sort(np.asarray(lam_grid, dtype=float))
    if lam_grid.size == 0:
        raise ContractError("lambda grid must be nonempty")
    for lam in lam_grid:
        _check_positive(lam)

    gram_matrix = kernel.gram(data.X)
    n = data.n
    trace: List[Tuple[Any, float]] = []
    best: Optional[Tuple[float, float, float]] = None

    for lam in lam_grid:
        try:
            logdet, quad = _marginal_terms(gram_matrix, data.Y, lam)
        except NumericalError as e:
            logger.warning(f"Skipping lambda={lam:.3e}: {e}")
            trace.append((float(lam), math.nan))
            continue
        sigma2 = quad / n
        if not sigma2 > 0:
            logger.warning(f"Skipping lambda={lam:.3e}: degenerate sigma2 estimate {sigma2}")
            trace.append((float(lam), math.nan))
            continue
        score = -0.5 * (n * math.log(2.0 * math.pi * sigma2) + logdet + n)
        trace.append((float(lam), score))
        if best is None or score > best[2]:
            best = (float(lam), sigma2, score)

    if best is None:
        raise SelectionError(f"All {lam_grid.size} lambda candidates failed")

    endpoint = lam_grid.size > 1 and best[0] in (lam_grid[0], lam_grid[-1])
    if endpoint:
        logger.warning(
            f"Selected lambda={best[0]:.3e} is a grid endpoint; consider widening the grid"
        )
    return SelectionResult(lam=best[0], sigma2=best[1], nu=getattr(kernel, "nu", None),
                           score_trace=trace, endpoint_hit=bool(endpoint))


def loo_residuals(kernel: KernelSpec, data: Dataset, lam: float) -> np.ndarray:
    """
    Exact leave-one-out residuals (yᵢ − f̂(xᵢ))/(1 − Hᵢᵢ) with H = K(K + nλI)⁻¹.

    With A = K + nλI, I − H = nλA⁻¹, so the residual is (A⁻¹Y)ᵢ/(A⁻¹)ᵢᵢ.
    Entries whose leverage is numerically one come back as NaN.
    """
    _check_positive(lam)
    return _loo_from_gram(kernel.gram(data.X), data.Y, lam)


def _loo_from_gram(gram_matrix: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    n = Y.size
    matrix = gram_matrix.copy()
    matrix[np.diag_indices(n)] += n * lam
    factor, _ = GPUtils.jittered_cholesky(matrix, what="K(X, X) + n*lambda*I", logger=logger)
    inverse = scipy.linalg.cho_solve((factor, True), np.eye(n), check_finite=False)
    alpha = inverse @ Y
    diag = np.diag(inverse)
    one_minus_h = n * lam * diag
    residuals = np.full(n, math.nan)
    ok = one_minus_h > LEVERAGE_TOL
    residuals[ok] = alpha[ok] / diag[ok]
    return residuals


def loocv_select(data: Dataset, nu_candidates: Sequence[float] = DEFAULT_NU_CANDIDATES,
                 lam_grid: Optional[Sequence[float]] = None,
                 domain: Tuple[float, float] = (0.0, 1.0)) -> SelectionResult:
    """
    Matérn ν and λ minimizing the leave-one-out squared error.

    The trace records the negated mean squared LOO residual, so the chosen
    pair has the largest score. σ² is the MMLE at the chosen pair.
    """
    nu_candidates = [float(nu) for nu in nu_candidates]
    lam_grid = np.sort(np.asarray(default_lambda_grid() if lam_grid is None else lam_grid, dtype=float))
    if not nu_candidates or lam_grid.size == 0:
        raise ContractError("LOOCV needs nonempty nu and lambda candidate sets")

    trace: List[Tuple[Any, float]] = []
    best: Optional[Tuple[float, float, float]] = None
    for nu in nu_candidates:
        kernel = KernelSpec.matern(nu, domain=domain)
        gram_matrix = kernel.gram(data.X)
        for lam in lam_grid:
            _check_positive(lam)
            try:
                residuals = _loo_from_gram(gram_matrix, data.Y, lam)
            except NumericalError as e:
                logger.warning(f"Skipping nu={nu:g}, lambda={lam:.3e}: {e}")
                trace.append(((nu, float(lam)), math.nan))
                continue
            if np.any(np.isnan(residuals)):
                logger.warning(f"Skipping nu={nu:g}, lambda={lam:.3e}: leverage numerically 1")
                trace.append(((nu, float(lam)), math.nan))
                continue
            score = -float(np.mean(residuals ** 2))
            trace.append(((nu, float(lam)), score))
            if best is None or score > best[2]:
                best = (nu, float(lam), score)

    if best is None:
        raise SelectionError("All (nu, lambda) candidates failed leave-one-out scoring")

    nu, lam, _ = best
    sigma2 = mmle_sigma2(KernelSpec.matern(nu, domain=domain), data, lam)
    endpoint = lam_grid.size > 1 and lam in (lam_grid[0], lam_grid[-1])
    return SelectionResult(lam=lam, sigma2=sigma2, nu=nu, score_trace=trace,
                           criterion="loocv", endpoint_hit=bool(endpoint))
