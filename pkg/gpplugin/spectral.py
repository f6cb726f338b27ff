"""
Series-represented functions, function-class norms, the regularized
approximation f_λ, effective-dimension diagnostics and rate schedules.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import ConfigError, ContractError, KernelDomainError
from .kernels import (
    BASES,
    C_PHI,
    COSINE_HALF,
    FOURIER,
    EigenSequence,
    basis_frequencies,
    basis_matrix,
)
from .utils import GPUtils

logger = logging.getLogger("gpplugin.spectral")

DEFAULT_GRID_SIZE = 1001
DEFAULT_GRID_TRUNCATION = 20000
ADAPTIVE_START = 1000
ADAPTIVE_MAX = 10**6
ADAPTIVE_REL_TOL = 1e-6


# ---------------------------------------------------------------------------
# Series functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SeriesFunction:
    """A function Σ fᵢ φᵢ given by its coefficients on an orthonormal basis."""

    basis: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.basis not in BASES:
            raise KernelDomainError(f"Unknown basis '{self.basis}', expected one of {BASES}")
        coeffs = np.array(self.coeffs, dtype=float).ravel()
        if not np.all(np.isfinite(coeffs)):
            raise KernelDomainError("Series coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def __len__(self) -> int:
        return self.coeffs.size

    def __call__(self, x: Any, k: int = 0) -> Any:
        return series_eval(self, k, x)

    def to_dict(self) -> Dict[str, Any]:
        return {"basis": self.basis, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SeriesFunction":
        if not isinstance(data, dict):
            raise ConfigError("Series function must be an object with 'basis' and 'coeffs'")
        unknown = set(data) - {"basis", "coeffs"}
        if unknown:
            raise ConfigError(f"Unknown keys for series function: {sorted(unknown)}")
        if "basis" not in data or "coeffs" not in data:
            raise ConfigError("Series function needs 'basis' and 'coeffs'")
        return cls(basis=data["basis"], coeffs=np.asarray(data["coeffs"], dtype=float))


def series_eval(f: SeriesFunction, k: int, x: Any) -> Any:
    """Σᵢ fᵢ φᵢ^{(k)}(x) at a point or an array of points in [0, 1]."""
    if k < 0:
        raise ContractError(f"Derivative order must be nonnegative, got {k}")
    points = np.asarray(x, dtype=float)
    flat = np.atleast_1d(points).ravel()
    if flat.size and (np.any(flat < 0.0) or np.any(flat > 1.0)):
        raise KernelDomainError("Series functions are defined on [0, 1]")

    size = f.coeffs.size
    out = np.zeros(flat.size)
    if size:
        chunk = GPUtils.calculate_chunk_size(flat.size, size)
        for start in range(0, flat.size, chunk):
            block = flat[start:start + chunk]
            out[start:start + chunk] = basis_matrix(f.basis, k, block, size) @ f.coeffs

    if points.ndim == 0:
        return float(out[0])
    return out.reshape(points.shape)


def _shrinkage(eig: EigenSequence, size: int, lam: float) -> np.ndarray:
    """νᵢ = μᵢ/(λ + μᵢ) for i ≤ size; zero past the end of an explicit spectrum."""
    mu = np.zeros(size)
    mu_known = eig.values_upto(size)
    mu[:mu_known.size] = mu_known
    return mu / (lam + mu)


def f_lambda(f0: SeriesFunction, eig: EigenSequence, lam: float) -> SeriesFunction:
    """
    Population regularized approximation (L_K + λI)⁻¹ L_K f₀, coefficientwise
    fᵢ μᵢ/(λ + μᵢ). λ = 0 returns f₀ unchanged.
    """
    if lam < 0:
        raise ContractError(f"lambda must be nonnegative, got {lam}")
    if lam == 0:
        return SeriesFunction(f0.basis, f0.coeffs.copy())
    return SeriesFunction(f0.basis, f0.coeffs * _shrinkage(eig, f0.coeffs.size, lam))


def approximation_error(f0: SeriesFunction, eig: EigenSequence, lam: float,
                        k: int = 0, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """Grid sup of |f_λ^{(k)} − f₀^{(k)}|."""
    residual = SeriesFunction(f0.basis, f_lambda(f0, eig, lam).coeffs - f0.coeffs)
    grid = np.linspace(0.0, 1.0, grid_size)
    return float(np.max(np.abs(series_eval(residual, k, grid))))


# ---------------------------------------------------------------------------
# Function classes and norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Holder:
    """Hölder-type class H^α: Σ i^α |fᵢ| < ∞."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractError(f"Holder smoothness must be positive, got {self.alpha}")


@dataclass(frozen=True)
class Analytic:
    """Analytic class A^γ: Σ e^{γi} |fᵢ| < ∞."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ContractError(f"Analytic decay must be positive, got {self.gamma}")


FunctionClass = Union[Holder, Analytic]


def space_norm(f: SeriesFunction, space: FunctionClass) -> float:
    """Σ i^α|fᵢ| for Holder(α), Σ e^{γi}|fᵢ| for Analytic(γ), over stored coefficients."""
    index = np.arange(1, f.coeffs.size + 1, dtype=float)
    if isinstance(space, Holder):
        weights = index ** space.alpha
    elif isinstance(space, Analytic):
        weights = np.exp(space.gamma * index)
    else:
        raise ContractError(f"Unknown function class {space!r}")
    return float(np.sum(weights * np.abs(f.coeffs)))


def rkhs_norm(f: SeriesFunction, eig: EigenSequence) -> float:
    """Squared RKHS norm Σ fᵢ²/μᵢ of f for a spectral kernel on the same basis."""
    mu = np.zeros(f.coeffs.size)
    known = eig.values_upto(f.coeffs.size)
    mu[:known.size] = known
    nonzero = f.coeffs != 0.0
    if np.any(nonzero & (mu == 0.0)):
        return math.inf
    return float(np.sum(f.coeffs[nonzero] ** 2 / mu[nonzero]))


def holder_target(alpha: float, size: int = 2000) -> SeriesFunction:
    """Truth in H^α on the Fourier basis: fᵢ = √2 i^{−(α+3/2)} sin i."""
    index = np.arange(1, size + 1, dtype=float)
    return SeriesFunction(FOURIER, math.sqrt(2.0) * index ** (-(alpha + 1.5)) * np.sin(index))


def analytic_target(gamma: float = 1.2, size: int = 200) -> SeriesFunction:
    """Truth in A^γ′ for every γ′ < γ on the Fourier basis: fᵢ = e^{−γi}."""
    index = np.arange(1, size + 1, dtype=float)
    return SeriesFunction(FOURIER, np.exp(-gamma * index))


def cosine_half_target(size: int = 2000) -> SeriesFunction:
    """f₀ = √2 Σ i⁻⁴ sin(i) cos((i − 1/2)πx) on the half-cosine basis."""
    index = np.arange(1, size + 1, dtype=float)
    return SeriesFunction(COSINE_HALF, math.sqrt(2.0) * index ** -4.0 * np.sin(index))


# ---------------------------------------------------------------------------
# Effective dimensions
# ---------------------------------------------------------------------------

@dataclass
class EffectiveDims:
    """Effective-dimension diagnostics of a spectral kernel at one λ."""

    lam: float
    kappa_tilde_sq: float
    kappa_hat_01_sq: float
    kappa_tilde_kk_sq: Dict[int, float]
    kappa_hat_k1_sq: Dict[int, float]
    truncation: int
    tail_bound: float
    analytic_bound: Dict[int, float] = field(default_factory=dict)
    grid_truncation: int = 0
    grid_tail_bound: Dict[int, float] = field(default_factory=dict)
    converged: bool = True
    divergent: Dict[str, bool] = field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        """Flat dict suitable for one DataFrame row."""
        record: Dict[str, Any] = {
            "lambda": self.lam,
            "kappa_tilde_sq": self.kappa_tilde_sq,
            "kappa_hat_01_sq": self.kappa_hat_01_sq,
        }
        for k in sorted(self.kappa_tilde_kk_sq):
            record[f"kappa_tilde_{k}{k}_sq"] = self.kappa_tilde_kk_sq[k]
            record[f"analytic_bound_{k}{k}"] = self.analytic_bound.get(k, math.nan)
            record[f"grid_tail_bound_{k}{k}"] = self.grid_tail_bound.get(k, math.nan)
        for k in sorted(self.kappa_hat_k1_sq):
            record[f"kappa_hat_{k + 1}{k + 1}_sq"] = self.kappa_hat_k1_sq[k]
        record.update(
            truncation=self.truncation,
            tail_bound=self.tail_bound,
            grid_truncation=self.grid_truncation,
            converged=self.converged,
            divergent=";".join(sorted(name for name, flag in self.divergent.items() if flag)),
        )
        return record


def _adaptive_weighted_sum(eig: EigenSequence, lam: float, power: float,
                           rel_tol: float, max_terms: int) -> Tuple[float, int, float, bool]:
    """
    Σᵢ i^power νᵢ with N doubled until the tail bound falls below rel_tol of the
    partial sum. Returns (sum, N, tail bound, converged); the sum is inf when
    the series diverges.
    """
    if math.isinf(eig.weighted_tail(max(1, ADAPTIVE_START), power)):
        return math.inf, 0, math.inf, False

    size = eig.length if eig.length is not None else min(ADAPTIVE_START, max_terms)
    while True:
        index = np.arange(1, size + 1, dtype=float)
        partial = float(np.sum(index ** power * _shrinkage(eig, size, lam)))
        # νᵢ ≤ μᵢ/λ
        tail = eig.weighted_tail(size, power) / lam
        if tail <= rel_tol * partial or eig.length is not None:
            return partial, size, tail, True
        if size >= max_terms:
            return partial, size, tail, False
        size = min(2 * size, max_terms)


def _grid_sup(eig: EigenSequence, basis: str, lam: float, k: int,
              grid: np.ndarray, size: int) -> float:
    """sup over the grid of Σ_{i≤size} νᵢ φᵢ^{(k)}(x)², accumulated in column blocks."""
    acc = np.zeros(grid.size)
    nu = _shrinkage(eig, size, lam)
    block = GPUtils.calculate_chunk_size(size, grid.size, memory_gb=0.05)
    for start in range(0, size, block):
        width = min(block, size - start)
        phi = basis_matrix(basis, k, grid, width, offset=start)
        acc += (phi * phi) @ nu[start:start + width]
    return float(np.max(acc))


def effective_dims(eig: EigenSequence, basis: str, lam: float,
                   orders: Iterable[int] = (0, 1), grid_size: int = DEFAULT_GRID_SIZE,
                   grid_truncation: int = DEFAULT_GRID_TRUNCATION,
                   rel_tol: float = ADAPTIVE_REL_TOL,
                   max_truncation: int = ADAPTIVE_MAX) -> EffectiveDims:
    """
    Effective dimensions of the spectral kernel (basis, eig) at λ.

    κ̂₀₁² = Σ iνᵢ and κ̂²_{k+1,k+1} = Σ i^{2k+2}νᵢ use adaptive truncation.
    κ̃² and κ̃ₖₖ² are sups over an equispaced grid of Σ νᵢ φᵢ^{(k)}(x)²,
    reported alongside the analytic bound C_φ² Σ νᵢ ωᵢ^{2k}.

    Args:
        eig: eigenvalue sequence
        basis: basis identifier
        lam: regularization parameter λ > 0
        orders: derivative orders k for κ̃ₖₖ² and κ̂²_{k+1,k+1}
        grid_size: number of equispaced grid points on [0, 1], endpoints included
        grid_truncation: cap on basis terms used in grid sums
        rel_tol: relative tail tolerance for adaptive truncation
        max_truncation: hard cap on adaptive truncation

    Returns:
        EffectiveDims
    """
    if not lam > 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    if grid_size < 2:
        raise ContractError(f"grid_size must be >= 2, got {grid_size}")
    if basis not in BASES:
        raise KernelDomainError(f"Unknown basis '{basis}'")
    orders = sorted(set(int(k) for k in orders) | {0})
    if orders[0] < 0:
        raise ContractError("Derivative orders must be nonnegative")

    divergent: Dict[str, bool] = {}
    converged = True
    truncation = 0
    tails = []

    def coefficient_sum(name: str, power: float) -> float:
        nonlocal converged, truncation
        value, size, tail, ok = _adaptive_weighted_sum(eig, lam, power, rel_tol, max_truncation)
        if math.isinf(value):
            divergent[name] = True
            logger.warning(f"{name} diverges for this eigenvalue decay (power {power:g})")
            return value
        if not ok:
            converged = False
            logger.warning(f"{name} did not reach tolerance at N={size:,} (tail bound {tail:.3e})")
        truncation = max(truncation, size)
        tails.append(tail)
        return value

    kappa_hat_01 = coefficient_sum("kappa_hat_01_sq", 1.0)
    kappa_hat_k1 = {k: coefficient_sum(f"kappa_hat_{k + 1}{k + 1}_sq", 2.0 * k + 2.0)
                    for k in orders}

    grid = np.linspace(0.0, 1.0, grid_size)
    grid_n = grid_truncation if eig.length is None else min(grid_truncation, eig.length)
    kappa_tilde_kk: Dict[int, float] = {}
    analytic: Dict[int, float] = {}
    grid_tail: Dict[int, float] = {}
    for k in orders:
        omission = C_PHI ** 2 * math.pi ** (2 * k) * eig.weighted_tail(grid_n, 2.0 * k) / lam
        if math.isinf(omission):
            divergent[f"kappa_tilde_{k}{k}_sq"] = True
            kappa_tilde_kk[k] = analytic[k] = grid_tail[k] = math.inf
            continue
        kappa_tilde_kk[k] = _grid_sup(eig, basis, lam, k, grid, grid_n)
        omega = basis_frequencies(basis, grid_n)
        analytic[k] = float(C_PHI ** 2 * np.sum(_shrinkage(eig, grid_n, lam) * omega ** (2 * k))
                            + omission)
        grid_tail[k] = omission

    return EffectiveDims(
        lam=float(lam),
        kappa_tilde_sq=kappa_tilde_kk[0],
        kappa_hat_01_sq=kappa_hat_01,
        kappa_tilde_kk_sq=kappa_tilde_kk,
        kappa_hat_k1_sq=kappa_hat_k1,
        truncation=truncation,
        tail_bound=max(tails) if tails else 0.0,
        analytic_bound=analytic,
        grid_truncation=grid_n,
        grid_tail_bound=grid_tail,
        converged=converged,
        divergent=divergent,
    )


def spectra_sweep(eig: EigenSequence, basis: str, lambdas: Sequence[float],
                  orders: Iterable[int] = (0, 1), grid_size: int = DEFAULT_GRID_SIZE,
                  grid_truncation: int = DEFAULT_GRID_TRUNCATION) -> pd.DataFrame:
    """EffectiveDims over a λ grid, one row per λ."""
    orders = tuple(orders)
    rows = [
        effective_dims(eig, basis, lam, orders, grid_size, grid_truncation).to_record()
        for lam in lambdas
    ]
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Theoretical constants and rates
# ---------------------------------------------------------------------------

def bound_constant(n: int, kappa_tilde: float) -> float:
    """
    C(n, κ̃) = (κ̃²√(20 log n)/√n)(4 + 4κ̃√(20 log n)/(3√n)).

    Noise-free bounds apply once this is at most 1/2.
    """
    if n < 2:
        raise ContractError(f"n must be >= 2, got {n}")
    if kappa_tilde < 0:
        raise ContractError(f"kappa_tilde must be nonnegative, got {kappa_tilde}")
    root = math.sqrt(20.0 * math.log(n))
    sqrt_n = math.sqrt(n)
    return (kappa_tilde ** 2 * root / sqrt_n) * (4.0 + 4.0 * kappa_tilde * root / (3.0 * sqrt_n))


def rate_schedule(function_class: FunctionClass, k: int, n: float) -> Tuple[float, float]:
    """
    Regularization λₙ and contraction rate εₙ for estimating the k-th derivative.

    Holder(α): λₙ = (log n/n)^{2α/(2α+1)}, εₙ = (log n/n)^{(α−k)/(2α+1)}.
    Analytic(γ): λₙ = 1/n, εₙ = log n/√n (k = 0 only).
    """
    if k < 0:
        raise ContractError(f"Derivative order must be nonnegative, got {k}")
    if not n > 1:
        raise ContractError(f"n must exceed 1, got {n}")

    if isinstance(function_class, Holder):
        alpha = function_class.alpha
        if k >= alpha:
            raise ContractError(f"Derivative order {k} needs smoothness above it, got alpha={alpha}")
        if k >= alpha - 1.5:
            logger.warning(
                f"Derivative order {k} is not below alpha - 3/2 = {alpha - 1.5:g}; "
                "rate guarantees do not apply"
            )
        base = math.log(n) / n
        return base ** (2.0 * alpha / (2.0 * alpha + 1.0)), base ** ((alpha - k) / (2.0 * alpha + 1.0))

    if isinstance(function_class, Analytic):
        if k != 0:
            raise ContractError("Analytic rate schedule covers only k = 0")
        return 1.0 / n, math.log(n) / math.sqrt(n)

    raise ContractError(f"Unknown function class {function_class!r}")


def function_class_from_dict(data: Dict[str, Any]) -> FunctionClass:
    """{"holder": α} or {"analytic": γ} → function class."""
    if not isinstance(data, dict) or len(data) != 1:
        raise ConfigError("Function class must be {\"holder\": alpha} or {\"analytic\": gamma}")
    (name, value), = data.items()
    if name == "holder":
        return Holder(float(value))
    if name == "analytic":
        return Analytic(float(value))
    raise ConfigError(f"Unknown function class '{name}'")


def function_class_to_dict(function_class: FunctionClass) -> Dict[str, float]:
    if isinstance(function_class, Holder):
        return {"holder": function_class.alpha}
    return {"analytic": function_class.gamma}
