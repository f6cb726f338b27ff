"""
Simulation harness: data generation from f₀, replicated RMSE studies,
oracle-λ rate studies, posterior contraction probes, credible-band
coverage, MMLE consistency and posterior-variance bound checks.
"""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .config import BandStudyConfig, MethodSpec, RateStudyConfig, StudyConfig
from .exceptions import ContractError, NumericalError, SelectionError, StudyFailure
from .kernels import EigenSequence, KernelSpec
from .posterior import (
    Dataset,
    FittedGP,
    credible_band,
    fit,
    posterior_mean,
    posterior_var,
    sample_paths,
)
from .selection import SelectionResult, default_lambda_grid, loocv_select, select_lambda
from .spectral import (
    FunctionClass,
    Holder,
    SeriesFunction,
    analytic_target,
    cosine_half_target,
    effective_dims,
    holder_target,
    rate_schedule,
    series_eval,
)
from .utils import GPUtils

try:
    from tqdm import tqdm
except ImportError:
    tqdm = lambda x, **kwargs: x

logger = logging.getLogger("gpplugin.simulator")

TRUTH_TRUNCATION = 2000
GRID_POINTS = 100
SPLITTING_RULE = "SeedSequence(entropy=seed, spawn_key=(n, replicate))"

# Failures that exclude a replicate instead of aborting the study
REPLICATE_ERRORS = (NumericalError, SelectionError)


# ---------------------------------------------------------------------------
# Truth, data and error metric
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _default_truth(size: int) -> SeriesFunction:
    return cosine_half_target(size)


def true_target(k: int, x: Any, size: int = TRUTH_TRUNCATION) -> Any:
    """k-th derivative of f₀(x) = √2 Σᵢ i⁻⁴ sin(i) cos((i − 1/2)πx), truncated at ``size`` terms."""
    return series_eval(_default_truth(size), k, x)


def evaluation_grid(points: int = GRID_POINTS) -> np.ndarray:
    """Points t/(points − 1), t = 0..points − 1."""
    return np.arange(points) / (points - 1)


def simulate_dataset(n: int, sigma0_sq: float, rng: np.random.Generator,
                     target: Optional[SeriesFunction] = None) -> Dataset:
    """
    Draw X ~ U[0, 1] and Y = f(X) + ε, ε ~ N(0, σ₀²); f defaults to f₀.

    X is drawn before the noise so a given generator state always gives the
    same design.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    if not sigma0_sq > 0:
        raise ContractError(f"sigma0_sq must be positive, got {sigma0_sq}")
    target = target if target is not None else _default_truth(TRUTH_TRUNCATION)
    X = rng.uniform(0.0, 1.0, size=n)
    noise = rng.normal(0.0, math.sqrt(sigma0_sq), size=n)
    return Dataset(X, series_eval(target, 0, X) + noise)


def rmse(estimate_on_grid: Any, truth_on_grid: Any) -> float:
    """Root mean squared difference of two equal-length vectors."""
    estimate = np.asarray(estimate_on_grid, dtype=float).ravel()
    truth = np.asarray(truth_on_grid, dtype=float).ravel()
    if estimate.size != truth.size:
        raise ContractError(f"Length mismatch: {estimate.size} != {truth.size}")
    if estimate.size == 0:
        raise ContractError("rmse needs at least one point")
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))


def tune(method: MethodSpec, data: Dataset) -> Tuple[KernelSpec, SelectionResult]:
    """
    Apply a method's tuning rule.

    ``eb`` selects λ and σ² by empirical Bayes; ``loocv`` picks the Matérn ν
    by leave-one-out CV and then runs empirical Bayes at that ν; ``fixed``
    uses the configured values.
    """
    lam_grid = default_lambda_grid() if method.lambda_grid is None else np.asarray(method.lambda_grid)

    if method.tuning == "fixed":
        return method.kernel, SelectionResult(lam=method.lam, sigma2=method.sigma2,
                                              nu=method.kernel.nu, criterion="fixed")
    if method.tuning == "eb":
        return method.kernel, select_lambda(method.kernel, data, lam_grid)

    domain = method.kernel.domain if method.kernel is not None else (0.0, 1.0)
    cv = loocv_select(data, method.nu_candidates, lam_grid, domain=domain)
    kernel = KernelSpec.matern(cv.nu, domain=domain)
    eb = select_lambda(kernel, data, lam_grid)
    return kernel, SelectionResult(lam=eb.lam, sigma2=eb.sigma2, nu=cv.nu,
                                   score_trace=eb.score_trace, criterion="loocv+eb",
                                   endpoint_hit=eb.endpoint_hit)


def _run_tasks(fn: Callable[[Any], Any], tasks: Sequence[Any], threads: int,
               desc: str) -> List[Any]:
    """Map fn over tasks on a thread pool; results come back in task order."""
    if threads <= 1:
        return [fn(task) for task in tqdm(tasks, desc=desc, disable=len(tasks) < 2)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(tqdm(executor.map(fn, tasks), total=len(tasks), desc=desc,
                         disable=len(tasks) < 2))


def _summarize(values: np.ndarray) -> Dict[str, float]:
    reps = values.size
    return {
        "mean_rmse": float(np.mean(values)) if reps else math.nan,
        "median_rmse": float(np.median(values)) if reps else math.nan,
        "se_of_mean": float(np.std(values, ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
        "reps": int(reps),
    }


# ---------------------------------------------------------------------------
# Replicated RMSE study
# ---------------------------------------------------------------------------

@dataclass
class StudyResult:
    """Aggregated RMSEs per (method, n, order) plus per-replicate records."""

    summary: pd.DataFrame
    records: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    def write(self, output_dir: str) -> Dict[str, str]:
        return {
            "table": GPUtils.write_csv(self.summary, os.path.join(output_dir, "table.csv")),
            "replicates": GPUtils.create_summary_report(output_dir, self.records.to_dict("records")),
        }


class StudySimulator:
    """Runs a replicated RMSE study over sample sizes and methods."""

    def __init__(self, config: StudyConfig):
        """
        Initialize the study runner.

        Args:
            config: StudyConfig with all study parameters
        """
        self.config = config
        log_file = None
        if config.output_dir:
            os.makedirs(config.output_dir, exist_ok=True)
            log_file = os.path.join(config.output_dir, "gpplugin.log")
        # keep handlers (and level) already installed by the caller
        if log_file and not logging.getLogger("gpplugin").handlers:
            self.logger = GPUtils.setup_logging(log_file=log_file)
        else:
            self.logger = logger
        self.replicate_results: List[Dict[str, Any]] = []

        self.grid = config.grid()
        self.truth = {k: true_target(k, self.grid, config.truth_truncation)
                      for k in config.derivative_orders}
        self.target = _default_truth(config.truth_truncation)

    def run_study(self) -> StudyResult:
        """
        Run every (n, replicate) task and aggregate.

        Returns:
            StudyResult
        """
        parameter_grid = self.config.get_parameter_grid()
        self.logger.info(
            f"Starting study: n={self.config.n_values}, replications={self.config.replications}, "
            f"methods={[m.name for m in self.config.methods]}, threads={self.config.threads}"
        )
        start_time = time.time()

        per_task = _run_tasks(self._run_replicate, parameter_grid, self.config.threads, "replicates")
        self.replicate_results = [record for records in per_task for record in records]
        records = pd.DataFrame(self.replicate_results)

        failed = int((~records["success"]).sum()) if len(records) else 0
        total_time = time.time() - start_time
        self.logger.info(
            f"Study completed in {total_time:.2f} seconds. "
            f"Records: {len(records)}, Failed: {failed}"
        )

        summary = self._aggregate(records)
        result = StudyResult(
            summary=summary,
            records=records,
            metadata={
                "seed": self.config.seed,
                "splitting_rule": SPLITTING_RULE,
                "lambda_grid_default": "30 log-spaced points in [1e-8, 1]",
                "config": self.config.to_dict(),
            },
        )

        if self.config.output_dir:
            paths = result.write(self.config.output_dir)
            self.logger.info(f"Summary report saved to: {paths['table']}")

        self._check_failures(summary)
        return result

    def _run_replicate(self, params: Dict[str, int]) -> List[Dict[str, Any]]:
        """Simulate one dataset and score every method on it."""
        n, rep = params["n"], params["replicate"]
        rng = GPUtils.replicate_rng(self.config.seed, n, rep)
        data = simulate_dataset(n, self.config.sigma0_sq, rng, self.target)

        records = []
        for method in self.config.methods:
            base = {"method": method.name, "n": n, "replicate": rep}
            try:
                kernel, selection = tune(method, data)
                fitted = fit(kernel, data, selection.lam, selection.sigma2)
                if selection.endpoint_hit:
                    self.logger.warning(
                        f"{method.name}, n={n}, replicate {rep}: lambda at grid endpoint"
                    )
                for k in self.config.derivative_orders:
                    estimate = posterior_mean(fitted, k, self.grid)
                    records.append({
                        **base,
                        "order": k,
                        "rmse": rmse(estimate, self.truth[k]),
                        "lambda": selection.lam,
                        "sigma2": selection.sigma2,
                        "nu": selection.nu,
                        "endpoint_hit": selection.endpoint_hit,
                        "success": True,
                        "error": None,
                    })
            except REPLICATE_ERRORS as e:
                self.logger.error(f"{method.name}, n={n}, replicate {rep} failed: {e}")
                for k in self.config.derivative_orders:
                    records.append({
                        **base, "order": k, "rmse": math.nan, "lambda": math.nan,
                        "sigma2": math.nan, "nu": None, "endpoint_hit": False,
                        "success": False, "error": str(e),
                    })
        return records

    def _aggregate(self, records: pd.DataFrame) -> pd.DataFrame:
        rows = []
        for method in self.config.methods:
            for n in self.config.n_values:
                for k in self.config.derivative_orders:
                    subset = records[(records["method"] == method.name)
                                     & (records["n"] == n) & (records["order"] == k)]
                    ok = subset[subset["success"]]
                    rows.append({
                        "method": method.name,
                        "n": n,
                        "order": k,
                        **_summarize(ok["rmse"].to_numpy(dtype=float)),
                        "failures": int(len(subset) - len(ok)),
                    })
        return pd.DataFrame(rows, columns=["method", "n", "order", "mean_rmse", "median_rmse",
                                           "se_of_mean", "reps", "failures"])

    def _check_failures(self, summary: pd.DataFrame) -> None:
        allowed = self.config.max_failure_fraction * self.config.replications
        worst = summary[summary["failures"] > allowed]
        if len(worst):
            row = worst.iloc[0]
            raise StudyFailure(
                f"{row['failures']} of {self.config.replications} replicates failed for "
                f"method '{row['method']}' at n={row['n']}"
            )

    def get_results_summary(self) -> Dict[str, Any]:
        """Get a summary of replicate outcomes."""
        if not self.replicate_results:
            return {"message": "No replicates have been run yet"}

        successful = [r for r in self.replicate_results if r["success"]]
        return {
            "total_records": len(self.replicate_results),
            "successful": len(successful),
            "failed": len(self.replicate_results) - len(successful),
            "success_rate": len(successful) / len(self.replicate_results) * 100,
            "parameter_combinations": len(self.config.get_parameter_grid()),
            "output_directory": self.config.output_dir,
        }


def replicate_study(config: StudyConfig) -> StudyResult:
    """Run a replicated RMSE study; see StudySimulator."""
    return StudySimulator(config).run_study()


# ---------------------------------------------------------------------------
# Oracle-λ rate study and contraction
# ---------------------------------------------------------------------------

def expected_rate_slope(function_class: FunctionClass, k: int) -> float:
    """Theoretical log-log slope of the RMSE against the rate abscissa."""
    if isinstance(function_class, Holder):
        alpha = function_class.alpha
        return -(alpha - k) / (2.0 * alpha + 1.0)
    return -1.0


def rate_abscissa(function_class: FunctionClass, n: Any) -> np.ndarray:
    """n/log n for Hölder classes, √n/log n for the analytic class."""
    n = np.asarray(n, dtype=float)
    if isinstance(function_class, Holder):
        return n / np.log(n)
    return np.sqrt(n) / np.log(n)


def rate_target(config: RateStudyConfig) -> SeriesFunction:
    """Default truth of the configured function class."""
    if isinstance(config.function_class, Holder):
        return holder_target(config.function_class.alpha, config.truncation)
    return analytic_target(config.target_decay)


@dataclass
class RateStudyResult:
    """Per-n median RMSEs and fitted slopes for each derivative order."""

    per_n: pd.DataFrame
    slopes: pd.DataFrame
    records: pd.DataFrame
    contraction: Optional[pd.DataFrame] = None

    def slope(self, k: int) -> float:
        return float(self.slopes.loc[self.slopes["order"] == k, "slope"].iloc[0])

    def write(self, output_dir: str) -> Dict[str, str]:
        paths = {
            "slopes": GPUtils.write_csv(self.slopes, os.path.join(output_dir, "rates.csv")),
            "per_n": GPUtils.write_csv(self.per_n, os.path.join(output_dir, "rates_by_n.csv")),
            "replicates": GPUtils.create_summary_report(output_dir, self.records.to_dict("records")),
        }
        if self.contraction is not None:
            paths["contraction"] = GPUtils.write_csv(
                self.contraction, os.path.join(output_dir, "contraction.csv")
            )
        return paths


def rate_study(config: RateStudyConfig) -> RateStudyResult:
    """
    Median RMSE of the posterior mean (and its derivatives) under oracle λₙ
    from rate_schedule, with the least-squares slope of log median RMSE
    against the log rate abscissa. λ never comes from model selection.
    """
    kernel = config.kernel()
    target = rate_target(config)
    grid = evaluation_grid(config.grid_points)
    truth = {k: series_eval(target, k, grid) for k in config.orders}
    lambdas = {n: rate_schedule(config.function_class, 0, n)[0] for n in config.n_values}
    logger.info(f"Rate study for {config.function_class} with kernel {kernel.label}")

    def run(params: Dict[str, int]) -> List[Dict[str, Any]]:
        n, rep = params["n"], params["replicate"]
        rng = GPUtils.replicate_rng(config.seed, n, rep)
        data = simulate_dataset(n, config.sigma0_sq, rng, target)
        base = {"n": n, "replicate": rep, "lambda": lambdas[n]}
        try:
            fitted = fit(kernel, data, lambdas[n], config.sigma0_sq)
        except NumericalError as e:
            logger.error(f"Rate study n={n}, replicate {rep} failed: {e}")
            return [{**base, "order": k, "rmse": math.nan, "success": False} for k in config.orders]
        return [{**base, "order": k, "rmse": rmse(posterior_mean(fitted, k, grid), truth[k]),
                 "success": True} for k in config.orders]

    tasks = [{"n": n, "replicate": rep} for n in config.n_values for rep in range(config.replications)]
    records = pd.DataFrame([r for rs in _run_tasks(run, tasks, config.threads, "rate replicates")
                            for r in rs])

    per_n_rows, slope_rows = [], []
    for k in config.orders:
        eps = {n: rate_schedule(config.function_class, k, n)[1] for n in config.n_values}
        medians = []
        for n in config.n_values:
            subset = records[(records["order"] == k) & (records["n"] == n)]
            ok = subset[subset["success"]]["rmse"].to_numpy(dtype=float)
            if ok.size == 0 or len(subset) - ok.size > 0.05 * config.replications:
                raise StudyFailure(f"Too many failed replicates at n={n}, order {k}")
            stats = _summarize(ok)
            medians.append(stats["median_rmse"])
            per_n_rows.append({"order": k, "n": n, "lambda": lambdas[n], "eps": eps[n],
                               **stats, "failures": int(len(subset) - ok.size)})
        slope = GPUtils.fit_loglog_slope(rate_abscissa(config.function_class, config.n_values), medians)
        expected = expected_rate_slope(config.function_class, k)
        slope_rows.append({"order": k, "slope": slope, "expected_slope": expected,
                           "deviation": slope - expected})
        logger.info(f"Order {k}: fitted slope {slope:.3f}, theory {expected:.3f}")

    contraction = None
    if config.contraction:
        contraction = contraction_study(
            config.function_class, 0, config.n_values, config.replications, config.seed,
            multiplier=config.contraction_multiplier, draws=config.contraction_draws,
            sigma0_sq=config.sigma0_sq, truncation=config.truncation,
            grid_points=config.grid_points, threads=config.threads,
            target_decay=config.target_decay,
        )

    return RateStudyResult(per_n=pd.DataFrame(per_n_rows), slopes=pd.DataFrame(slope_rows),
                           records=records, contraction=contraction)


def contraction_probe(fitted: FittedGP, k: int, norm: str, radius: float, m: int,
                      rng: np.random.Generator, truth_on_grid: Any,
                      grid: Optional[Any] = None) -> float:
    """
    Monte Carlo posterior mass of {‖f^{(k)} − f₀^{(k)}‖ > radius}.

    Args:
        fitted: fitted posterior
        k: derivative order
        norm: "L2" (trapezoid quadrature on the grid) or "Linf"
        radius: ball radius
        m: number of posterior draws, at least 100
        rng: generator owned by this call
        truth_on_grid: f₀^{(k)} on the grid
        grid: evaluation grid, default 100 points t/99

    Returns:
        Fraction of draws outside the ball
    """
    if m < 100:
        raise ContractError(f"Contraction probes need at least 100 draws, got {m}")
    if norm not in ("L2", "Linf"):
        raise ContractError(f"norm must be 'L2' or 'Linf', got {norm!r}")
    grid = evaluation_grid() if grid is None else np.asarray(grid, dtype=float)
    truth = np.asarray(truth_on_grid, dtype=float)
    if truth.shape != grid.shape:
        raise ContractError("truth_on_grid must match the grid")

    draws = sample_paths(fitted, k, grid, m, rng)
    diff = draws - truth
    if norm == "Linf":
        distance = np.max(np.abs(diff), axis=1)
    else:
        distance = np.sqrt(trapezoid(diff ** 2, grid, axis=1))
    return float(np.mean(distance > radius))


def contraction_study(function_class: FunctionClass, k: int, n_values: Sequence[int],
                      seeds: int, seed: int, multiplier: float = 5.0, draws: int = 200,
                      norm: str = "L2", sigma0_sq: float = 0.1, truncation: int = 2000,
                      grid_points: int = GRID_POINTS, threads: int = 1,
                      target_decay: float = 1.2) -> pd.DataFrame:
    """
    Median contraction-probe mass at radius M·εₙ for each n, with oracle λₙ.
    """
    rate_config = RateStudyConfig(function_class=function_class, orders=[k],
                                  n_values=list(n_values), replications=seeds, seed=seed,
                                  sigma0_sq=sigma0_sq, truncation=truncation,
                                  grid_points=grid_points, target_decay=target_decay)
    kernel = rate_config.kernel()
    target = rate_target(rate_config)
    grid = evaluation_grid(grid_points)
    truth = series_eval(target, k, grid)
    schedule = {n: rate_schedule(function_class, k, n) for n in n_values}

    def run(params: Dict[str, int]) -> float:
        n, rep = params["n"], params["replicate"]
        rng = GPUtils.replicate_rng(seed, n, rep)
        data = simulate_dataset(n, sigma0_sq, rng, target)
        lam, eps = schedule[n]
        try:
            fitted = fit(kernel, data, lam, sigma0_sq)
            return contraction_probe(fitted, k, norm, multiplier * eps, draws, rng, truth, grid)
        except NumericalError as e:
            logger.error(f"Contraction probe n={n}, replicate {rep} failed: {e}")
            return math.nan

    tasks = [{"n": n, "replicate": rep} for n in n_values for rep in range(seeds)]
    masses = np.asarray(_run_tasks(run, tasks, threads, "contraction probes")).reshape(len(n_values), seeds)

    rows = []
    for i, n in enumerate(n_values):
        lam, eps = schedule[n]
        row = masses[i][~np.isnan(masses[i])]
        rows.append({"n": n, "lambda": lam, "eps": eps, "radius": multiplier * eps,
                     "median_mass": float(np.median(row)) if row.size else math.nan,
                     "mean_mass": float(np.mean(row)) if row.size else math.nan,
                     "seeds": int(row.size)})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Variance bounds, MMLE consistency and band coverage
# ---------------------------------------------------------------------------

def variance_bound_study(alpha: float = 2.0, n: int = 500, replications: int = 100,
                         orders: Sequence[int] = (0, 1), seed: int = 0,
                         sigma0_sq: float = 0.1, grid_points: int = 101,
                         truncation: int = 2000, threads: int = 1) -> pd.DataFrame:
    """
    Fraction of replicates where the grid sup of the posterior variance of
    f^{(k)} stays below 2σ²κ̃ₖₖ²/n, with the spectral Polynomial(α) kernel and
    oracle λₙ.

    κ̃ₖₖ² is computed from the retained eigenvalues of the same kernel.
    """
    kernel = KernelSpec.spectral("fourier", EigenSequence.polynomial(alpha), truncation)
    lam, _ = rate_schedule(Holder(alpha), 0, n)
    dims = effective_dims(EigenSequence.explicit(kernel.spectrum()), kernel.basis, lam, orders,
                          grid_size=grid_points)
    bounds = {k: 2.0 * sigma0_sq * dims.kappa_tilde_kk_sq[k] / n for k in orders}
    grid = np.linspace(0.0, 1.0, grid_points)
    target = holder_target(alpha, truncation)

    def run(rep: int) -> Dict[int, float]:
        rng = GPUtils.replicate_rng(seed, n, rep)
        data = simulate_dataset(n, sigma0_sq, rng, target)
        fitted = fit(kernel, data, lam, sigma0_sq)
        return {k: float(np.max(posterior_var(fitted, k, grid))) for k in orders}

    sups = _run_tasks(run, list(range(replications)), threads, "variance bounds")
    rows = []
    for k in orders:
        values = np.array([s[k] for s in sups])
        rows.append({
            "order": k,
            "lambda": lam,
            "kappa_tilde_kk_sq": dims.kappa_tilde_kk_sq[k],
            "bound": bounds[k],
            "fraction_holding": float(np.mean(values <= bounds[k])),
            "median_sup_var": float(np.median(values)),
            "replications": replications,
        })
    return pd.DataFrame(rows)


def mmle_consistency_study(n: int = 2000, replications: int = 100, tol: float = 0.02,
                           seed: int = 0, sigma0_sq: float = 0.1,
                           kernel: Optional[KernelSpec] = None,
                           lambda_grid: Optional[Sequence[float]] = None,
                           threads: int = 1) -> Dict[str, Any]:
    """Fraction of replicates with |σ̂² − σ₀²| ≤ tol under empirical-Bayes λ."""
    kernel = kernel if kernel is not None else KernelSpec.squared_exponential()
    lam_grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid)

    def run(rep: int) -> float:
        rng = GPUtils.replicate_rng(seed, n, rep)
        data = simulate_dataset(n, sigma0_sq, rng)
        try:
            return select_lambda(kernel, data, lam_grid).sigma2
        except SelectionError as e:
            logger.error(f"MMLE replicate {rep} failed: {e}")
            return math.nan

    estimates = np.asarray(_run_tasks(run, list(range(replications)), threads, "MMLE replicates"))
    valid = estimates[~np.isnan(estimates)]
    return {
        "n": n,
        "kernel": kernel.label,
        "fraction_within": float(np.mean(np.abs(valid - sigma0_sq) <= tol)) if valid.size else math.nan,
        "median_sigma2": float(np.median(valid)) if valid.size else math.nan,
        "replications": replications,
        "failures": int(np.isnan(estimates).sum()),
        "estimates": estimates,
    }


@dataclass
class CoverageResult:
    """Coverage of simultaneous credible bands, plus the first replicate's band."""

    summary: pd.DataFrame
    records: pd.DataFrame
    example_band: pd.DataFrame

    def write(self, output_dir: str) -> Dict[str, str]:
        return {
            "coverage": GPUtils.write_csv(self.summary, os.path.join(output_dir, "coverage.csv")),
            "band": GPUtils.write_csv(self.example_band, os.path.join(output_dir, "band.csv")),
            "replicates": GPUtils.create_summary_report(output_dir, self.records.to_dict("records")),
        }


def coverage_study(config: BandStudyConfig) -> CoverageResult:
    """
    For each replicate, tune and fit the method, build the level-``level``
    sup-norm band for each order and record whether it contains f₀^{(k)} on
    the whole grid.
    """
    grid = evaluation_grid(config.grid_points)
    truth = {k: true_target(k, grid) for k in config.orders}

    def run(rep: int) -> Dict[str, Any]:
        rng = GPUtils.replicate_rng(config.seed, config.n, rep)
        data = simulate_dataset(config.n, config.sigma0_sq, rng)
        try:
            kernel, selection = tune(config.method, data)
            fitted = fit(kernel, data, selection.lam, selection.sigma2)
            out: Dict[str, Any] = {"replicate": rep, "lambda": selection.lam,
                                   "sigma2": selection.sigma2, "success": True, "bands": {}}
            for k in config.orders:
                center, radius = credible_band(fitted, k, grid, config.level, config.draws, rng)
                out["bands"][k] = (center, radius)
                out[f"radius_{k}"] = radius
                out[f"covered_{k}"] = bool(np.all(np.abs(truth[k] - center) <= radius))
            return out
        except REPLICATE_ERRORS as e:
            logger.error(f"Band replicate {rep} failed: {e}")
            return {"replicate": rep, "success": False, "bands": {}}

    outcomes = _run_tasks(run, list(range(config.replications)), config.threads, "band replicates")
    good = [o for o in outcomes if o["success"]]
    if len(outcomes) - len(good) > 0.05 * config.replications:
        raise StudyFailure(f"{len(outcomes) - len(good)} of {config.replications} band replicates failed")

    rows = []
    for k in config.orders:
        covered = np.array([o[f"covered_{k}"] for o in good], dtype=bool)
        radii = np.array([o[f"radius_{k}"] for o in good])
        rows.append({"order": k, "level": config.level, "coverage": float(np.mean(covered)),
                     "mean_radius": float(np.mean(radii)), "reps": len(good),
                     "failures": len(outcomes) - len(good)})

    example = {"x": grid}
    first = good[0]
    for k in config.orders:
        center, radius = first["bands"][k]
        example.update({f"truth_{k}": truth[k], f"mean_{k}": center,
                        f"band_lo_{k}": center - radius, f"band_hi_{k}": center + radius})

    records = pd.DataFrame([{key: value for key, value in o.items() if key != "bands"}
                            for o in outcomes])
    return CoverageResult(summary=pd.DataFrame(rows), records=records,
                          example_band=pd.DataFrame(example))
