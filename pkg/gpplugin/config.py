"""
Configuration classes for GP regression runs and simulation studies.

Every class validates itself in ``__post_init__`` and round-trips through
plain JSON dicts with strict key checking.
"""

import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Type, TypeVar

import numpy as np

from .exceptions import ConfigError, GPPluginError
from .kernels import BASES, FOURIER, EigenSequence, KernelSpec
from .spectral import (
    Analytic,
    FunctionClass,
    Holder,
    function_class_from_dict,
    function_class_to_dict,
)

TUNING_RULES = ("eb", "loocv", "fixed")
COMMANDS = ("fit", "table", "rates", "bands", "spectra")
DEFAULT_SEED = 20240601

T = TypeVar("T")


def _strict_kwargs(cls: type, data: Dict[str, Any]) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} config must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown keys for {cls.__name__}: {sorted(unknown)}")
    return dict(data)


def _build(cls: Type[T], kwargs: Dict[str, Any]) -> T:
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, GPPluginError) as e:
        raise ConfigError(f"Invalid {cls.__name__}: {e}") from e


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# Replicated RMSE study
# ---------------------------------------------------------------------------

@dataclass
class MethodSpec:
    """One row of a study: a kernel and the rule that tunes it."""

    name: str
    kernel: Optional[KernelSpec] = None
    tuning: str = "eb"  # "eb", "loocv" (Matérn ν) or "fixed"
    nu_candidates: List[float] = field(default_factory=lambda: [2.0, 2.5, 3.0, 3.5, 4.0])
    lambda_grid: Optional[List[float]] = None  # None: 30 log-spaced points in [1e-8, 1]
    lam: Optional[float] = None  # for tuning="fixed"
    sigma2: Optional[float] = None  # for tuning="fixed"

    def __post_init__(self):
        _check(self.tuning in TUNING_RULES, f"tuning must be one of {TUNING_RULES}, got '{self.tuning}'")
        if self.tuning == "loocv":
            _check(self.kernel is None or self.kernel.family == "matern",
                   "LOOCV tuning selects the Matérn smoothness; kernel must be Matérn or omitted")
            _check(len(self.nu_candidates) > 0, "nu_candidates must be nonempty")
        else:
            _check(self.kernel is not None, f"Method '{self.name}' needs a kernel")
        if self.tuning == "fixed":
            _check(self.lam is not None and self.lam > 0, "fixed tuning needs lam > 0")
            _check(self.sigma2 is not None and self.sigma2 > 0, "fixed tuning needs sigma2 > 0")
        if self.lambda_grid is not None:
            _check(len(self.lambda_grid) > 0 and all(v > 0 for v in self.lambda_grid),
                   "lambda_grid must be a nonempty list of positive values")

    def max_deriv_order(self) -> int:
        if self.tuning == "loocv":
            return max(0, int(math.ceil(min(self.nu_candidates))) - 1)
        return self.kernel.max_deriv_order

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"name": self.name, "tuning": self.tuning}
        if self.kernel is not None:
            data["kernel"] = self.kernel.to_dict()
        if self.tuning == "loocv":
            data["nu_candidates"] = list(self.nu_candidates)
        if self.lambda_grid is not None:
            data["lambda_grid"] = list(self.lambda_grid)
        if self.tuning == "fixed":
            data.update(lam=self.lam, sigma2=self.sigma2)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MethodSpec":
        kwargs = _strict_kwargs(cls, data)
        if kwargs.get("kernel") is not None:
            kwargs["kernel"] = KernelSpec.from_dict(kwargs["kernel"])
        return _build(cls, kwargs)


def default_table_methods() -> List[MethodSpec]:
    """Matérn with LOOCV over ν, SE and second-order Sobolev with empirical Bayes."""
    return [
        MethodSpec(name="matern", tuning="loocv"),
        MethodSpec(name="se", kernel=KernelSpec.squared_exponential()),
        MethodSpec(name="sobolev2", kernel=KernelSpec.sobolev2()),
    ]


@dataclass
class StudyConfig:
    """Replicated RMSE study over sample sizes and methods."""

    n_values: List[int] = field(default_factory=lambda: [100, 500, 1000])
    replications: int = 200
    sigma0_sq: float = 0.1
    methods: List[MethodSpec] = field(default_factory=default_table_methods)
    grid_points: int = 100
    seed: int = DEFAULT_SEED
    derivative_orders: List[int] = field(default_factory=lambda: [0, 1])
    threads: int = 1
    max_failure_fraction: float = 0.05
    truth_truncation: int = 2000
    output_dir: Optional[str] = None

    def __post_init__(self):
        """Validate configuration after initialization."""
        _check(len(self.n_values) > 0, "n_values must be nonempty")
        for n in self.n_values:
            _check(int(n) == n and n >= 1, f"Sample sizes must be positive integers, got {n}")
        _check(self.replications >= 1, f"replications must be >= 1, got {self.replications}")
        _check(self.sigma0_sq > 0, f"sigma0_sq must be positive, got {self.sigma0_sq}")
        _check(len(self.methods) > 0, "At least one method is required")
        _check(self.grid_points >= 2, f"grid_points must be >= 2, got {self.grid_points}")
        _check(self.threads >= 1, f"threads must be >= 1, got {self.threads}")
        _check(0 <= self.max_failure_fraction < 1, "max_failure_fraction must be in [0, 1)")
        _check(len(self.derivative_orders) > 0, "derivative_orders must be nonempty")
        _check(len({m.name for m in self.methods}) == len(self.methods), "Method names must be unique")
        self.n_values = [int(n) for n in self.n_values]
        self.derivative_orders = sorted(set(int(k) for k in self.derivative_orders))
        for method in self.methods:
            top = max(self.derivative_orders)
            _check(top <= method.max_deriv_order(),
                   f"Method '{method.name}' supports derivative orders up to "
                   f"{method.max_deriv_order()}, study asks for {top}")

    def get_parameter_grid(self) -> List[Dict[str, int]]:
        """All (n, replicate) combinations, in the order results are aggregated."""
        return [{"n": n, "replicate": rep} for n in self.n_values for rep in range(self.replications)]

    def grid(self) -> np.ndarray:
        """Evaluation grid t/(grid_points − 1), t = 0..grid_points − 1."""
        return np.arange(self.grid_points) / (self.grid_points - 1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_values": list(self.n_values),
            "replications": self.replications,
            "sigma0_sq": self.sigma0_sq,
            "methods": [m.to_dict() for m in self.methods],
            "grid_points": self.grid_points,
            "seed": self.seed,
            "derivative_orders": list(self.derivative_orders),
            "threads": self.threads,
            "max_failure_fraction": self.max_failure_fraction,
            "truth_truncation": self.truth_truncation,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StudyConfig":
        kwargs = _strict_kwargs(cls, data)
        if "methods" in kwargs:
            kwargs["methods"] = [MethodSpec.from_dict(m) for m in kwargs["methods"]]
        return _build(cls, kwargs)


# ---------------------------------------------------------------------------
# Rate, band, fit and spectra configs
# ---------------------------------------------------------------------------

@dataclass
class RateStudyConfig:
    """Oracle-λ rate verification for a spectral kernel matched to the truth's class."""

    function_class: FunctionClass = field(default_factory=lambda: Holder(2.0))
    orders: List[int] = field(default_factory=lambda: [0, 1])
    n_values: List[int] = field(default_factory=lambda: [200, 400, 800, 1600])
    replications: int = 50
    sigma0_sq: float = 0.1
    seed: int = DEFAULT_SEED
    grid_points: int = 100
    truncation: int = 2000
    target_decay: float = 1.2  # truth e^{-decay*i} for the analytic class
    threads: int = 1
    contraction: bool = False
    contraction_multiplier: float = 5.0
    contraction_draws: int = 200
    output_dir: Optional[str] = None

    def __post_init__(self):
        _check(isinstance(self.function_class, (Holder, Analytic)),
               "function_class must be Holder or Analytic")
        _check(len(self.n_values) >= 2, "Rate fitting needs at least two sample sizes")
        for n in self.n_values:
            _check(int(n) == n and n >= 2, f"Sample sizes must be integers >= 2, got {n}")
        _check(self.replications >= 1, "replications must be >= 1")
        _check(self.sigma0_sq > 0, "sigma0_sq must be positive")
        _check(self.grid_points >= 2, "grid_points must be >= 2")
        _check(self.truncation >= 1, "truncation must be >= 1")
        _check(self.threads >= 1, "threads must be >= 1")
        _check(self.contraction_draws >= 100, "contraction_draws must be >= 100")
        _check(len(self.orders) > 0, "orders must be nonempty")
        if isinstance(self.function_class, Analytic):
            _check(list(self.orders) == [0], "The analytic class only has a rate for order 0")
        self.n_values = [int(n) for n in self.n_values]
        self.orders = sorted(set(int(k) for k in self.orders))

    def kernel(self) -> KernelSpec:
        """Spectral kernel on the Fourier basis matching the function class."""
        if isinstance(self.function_class, Holder):
            eigen = EigenSequence.polynomial(self.function_class.alpha)
        else:
            eigen = EigenSequence.exponential(self.function_class.gamma)
        return KernelSpec.spectral(FOURIER, eigen, self.truncation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "function_class": function_class_to_dict(self.function_class),
            "orders": list(self.orders),
            "n_values": list(self.n_values),
            "replications": self.replications,
            "sigma0_sq": self.sigma0_sq,
            "seed": self.seed,
            "grid_points": self.grid_points,
            "truncation": self.truncation,
            "target_decay": self.target_decay,
            "threads": self.threads,
            "contraction": self.contraction,
            "contraction_multiplier": self.contraction_multiplier,
            "contraction_draws": self.contraction_draws,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RateStudyConfig":
        kwargs = _strict_kwargs(cls, data)
        if "function_class" in kwargs:
            kwargs["function_class"] = function_class_from_dict(kwargs["function_class"])
        return _build(cls, kwargs)


@dataclass
class BandStudyConfig:
    """Frequentist coverage of simultaneous credible bands."""

    n: int = 500
    replications: int = 200
    method: MethodSpec = field(
        default_factory=lambda: MethodSpec(name="se", kernel=KernelSpec.squared_exponential())
    )
    orders: List[int] = field(default_factory=lambda: [0])
    level: float = 0.95
    draws: int = 1000
    sigma0_sq: float = 0.1
    grid_points: int = 100
    seed: int = DEFAULT_SEED
    threads: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        _check(self.n >= 1, "n must be >= 1")
        _check(self.replications >= 1, "replications must be >= 1")
        _check(0 < self.level < 1, f"level must be in (0, 1), got {self.level}")
        _check(self.draws >= 100, "draws must be >= 100")
        _check(self.sigma0_sq > 0, "sigma0_sq must be positive")
        _check(self.grid_points >= 2, "grid_points must be >= 2")
        _check(self.threads >= 1, "threads must be >= 1")
        self.orders = sorted(set(int(k) for k in self.orders))
        _check(max(self.orders) <= self.method.max_deriv_order(),
               f"Method '{self.method.name}' cannot handle order {max(self.orders)}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "replications": self.replications,
            "method": self.method.to_dict(),
            "orders": list(self.orders),
            "level": self.level,
            "draws": self.draws,
            "sigma0_sq": self.sigma0_sq,
            "grid_points": self.grid_points,
            "seed": self.seed,
            "threads": self.threads,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BandStudyConfig":
        kwargs = _strict_kwargs(cls, data)
        if "method" in kwargs:
            kwargs["method"] = MethodSpec.from_dict(kwargs["method"])
        return _build(cls, kwargs)


@dataclass
class FitConfig:
    """Single posterior fit, on a CSV dataset or on data simulated from f₀."""

    method: MethodSpec = field(
        default_factory=lambda: MethodSpec(name="matern2.5", kernel=KernelSpec.matern(2.5))
    )
    data_path: Optional[str] = None  # CSV with columns x, y
    n: int = 200  # simulated sample size when data_path is unset
    sigma0_sq: float = 0.1
    orders: List[int] = field(default_factory=lambda: [0, 1])
    grid_points: int = 101
    level: float = 0.95
    draws: int = 1000
    seed: int = DEFAULT_SEED
    output_dir: Optional[str] = None

    def __post_init__(self):
        _check(self.n >= 1, "n must be >= 1")
        _check(self.sigma0_sq > 0, "sigma0_sq must be positive")
        _check(self.grid_points >= 2, "grid_points must be >= 2")
        _check(0 < self.level < 1, "level must be in (0, 1)")
        _check(self.draws >= 100, "draws must be >= 100")
        self.orders = sorted(set(int(k) for k in self.orders))
        _check(max(self.orders) <= self.method.max_deriv_order(),
               f"Method '{self.method.name}' cannot handle order {max(self.orders)}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.to_dict(),
            "data_path": self.data_path,
            "n": self.n,
            "sigma0_sq": self.sigma0_sq,
            "orders": list(self.orders),
            "grid_points": self.grid_points,
            "level": self.level,
            "draws": self.draws,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitConfig":
        kwargs = _strict_kwargs(cls, data)
        if "method" in kwargs:
            kwargs["method"] = MethodSpec.from_dict(kwargs["method"])
        return _build(cls, kwargs)


@dataclass
class SpectraConfig:
    """Effective-dimension sweep over a log-spaced λ grid."""

    basis: str = FOURIER
    eigen: EigenSequence = field(default_factory=lambda: EigenSequence.polynomial(2.0))
    lambda_min: float = 1e-6
    lambda_max: float = 1e-2
    lambda_points: int = 9
    orders: List[int] = field(default_factory=lambda: [0, 1])
    grid_size: int = 1001
    grid_truncation: int = 20000
    seed: int = DEFAULT_SEED  # unused by the deterministic sweep, echoed in metadata
    output_dir: Optional[str] = None

    def __post_init__(self):
        _check(self.basis in BASES, f"basis must be one of {BASES}")
        _check(0 < self.lambda_min <= self.lambda_max, "Need 0 < lambda_min <= lambda_max")
        _check(self.lambda_points >= 1, "lambda_points must be >= 1")
        _check(self.grid_size >= 2, "grid_size must be >= 2")
        _check(self.grid_truncation >= 1, "grid_truncation must be >= 1")
        self.orders = sorted(set(int(k) for k in self.orders))

    def lambdas(self) -> np.ndarray:
        return np.logspace(math.log10(self.lambda_min), math.log10(self.lambda_max), self.lambda_points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "basis": self.basis,
            "eigen": self.eigen.to_dict(),
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "lambda_points": self.lambda_points,
            "orders": list(self.orders),
            "grid_size": self.grid_size,
            "grid_truncation": self.grid_truncation,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpectraConfig":
        kwargs = _strict_kwargs(cls, data)
        if "eigen" in kwargs:
            kwargs["eigen"] = EigenSequence.from_dict(kwargs["eigen"])
        return _build(cls, kwargs)


CONFIG_TYPES = {
    "fit": FitConfig,
    "table": StudyConfig,
    "rates": RateStudyConfig,
    "bands": BandStudyConfig,
    "spectra": SpectraConfig,
}


@dataclass
class CliConfig:
    """Resolved command-line invocation."""

    command: str
    config_path: Optional[str] = None
    output_dir: str = "gpplugin_output"
    seed: Optional[int] = None
    threads: Optional[int] = None

    def __post_init__(self):
        _check(self.command in COMMANDS, f"command must be one of {COMMANDS}, got '{self.command}'")
        _check(self.threads is None or self.threads >= 1, "threads must be >= 1")

    def load(self) -> Any:
        """Read the command's config file (or its defaults) and apply CLI overrides."""
        config_cls = CONFIG_TYPES[self.command]
        data = load_config_dict(self.config_path) if self.config_path else create_example_config(self.command)
        if self.seed is not None:
            data["seed"] = int(self.seed)
        if self.threads is not None and "threads" in {f.name for f in fields(config_cls)}:
            data["threads"] = int(self.threads)
        data["output_dir"] = self.output_dir
        return config_cls.from_dict(data)


def load_config_dict(config_path: str) -> Dict[str, Any]:
    """Read a JSON config file into a dict."""
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Could not parse {config_path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Could not read {config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{config_path} must contain a JSON object")
    return data


def load_config(command: str, config_path: str) -> Any:
    """Load and strictly validate the config of a command."""
    if command not in CONFIG_TYPES:
        raise ConfigError(f"Unknown command '{command}'")
    return CONFIG_TYPES[command].from_dict(load_config_dict(config_path))


def create_example_config(command: str) -> Dict[str, Any]:
    """Default config of a command as a JSON-ready dict."""
    if command not in CONFIG_TYPES:
        raise ConfigError(f"Unknown command '{command}'")
    data = CONFIG_TYPES[command]().to_dict()
    data.pop("output_dir", None)
    return data
