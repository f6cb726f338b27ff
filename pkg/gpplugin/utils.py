"""
Utility functions for GP regression runs: logging, seeding, factorization,
memory checks and output files.
"""

import json
import logging
import os
import platform
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy
import scipy.linalg
from scipy import stats

from .exceptions import NumericalError

try:
    import psutil
    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False

# Full precision so reruns can be compared byte for byte.
CSV_FLOAT_FORMAT = "%.17g"

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class GPUtils:
    """Utility class for GP regression workflows."""

    @staticmethod
    def setup_logging(log_file: Optional[str] = None, level: str = "INFO") -> logging.Logger:
        """Set up logging for gpplugin runs."""
        logger = logging.getLogger("gpplugin")
        logger.setLevel(getattr(logging, level.upper()))

        # Clear existing handlers
        logger.handlers.clear()

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        if log_file:
            os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
            file_handler = logging.FileHandler(log_file)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        return logger

    @staticmethod
    def replicate_rng(seed: int, *key: int) -> np.random.Generator:
        """
        Independent generator for one replicate.

        The stream depends only on the master seed and the integer key
        (e.g. sample size and replicate index), never on execution order.
        """
        sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
        return np.random.default_rng(sequence)

    @staticmethod
    def jittered_cholesky(matrix: np.ndarray, what: str = "matrix",
                          logger: Optional[logging.Logger] = None) -> Tuple[np.ndarray, float]:
        """
        Lower Cholesky factor of a symmetric matrix with jitter escalation.

        Tries the plain matrix first, then adds ``jitter * mean(diag)`` to the
        diagonal, starting at 1e-10 and doubling up to 1e-4.

        Returns:
            Tuple of (lower factor, absolute jitter added)
        """
        matrix = np.asarray(matrix, dtype=float)
        size = matrix.shape[0]
        mean_diag = float(np.mean(np.diag(matrix))) if size else 0.0
        scale = mean_diag if mean_diag > 0 else 1.0

        try:
            return scipy.linalg.cholesky(matrix, lower=True, check_finite=False), 0.0
        except scipy.linalg.LinAlgError:
            pass

        relative = JITTER_START
        last = 0.0
        while relative <= JITTER_MAX * (1 + 1e-12):
            last = relative * scale
            try:
                factor = scipy.linalg.cholesky(
                    matrix + last * np.eye(size), lower=True, check_finite=False
                )
                if logger:
                    logger.debug(f"Cholesky of {what} needed jitter {last:.3e}")
                return factor, last
            except scipy.linalg.LinAlgError:
                relative *= 2.0

        raise NumericalError(
            f"Cholesky factorization of {what} failed after jitter escalation",
            diagnostics={"size": size, "mean_diag": mean_diag, "last_jitter": last},
        )

    @staticmethod
    def calculate_chunk_size(n_rows: int, n_cols: int, memory_gb: float = 0.25) -> int:
        """
        Number of rows of an (n_rows, n_cols) float64 block that fit in memory_gb.
        """
        bytes_per_row = max(1, n_cols) * 8
        target_memory_bytes = memory_gb * 1024**3
        chunk_size = max(1, int(target_memory_bytes / bytes_per_row))
        return min(chunk_size, max(1, n_rows))

    @staticmethod
    def check_memory_requirements(n_rows: int, n_cols: int,
                                  logger: Optional[logging.Logger] = None) -> Tuple[bool, float, float]:
        """
        Check whether a dense float64 (n_rows, n_cols) array fits in memory.

        Returns:
            Tuple of (fits, required_memory_gb, available_memory_gb)
        """
        required_memory_gb = n_rows * n_cols * 8 / (1024**3)

        if not PSUTIL_AVAILABLE:
            return True, required_memory_gb, 0.0

        try:
            available_memory_gb = psutil.virtual_memory().available / (1024**3)
        except Exception as e:
            if logger:
                logger.warning(f"Could not determine system memory: {e}")
            return True, required_memory_gb, 0.0

        # Don't plan on more than 70% of available memory
        fits = required_memory_gb <= 0.7 * available_memory_gb
        if not fits and logger:
            logger.warning(
                f"Dense {n_rows:,} x {n_cols:,} array needs {required_memory_gb:.1f} GB, "
                f"only {available_memory_gb:.1f} GB available"
            )
        return fits, required_memory_gb, available_memory_gb

    @staticmethod
    def fit_loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
        """Least-squares slope of log(y) against log(x)."""
        log_x = np.log(np.asarray(x, dtype=float))
        log_y = np.log(np.asarray(y, dtype=float))
        return float(stats.linregress(log_x, log_y).slope)

    @staticmethod
    def write_csv(df: pd.DataFrame, path: str) -> str:
        """Write a DataFrame as UTF-8 CSV with full float precision."""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
        return path

    @staticmethod
    def versions() -> Dict[str, str]:
        """Versions of the packages that affect numerical output."""
        from . import __version__
        return {
            "gpplugin": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "python": platform.python_version(),
        }

    @staticmethod
    def write_metadata(path: str, command: str, config: Dict[str, Any],
                       seed: Optional[int], extra: Optional[Dict[str, Any]] = None) -> str:
        """Write the JSON metadata sidecar echoing the configuration."""
        metadata = {
            "command": command,
            "config": config,
            "seed": seed,
            "versions": GPUtils.versions(),
            "timestamp": datetime.now().isoformat(),
        }
        if extra:
            metadata.update(extra)

        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(metadata, f, indent=2, sort_keys=True, default=_json_default)
        return path

    @staticmethod
    def create_summary_report(output_dir: str, records: List[dict],
                              name: str = "replicate_summary.csv") -> str:
        """
        Write per-replicate records of a study to CSV.

        Returns:
            Path to summary report file
        """
        report_file = os.path.join(output_dir, name)
        df = pd.DataFrame(records)
        return GPUtils.write_csv(df, report_file)


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset, tuple)):
        return sorted(value) if isinstance(value, (set, frozenset)) else list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
