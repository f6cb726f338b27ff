"""
Exception hierarchy for gpplugin.

Each class also derives from the builtin exception that describes the same
failure, so callers catching ``ValueError`` or ``RuntimeError`` keep working.
"""

from typing import Any, Dict, Optional


class GPPluginError(Exception):
    """Base class for all gpplugin errors."""


class KernelDomainError(GPPluginError, ValueError):
    """Point outside the kernel domain or invalid kernel parameters."""


class CapabilityError(GPPluginError, ValueError):
    """Requested derivative order exceeds what the kernel supports."""


class UnsupportedKernelError(GPPluginError, TypeError):
    """Operation needs a kernel with a tracked eigensystem."""


class ContractError(GPPluginError, ValueError):
    """Inputs violate an operation's preconditions."""


class ConfigError(GPPluginError, ValueError):
    """Configuration could not be read or failed strict validation."""


class NumericalError(GPPluginError, RuntimeError):
    """Factorization failed even after jitter escalation."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SelectionError(GPPluginError, RuntimeError):
    """Every hyperparameter candidate failed."""


class StudyFailure(GPPluginError, RuntimeError):
    """Too many replicates of a study failed numerically."""
