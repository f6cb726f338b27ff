"""
Mercer kernels on a closed interval: closed-form families (Matérn, squared
exponential, second-order Sobolev) and spectral kernels given by an
orthonormal basis and an eigenvalue sequence.

All kernels support cross-derivatives ∂ₓ^a ∂ₓ′^b K(x, x′) up to their
``max_deriv_order`` in each argument.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import hermite
from scipy import special

from .exceptions import (
    CapabilityError,
    ConfigError,
    KernelDomainError,
    UnsupportedKernelError,
)
from .utils import GPUtils

logger = logging.getLogger("gpplugin.kernels")

MATERN = "matern"
SQUARED_EXPONENTIAL = "se"
SOBOLEV2 = "sobolev2"
SPECTRAL = "spectral"
FAMILIES = (MATERN, SQUARED_EXPONENTIAL, SOBOLEV2, SPECTRAL)

FOURIER = "fourier"
COSINE_HALF = "cosine_half"
BASES = (FOURIER, COSINE_HALF)

POLYNOMIAL = "polynomial"
EXPONENTIAL = "exponential"
EXPLICIT = "explicit"

# sup-norm bound of every basis function, for both bases
C_PHI = math.sqrt(2.0)

DEFAULT_TRUNCATION = 2000

# Orders beyond this are never needed and only lose precision.
SMOOTH_ORDER_CAP = 16

# Below this distance the Bessel form of a general-ν Matérn is 0/0.
MATERN_SERIES_RADIUS = 1e-6


# ---------------------------------------------------------------------------
# Orthonormal bases on [0, 1]
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _basis_layout(basis: str, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frequencies, amplitudes and type (0 = cosine, 1 = sine) of the first ``size`` functions."""
    if basis not in BASES:
        raise KernelDomainError(f"Unknown basis '{basis}', expected one of {BASES}")

    index = np.arange(1, size + 1, dtype=float)
    if basis == FOURIER:
        # ψ₁ = 1, ψ₂ᵢ = √2 cos(2πix), ψ₂ᵢ₊₁ = √2 sin(2πix)
        omega = np.where(index % 2 == 0, np.pi * index, np.pi * (index - 1))
        amplitude = np.full(size, C_PHI)
        if size:
            amplitude[0] = 1.0
        kind = np.where((index % 2 == 1) & (index > 1), 1, 0)
    else:
        # φᵢ = √2 cos((i − 1/2)πx)
        omega = (index - 0.5) * np.pi
        amplitude = np.full(size, C_PHI)
        kind = np.zeros(size, dtype=int)

    for arr in (omega, amplitude, kind):
        arr.setflags(write=False)
    return omega, amplitude, kind


def basis_frequencies(basis: str, size: int) -> np.ndarray:
    """Angular frequency ωᵢ of each basis function; |φᵢ^{(k)}| ≤ C_φ ωᵢ^k."""
    return _basis_layout(basis, size)[0]


def basis_matrix(basis: str, k: int, x: Any, size: int, offset: int = 0) -> np.ndarray:
    """
    Matrix of k-th derivatives of ``size`` consecutive basis functions.

    Args:
        basis: basis identifier
        k: derivative order
        x: evaluation points
        size: number of basis functions
        offset: number of leading basis functions to skip

    Returns:
        Array of shape (len(x), size) with entry [a, i] = φ_{offset+i+1}^{(k)}(x[a])
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    omega, amplitude, kind = (arr[offset:] for arr in _basis_layout(basis, offset + size))
    out = np.empty((x.size, size))
    if size == 0:
        return out

    theta = np.multiply.outer(x, omega)
    scale = amplitude * omega ** k
    # cos^{(k)}(θ) = cos(θ + kπ/2), sin^{(k)}(θ) = cos(θ + (k − 1)π/2)
    quarter = (k - kind) % 4
    for q in np.unique(quarter):
        cols = quarter == q
        t = theta[:, cols]
        if q == 0:
            val = np.cos(t)
        elif q == 1:
            val = -np.sin(t)
        elif q == 2:
            val = -np.cos(t)
        else:
            val = np.sin(t)
        out[:, cols] = val * scale[cols]
    return out


# ---------------------------------------------------------------------------
# Eigenvalue sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenSequence:
    """Nonincreasing positive eigenvalues μ₁ ≥ μ₂ ≥ ... of a spectral kernel."""

    kind: str
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    scale: float = 1.0
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == POLYNOMIAL:
            if self.alpha is None or not self.alpha > 0.5:
                raise KernelDomainError(f"Polynomial decay needs alpha > 1/2, got {self.alpha}")
        elif self.kind == EXPONENTIAL:
            if self.gamma is None or not self.gamma > 0:
                raise KernelDomainError(f"Exponential decay needs gamma > 0, got {self.gamma}")
        elif self.kind == EXPLICIT:
            values = tuple(float(v) for v in self.values)
            object.__setattr__(self, "values", values)
            if any(v <= 0 for v in values):
                raise KernelDomainError("Explicit eigenvalues must be positive")
            if any(a < b for a, b in zip(values, values[1:])):
                raise KernelDomainError("Explicit eigenvalues must be nonincreasing")
        else:
            raise KernelDomainError(
                f"Unknown eigenvalue kind '{self.kind}', expected polynomial, exponential or explicit"
            )
        if self.kind != EXPLICIT and not self.scale > 0:
            raise KernelDomainError(f"Eigenvalue scale must be positive, got {self.scale}")

    @classmethod
    def polynomial(cls, alpha: float, scale: float = 1.0) -> "EigenSequence":
        """μᵢ = c·i^{−2α}."""
        return cls(kind=POLYNOMIAL, alpha=float(alpha), scale=float(scale))

    @classmethod
    def exponential(cls, gamma: float, scale: float = 1.0) -> "EigenSequence":
        """μᵢ = c·e^{−2γi}."""
        return cls(kind=EXPONENTIAL, gamma=float(gamma), scale=float(scale))

    @classmethod
    def explicit(cls, values) -> "EigenSequence":
        return cls(kind=EXPLICIT, values=tuple(float(v) for v in values))

    @property
    def length(self) -> Optional[int]:
        """Number of nonzero eigenvalues, or None for an infinite sequence."""
        return len(self.values) if self.kind == EXPLICIT else None

    def mu(self, i: Any) -> Any:
        """Eigenvalue μᵢ for 1-based index i (scalar or array)."""
        i = np.asarray(i, dtype=float)
        if self.kind == POLYNOMIAL:
            return self.scale * i ** (-2.0 * self.alpha)
        if self.kind == EXPONENTIAL:
            return self.scale * np.exp(-2.0 * self.gamma * i)
        padded = np.concatenate([np.asarray(self.values), [0.0]])
        idx = np.clip(i.astype(int) - 1, 0, len(self.values))
        idx = np.where(i > len(self.values), len(self.values), idx)
        return padded[idx]

    def values_upto(self, size: int) -> np.ndarray:
        """The first ``size`` eigenvalues (fewer for a short explicit list)."""
        if self.kind == EXPLICIT:
            return np.asarray(self.values[:size], dtype=float)
        return self.mu(np.arange(1, size + 1))

    def effective_size(self, truncation: int) -> int:
        return truncation if self.length is None else min(truncation, self.length)

    def weighted_tail(self, size: int, power: float = 0.0) -> float:
        """
        Upper bound on Σ_{i>size} i^power μᵢ; ``inf`` when the series diverges.
        """
        if self.kind == EXPLICIT:
            if size >= len(self.values):
                return 0.0
            idx = np.arange(size + 1, len(self.values) + 1, dtype=float)
            return float(np.sum(idx ** power * np.asarray(self.values[size:])))

        if self.kind == POLYNOMIAL:
            exponent = power - 2.0 * self.alpha
            if exponent >= -1.0:
                return math.inf
            # decreasing terms: the sum is below the integral from size
            return self.scale * size ** (exponent + 1.0) / (-(exponent + 1.0)) if size > 0 else math.inf

        two_gamma = 2.0 * self.gamma
        start = max(size, int(math.ceil(power / two_gamma)) + 1)
        head = 0.0
        if start > size:
            idx = np.arange(size + 1, start + 1, dtype=float)
            head = float(np.sum(self.scale * idx ** power * np.exp(-two_gamma * idx)))
        # geometric bound once consecutive-term ratios drop below one
        ratio = ((start + 2.0) / (start + 1.0)) ** power * math.exp(-two_gamma)
        first = self.scale * (start + 1.0) ** power * math.exp(-two_gamma * (start + 1.0))
        return head + first / (1.0 - ratio)

    def derivative_cap(self) -> int:
        """Largest k with Σ i^{2k} μᵢ finite (kernel in C^{2k})."""
        if self.kind == POLYNOMIAL:
            return max(0, int(math.ceil(self.alpha - 0.5)) - 1)
        return SMOOTH_ORDER_CAP

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == POLYNOMIAL:
            return {"kind": POLYNOMIAL, "alpha": self.alpha, "scale": self.scale}
        if self.kind == EXPONENTIAL:
            return {"kind": EXPONENTIAL, "gamma": self.gamma, "scale": self.scale}
        return {"kind": EXPLICIT, "values": list(self.values)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EigenSequence":
        allowed = {
            POLYNOMIAL: {"kind", "alpha", "scale"},
            EXPONENTIAL: {"kind", "gamma", "scale"},
            EXPLICIT: {"kind", "values"},
        }
        kind = data.get("kind")
        if kind not in allowed:
            raise ConfigError(f"Unknown eigenvalue kind: {kind!r}")
        unknown = set(data) - allowed[kind]
        if unknown:
            raise ConfigError(f"Unknown keys for {kind} eigenvalues: {sorted(unknown)}")
        if kind == POLYNOMIAL:
            return cls.polynomial(data["alpha"], data.get("scale", 1.0))
        if kind == EXPONENTIAL:
            return cls.exponential(data["gamma"], data.get("scale", 1.0))
        return cls.explicit(data.get("values", []))


@lru_cache(maxsize=64)
def _spectrum(eigen: EigenSequence, truncation: int) -> np.ndarray:
    values = eigen.values_upto(eigen.effective_size(truncation))
    values.setflags(write=False)
    return values


# ---------------------------------------------------------------------------
# Matérn helpers
# ---------------------------------------------------------------------------

def _is_half_integer(nu: float) -> bool:
    return abs((nu - 0.5) - round(nu - 0.5)) < 1e-12


@lru_cache(maxsize=64)
def _matern_half_integer_poly(nu: float, m: int) -> np.ndarray:
    """
    Coefficients (ascending in z) of Pₘ with dᵐ/dzᵐ [P(z)e^{−z}] = Pₘ(z)e^{−z}.
    """
    p = int(round(nu - 0.5))
    coeffs = np.zeros(p + 1)
    norm = math.factorial(p) / math.factorial(2 * p)
    for i in range(p + 1):
        coeffs[p - i] = (norm * math.factorial(p + i)
                         / (math.factorial(i) * math.factorial(p - i)) * 2.0 ** (p - i))
    poly = np.polynomial.Polynomial(coeffs)
    for _ in range(m):
        poly = poly.deriv() - poly
    out = poly.coef.copy()
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _matern_bessel_terms(nu: float, m: int) -> Tuple[Tuple[float, float, float], ...]:
    """
    m-th z-derivative of zᵛKᵥ(z) as a sum of c·z^p·K_q(z); returns (c, p, q) triples.
    """
    terms = {(nu, nu): 1.0}
    for _ in range(m):
        nxt: Dict[Tuple[float, float], float] = {}
        for (p, q), c in terms.items():
            # d/dz [z^p K_q] = (p − q) z^{p−1} K_q − z^p K_{q−1}
            if p != q:
                key = (p - 1.0, q)
                nxt[key] = nxt.get(key, 0.0) + c * (p - q)
            key = (p, q - 1.0)
            nxt[key] = nxt.get(key, 0.0) - c
        terms = {k: v for k, v in nxt.items() if v != 0.0}
    return tuple((c, p, q) for (p, q), c in terms.items())


def _is_integer(nu: float) -> bool:
    return abs(nu - round(nu)) < 1e-12


def _log_power_derivative(p: float, m: int) -> Tuple[float, float]:
    """(F, G) with dᵐ/drᵐ [rᵖ ln r] = r^{p−m} (F ln r + G)."""
    f, g, q = 1.0, 0.0, p
    for _ in range(m):
        f, g, q = q * f, q * g + f, q - 1.0
    return f, g


def _matern_series_derivative(nu: float, m: int, r: np.ndarray) -> np.ndarray:
    """
    m-th r-derivative of the unit-lengthscale Matérn profile from its small-z
    expansion in u = z/2, keeping every power below 2ν + 4.

    Non-integer ν: Σⱼ (−1)ʲ Γ(ν−j)/(Γ(ν) j!) u^{2j} − π/(sin(πν) Γ(ν)) Σⱼ u^{2ν+2j}/(j! Γ(ν+j+1)).
    Integer ν = n: the regular sum stops at j < n and the second sum becomes
    (−1)^{n+1}/(n−1)! Σₖ u^{2n+2k} (2 ln u − ψ(k+1) − ψ(n+k+1)) / (k! (n+k)!).
    """
    a = math.sqrt(2.0 * nu)
    h = 0.5 * a
    cap = 2.0 * nu + 4.0
    integer = _is_integer(nu)
    positive = r > 0
    rp = np.where(positive, r, 1.0)
    total = np.zeros_like(r, dtype=float)

    j = 0
    while 2 * j < cap and (not integer or j < nu):
        if 2 * j >= m:
            cj = (-1) ** j * special.gamma(nu - j) / (special.gamma(nu) * math.factorial(j))
            falling = math.factorial(2 * j) / math.factorial(2 * j - m)
            total += cj * h ** (2 * j) * falling * r ** (2 * j - m)
        j += 1

    if integer:
        n = int(round(nu))
        k = 0
        while 2 * n + 2 * k < cap:
            p = 2.0 * (n + k)
            dk = (-1) ** (n + 1) / (math.factorial(n - 1) * math.factorial(k) * math.factorial(n + k))
            shift = 2.0 * math.log(h) - special.digamma(k + 1) - special.digamma(n + k + 1)
            f, g = _log_power_derivative(p, m)
            term = rp ** (p - m) * (2.0 * (f * np.log(rp) + g) + shift * f)
            total += np.where(positive, dk * h ** p * term, 0.0)
            k += 1
    else:
        scale = -math.pi / (math.sin(math.pi * nu) * special.gamma(nu))
        j = 0
        while 2.0 * nu + 2 * j < cap:
            p = 2.0 * nu + 2 * j
            cj = scale / (math.factorial(j) * special.gamma(nu + j + 1))
            falling = special.gamma(p + 1) / special.gamma(p - m + 1)
            total += np.where(positive, cj * h ** p * falling * rp ** (p - m), 0.0)
            j += 1
    return total


def _matern_radial_derivative(nu: float, m: int, r: np.ndarray) -> np.ndarray:
    """m-th derivative in r ≥ 0 of the unit-lengthscale Matérn profile."""
    a = math.sqrt(2.0 * nu)
    z = a * r
    if _is_half_integer(nu):
        poly = _matern_half_integer_poly(nu, m)
        return a ** m * np.polynomial.polynomial.polyval(z, poly) * np.exp(-z)

    out = np.empty_like(r)
    small = r < MATERN_SERIES_RADIUS
    big = ~small
    if np.any(big):
        zb = z[big]
        norm = 2.0 ** (1.0 - nu) / special.gamma(nu)
        total = np.zeros_like(zb)
        for c, p, q in _matern_bessel_terms(nu, m):
            total += c * zb ** p * special.kv(q, zb)
        out[big] = norm * a ** m * total
    if np.any(small):
        out[small] = _matern_series_derivative(nu, m, r[small])
    return out


# ---------------------------------------------------------------------------
# Kernel specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """
    Immutable description of a Mercer kernel.

    Use the constructors ``matern``, ``squared_exponential``, ``sobolev2`` and
    ``spectral`` rather than the raw fields.
    """

    family: str
    nu: Optional[float] = None
    basis: Optional[str] = None
    eigen: Optional[EigenSequence] = None
    truncation: int = DEFAULT_TRUNCATION
    domain: Tuple[float, float] = field(default=(0.0, 1.0))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelDomainError(f"Unknown kernel family '{self.family}', expected one of {FAMILIES}")
        lo, hi = (float(v) for v in self.domain)
        if not lo < hi:
            raise KernelDomainError(f"Kernel domain must be a nonempty interval, got {self.domain}")
        object.__setattr__(self, "domain", (lo, hi))

        if self.family == MATERN:
            if self.nu is None or not self.nu > 0:
                raise KernelDomainError(f"Matérn smoothness nu must be positive, got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
        if self.family == SPECTRAL:
            if self.basis not in BASES:
                raise KernelDomainError(f"Spectral kernel needs a basis from {BASES}, got {self.basis}")
            if not isinstance(self.eigen, EigenSequence):
                raise KernelDomainError("Spectral kernel needs an EigenSequence")
            if int(self.truncation) < 1:
                raise KernelDomainError(f"Spectral truncation must be >= 1, got {self.truncation}")
            if (lo, hi) != (0.0, 1.0):
                raise KernelDomainError("Spectral bases are defined on [0, 1]")
            object.__setattr__(self, "truncation", int(self.truncation))

    # -- constructors -------------------------------------------------------

    @classmethod
    def matern(cls, nu: float, domain: Tuple[float, float] = (0.0, 1.0)) -> "KernelSpec":
        return cls(family=MATERN, nu=nu, domain=domain)

    @classmethod
    def squared_exponential(cls, domain: Tuple[float, float] = (0.0, 1.0)) -> "KernelSpec":
        return cls(family=SQUARED_EXPONENTIAL, domain=domain)

    @classmethod
    def sobolev2(cls, domain: Tuple[float, float] = (0.0, 1.0)) -> "KernelSpec":
        return cls(family=SOBOLEV2, domain=domain)

    @classmethod
    def spectral(cls, basis: str, eigen: EigenSequence,
                 truncation: int = DEFAULT_TRUNCATION) -> "KernelSpec":
        return cls(family=SPECTRAL, basis=basis, eigen=eigen, truncation=truncation)

    # -- metadata -----------------------------------------------------------

    @property
    def is_spectral(self) -> bool:
        return self.family == SPECTRAL

    @property
    def max_deriv_order(self) -> int:
        """Largest k such that ∂ₓ^a ∂ₓ′^b K exists for all a, b ≤ k."""
        if self.family == MATERN:
            # largest k with 2k < 2ν
            return max(0, int(math.ceil(self.nu)) - 1)
        if self.family == SOBOLEV2:
            return 1
        if self.family == SQUARED_EXPONENTIAL:
            return SMOOTH_ORDER_CAP
        return self.eigen.derivative_cap()

    @property
    def label(self) -> str:
        if self.family == MATERN:
            return f"matern{self.nu:g}"
        if self.family == SPECTRAL:
            decay = self.eigen.kind
            param = {POLYNOMIAL: self.eigen.alpha, EXPONENTIAL: self.eigen.gamma}.get(decay)
            return f"spectral_{self.basis}_{decay}" + (f"{param:g}" if param is not None else "")
        return self.family

    def spectrum(self) -> np.ndarray:
        """Retained eigenvalues μ₁..μ_N (spectral kernels only)."""
        if not self.is_spectral:
            raise UnsupportedKernelError(f"{self.family} kernel has no tracked eigensystem")
        return _spectrum(self.eigen, self.truncation)

    def tail_bound(self, jx: int = 0, jxp: int = 0) -> float:
        """
        Bound on the truncation error of eval_deriv(jx, jxp, ·, ·):
        C_φ² π^{jx+jxp} Σ_{i>N} i^{jx+jxp} μᵢ.
        """
        if not self.is_spectral:
            raise UnsupportedKernelError(f"{self.family} kernel has no truncation")
        power = jx + jxp
        return C_PHI ** 2 * math.pi ** power * self.eigen.weighted_tail(self.truncation, power)

    # -- evaluation ---------------------------------------------------------

    def _check_points(self, *points: np.ndarray) -> None:
        lo, hi = self.domain
        for pts in points:
            if pts.size and (np.any(pts < lo) or np.any(pts > hi) or not np.all(np.isfinite(pts))):
                raise KernelDomainError(f"Points must lie in [{lo}, {hi}]")

    def _check_orders(self, jx: int, jxp: int) -> None:
        if jx < 0 or jxp < 0:
            raise CapabilityError("Derivative orders must be nonnegative")
        cap = self.max_deriv_order
        if max(jx, jxp) > cap:
            raise CapabilityError(
                f"{self.label} kernel supports derivative orders up to {cap} per argument, "
                f"got ({jx}, {jxp})"
            )

    def eval(self, x: Any, xp: Any) -> Any:
        """K(x, x′), broadcasting over array inputs."""
        return self.eval_deriv(0, 0, x, xp)

    def eval_deriv(self, jx: int, jxp: int, x: Any, xp: Any) -> Any:
        """
        ∂ₓ^{jx} ∂ₓ′^{jxp} K(x, x′), elementwise over broadcast inputs.
        """
        self._check_orders(jx, jxp)
        xa = np.asarray(x, dtype=float)
        xb = np.asarray(xp, dtype=float)
        self._check_points(xa, xb)
        scalar = xa.ndim == 0 and xb.ndim == 0
        xa, xb = np.broadcast_arrays(xa, xb)

        if self.is_spectral:
            mu = self.spectrum()
            size = mu.size
            flat_a, flat_b = xa.ravel(), xb.ravel()
            out = np.empty(flat_a.size)
            chunk = GPUtils.calculate_chunk_size(flat_a.size, max(size, 1))
            for start in range(0, flat_a.size, chunk):
                stop = start + chunk
                pa = basis_matrix(self.basis, jx, flat_a[start:stop], size)
                pb = basis_matrix(self.basis, jxp, flat_b[start:stop], size)
                out[start:stop] = np.sum(mu * (pa * pb), axis=1)
            result = out.reshape(xa.shape)
        else:
            result = self._closed_form(jx, jxp, xa, xb)

        return float(result) if scalar else result

    def _closed_form(self, jx: int, jxp: int, x: np.ndarray, xp: np.ndarray) -> np.ndarray:
        m = jx + jxp
        if self.family == SQUARED_EXPONENTIAL:
            # ∂ₓ^a ∂ₓ′^b e^{−d²} = (−1)^a H_{a+b}(d) e^{−d²}, d = x − x′
            d = x - xp
            coeffs = np.zeros(m + 1)
            coeffs[m] = 1.0
            return (-1.0) ** jx * hermite.hermval(d, coeffs) * np.exp(-d * d)

        if self.family == MATERN:
            d = x - xp
            r = np.abs(d)
            radial = _matern_radial_derivative(self.nu, m, r)
            sign = np.where(d < 0, -1.0, 1.0) ** m
            value = (-1.0) ** jxp * sign * radial
            if m % 2 == 1:
                value = np.where(r == 0.0, 0.0, value)
            return value

        # second-order Sobolev: 1 + xx′ + min²(3 max − min)/6
        lo = np.minimum(x, xp)
        hi = np.maximum(x, xp)
        if m == 0:
            return 1.0 + x * xp + lo * lo * (3.0 * hi - lo) / 6.0
        if jx == 1 and jxp == 1:
            return 1.0 + lo
        # derivative in the argument that is the smaller one vs the larger one
        wrt_min = (x <= xp) if jx == 1 else (xp <= x)
        return np.where(wrt_min, hi + lo * hi - lo * lo / 2.0, lo + lo * lo / 2.0)

    def cross(self, xs: Any, xps: Any, jx: int = 0, jxp: int = 0) -> np.ndarray:
        """Matrix M[a, b] = ∂ₓ^{jx} ∂ₓ′^{jxp} K(xs[a], xps[b])."""
        self._check_orders(jx, jxp)
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        xps = np.atleast_1d(np.asarray(xps, dtype=float))
        self._check_points(xs, xps)

        if self.is_spectral:
            mu = self.spectrum()
            GPUtils.check_memory_requirements(max(xs.size, xps.size), mu.size, logger)
            pa = basis_matrix(self.basis, jx, xs, mu.size)
            pb = pa if (jx == jxp and xps is xs) else basis_matrix(self.basis, jxp, xps, mu.size)
            return (pa * mu) @ pb.T

        return self._closed_form(jx, jxp, xs[:, None], xps[None, :])

    def gram(self, X: Any, jx: int = 0, jxp: int = 0) -> np.ndarray:
        """Gram matrix over the design; symmetric when jx == jxp."""
        X = np.atleast_1d(np.asarray(X, dtype=float))
        if X.size == 0:
            raise KernelDomainError("Gram matrix needs at least one point")
        matrix = self.cross(X, X, jx, jxp)
        if jx == jxp:
            matrix = 0.5 * (matrix + matrix.T)
        return matrix

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"family": self.family}
        if self.family == MATERN:
            data["nu"] = self.nu
        if self.family == SPECTRAL:
            data.update(basis=self.basis, eigen=self.eigen.to_dict(), truncation=self.truncation)
        if self.domain != (0.0, 1.0):
            data["domain"] = list(self.domain)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KernelSpec":
        if not isinstance(data, dict):
            raise ConfigError(f"Kernel spec must be an object, got {type(data).__name__}")
        allowed = {
            MATERN: {"family", "nu", "domain"},
            SQUARED_EXPONENTIAL: {"family", "domain"},
            SOBOLEV2: {"family", "domain"},
            SPECTRAL: {"family", "basis", "eigen", "truncation"},
        }
        family = data.get("family")
        if family not in allowed:
            raise ConfigError(f"Unknown kernel family: {family!r}")
        unknown = set(data) - allowed[family]
        if unknown:
            raise ConfigError(f"Unknown keys for {family} kernel: {sorted(unknown)}")

        domain = tuple(data.get("domain", (0.0, 1.0)))
        if family == MATERN:
            if "nu" not in data:
                raise ConfigError("Matérn kernel needs 'nu'")
            return cls.matern(data["nu"], domain=domain)
        if family == SQUARED_EXPONENTIAL:
            return cls.squared_exponential(domain=domain)
        if family == SOBOLEV2:
            return cls.sobolev2(domain=domain)
        if "eigen" not in data or "basis" not in data:
            raise ConfigError("Spectral kernel needs 'basis' and 'eigen'")
        return cls.spectral(
            data["basis"],
            EigenSequence.from_dict(data["eigen"]),
            data.get("truncation", DEFAULT_TRUNCATION),
        )


def gram(kernel: KernelSpec, X: Any, jx: int = 0, jxp: int = 0) -> np.ndarray:
    """Gram matrix with entries ∂ₓ^{jx} ∂ₓ′^{jxp} K(X[a], X[b])."""
    return kernel.gram(X, jx, jxp)


def equivalent_kernel(kernel: KernelSpec, lam: float) -> KernelSpec:
    """
    Spectral kernel with the same basis and eigenvalues νᵢ = μᵢ / (λ + μᵢ).
    """
    if not kernel.is_spectral:
        raise UnsupportedKernelError(
            f"Equivalent kernel needs a spectral kernel, got {kernel.family}"
        )
    if not lam > 0:
        raise KernelDomainError(f"lambda must be positive, got {lam}")
    mu = kernel.spectrum()
    nu = mu / (lam + mu)
    return replace(kernel, eigen=EigenSequence.explicit(nu), truncation=kernel.truncation)
