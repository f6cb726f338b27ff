"""
Tests for kernel evaluation, cross-derivatives and spectral kernels.
"""

import math

import numpy as np
import pytest

from gpplugin import (
    COSINE_HALF,
    FOURIER,
    CapabilityError,
    ConfigError,
    EigenSequence,
    KernelDomainError,
    KernelSpec,
    UnsupportedKernelError,
    basis_matrix,
    equivalent_kernel,
    gram,
)
from gpplugin.kernels import _matern_radial_derivative, _matern_series_derivative

FD_STEP = 1e-4

CLOSED_FORM_KERNELS = [
    KernelSpec.squared_exponential(),
    KernelSpec.matern(2.5),
    KernelSpec.matern(3.0),
    KernelSpec.sobolev2(),
]


def matern_closed_form(nu, r):
    """Textbook half-integer Matérn profiles."""
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        z = math.sqrt(3.0) * r
        return (1.0 + z) * np.exp(-z)
    z = math.sqrt(5.0) * r
    return (1.0 + z + z * z / 3.0) * np.exp(-z)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_matern_half_integer_values(nu):
    """Half-integer Matérn kernels match their closed forms."""
    kernel = KernelSpec.matern(nu)
    x = np.array([0.0, 0.1, 0.4, 0.9])
    xp = np.array([0.0, 0.35, 0.2, 0.05])
    expected = matern_closed_form(nu, np.abs(x - xp))
    np.testing.assert_allclose(kernel.eval(x, xp), expected, rtol=1e-12)


@pytest.mark.parametrize("nu", [0.7, 1.2, 3.0, 3.7])
def test_matern_general_nu_unit_diagonal(nu):
    """K(x, x) = 1 for every smoothness, including the Bessel form."""
    kernel = KernelSpec.matern(nu)
    assert kernel.eval(0.3, 0.3) == pytest.approx(1.0, rel=1e-12)


def test_matern_bessel_form_approaches_half_integer():
    """The Bessel evaluation at ν = 2.5 + 1e-7 is close to the ν = 2.5 closed form."""
    nearby = KernelSpec.matern(2.5 + 1e-7)
    exact = KernelSpec.matern(2.5)
    x = np.linspace(0.0, 1.0, 11)
    for jx, jxp in [(0, 0), (1, 0), (1, 1), (2, 2)]:
        np.testing.assert_allclose(
            nearby.eval_deriv(jx, jxp, x, 0.37), exact.eval_deriv(jx, jxp, x, 0.37),
            rtol=1e-5, atol=1e-6,
        )


def test_matern_series_branch_is_continuous():
    """Values on both sides of the small-distance series radius agree."""
    kernel = KernelSpec.matern(3.0)
    base = 0.5
    for jx, jxp in [(0, 0), (1, 1), (2, 2)]:
        inside = kernel.eval_deriv(jx, jxp, base, base + 0.999e-6)
        outside = kernel.eval_deriv(jx, jxp, base, base + 1.001e-6)
        assert inside == pytest.approx(outside, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("nu,m", [
    (0.7, 0), (1.2, 1), (1.2, 2), (2.3, 2), (2.3, 4), (2.0, 1), (2.0, 2), (3.0, 4), (3.7, 6),
])
def test_matern_series_matches_bessel_form(nu, m):
    """The small-distance expansion keeps the r^{2ν−m} (and r^{2ν−m} log r) terms."""
    r = np.array([2e-4, 5e-4])
    np.testing.assert_allclose(_matern_series_derivative(nu, m, r),
                               _matern_radial_derivative(nu, m, r), rtol=1e-7, atol=1e-8)


def test_squared_exponential_derivatives():
    """∂ₓK = −2d e^{−d²} and ∂ₓ∂ₓ′K = (2 − 4d²) e^{−d²}."""
    kernel = KernelSpec.squared_exponential()
    x, xp = 0.8, 0.25
    d = x - xp
    assert kernel.eval(x, xp) == pytest.approx(math.exp(-d * d))
    assert kernel.eval_deriv(1, 0, x, xp) == pytest.approx(-2.0 * d * math.exp(-d * d))
    assert kernel.eval_deriv(0, 1, x, xp) == pytest.approx(2.0 * d * math.exp(-d * d))
    assert kernel.eval_deriv(1, 1, x, xp) == pytest.approx((2.0 - 4.0 * d * d) * math.exp(-d * d))


def test_sobolev_values():
    """Second-order Sobolev kernel and its mixed derivative 1 + min(x, x′)."""
    kernel = KernelSpec.sobolev2()
    x, xp = 0.3, 0.7
    expected = 1.0 + x * xp + x * x * (3.0 * xp - x) / 6.0
    assert kernel.eval(x, xp) == pytest.approx(expected)
    assert kernel.eval(xp, x) == pytest.approx(expected)
    assert kernel.eval_deriv(1, 1, x, xp) == pytest.approx(1.0 + x)
    assert kernel.eval_deriv(1, 0, x, xp) == pytest.approx(xp + x * xp - x * x / 2.0)
    assert kernel.eval_deriv(0, 1, x, xp) == pytest.approx(x + x * x / 2.0)


@pytest.mark.parametrize("kernel", CLOSED_FORM_KERNELS, ids=lambda k: k.label)
def test_symmetry(kernel):
    """K(x, x′) = K(x′, x) and ∂ₓᵃ∂ₓ′ᵇK(x, x′) = ∂ₓᵇ∂ₓ′ᵃK(x′, x)."""
    rng = np.random.default_rng(3)
    x, xp = rng.uniform(size=25), rng.uniform(size=25)
    np.testing.assert_allclose(kernel.eval(x, xp), kernel.eval(xp, x), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(kernel.eval_deriv(1, 0, x, xp), kernel.eval_deriv(0, 1, xp, x),
                               rtol=1e-12, atol=1e-14)


def central_difference(kernel, jx, jxp, x, xp):
    """Finite difference of the (jx, jxp) derivative, stepping the last order taken."""
    if jxp > 0:
        return (kernel.eval_deriv(jx, jxp - 1, x, xp + FD_STEP)
                - kernel.eval_deriv(jx, jxp - 1, x, xp - FD_STEP)) / (2.0 * FD_STEP)
    return (kernel.eval_deriv(jx - 1, jxp, x + FD_STEP, xp)
            - kernel.eval_deriv(jx - 1, jxp, x - FD_STEP, xp)) / (2.0 * FD_STEP)


@pytest.mark.parametrize("kernel", [
    KernelSpec.squared_exponential(),
    KernelSpec.matern(2.5),
    KernelSpec.matern(3.0),
    KernelSpec.spectral(FOURIER, EigenSequence.polynomial(3.0), truncation=200),
], ids=lambda k: k.label)
@pytest.mark.parametrize("orders", [(1, 0), (0, 1), (1, 1)])
def test_derivatives_match_finite_differences(kernel, orders):
    """Analytic cross-derivatives agree with central differences on a 21-point grid."""
    jx, jxp = orders
    grid = np.linspace(0.05, 0.95, 21)
    x, xp = np.meshgrid(grid, grid, indexing="ij")
    analytic = kernel.eval_deriv(jx, jxp, x, xp)
    numeric = central_difference(kernel, jx, jxp, x, xp)
    np.testing.assert_allclose(numeric, analytic, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("kernel", CLOSED_FORM_KERNELS + [
    KernelSpec.spectral(COSINE_HALF, EigenSequence.polynomial(2.0), truncation=300),
], ids=lambda k: k.label)
def test_gram_is_positive_semidefinite(kernel):
    """Gram matrices of K and of ∂ₓ∂ₓ′K have no materially negative eigenvalues."""
    X = np.random.default_rng(11).uniform(size=30)
    for order in (0, 1):
        matrix = gram(kernel, X, order, order)
        np.testing.assert_allclose(matrix, matrix.T)
        eigvals = np.linalg.eigvalsh(matrix)
        assert eigvals.min() >= -1e-8 * max(1.0, eigvals.max())


def test_cross_matches_pointwise_eval():
    kernel = KernelSpec.matern(2.5)
    xs = np.array([0.1, 0.5])
    xps = np.array([0.2, 0.6, 0.9])
    matrix = kernel.cross(xs, xps, 1, 0)
    assert matrix.shape == (2, 3)
    assert matrix[1, 2] == pytest.approx(kernel.eval_deriv(1, 0, 0.5, 0.9))


def test_max_deriv_order():
    assert KernelSpec.matern(2.5).max_deriv_order == 2
    assert KernelSpec.matern(2.0).max_deriv_order == 1
    assert KernelSpec.matern(1.5).max_deriv_order == 1
    assert KernelSpec.sobolev2().max_deriv_order == 1
    assert KernelSpec.squared_exponential().max_deriv_order == 16
    assert KernelSpec.spectral(FOURIER, EigenSequence.polynomial(2.0)).max_deriv_order == 1
    assert KernelSpec.spectral(FOURIER, EigenSequence.exponential(1.0)).max_deriv_order == 16


def test_capability_and_domain_errors():
    """Orders above the cap and points outside the domain are rejected."""
    with pytest.raises(CapabilityError):
        KernelSpec.matern(1.5).eval_deriv(2, 0, 0.1, 0.2)
    with pytest.raises(CapabilityError):
        KernelSpec.sobolev2().eval_deriv(2, 2, 0.1, 0.2)
    with pytest.raises(CapabilityError):
        KernelSpec.squared_exponential().eval_deriv(-1, 0, 0.1, 0.2)
    with pytest.raises(KernelDomainError):
        KernelSpec.matern(2.5).eval(1.5, 0.2)
    with pytest.raises(KernelDomainError):
        KernelSpec.matern(-1.0)
    with pytest.raises(KernelDomainError):
        KernelSpec.squared_exponential().gram([])


def test_custom_domain():
    kernel = KernelSpec.matern(2.5, domain=(-2.0, 3.0))
    assert kernel.eval(-1.5, 2.5) == pytest.approx(matern_closed_form(2.5, 4.0))
    with pytest.raises(KernelDomainError):
        kernel.eval(3.5, 0.0)


def test_fourier_kernel_with_paired_eigenvalues():
    """Equal eigenvalues on each cos/sin pair give a stationary kernel."""
    eigen = EigenSequence.explicit([1.0, 0.5, 0.5, 0.25, 0.25])
    kernel = KernelSpec.spectral(FOURIER, eigen, truncation=10)
    x, xp = 0.13, 0.71
    d = x - xp
    expected = 1.0 + 0.5 * 2.0 * math.cos(2.0 * math.pi * d) + 0.25 * 2.0 * math.cos(4.0 * math.pi * d)
    assert kernel.eval(x, xp) == pytest.approx(expected, rel=1e-12)


def test_empty_explicit_spectrum_is_zero_kernel():
    kernel = KernelSpec.spectral(FOURIER, EigenSequence.explicit([]))
    assert kernel.eval(0.2, 0.4) == 0.0
    assert np.all(kernel.gram(np.array([0.1, 0.5, 0.9])) == 0.0)


def test_basis_orthonormality_and_exact_zeros():
    """Both bases are orthonormal on [0, 1]; half-cosine derivatives vanish at 0."""
    grid = np.linspace(0.0, 1.0, 20001)
    for basis in (FOURIER, COSINE_HALF):
        phi = basis_matrix(basis, 0, grid, 7)
        weights = np.full(grid.size, grid[1] - grid[0])
        weights[[0, -1]] *= 0.5
        gramian = phi.T @ (phi * weights[:, None])
        np.testing.assert_allclose(gramian, np.eye(7), atol=1e-6)

    assert np.all(basis_matrix(COSINE_HALF, 1, [0.0], 6) == 0.0)
    assert np.all(basis_matrix(FOURIER, 2, [0.0], 6)[0, 2::2] == 0.0)


def test_tail_bound_covers_truncation_error():
    """Truncating at N changes the kernel by at most the reported tail bound."""
    eigen = EigenSequence.polynomial(2.0)
    short = KernelSpec.spectral(FOURIER, eigen, truncation=100)
    long = KernelSpec.spectral(FOURIER, eigen, truncation=20000)
    x = np.array([0.0, 0.21, 0.5, 0.83])
    xp = np.array([0.0, 0.6, 0.5, 0.1])
    for jx, jxp in [(0, 0), (1, 1)]:
        diff = np.abs(long.eval_deriv(jx, jxp, x, xp) - short.eval_deriv(jx, jxp, x, xp))
        assert np.all(diff <= short.tail_bound(jx, jxp))

    assert math.isinf(KernelSpec.spectral(FOURIER, EigenSequence.polynomial(1.0)).tail_bound(1, 1))
    with pytest.raises(UnsupportedKernelError):
        KernelSpec.matern(2.5).tail_bound()


def test_equivalent_kernel():
    kernel = KernelSpec.spectral(FOURIER, EigenSequence.polynomial(2.0), truncation=50)
    lam = 1e-3
    equivalent = equivalent_kernel(kernel, lam)
    mu = kernel.spectrum()
    np.testing.assert_allclose(equivalent.spectrum(), mu / (lam + mu))
    assert equivalent.basis == kernel.basis

    with pytest.raises(UnsupportedKernelError):
        equivalent_kernel(KernelSpec.squared_exponential(), lam)
    with pytest.raises(KernelDomainError):
        equivalent_kernel(kernel, 0.0)


def test_eigen_sequence_validation():
    with pytest.raises(KernelDomainError):
        EigenSequence.polynomial(0.5)
    with pytest.raises(KernelDomainError):
        EigenSequence.exponential(0.0)
    with pytest.raises(KernelDomainError):
        EigenSequence.explicit([0.1, 0.5])
    assert EigenSequence.explicit([0.5, 0.1]).mu(3) == 0.0


def test_kernel_spec_serialization():
    """Kernel specs round-trip through dicts; unknown keys are rejected."""
    spectral = KernelSpec.spectral(COSINE_HALF, EigenSequence.exponential(1.5), truncation=500)
    assert KernelSpec.from_dict(spectral.to_dict()) == spectral
    assert KernelSpec.from_dict({"family": "matern", "nu": 2.5}) == KernelSpec.matern(2.5)

    with pytest.raises(ConfigError):
        KernelSpec.from_dict({"family": "se", "lengthscale": 2.0})
    with pytest.raises(ConfigError):
        KernelSpec.from_dict({"family": "rbf"})
    with pytest.raises(ConfigError):
        KernelSpec.from_dict({"family": "spectral", "basis": "fourier",
                              "eigen": {"kind": "polynomial", "alpha": 2.0, "beta": 1.0}})
