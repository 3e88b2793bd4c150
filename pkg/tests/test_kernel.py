import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from carma_fields.algebra import Polynomial
from carma_fields.errors import ImaginaryResidueError, ModelError, RepeatedEigenvalueError
from carma_fields.kernel import (
    kernel,
    kernel_coefficients,
    kernel_direct,
    kernel_direct_grid,
    kernel_equal_matrices,
    kernel_grid,
    real_part,
    truncated_poly,
)
from carma_fields.model import ModelSpec
from specs import random_carma

DIAG = ModelSpec.gcarma([np.diag([-2.0, -3.0]), np.diag([-5.0, -7.0])], [1, 1], [1, 1])


def _scipy_kernel(spec, s):
    # independent direct route through scipy's expm
    if np.any(np.asarray(s) < 0):
        return 0.0
    M = np.eye(spec.p)
    for A, x in zip(spec.axis_matrices, s):
        M = M @ expm(A * x)
    return float(spec.b @ M @ spec.c)


# --- direct route ----------------------------------------------------------------

def test_scalar_exponentials():
    spec = ModelSpec.carma([[1, 1], [1, 2]], [1])
    assert kernel_direct(spec, [1.0, 1.0]) == pytest.approx(np.exp(-3.0), rel=1e-14)


def test_diagonal_gcarma_kernel():
    for s in ([0.0, 0.0], [0.3, 1.1], [2.0, 0.25]):
        expected = np.exp(-2 * s[0] - 5 * s[1]) + np.exp(-3 * s[0] - 7 * s[1])
        assert kernel_direct(DIAG, s) == pytest.approx(expected, abs=1e-14)
    assert kernel(DIAG, [0.0, 0.0]) == pytest.approx(2.0)


def test_causality():
    spec = ModelSpec.carma([[1, 3, 2], [1, 4, 3]], [1, 0.5])
    pts = np.array([[-0.1, 1.0], [1.0, -1e-9], [-2.0, -2.0]])
    np.testing.assert_array_equal(kernel_direct(spec, pts), 0.0)
    np.testing.assert_array_equal(kernel_coefficients(spec).evaluate(pts), 0.0)
    np.testing.assert_array_equal(kernel_grid(spec, [np.array([-1.0, -0.5]), np.array([0.0, 1.0])]), 0.0)


def test_direct_matches_scipy_expm():
    rng = np.random.default_rng(4)
    spec = ModelSpec.gcarma([rng.normal(size=(3, 3)) - 3 * np.eye(3) for _ in range(2)], rng.normal(size=3),
                            rng.normal(size=3))
    for s in rng.uniform(0, 3, (10, 2)):
        assert kernel_direct(spec, s) == pytest.approx(_scipy_kernel(spec, s), abs=1e-12)


def test_direct_grid_matches_pointwise():
    spec = random_carma(np.random.default_rng(9), 2, 3)
    axes = [np.linspace(0, 3, 7), np.linspace(0, 2, 5)]
    grid = kernel_direct_grid(spec, axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
    np.testing.assert_allclose(grid.ravel(), kernel_direct(spec, mesh), atol=1e-14)


# --- truncated polynomials -------------------------------------------------------

@pytest.mark.parametrize("coeffs, k, expected", [
    ((1, 3, 2), 1, (1, 3)),
    ((1, 3, 2), 2, (1,)),
    ((1, 6, 11, 6), 2, (1, 6)),
    ((1, 6, 11, 6), 1, (1, 6, 11)),
])
def test_truncated_poly(coeffs, k, expected):
    assert truncated_poly(Polynomial(coeffs), k).coeffs == tuple(float(x) for x in expected)


def test_truncated_poly_range():
    for k in (0, 3):
        with pytest.raises(ModelError):
            truncated_poly(Polynomial((1, 3, 2)), k)


# --- coefficient route ------------------------------------------------------------

def test_coefficients_with_cancelling_root():
    coef = kernel_coefficients(ModelSpec.carma([[1, 3, 2]], [1, 1]))
    terms = coef.terms(tol=1e-14)
    assert len(terms) == 1
    (lam,), w = terms[0]
    assert lam == pytest.approx(-2.0) and w == pytest.approx(1.0)


def test_coefficients_car1_plane():
    terms = kernel_coefficients(ModelSpec.carma([[1, 1], [1, 2]], [1])).terms()
    assert len(terms) == 1
    (l1, l2), w = terms[0]
    assert (l1, l2, w) == pytest.approx((-1.0, -2.0, 1.0))


def test_d1_weights_are_residues():
    # b(lambda) / a'(lambda) computed symbolically
    z = sp.symbols("z")
    a = z**3 + 4 * z**2 + 6 * z + 4  # roots -2, -1 +- i
    b = sp.Rational(1, 2) + 2 * z - z**2 / 3
    spec = ModelSpec.carma([[1, 4, 6, 4]], [0.5, 2.0, -1 / 3])
    coef = kernel_coefficients(spec)
    for lam, w in zip(coef.exponents[0], coef.weights):
        root = complex(sp.nsimplify(round(lam.real, 12)) + sp.I * sp.nsimplify(round(lam.imag, 12)))
        expected = complex(sp.N((b / sp.diff(a, z)).subs(z, root)))
        assert w == pytest.approx(expected, abs=1e-12)


def test_random_carma31_plane_routes():
    spec = random_carma(np.random.default_rng(31), 2, 3, q=1)
    axes = [np.linspace(0, 4, 10)] * 2
    diff = kernel_coefficients(spec).evaluate_grid(axes) - kernel_direct_grid(spec, axes)
    assert np.max(np.abs(diff)) < 1e-9


def test_gcarma_coefficients_match_direct():
    rng = np.random.default_rng(2)
    mats = []
    for _ in range(2):
        Q = rng.normal(size=(3, 3))
        mats.append(Q @ np.diag([-0.5, -1.0 + 0.0, -2.0]) @ np.linalg.inv(Q))
    spec = ModelSpec.gcarma(mats, rng.normal(size=3), rng.normal(size=3))
    axes = [np.linspace(0, 4, 9)] * 2
    np.testing.assert_allclose(kernel_coefficients(spec).evaluate_grid(axes), kernel_direct_grid(spec, axes),
                               atol=1e-10)


def test_repeated_eigenvalues_have_no_coefficients():
    spec = ModelSpec.carma([[1, 2, 1]], [1, 0])
    with pytest.raises(RepeatedEigenvalueError):
        kernel_coefficients(spec)
    # the default evaluator falls back to the direct route
    assert kernel(spec, 1.0) == pytest.approx(np.exp(-1.0))


def test_integral_matches_direct_quadrature():
    from carma_fields.algebra import quad_rplus
    spec = random_carma(np.random.default_rng(5), 2, 2)
    ref = quad_rplus(lambda s1, s2: kernel_direct_grid(spec, [s1.ravel(), s2.ravel()]), 2,
                     spec.slowest_decay, abs_tol=1e-12)
    assert kernel_coefficients(spec).integral() == pytest.approx(ref, abs=1e-10)


def test_real_part_guard():
    assert real_part(np.array([1.0 + 1e-14j])) == pytest.approx(1.0)
    with pytest.raises(ImaginaryResidueError):
        real_part(np.array([1.0 + 1e-3j]))


# --- equal-matrices route ------------------------------------------------------------

def test_equal_matrices_shared_root():
    spec = ModelSpec.carma([[1, 3, 2]] * 2, [1, 1])
    assert kernel_equal_matrices(spec, [1.0, 1.0]) == pytest.approx(np.exp(-4.0), abs=1e-15)


def test_equal_matrices_car1_three_axes():
    spec = ModelSpec.carma([[1, 1]] * 3, [1])
    assert kernel_equal_matrices(spec, [1.0, 1.0, 1.0]) == pytest.approx(np.exp(-3.0), abs=1e-15)


def test_equal_matrices_double_root():
    spec = ModelSpec.carma([[1, 2, 1]], [1, 0])
    s = np.linspace(0, 5, 11)
    np.testing.assert_allclose(kernel_equal_matrices(spec, s), s * np.exp(-s), atol=1e-14)
    np.testing.assert_allclose(kernel_direct(spec, s), s * np.exp(-s), atol=1e-14)


def test_equal_matrices_triple_root_plane():
    # equal axes collapse to the line kernel at sigma = s1 + s2; sympy inverts the transfer function
    z, t = sp.symbols("z t")
    expr = sp.inverse_laplace_transform((1 + z) / (z + 1) ** 3, z, t)
    spec = ModelSpec.carma([[1, 3, 3, 1]] * 2, [1, 1, 0])
    for s in ([0.2, 0.3], [1.0, 2.0]):
        ref = float(expr.subs(t, sum(s)).subs(sp.Heaviside(sum(s)), 1))
        assert kernel_equal_matrices(spec, s) == pytest.approx(ref, abs=1e-13)
        assert kernel_direct(spec, s) == pytest.approx(ref, abs=1e-13)


def test_equal_matrices_requires_equal_axes():
    with pytest.raises(ModelError):
        kernel_equal_matrices(ModelSpec.carma([[1, 1], [1, 2]], [1]), [1.0, 1.0])


# --- properties ------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**7), st.integers(1, 2), st.integers(1, 3))
def test_route_equivalence(seed, d, p):
    rng = np.random.default_rng(seed)
    spec = random_carma(rng, d, p)
    axes = [np.linspace(0, 5, 8)] * d
    direct = kernel_direct_grid(spec, axes)
    np.testing.assert_allclose(kernel_coefficients(spec).evaluate_grid(axes), direct, atol=1e-9)
    if d == 2:
        eq = ModelSpec.carma([spec.axis_polys[0]] * 2, spec.b, spec.q)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
        np.testing.assert_allclose(kernel_equal_matrices(eq, mesh), kernel_direct(eq, mesh), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**7))
def test_coefficients_conjugate_symmetric(seed):
    spec = random_carma(np.random.default_rng(seed), 2, 3)
    assert kernel_coefficients(spec).is_conjugate_symmetric()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**7))
def test_exponential_domination(seed):
    rng = np.random.default_rng(seed)
    spec = random_carma(rng, 2, int(rng.integers(1, 4)))
    eta = 0.9 * spec.slowest_decay
    axes = [np.linspace(0, 12, 49)] * 2
    g = np.abs(kernel_direct_grid(spec, axes))
    S1, S2 = np.meshgrid(*axes, indexing="ij")
    envelope = g * np.exp(eta * np.hypot(S1, S2))
    # bounded envelope: the far corner must not exceed the near-origin scale by much
    assert envelope.max() <= 50 * max(envelope[:8, :8].max(), 1e-300)
