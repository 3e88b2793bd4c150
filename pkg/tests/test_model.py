import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from carma_fields.algebra import Polynomial
from carma_fields.errors import ModelError, QuadratureError
from carma_fields.model import (
    ConstantJump,
    GaussianJump,
    LaplaceJump,
    LevyBasisSpec,
    ModelSpec,
    cumulant_function,
    validate_model,
)
from carma_fields.moments import marginal_char_function
from specs import random_carma

GAUSS = LevyBasisSpec.gaussian(1.0)


# --- ModelSpec ---------------------------------------------------------------------

def test_carma_defaults():
    spec = ModelSpec.carma([[1, 3, 2]], [1, 1])
    assert (spec.d, spec.p, spec.q) == (1, 2, 1)
    np.testing.assert_array_equal(spec.c, [0, 1])
    np.testing.assert_array_equal(spec.axis_matrices[0], [[0, 1], [-2, -3]])


def test_q_from_last_nonzero():
    assert ModelSpec.carma([[1, 6, 11, 6]], [2, 0, 0]).q == 0


@pytest.mark.parametrize("kwargs, msg", [
    (dict(axis_polys=[[2, 1]], b=[1]), "monic"),
    (dict(axis_polys=[[1, 1], [1, 2, 1]], b=[1]), "degree"),
    (dict(axis_polys=[[1, 3, 2]], b=[1, 1], q=2), "MA order"),
    (dict(axis_polys=[[1, 1]] * 4, b=[1]), "dimension"),
    (dict(axis_polys=[[1, 1]], b=[1, 2]), "length-p"),
])
def test_carma_rejects(kwargs, msg):
    with pytest.raises(ModelError, match=msg):
        ModelSpec.carma(**kwargs)


def test_gcarma_shape_checks():
    with pytest.raises(ModelError):
        ModelSpec.gcarma([np.eye(2), np.eye(3)], [1, 1], [1, 1])


def test_spectra_and_decay():
    spec = ModelSpec.carma([[1, 3, 2], [1, 2, 2]], [1, 0])
    assert spec.distinct_eigenvalues
    assert spec.slowest_decay == pytest.approx(1.0)
    np.testing.assert_allclose(sorted(spec.spectra[1].values.imag), [-1, 1], atol=1e-12)


def test_commuting():
    assert ModelSpec.carma([[1, 3, 2], [1, 3, 2]], [1, 0]).commuting()
    assert not ModelSpec.carma([[1, 3, 2], [1, 4, 3]], [1, 0]).commuting()
    assert ModelSpec.gcarma([np.diag([-1.0, -2]), np.diag([-3.0, -4])], [1, 1], [1, 1]).commuting()


# --- validation --------------------------------------------------------------------

def test_validate_all_flags_pass():
    rep = validate_model(ModelSpec.carma([[1, 1], [1, 2]], [1]), GAUSS)
    assert rep.valid and rep.failures() == []
    assert rep.stationary and rep.log_moment and rep.distinct_eigenvalues == [True, True]


def test_validate_positive_root():
    rep = validate_model(ModelSpec.carma([[1, -1]], [1]), GAUSS)
    assert not rep.valid
    assert rep.failures() == ["stationarity"]
    assert rep.to_dict()["flags"]["stationarity"] is False


def test_validate_gcarma_not_companion():
    spec = ModelSpec.gcarma([np.diag([-2.0, -3.0]), np.diag([-5.0, -7.0])], [1, 1], [1, 1])
    rep = validate_model(spec, GAUSS)
    assert rep.valid
    assert rep.companion is False and rep.commuting is True


def test_validate_structure_and_common_roots():
    bad = ModelSpec.carma([[1, 3, 2]], [0, 0], q=1)
    assert validate_model(bad).failures() == ["structure"]
    shared = validate_model(ModelSpec.carma([[1, 3, 2]], [1, 1]))
    assert shared.valid and shared.common_roots


def test_validate_repeated_eigenvalues_is_informational():
    rep = validate_model(ModelSpec.carma([[1, 2, 1]], [1, 0]), GAUSS)
    assert rep.valid and rep.distinct_eigenvalues == [False]


# --- Levy bases ------------------------------------------------------------------

def test_levy_rejects_bad_parameters():
    with pytest.raises(ModelError):
        LevyBasisSpec(sigma2=-1.0)
    with pytest.raises(ModelError):
        LevyBasisSpec.compound_poisson(0.0, ConstantJump(1.0))
    with pytest.raises(ModelError):
        LevyBasisSpec.stable(2.5)


def test_cumulant_gaussian():
    assert cumulant_function(LevyBasisSpec.gaussian(2.0), 1.0) == pytest.approx(-1.0)


def test_cumulant_stable():
    assert cumulant_function(LevyBasisSpec.stable(1.5, 1.0), 2.0) == pytest.approx(-(2.0 ** 1.5))


def test_cumulant_compound_poisson_unit_jumps():
    levy = LevyBasisSpec.compound_poisson(3.0, ConstantJump(1.0))
    # unit jumps lie inside |z| <= 1, so the compensator removes rate * 1 of drift
    expected = 3.0 * (np.exp(1j * np.pi) - 1.0) - 1j * np.pi * 3.0
    assert cumulant_function(levy, np.pi) == pytest.approx(expected)
    assert levy.kappa1 == 0.0 and levy.kappa2 == 3.0


def test_stable_second_order_undefined():
    lv = LevyBasisSpec.stable(1.5)
    assert lv.kappa2 is None and lv.kappa1 == 0.0
    assert LevyBasisSpec.stable(0.8).kappa1 is None
    assert LevyBasisSpec.stable(2.0, eta=0.5).kappa2 == pytest.approx(1.0)


def _numeric_moments(law):
    # derivatives of the characteristic function at 0 by central differences
    h = 1e-4
    m1 = ((law.char(h) - law.char(-h)) / (2j * h)).real
    m2 = (-(law.char(h) - 2 + law.char(-h)) / h**2).real
    return m1, m2


@pytest.mark.parametrize("law", [ConstantJump(0.7), GaussianJump(0.4, 1.3), LaplaceJump(-0.2, 0.6)])
def test_jump_moments_match_characteristic_function(law):
    m1, m2 = _numeric_moments(law)
    assert law.mean == pytest.approx(m1, abs=1e-6)
    assert law.second_moment == pytest.approx(m2, abs=1e-5)


def test_gaussian_truncated_mean_vs_quadrature():
    law = GaussianJump(0.4, 1.3)
    pdf = lambda z: np.exp(-0.5 * ((z - 0.4) / 1.3) ** 2) / (1.3 * np.sqrt(2 * np.pi))
    ref, _ = integrate.quad(lambda z: z * pdf(z), -1, 1, epsabs=1e-14)
    assert law.truncated_mean() == pytest.approx(ref, abs=1e-12)


def test_laplace_truncated_mean_symbolic():
    z = sp.symbols("z", real=True)
    loc, scale = sp.Rational(3, 10), sp.Rational(1, 2)
    dens = sp.exp(-sp.Abs(z - loc) / scale) / (2 * scale)
    ref = sp.integrate(z * dens, (z, -1, loc)) + sp.integrate(z * dens, (z, loc, 1))
    assert LaplaceJump(0.3, 0.5).truncated_mean() == pytest.approx(float(ref), abs=1e-12)


def test_compound_poisson_cumulants():
    levy = LevyBasisSpec.compound_poisson(2.0, GaussianJump(0.5, 1.0), beta=0.1, sigma2=0.3)
    law = levy.jumps.law
    assert levy.kappa1 == pytest.approx(0.1 + 2.0 * (0.5 - law.truncated_mean()))
    assert levy.kappa2 == pytest.approx(0.3 + 2.0 * 1.25)
    # kappa1 and kappa2 are the first two cumulants of zeta
    h = 1e-4
    c1 = ((cumulant_function(levy, h) - cumulant_function(levy, -h)) / (2j * h)).real
    c2 = (-(cumulant_function(levy, h) - 2 * cumulant_function(levy, 0.0) + cumulant_function(levy, -h)) / h**2).real
    assert c1 == pytest.approx(levy.kappa1, abs=1e-6)
    assert c2 == pytest.approx(levy.kappa2, abs=1e-5)


def test_levy_to_dict_roundtrip():
    from carma_fields.documents import parse_levy
    for lv in (GAUSS, LevyBasisSpec.stable(1.2, 0.5, 0.1),
               LevyBasisSpec.compound_poisson(1.5, LaplaceJump(0.0, 0.4), sigma2=0.2)):
        assert parse_levy(lv.to_dict()) == lv


# --- marginal characteristic function ------------------------------------------

def test_marginal_char_at_zero():
    assert marginal_char_function(ModelSpec.carma([[1, 3, 2]], [1, 1]), GAUSS, 0.0) == pytest.approx(1.0)


def test_marginal_char_gaussian_car1_line():
    u = np.array([0.5, 1.0, 2.0])
    got = marginal_char_function(ModelSpec.carma([[1, 1]], [1]), GAUSS, u)
    np.testing.assert_allclose(got, np.exp(-u**2 / 4), atol=1e-10)


def test_marginal_char_stable_car1_plane():
    alpha, eta, l1, l2 = 1.5, 0.7, -1.0, -2.0
    spec = ModelSpec.carma([[1, -l1], [1, -l2]], [1])
    u = np.array([0.5, 1.0, 2.0])
    got = marginal_char_function(spec, LevyBasisSpec.stable(alpha, eta), u)
    np.testing.assert_allclose(got, np.exp(-eta * u**alpha / (alpha**2 * abs(l1 * l2))), atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_marginal_char_bounded(seed):
    rng = np.random.default_rng(seed)
    spec = random_carma(rng, 1 + seed % 2, 1 + seed % 3)
    levy = LevyBasisSpec.compound_poisson(1.0, GaussianJump(0.2, 0.8), sigma2=0.5)
    vals = marginal_char_function(spec, levy, rng.uniform(-4, 4, 5))
    assert np.all(np.abs(vals) <= 1 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_gaussian_log_char_is_quadratic(seed):
    spec = random_carma(np.random.default_rng(seed), 2, 2)
    u = np.array([0.5, 1.0, 2.0])
    ratio = np.log(marginal_char_function(spec, GAUSS, u)).real / u**2
    assert np.ptp(ratio) < 1e-9


def _positive_kernel_spec(seed: int) -> ModelSpec:
    # real roots and q = 0 give a kernel that is positive inside the orthant
    rng = np.random.default_rng(seed)
    d, p = 1 + seed % 2, 1 + seed % 3
    polys = [Polynomial.from_roots(-np.sort(rng.uniform(0.3, 2.5, p)) - 0.2 * np.arange(p)) for _ in range(d)]
    return ModelSpec.carma(polys, [rng.uniform(0.5, 1.5)] + [0.0] * (p - 1))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.6, 1.9))
def test_stable_index_preserved(seed, alpha):
    spec = _positive_kernel_spec(seed)
    u = np.array([0.3, 0.7, 1.5, 3.0])
    ratio = np.log(np.abs(marginal_char_function(spec, LevyBasisSpec.stable(alpha), u))) / u**alpha
    assert np.ptp(ratio) < 1e-6 * max(1.0, np.abs(ratio).max())


def test_stable_sign_changing_kernel():
    # complex roots make g oscillate; |g|**alpha then has interior cusps
    spec = ModelSpec.carma([[1, 2, 5]], [1, 0])
    u = np.array([0.5, 1.0, 2.0])
    got = marginal_char_function(spec, LevyBasisSpec.stable(1.5), u, abs_tol=1e-6)
    ref, _ = integrate.quad(lambda s: abs(np.exp(-s) * np.sin(2 * s) / 2) ** 1.5, 0, 60, limit=400)
    np.testing.assert_allclose(got.real, np.exp(-u ** 1.5 * ref), atol=1e-6)


def test_rough_quadrature_failure_is_reported():
    spec = ModelSpec.carma([[1, 0.4, 9], [1, 0.4, 9]], [1, 0])
    with pytest.raises(QuadratureError):
        marginal_char_function(spec, LevyBasisSpec.stable(0.6), 1.0, abs_tol=1e-12)
