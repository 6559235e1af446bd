import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from heatlab.geometry import Opening
from heatlab.spectral import MAX_MODES, eigenfunction_eval, spectrum


def test_half_plane_closed_form():
    sd = spectrum(Opening.arc(0.0, math.pi), 1)
    assert sd.eigenvalues[0] == pytest.approx(1.0)
    assert (sd.alpha, sd.kappa, sd.beta) == pytest.approx((1.0, 1.0, 3.0))
    assert eigenfunction_eval(sd, 1, math.pi / 2) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)
    assert eigenfunction_eval(sd, 1, 0.0) == 0.0
    assert sd.I1 == pytest.approx(2 * math.sqrt(2 / math.pi))


def test_quarter_plane_closed_form():
    sd = spectrum(Opening.arc(0.0, math.pi / 2), 2)
    np.testing.assert_allclose(sd.eigenvalues, [4.0, 16.0])
    np.testing.assert_allclose(sd.characters, [2.0, 4.0])
    assert sd.kappa == pytest.approx(2.0)


def test_hemisphere():
    sd = spectrum(Opening.cap(math.pi / 2), 3)
    # zonal Dirichlet modes on the hemisphere are odd-degree Legendre polynomials
    np.testing.assert_allclose(sd.eigenvalues, [2.0, 12.0, 30.0], rtol=1e-10)
    assert sd.alpha == pytest.approx(1.5, rel=1e-10)
    assert sd.kappa == pytest.approx(1.0, rel=1e-9)
    assert eigenfunction_eval(sd, 1, 0.0) == pytest.approx(math.sqrt(3 / (2 * math.pi)), rel=1e-9)
    assert eigenfunction_eval(sd, 1, math.pi / 2) == 0.0


@pytest.mark.parametrize("theta0", [0.3, math.pi / 4, 1.9, 2.8])
def test_cap_degrees_match_legendre_roots(theta0):
    # oracle: roots of P_nu(cos theta0) in nu, via scipy's Legendre function
    sd = spectrum(Opening.cap(theta0), 3)
    x0 = math.cos(theta0)
    f = lambda nu: special.lpmv(0, nu, x0)
    grid = np.arange(0.01, sd.nus[-1] + 2.0, 0.01)
    vals = np.array([f(v) for v in grid])
    roots = [optimize.brentq(f, a, b, xtol=1e-14)
             for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]) if fa * fb < 0]
    np.testing.assert_allclose(sd.nus, roots[:3], rtol=1e-9)


@pytest.mark.parametrize("theta0", [0.6, math.pi / 2, 2.5])
def test_cap_orthonormal(theta0):
    sd = spectrum(Opening.cap(theta0), 4)
    gram = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            g = integrate.quad(lambda p: sd.m(i + 1, p) * sd.m(j + 1, p) * math.sin(p) * 2 * math.pi,
                               0.0, theta0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            gram[i, j] = gram[j, i] = g
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)
    np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-10)


def test_cap_mode_integrals():
    theta0 = 1.1
    sd = spectrum(Opening.cap(theta0), 3)
    for i in range(3):
        q = integrate.quad(lambda p: sd.m(i + 1, p) * math.sin(p) * 2 * math.pi, 0, theta0,
                           epsabs=1e-13)[0]
        assert sd.mode_integrals[i] == pytest.approx(q, rel=1e-8, abs=1e-12)


def test_cap_ground_state_positive_and_bounded():
    sd = spectrum(Opening.cap(2.0), 3)
    psi = np.linspace(0.0, 2.0, 2001)[:-1]
    assert np.all(sd.m(1, psi) > 0)
    for i in range(1, 4):
        assert np.max(np.abs(sd.m(i, psi))) <= sd.sup_bounds[i - 1]


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 6.2), st.floats(0.0, 1.0))
def test_arc_orthonormal(L, shift):
    sd = spectrum(Opening.arc(shift, shift + L), 5)
    c = np.linspace(0, L, 20001)
    M = sd.modes_matrix(c)
    gram = integrate.trapezoid(M[:, None, :] * M[None, :, :], c, axis=-1)
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.01, 3.0))
def test_nested_arcs_decrease_lambda(L, extra):
    small = spectrum(Opening.arc(0.0, L), 1)
    big = spectrum(Opening.arc(-extra, L), 1)
    assert big.eigenvalues[0] < small.eigenvalues[0]


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 6.2))
def test_exponent_identities(L):
    sd = spectrum(Opening.arc(0.0, L), 2)
    # identities hold up to the rounding of one addition
    one_plus = 1 + sd.alpha
    assert abs(sd.beta / 2 + sd.kappa / 2 - one_plus) <= 2 * math.ulp(one_plus)
    assert abs(sd.beta - sd.kappa - sd.n) <= 2 * math.ulp(sd.beta)
    assert sd.eigenvalues[0] < sd.eigenvalues[1]


def test_cap_exponent_identities():
    sd = spectrum(Opening.cap(0.9), 2)
    assert abs(sd.beta / 2 + sd.kappa / 2 - (1 + sd.alpha)) <= 2 * math.ulp(1 + sd.alpha)
    assert sd.characters[0] == math.sqrt(sd.eigenvalues[0] + 0.25)


def test_errors():
    with pytest.raises(ValueError):
        spectrum(Opening.arc(0.0, 1.0), MAX_MODES + 1)
    with pytest.raises(ValueError):
        spectrum(Opening.arc(0.0, 1.0), 0)
    with pytest.raises(ValueError):
        spectrum(Opening.cap(4.0), 1)
    sd = spectrum(Opening.arc(0.0, 1.0), 1)
    with pytest.raises(ValueError):
        eigenfunction_eval(sd, 1, 2.0)
    with pytest.raises(IndexError):
        sd.m(2, 0.5)
