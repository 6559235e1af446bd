import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from heatlab.bessel import SERIES_CUTOFF, bessel_i, bessel_ie, log_bessel_lower_bound


def test_half_integer_closed_form():
    # I_{1/2}(z) = sqrt(2/(pi z)) sinh z
    z = np.array([0.1, 1.0, 5.0, 29.0, 31.0, 80.0])
    expect = np.sqrt(2 / (math.pi * z)) * np.sinh(z)
    np.testing.assert_allclose(bessel_i(0.5, z), expect, rtol=1e-12)


def test_order_zero_at_origin():
    assert bessel_i(0.0, 0.0) == 1.0
    assert bessel_i(2.5, 0.0) == 0.0


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.7, 10.0, 47.3, 200.0])
def test_against_scipy_ive_small_z(nu):
    z = np.linspace(0.01, SERIES_CUTOFF, 200)
    ref = special.ive(nu, z)
    ok = ref > 1e-280  # scipy flushes subnormal results to zero
    np.testing.assert_allclose(bessel_ie(nu, z)[ok], ref[ok], rtol=1e-12, atol=0)


@pytest.mark.parametrize("nu", [0.0, 1.0, 3.5, 20.0, 150.0, 1500.0])
def test_against_scipy_ive_large_z(nu):
    z = np.geomspace(SERIES_CUTOFF * 1.0001, 5e4, 200)
    ref = special.ive(nu, z)
    ok = ref > 1e-280
    np.testing.assert_allclose(bessel_ie(nu, z)[ok], ref[ok], rtol=1e-10, atol=0)


def test_broadcasting_shapes():
    out = bessel_ie(np.arange(3.0)[:, None], np.linspace(0.5, 40.0, 5)[None, :])
    assert out.shape == (3, 5)
    assert isinstance(bessel_ie(1.0, 2.0), float)


@pytest.mark.parametrize("nu,z", [(-1.0, 1.0), (1.0, -0.5), (np.nan, 1.0), (1.0, np.inf)])
def test_rejects_bad_arguments(nu, z):
    with pytest.raises(ValueError):
        bessel_ie(nu, z)


def test_sandwich_random_inputs():
    rng = np.random.default_rng(11)
    nu = rng.uniform(0, 20, 10_000)
    z = rng.uniform(0, 30, 10_000)
    lo = log_bessel_lower_bound(nu, z)
    with np.errstate(divide="ignore"):
        li = np.log(bessel_i(nu, z))
    slack = 1e-12 * np.maximum(1.0, np.abs(lo))
    assert np.all(li >= lo - slack)
    assert np.all(li <= lo + z + slack)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 60.0), st.floats(0.0, 200.0))
def test_recurrence(nu, z):
    # I_{nu-1} - I_{nu+1} = (2 nu / z) I_nu
    if z < 1e-3:
        return
    lhs = bessel_ie(nu + 2.0, z)
    rhs = bessel_ie(nu, z) - 2.0 * (nu + 1.0) / z * bessel_ie(nu + 1.0, z)
    scale = bessel_ie(nu, z)
    assert abs(lhs - rhs) <= 1e-9 * scale + 1e-300


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.0, 100.0))
def test_monotone_in_order(nu, z):
    assert bessel_ie(nu + 0.5, z) <= bessel_ie(nu, z) * (1 + 1e-12)
