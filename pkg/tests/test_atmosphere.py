import math

import numpy as np
import pytest

from gnssodom.atmosphere import klobuchar_delay, saastamoinen_delay
from gnssodom.constants import CLIGHT, FREQ_L2
from gnssodom.gnsstime import GnssTime
from gnssodom.types import IonoCoefficients

from .oracles import klobuchar_reference

LLH = np.array([math.radians(40.0), math.radians(-100.0), 0.0])
ALPHA = [3.82e-9, 1.49e-8, -1.79e-7, 0.0]
BETA = [1.43e5, 0.0, -1.38e5, 0.0]


def test_zero_coefficient_zenith_floor():
    # all alpha = beta = 0 at zenith: delay = F * 5e-9 * c with
    # F = 1 + 16*(0.53 - 0.5)^3, i.e. 1.49961 m
    d = klobuchar_delay(GnssTime(2200, 0.0), LLH, 0.0, math.pi / 2,
                        IonoCoefficients.absent())
    expected = (1.0 + 16.0 * (0.53 - 0.5) ** 3) * 5e-9 * CLIGHT
    assert d == pytest.approx(expected, abs=1e-12)
    assert d == pytest.approx(1.4996, abs=1e-3)


def test_obliquity_monotonic_low_elevation_larger():
    coef = IonoCoefficients(ALPHA, BETA)
    t = GnssTime(2200, 74700.0)
    d_zen = klobuchar_delay(t, LLH, 1.0, math.pi / 2, coef)
    d_low = klobuchar_delay(t, LLH, 1.0, math.pi / 18, coef)
    assert d_low > d_zen


def test_worked_example_matches_independent_recipe():
    # frozen from the step-by-step recipe in tests/oracles.py
    t = GnssTime(2200, 74700.0)
    d = klobuchar_delay(t, LLH, math.radians(210.0), math.radians(20.0),
                        IonoCoefficients(ALPHA, BETA))
    assert d == pytest.approx(3.261779, abs=0.01)
    ref = klobuchar_reference(74700.0, 40.0, -100.0, 210.0, 20.0, ALPHA, BETA)
    assert d == pytest.approx(ref, abs=1e-9)


def test_oracle_agreement_over_grid():
    coef = IonoCoefficients(ALPHA, BETA)
    for tow in (0.0, 30000.0, 50400.0, 80000.0):
        for el_deg in (5.0, 15.0, 35.0, 60.0, 90.0):
            for az_deg in (0.0, 120.0, 250.0):
                d = klobuchar_delay(GnssTime(2200, tow), LLH,
                                    math.radians(az_deg), math.radians(el_deg), coef)
                ref = klobuchar_reference(tow, 40.0, -100.0, az_deg, el_deg,
                                          ALPHA, BETA)
                assert d == pytest.approx(ref, abs=1e-9)
                assert d >= 0.0


def test_l2_scaling():
    coef = IonoCoefficients(ALPHA, BETA)
    t = GnssTime(2200, 50000.0)
    d1 = klobuchar_delay(t, LLH, 0.5, 0.7, coef)
    d2 = klobuchar_delay(t, LLH, 0.5, 0.7, coef, freq_hz=FREQ_L2)
    assert d2 / d1 == pytest.approx((1575.42 / 1227.60) ** 2, rel=1e-12)


def test_saastamoinen_sea_level_zenith():
    d = saastamoinen_delay(np.array([math.radians(45.0), 0.0, 0.0]), math.pi / 2)
    assert 2.3 < d < 2.5


def test_saastamoinen_decreases_with_height():
    el = math.pi / 2
    d0 = saastamoinen_delay(np.array([0.7, 0.1, 0.0]), el)
    d10k = saastamoinen_delay(np.array([0.7, 0.1, 10000.0]), el)
    assert d10k < d0


def test_saastamoinen_obliquity_close_to_cosecant():
    llh = np.array([math.radians(35.0), 0.3, 50.0])
    zen = saastamoinen_delay(llh, math.pi / 2)
    slant = saastamoinen_delay(llh, math.pi / 6)
    assert slant == pytest.approx(zen / math.sin(math.pi / 6), rel=0.05)


def test_saastamoinen_low_elevation_clamped():
    llh = np.array([0.5, 0.5, 0.0])
    assert saastamoinen_delay(llh, 0.01) == saastamoinen_delay(llh, 0.05)


def test_delays_nonnegative_finite_nonincreasing_in_elevation():
    coef = IonoCoefficients(ALPHA, BETA)
    t = GnssTime(2200, 30000.0)
    llh = np.array([0.6, 1.2, 100.0])
    els = np.radians(np.arange(6.0, 90.0, 3.0))
    iono = [klobuchar_delay(t, llh, 1.0, el, coef) for el in els]
    tropo = [saastamoinen_delay(llh, el) for el in els]
    for series in (iono, tropo):
        arr = np.array(series)
        assert np.isfinite(arr).all() and (arr >= 0).all()
        assert (np.diff(arr) <= 1e-9).all()
