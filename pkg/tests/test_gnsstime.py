import numpy as np
import pytest

from gnssodom.gnsstime import GnssTime


def test_tow_normalization():
    t = GnssTime(2200, 604800.0 + 5.0)
    assert t.week == 2201
    assert t.tow == pytest.approx(5.0)
    t = GnssTime(2200, -1.0)
    assert t.week == 2199
    assert t.tow == pytest.approx(604799.0)


def test_subtraction_signed_seconds():
    a = GnssTime(2200, 10.0)
    b = GnssTime(2199, 604790.0)
    assert a - b == pytest.approx(20.0)
    assert b - a == pytest.approx(-20.0)


def test_ordering_across_week_boundary():
    assert GnssTime(2199, 604799.0) < GnssTime(2200, 0.0)
    assert GnssTime(2200, 1.0) > GnssTime(2200, 0.5)
    times = [GnssTime(2200, 3.0), GnssTime(2199, 10.0), GnssTime(2200, 1.0)]
    assert sorted(times) == [GnssTime(2199, 10.0), GnssTime(2200, 1.0), GnssTime(2200, 3.0)]


def test_civil_round_trip():
    t = GnssTime.from_civil(2022, 3, 1, 12, 34, 56.789)
    y, m, d, hh, mm, ss = t.to_civil()
    assert (y, m, d, hh, mm) == (2022, 3, 1, 12, 34)
    assert ss == pytest.approx(56.789, abs=1e-6)


def test_gps_epoch_is_week_zero():
    t = GnssTime.from_civil(1980, 1, 6)
    assert (t.week, t.tow) == (0, 0.0)


def test_add_wraps_week():
    t = GnssTime(2200, 604799.5).add(1.0)
    assert t.week == 2201
    assert t.tow == pytest.approx(0.5)


def test_subsecond_resolution_better_than_millisecond():
    a = GnssTime(2200, 123456.0)
    b = a.add(0.0005)
    assert abs((b - a) - 0.0005) < 1e-9
