import math

import numpy as np
import pytest

from gnssodom.constants import OMGE, RE_WGS84
from gnssodom.geodesy import az_el, ecef2enu, ecef2llh, llh2ecef, rotate_to_reception
from gnssodom.types import GnssError


def test_llh_ecef_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        lat = rng.uniform(-1.4, 1.4)
        lon = rng.uniform(-math.pi, math.pi)
        h = rng.uniform(-100, 9000)
        back = ecef2llh(llh2ecef(lat, lon, h))
        assert back[0] == pytest.approx(lat, abs=1e-11)
        assert back[1] == pytest.approx(lon, abs=1e-11)
        assert back[2] == pytest.approx(h, abs=1e-4)


def test_zenith_satellite_elevation():
    lat, lon = math.radians(35.0), math.radians(135.0)
    user = llh2ecef(lat, lon, 0.0)
    up = llh2ecef(lat, lon, 2e7) - user
    sat = user + up
    _, el = az_el(user, sat)
    assert el == pytest.approx(math.pi / 2, abs=1e-9)


def test_horizon_satellite_elevation():
    user = llh2ecef(0.3, 0.5, 0.0)
    enu_e = np.array([1.0, 0.0, 0.0])
    lat, lon, _ = ecef2llh(user)
    from gnssodom.geodesy import enu_matrix
    sat = user + enu_matrix(lat, lon).T @ (2.5e7 * np.array([1.0, 0.0, 0.0]))
    az, el = az_el(user, sat)
    assert el == pytest.approx(0.0, abs=1e-9)
    assert az == pytest.approx(math.pi / 2, abs=1e-9)


def test_cross_hemisphere_hand_case():
    # receiver on the equator at lon 0; satellite above (0, 90E) at 26560 km
    # geocentric radius: hand geometry gives az due east and el
    # atan2(-6378137, 26560000) [worked out by projecting onto ENU axes]
    user = np.array([RE_WGS84, 0.0, 0.0])
    sat = np.array([0.0, 26560e3, 0.0])
    az, el = az_el(user, sat)
    assert az == pytest.approx(math.pi / 2, abs=1e-12)
    assert el == pytest.approx(math.atan2(-RE_WGS84, 26560e3), abs=1e-12)


def test_az_el_rejects_non_surface_position():
    with pytest.raises(GnssError):
        az_el(np.array([1e5, 0.0, 0.0]), np.array([2.6e7, 0.0, 0.0]))


def test_rotation_matches_sagnac_linearization():
    # when tau is the light time, the rotation-induced range change equals
    # the textbook Sagnac term omge/c * (xs*yr - ys*xr)
    sat = np.array([15e6, 21e6, 8e6])
    rcv = np.array([RE_WGS84, 2e5, 1e5])
    r_raw = np.linalg.norm(sat - rcv)
    tau = r_raw / 299792458.0
    rotated = rotate_to_reception(sat, tau, OMGE)
    r_rot = np.linalg.norm(rotated - rcv)
    sagnac = OMGE / 299792458.0 * (sat[0] * rcv[1] - sat[1] * rcv[0])
    assert r_rot - r_raw == pytest.approx(sagnac, rel=1e-4)


def test_enu_round_trip_consistency():
    origin = llh2ecef(0.6, 2.0, 120.0)
    points = origin + np.array([[10.0, -5.0, 3.0], [0.0, 0.0, 0.0]])
    enu = ecef2enu(origin, points)
    assert np.allclose(enu[1], 0.0, atol=1e-9)
    assert np.linalg.norm(enu[0]) == pytest.approx(np.linalg.norm(points[0] - origin), rel=1e-12)
