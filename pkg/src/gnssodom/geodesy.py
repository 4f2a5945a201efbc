"""ECEF / geodetic / local-tangent-plane conversions and look angles."""

from __future__ import annotations

import math

import numpy as np

from .constants import FE_WGS84, RE_WGS84
from .types import GnssError

_E2 = FE_WGS84 * (2.0 - FE_WGS84)  # first eccentricity squared


def llh2ecef(lat: float, lon: float, height: float) -> np.ndarray:
    """Geodetic (rad, rad, m) to ECEF meters."""
    s, c = math.sin(lat), math.cos(lat)
    n = RE_WGS84 / math.sqrt(1.0 - _E2 * s * s)
    return np.array([
        (n + height) * c * math.cos(lon),
        (n + height) * c * math.sin(lon),
        (n * (1.0 - _E2) + height) * s,
    ])


def ecef2llh(pos: np.ndarray) -> np.ndarray:
    """ECEF meters to geodetic (lat rad, lon rad, height m), iterative."""
    x, y, z = pos
    r2 = x * x + y * y
    lon = math.atan2(y, x)
    zc = z
    n = RE_WGS84
    for _ in range(100):
        zk = zc
        s = zc / math.sqrt(r2 + zc * zc) if r2 + zc * zc > 0 else 0.0
        n = RE_WGS84 / math.sqrt(1.0 - _E2 * s * s)
        zc = z + _E2 * n * s
        if abs(zc - zk) < 1e-4:
            break
    if r2 > 1e-12:
        lat = math.atan2(zc, math.sqrt(r2))
        height = math.sqrt(r2 + zc * zc) - n
    else:
        lat = math.copysign(math.pi / 2.0, z)
        height = abs(z) - RE_WGS84 * math.sqrt(1.0 - _E2)
    return np.array([lat, lon, height])


def enu_matrix(lat: float, lon: float) -> np.ndarray:
    """Rows are the local east/north/up unit vectors in ECEF."""
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def ecef2enu(origin: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """ECEF vector(s) relative to origin expressed in the origin's ENU frame."""
    lat, lon, _ = ecef2llh(origin)
    diff = np.asarray(pos, dtype=float) - np.asarray(origin, dtype=float)
    return diff @ enu_matrix(lat, lon).T


def az_el(user_pos: np.ndarray, sat_pos: np.ndarray) -> tuple[float, float]:
    """Azimuth/elevation (rad) of a satellite seen from an ECEF position."""
    r = float(np.linalg.norm(user_pos))
    if not (RE_WGS84 - 1.1e5) < r < (RE_WGS84 + 1.1e5):
        raise GnssError("user position is not near the Earth's surface")
    enu = ecef2enu(user_pos, sat_pos)
    horiz = math.hypot(enu[0], enu[1])
    el = math.atan2(enu[2], horiz)
    az = math.atan2(enu[0], enu[1]) % (2.0 * math.pi)
    return az, el


def rotate_to_reception(pos: np.ndarray, tau: float, omge: float) -> np.ndarray:
    """Express a transmit-time ECEF position in the reception-time frame.

    Rotates by the Earth rotation accumulated over the signal flight time
    tau, which is the Sagnac correction for geometric ranges.
    """
    theta = omge * tau
    s, c = math.sin(theta), math.cos(theta)
    x, y, z = pos
    return np.array([c * x + s * y, -s * x + c * y, z])
