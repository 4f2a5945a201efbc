"""Klobuchar ionospheric and Saastamoinen tropospheric delay models.

Both delays are evaluated per epoch at the receiver's approximate position
and subtracted from the observations before any time differencing.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .constants import CLIGHT, FREQ_L1
from .gnsstime import GnssTime
from .types import IonoCoefficients

log = logging.getLogger(__name__)


def klobuchar_delay(t: GnssTime, user_llh: np.ndarray, az: float, el: float,
                    coef: IonoCoefficients, freq_hz: float = FREQ_L1) -> float:
    """Single-frequency ionospheric group delay in meters (L1 by default).

    Standard 8-coefficient Klobuchar broadcast model; angles in radians,
    user_llh as (lat rad, lon rad, height m). Other frequencies are scaled
    by (f_L1/f)^2.
    """
    el_sc = el / math.pi  # semicircles
    psi = 0.0137 / (el_sc + 0.11) - 0.022
    phi = user_llh[0] / math.pi + psi * math.cos(az)
    phi = min(max(phi, -0.416), 0.416)
    lam = user_llh[1] / math.pi + psi * math.sin(az) / math.cos(phi * math.pi)
    phi_m = phi + 0.064 * math.cos((lam - 1.617) * math.pi)
    local_t = (43200.0 * lam + t.tow) % 86400.0

    slant = 1.0 + 16.0 * (0.53 - el_sc) ** 3
    h = np.array([1.0, phi_m, phi_m**2, phi_m**3])
    amp = max(float(h @ coef.alpha), 0.0)
    per = max(float(h @ coef.beta), 72000.0)
    x = 2.0 * math.pi * (local_t - 50400.0) / per
    if abs(x) < 1.57:
        vertical = 5e-9 + amp * (1.0 - x * x / 2.0 + x**4 / 24.0)
    else:
        vertical = 5e-9
    delay_l1 = CLIGHT * slant * vertical
    return delay_l1 * (FREQ_L1 / freq_hz) ** 2


def saastamoinen_delay(user_llh: np.ndarray, el: float,
                       humidity: float = 0.7) -> float:
    """Total (dry + wet) tropospheric slant delay in meters.

    Standard atmosphere: 1013.25 hPa at sea level, 15 degC with a
    -6.5 degC/km lapse rate. Elevations below 0.05 rad are clamped.
    """
    if el < 0.05:
        log.warning("saastamoinen: elevation %.3f rad below 0.05, clamped", el)
        el = 0.05
    height = min(max(float(user_llh[2]), -1000.0), 20000.0)
    pressure = 1013.25 * (1.0 - 2.2557e-5 * height) ** 5.2568
    temp_k = 15.0 - 6.5e-3 * height + 273.15
    vapor = 6.108 * humidity * math.exp((17.15 * temp_k - 4684.0) / (temp_k - 38.45))
    zenith = math.pi / 2.0 - el
    return 0.002277 / math.cos(zenith) * (
        pressure + (1255.0 / temp_k + 0.05) * vapor - math.tan(zenith) ** 2)
