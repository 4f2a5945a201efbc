"""Independent reference implementations used to freeze expected values.

These are deliberately written as literal transliterations of the standard
recipes, structured differently from the package code (different anomaly
solver, matrix-based rotations), so agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np

CLIGHT = 299792458.0
GM = 3.986005e14
OMEGA_E = 7.2921151467e-5


def klobuchar_reference(tow: float, lat_deg: float, lon_deg: float,
                        az_deg: float, el_deg: float,
                        alpha, beta) -> float:
    """Eight-step broadcast ionosphere recipe, semicircle arithmetic."""
    el = el_deg / 180.0   # semicircles
    az = math.radians(az_deg)
    psi = 0.0137 / (el + 0.11) - 0.022
    phi_i = lat_deg / 180.0 + psi * math.cos(az)
    if phi_i > 0.416:
        phi_i = 0.416
    if phi_i < -0.416:
        phi_i = -0.416
    lam_i = lon_deg / 180.0 + psi * math.sin(az) / math.cos(phi_i * math.pi)
    phi_m = phi_i + 0.064 * math.cos((lam_i - 1.617) * math.pi)
    t = 4.32e4 * lam_i + tow
    t = t % 86400.0
    if t < 0:
        t += 86400.0
    f = 1.0 + 16.0 * (0.53 - el) ** 3
    amp = sum(a * phi_m ** n for n, a in enumerate(alpha))
    per = sum(b * phi_m ** n for n, b in enumerate(beta))
    if amp < 0:
        amp = 0.0
    if per < 72000.0:
        per = 72000.0
    x = 2.0 * math.pi * (t - 50400.0) / per
    if abs(x) < 1.57:
        t_iono = f * (5e-9 + amp * (1 - x**2 / 2 + x**4 / 24))
    else:
        t_iono = f * 5e-9
    return CLIGHT * t_iono


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, s], [0, -s, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]])


def kepler_position_reference(eph: dict, t_sow: float) -> np.ndarray:
    """Textbook broadcast-orbit evaluation via explicit rotation matrices.

    eph keys: sqrt_a, e, i0, omega0, omega, m0, delta_n, idot, omega_dot,
    cuc, cus, crc, crs, cic, cis, toe (seconds of week). Week rollover in
    t_sow - toe is handled the standard way.
    """
    a = eph["sqrt_a"] ** 2
    tk = t_sow - eph["toe"]
    if tk > 302400.0:
        tk -= 604800.0
    if tk < -302400.0:
        tk += 604800.0
    n = math.sqrt(GM / a**3) + eph["delta_n"]
    m = eph["m0"] + n * tk

    # bisection on Kepler's equation (the package uses Newton)
    lo, hi = m - 1.0, m + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - eph["e"] * math.sin(mid) - m > 0:
            hi = mid
        else:
            lo = mid
    ecc_anom = 0.5 * (lo + hi)

    v = math.atan2(math.sqrt(1 - eph["e"] ** 2) * math.sin(ecc_anom),
                   math.cos(ecc_anom) - eph["e"])
    phi = v + eph["omega"]
    du = eph["cus"] * math.sin(2 * phi) + eph["cuc"] * math.cos(2 * phi)
    dr = eph["crs"] * math.sin(2 * phi) + eph["crc"] * math.cos(2 * phi)
    di = eph["cis"] * math.sin(2 * phi) + eph["cic"] * math.cos(2 * phi)
    u = phi + du
    r = a * (1 - eph["e"] * math.cos(ecc_anom)) + dr
    inc = eph["i0"] + di + eph["idot"] * tk
    omega_k = eph["omega0"] + (eph["omega_dot"] - OMEGA_E) * tk - OMEGA_E * eph["toe"]

    # position in the orbital plane at argument of latitude u
    in_plane = np.array([r * math.cos(u), r * math.sin(u), 0.0])
    return _rot_z(-omega_k) @ _rot_x(-inc) @ in_plane


def dense_normal_equation_solution(a: np.ndarray, b: np.ndarray,
                                   w: np.ndarray) -> np.ndarray:
    """Weighted least squares min ||W^(1/2)(Ax - b)|| by explicit inversion."""
    aw = a * w[:, None]
    return np.linalg.inv(a.T @ aw) @ (aw.T @ b)


def huber_rho_reference(r: float, c: float) -> float:
    r = abs(r)
    if r <= c:
        return r * r
    return 2.0 * c * r - c * c
