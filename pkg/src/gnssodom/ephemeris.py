"""Broadcast ephemeris evaluation: satellite position, velocity and clock.

Kepler-set constellations follow the standard broadcast algorithm
(eccentric-anomaly iteration, harmonic corrections, Earth-fixed rotation);
GLONASS integrates the broadcast state vector with RK4 including the J2
term and the broadcast luni-solar accelerations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import (
    CLIGHT,
    F_RELATIVITY,
    GM_BDS,
    GM_GAL,
    GM_GLO,
    GM_GPS,
    J2_GLO,
    OMGE,
    OMGE_BDS,
    OMGE_GLO,
    RE_GLO,
)
from .geodesy import rotate_to_reception
from .gnsstime import GnssTime
from .types import Constellation, GnssError, SatId


class EphemerisUnavailable(GnssError):
    """No usable broadcast record for a satellite at the requested time."""


class EphemerisCorrupt(GnssError):
    """Record evaluation failed (e.g. Kepler iteration did not converge)."""


_GM = {
    Constellation.GPS: GM_GPS,
    Constellation.QZSS: GM_GPS,
    Constellation.GALILEO: GM_GAL,
    Constellation.BEIDOU: GM_BDS,
}
_OMGE = {
    Constellation.GPS: OMGE,
    Constellation.QZSS: OMGE,
    Constellation.GALILEO: OMGE,
    Constellation.BEIDOU: OMGE_BDS,
}

# validity window half-widths [s], per constellation interface documents
DEFAULT_VALIDITY = {
    Constellation.GPS: 7200.0,
    Constellation.QZSS: 7200.0,
    Constellation.GALILEO: 7200.0,
    Constellation.BEIDOU: 3600.0,
    Constellation.GLONASS: 900.0,
}


@dataclass
class KeplerElements:
    sqrt_a: float
    e: float
    i0: float
    omega0: float
    omega: float
    m0: float
    delta_n: float = 0.0
    idot: float = 0.0
    omega_dot: float = 0.0
    cuc: float = 0.0
    cus: float = 0.0
    crc: float = 0.0
    crs: float = 0.0
    cic: float = 0.0
    cis: float = 0.0


@dataclass
class GlonassState:
    pos: np.ndarray  # ECEF (PZ-90) [m]
    vel: np.ndarray  # [m/s]
    acc: np.ndarray  # broadcast luni-solar acceleration [m/s^2]

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        self.acc = np.asarray(self.acc, dtype=float)


@dataclass
class EphemerisRecord:
    sat: SatId
    toe: GnssTime
    toc: GnssTime
    af0: float
    af1: float
    af2: float
    kepler: Optional[KeplerElements] = None
    glonass_state: Optional[GlonassState] = None
    tgd: float = 0.0
    health: int = 0
    iode: int = 0

    def __post_init__(self):
        if (self.kepler is None) == (self.glonass_state is None):
            raise GnssError("record needs exactly one of kepler / glonass_state")
        if self.kepler is not None:
            if not 0.0 <= self.kepler.e < 0.1:
                raise GnssError(f"eccentricity {self.kepler.e} out of range")
            if not self.kepler.sqrt_a > 0:
                raise GnssError("sqrt_a must be positive")


@dataclass
class SatelliteState:
    pos: np.ndarray        # ECEF [m]
    vel: np.ndarray        # ECEF [m/s]
    clock_bias: float      # [s]
    clock_drift: float     # [s/s]


class EphemerisStore:
    """Broadcast records keyed by satellite, with nearest-toe selection."""

    def __init__(self, validity: Optional[dict[Constellation, float]] = None):
        self._records: dict[SatId, list[EphemerisRecord]] = {}
        self.validity = dict(DEFAULT_VALIDITY)
        if validity:
            self.validity.update(validity)

    def add(self, record: EphemerisRecord) -> None:
        key = SatId(record.sat.constellation, record.sat.prn)
        self._records.setdefault(key, []).append(record)
        self._records[key].sort(key=lambda r: (r.toe.week, r.toe.tow))

    def satellites(self) -> list[SatId]:
        return sorted(self._records, key=lambda s: s.sort_key())

    def records(self) -> list[EphemerisRecord]:
        return [r for sat in self.satellites() for r in self._records[sat]]

    def __len__(self) -> int:
        return sum(len(v) for v in self._records.values())

    def glonass_fcn(self) -> dict[SatId, int]:
        out = {}
        for sat, recs in self._records.items():
            if sat.constellation is Constellation.GLONASS and recs:
                fcn = recs[-1].sat.fcn
                if fcn is not None:
                    out[sat] = fcn
        return out

    def select(self, sat: SatId, t: GnssTime) -> EphemerisRecord:
        """Healthy record with minimal |t - toe| inside the validity window."""
        key = SatId(sat.constellation, sat.prn)
        records = self._records.get(key)
        if not records:
            raise EphemerisUnavailable(f"no ephemeris for {sat}")
        healthy = [r for r in records if r.health == 0]
        if not healthy:
            raise EphemerisUnavailable(f"all records for {sat} are unhealthy")
        best = min(healthy, key=lambda r: abs(t - r.toe))
        if abs(t - best.toe) > self.validity[sat.constellation]:
            raise EphemerisUnavailable(
                f"no ephemeris for {sat} within validity window at tow {t.tow:.0f}")
        return best


def select_ephemeris(store: EphemerisStore, sat: SatId, t: GnssTime) -> EphemerisRecord:
    return store.select(sat, t)


def _eccentric_anomaly(m: float, e: float) -> float:
    ek = m
    for _ in range(30):
        delta = (ek - e * math.sin(ek) - m) / (1.0 - e * math.cos(ek))
        ek -= delta
        if abs(delta) < 1e-12:
            return ek
    raise EphemerisCorrupt("Kepler eccentric-anomaly iteration did not converge")


def _is_beidou_geo(sat: SatId) -> bool:
    return sat.constellation is Constellation.BEIDOU and (sat.prn <= 5 or sat.prn >= 59)


def _kepler_state(rec: EphemerisRecord, t: GnssTime) -> SatelliteState:
    k = rec.kepler
    gm = _GM[rec.sat.constellation]
    omge = _OMGE[rec.sat.constellation]
    a = k.sqrt_a * k.sqrt_a
    n = math.sqrt(gm / a**3) + k.delta_n
    tk = t - rec.toe
    mk = k.m0 + n * tk
    ek = _eccentric_anomaly(mk, k.e)
    sin_e, cos_e = math.sin(ek), math.cos(ek)

    vk = math.atan2(math.sqrt(1.0 - k.e**2) * sin_e, cos_e - k.e)
    phi = vk + k.omega
    s2p, c2p = math.sin(2.0 * phi), math.cos(2.0 * phi)
    du = k.cus * s2p + k.cuc * c2p
    dr = k.crs * s2p + k.crc * c2p
    di = k.cis * s2p + k.cic * c2p
    u = phi + du
    r = a * (1.0 - k.e * cos_e) + dr
    i = k.i0 + di + k.idot * tk
    xp = r * math.cos(u)
    yp = r * math.sin(u)

    # time derivatives for the analytic velocity
    ek_dot = n / (1.0 - k.e * cos_e)
    vk_dot = ek_dot * math.sqrt(1.0 - k.e**2) / (1.0 - k.e * cos_e)
    u_dot = vk_dot * (1.0 + 2.0 * (k.cus * c2p - k.cuc * s2p))
    r_dot = a * k.e * sin_e * ek_dot + 2.0 * vk_dot * (k.crs * c2p - k.crc * s2p)
    i_dot = k.idot + 2.0 * vk_dot * (k.cis * c2p - k.cic * s2p)
    xp_dot = r_dot * math.cos(u) - yp * u_dot
    yp_dot = r_dot * math.sin(u) + xp * u_dot

    geo = _is_beidou_geo(rec.sat)
    if geo:
        # BeiDou GEO: nodal rotation without Earth rate, then tilt and spin
        om = k.omega0 + k.omega_dot * tk - omge * rec.toe.tow
        om_dot = k.omega_dot
    else:
        om = k.omega0 + (k.omega_dot - omge) * tk - omge * rec.toe.tow
        om_dot = k.omega_dot - omge
    so, co = math.sin(om), math.cos(om)
    si, ci = math.sin(i), math.cos(i)
    pos = np.array([xp * co - yp * ci * so,
                    xp * so + yp * ci * co,
                    yp * si])
    vel = np.array([
        xp_dot * co - yp_dot * ci * so - pos[1] * om_dot + yp * si * so * i_dot,
        xp_dot * so + yp_dot * ci * co + pos[0] * om_dot - yp * si * co * i_dot,
        yp_dot * si + yp * ci * i_dot,
    ])
    if geo:
        ang = omge * tk
        sg, cg = math.sin(ang), math.cos(ang)
        sx, cx = math.sin(math.radians(-5.0)), math.cos(math.radians(-5.0))
        rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, sx], [0.0, -sx, cx]])
        rz = np.array([[cg, sg, 0.0], [-sg, cg, 0.0], [0.0, 0.0, 1.0]])
        rz_dot = omge * np.array([[-sg, cg, 0.0], [-cg, -sg, 0.0], [0.0, 0.0, 0.0]])
        pos_g = rz @ rx @ pos
        vel = rz @ rx @ vel + rz_dot @ rx @ pos
        pos = pos_g

    dt = t - rec.toc
    rel = F_RELATIVITY * k.e * k.sqrt_a * sin_e
    rel_dot = F_RELATIVITY * k.e * k.sqrt_a * cos_e * ek_dot
    clock = rec.af0 + rec.af1 * dt + rec.af2 * dt * dt + rel
    drift = rec.af1 + 2.0 * rec.af2 * dt + rel_dot
    return SatelliteState(pos=pos, vel=vel, clock_bias=clock, clock_drift=drift)


def _glonass_deriv(y: np.ndarray, acc: np.ndarray) -> np.ndarray:
    x, v = y[:3], y[3:]
    r = np.linalg.norm(x)
    a = -GM_GLO / r**3 * x
    k = 1.5 * J2_GLO * GM_GLO * RE_GLO**2 / r**5
    z2 = (x[2] / r) ** 2
    a += k * x * np.array([5.0 * z2 - 1.0, 5.0 * z2 - 1.0, 5.0 * z2 - 3.0])
    a[0] += OMGE_GLO**2 * x[0] + 2.0 * OMGE_GLO * v[1] + acc[0]
    a[1] += OMGE_GLO**2 * x[1] - 2.0 * OMGE_GLO * v[0] + acc[1]
    a[2] += acc[2]
    return np.concatenate([v, a])


def _glonass_state(rec: EphemerisRecord, t: GnssTime, max_step: float = 60.0) -> SatelliteState:
    g = rec.glonass_state
    y = np.concatenate([g.pos, g.vel])
    remaining = t - rec.toe
    while abs(remaining) > 1e-9:
        h = math.copysign(min(abs(remaining), max_step), remaining)
        k1 = _glonass_deriv(y, g.acc)
        k2 = _glonass_deriv(y + 0.5 * h * k1, g.acc)
        k3 = _glonass_deriv(y + 0.5 * h * k2, g.acc)
        k4 = _glonass_deriv(y + h * k3, g.acc)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        remaining -= h
    dt = t - rec.toc
    clock = rec.af0 + rec.af1 * dt + rec.af2 * dt * dt
    drift = rec.af1 + 2.0 * rec.af2 * dt
    return SatelliteState(pos=y[:3].copy(), vel=y[3:].copy(),
                          clock_bias=clock, clock_drift=drift)


def sat_state(rec: EphemerisRecord, t: GnssTime, glonass_max_step: float = 60.0) -> SatelliteState:
    """Satellite ECEF state and clock at time t (no Earth-rotation alignment)."""
    if rec.kepler is not None:
        return _kepler_state(rec, t)
    return _glonass_state(rec, t, glonass_max_step)


def clock_bias(rec: EphemerisRecord, t: GnssTime) -> float:
    """Clock bias only; cheaper than a full state evaluation for GLONASS."""
    if rec.kepler is not None:
        return _kepler_state(rec, t).clock_bias
    dt = t - rec.toc
    return rec.af0 + rec.af1 * dt + rec.af2 * dt * dt


def signal_transmit_time(pseudorange: float, t_receive: GnssTime,
                         rec: EphemerisRecord) -> GnssTime:
    """Transmit time from the pseudorange, corrected for the satellite clock."""
    offset = pseudorange / CLIGHT
    t_tx = t_receive.add(-offset)
    for _ in range(2):
        t_tx = t_receive.add(-offset - clock_bias(rec, t_tx))
    return t_tx


@dataclass
class ObservedSatellite:
    """Satellite state aligned to the reception-time ECEF frame."""

    sat: SatId
    state: SatelliteState
    t_transmit: GnssTime
    record: EphemerisRecord = field(repr=False, default=None)


def observed_state(store: EphemerisStore, sat: SatId, t_receive: GnssTime,
                   pseudorange: float) -> ObservedSatellite:
    """Evaluate a satellite at transmit time and rotate it into the
    reception frame, so geometric ranges are plain Euclidean distances."""
    rec = store.select(sat, t_receive)
    t_tx = signal_transmit_time(pseudorange, t_receive, rec)
    st = sat_state(rec, t_tx)
    tau = t_receive - t_tx
    pos = rotate_to_reception(st.pos, tau, OMGE)
    vel = rotate_to_reception(st.vel, tau, OMGE)
    return ObservedSatellite(
        sat=rec.sat, t_transmit=t_tx, record=rec,
        state=SatelliteState(pos=pos, vel=vel, clock_bias=st.clock_bias,
                             clock_drift=st.clock_drift))
