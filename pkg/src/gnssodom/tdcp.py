"""Corrected time-differenced carrier phase measurements.

A TDCP measurement between epochs t1 and t2 is the phase difference with
the satellite clock, ionosphere and troposphere model corrections applied,
paired with the satellite-motion range change delta_L and the line-of-sight
vector u, both referenced to the receiver's approximate position at t2.
What remains in (corrected - delta_L) is the receiver motion term -u.dp,
the receiver clock change, and any cycle slip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .atmosphere import klobuchar_delay, saastamoinen_delay
from .constants import CLIGHT
from .ephemeris import EphemerisStore, EphemerisUnavailable, observed_state
from .geodesy import az_el, ecef2llh
from .gnsstime import GnssTime
from .types import Band, IonoCoefficients, ObservationEpoch, SatId

DEFAULT_PHASE_SIGMA = 0.003  # carrier phase noise, 1-sigma [m]
DEFAULT_GF_JUMP_THRESHOLD = 0.05  # [m], about a quarter L1 cycle


def phase_sigma(el: float, sigma0: float = DEFAULT_PHASE_SIGMA) -> float:
    return sigma0 / math.sin(max(el, 0.01))


@dataclass
class TdcpMeasurement:
    sat: SatId
    t1: GnssTime
    t2: GnssTime
    corrected: float      # corrected phase difference [m]
    delta_l: float        # satellite-motion range change [m], t2 reference
    u: np.ndarray         # unit line of sight at t2, receiver -> satellite
    variance: float       # [m^2]
    wavelength: float     # [m]
    elevation: float      # at t2 [rad]
    # per-epoch linearization support: the line of sight moves over long
    # pairs, and meter-level reference error times that motion is not
    # negligible, so the factor uses u at each epoch separately
    u1: np.ndarray = None         # unit line of sight at t1
    reference: np.ndarray = None  # common reference point (approx pos at t2)


@dataclass
class SlipEvidence:
    sat: SatId
    t: GnssTime
    lli_flag: bool
    gf_jump: bool
    gf_value: Optional[float] = None  # geometry-free change [m], dual-freq only

    @property
    def slip_likely(self) -> bool:
        return self.lli_flag or self.gf_jump


def cached_observed_state(store: EphemerisStore, sat: SatId, epoch: ObservationEpoch,
                          pseudorange: float,
                          cache: Optional[dict] = None):
    """Transmit-time satellite state, memoized per (satellite, epoch)."""
    if cache is None:
        return observed_state(store, sat, epoch.time, pseudorange)
    key = (sat, epoch.time)
    sv = cache.get(key)
    if sv is None:
        sv = observed_state(store, sat, epoch.time, pseudorange)
        cache[key] = sv
    return sv


def build_tdcp(e1: ObservationEpoch, e2: ObservationEpoch,
               store: EphemerisStore, iono: IonoCoefficients,
               approx_pos1: np.ndarray, approx_pos2: np.ndarray,
               mask_el: float = math.radians(5.0), *,
               apply_atmosphere: bool = True, humidity: float = 0.7,
               sigma0: float = DEFAULT_PHASE_SIGMA,
               state_cache: Optional[dict] = None) -> list[TdcpMeasurement]:
    """Form corrected TDCP measurements for all satellites common to both
    epochs with elevation at t2 of at least mask_el.

    The range-change reference point is fixed at approx_pos2 for both
    epochs, which keeps the residual receiver-motion term linear in the
    position difference with a constant line-of-sight vector.
    """
    p1 = np.asarray(approx_pos1, dtype=float)
    p2 = np.asarray(approx_pos2, dtype=float)
    llh1 = ecef2llh(p1)
    llh2 = ecef2llh(p2)
    out: list[TdcpMeasurement] = []
    for sat in e2.satellites():
        o1 = e1.get(sat, Band.L1)
        o2 = e2.get(sat, Band.L1)
        if o1 is None or o2 is None:
            continue
        if not (math.isfinite(o1.pseudorange) and math.isfinite(o2.pseudorange)):
            continue
        if abs(o1.wavelength - o2.wavelength) > 1e-12:
            continue
        try:
            sv1 = cached_observed_state(store, sat, e1, o1.pseudorange, state_cache)
            sv2 = cached_observed_state(store, sat, e2, o2.pseudorange, state_cache)
        except EphemerisUnavailable:
            continue
        az2, el2 = az_el(p2, sv2.state.pos)
        if el2 < mask_el:
            continue
        range2 = float(np.linalg.norm(sv2.state.pos - p2))
        range1 = float(np.linalg.norm(sv1.state.pos - p2))
        u = (sv2.state.pos - p2) / range2
        diff1 = sv1.state.pos - p1
        u1 = diff1 / np.linalg.norm(diff1)

        lam = o2.wavelength
        corrected = lam * (o2.phase - o1.phase) \
            + CLIGHT * (sv2.state.clock_bias - sv1.state.clock_bias)
        if apply_atmosphere:
            az1, el1 = az_el(p1, sv1.state.pos)
            freq = CLIGHT / lam
            i1 = klobuchar_delay(e1.time, llh1, az1, el1, iono, freq)
            i2 = klobuchar_delay(e2.time, llh2, az2, el2, iono, freq)
            t1d = saastamoinen_delay(llh1, el1, humidity)
            t2d = saastamoinen_delay(llh2, el2, humidity)
            corrected += (i2 - i1) - (t2d - t1d)
        out.append(TdcpMeasurement(
            sat=sat, t1=e1.time, t2=e2.time, corrected=corrected,
            delta_l=range2 - range1, u=u,
            variance=2.0 * phase_sigma(el2, sigma0) ** 2,
            wavelength=lam, elevation=el2, u1=u1, reference=p2))
    return out


def geometry_free(epoch: ObservationEpoch, sat: SatId) -> Optional[float]:
    """lambda1*phase1 - lambda2*phase2 in meters, None without both bands."""
    o1 = epoch.get(sat, Band.L1)
    o2 = epoch.get(sat, Band.L2)
    if o1 is None or o2 is None:
        return None
    return o1.wavelength * o1.phase - o2.wavelength * o2.phase


def detect_slip_evidence(e_prev: ObservationEpoch, e_cur: ObservationEpoch,
                         gf_threshold: float = DEFAULT_GF_JUMP_THRESHOLD
                         ) -> list[SlipEvidence]:
    """Per-satellite slip evidence at the current epoch.

    The loss-of-lock bit is copied from the current observation; the
    geometry-free jump test needs dual-frequency phase at both epochs.
    """
    out = []
    for sat in e_cur.satellites():
        obs = e_cur.get(sat, Band.L1)
        if obs is None:
            continue
        gf_prev = geometry_free(e_prev, sat)
        gf_cur = geometry_free(e_cur, sat)
        gf_value = None
        gf_jump = False
        if gf_prev is not None and gf_cur is not None:
            gf_value = float(gf_cur - gf_prev)
            gf_jump = bool(abs(gf_value) > gf_threshold)
        out.append(SlipEvidence(sat=sat, t=e_cur.time, lli_flag=obs.lli,
                                gf_jump=gf_jump, gf_value=gf_value))
    return out
