"""Single point positioning from pseudoranges.

Supplies the initial graph anchor, per-epoch approximate positions for
TDCP linearization, and satellite look angles. Receiver clock biases are
parameterized as a GPS-time base clock plus per-constellation offsets, so
the solution layout matches the estimator's state nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .atmosphere import klobuchar_delay, saastamoinen_delay
from .constants import CLIGHT, RE_WGS84
from .ephemeris import EphemerisStore, EphemerisUnavailable, observed_state
from .geodesy import az_el, ecef2llh
from .types import (
    CLOCK_SLOT,
    CLOCK_SLOT_ORDER,
    Band,
    GnssError,
    IonoCoefficients,
    ObservationEpoch,
    SatId,
)

__all__ = ["SppError", "SppSolution", "solve_spp", "az_el"]

_SIGMA_A = 0.3  # pseudorange noise model scale [m]


class SppError(GnssError):
    """Epoch could not be positioned (too few satellites, divergence)."""


def pseudorange_sigma(el: float) -> float:
    return _SIGMA_A * (1.0 + 1.0 / math.sin(max(el, 0.01)))


@dataclass
class SppSolution:
    pos: np.ndarray                      # ECEF [m]
    clock: dict[str, float]              # base clock + offsets [m], Eq-style layout
    used_sats: list[SatId]
    sigma: float                         # posterior position std [m]
    iterations: int = 0
    residual_rms: float = 0.0
    base_slot: str = "GPS"

    def clock_for(self, sat: SatId) -> float:
        slot = CLOCK_SLOT[sat.constellation]
        base = self.clock.get(self.base_slot, 0.0)
        if slot == self.base_slot:
            return base
        return base + self.clock.get(slot, 0.0)


@dataclass
class _Candidate:
    sat: SatId
    pseudorange: float
    sat_pos: np.ndarray
    clock_corr: float  # c*(satellite clock incl. relativity) - c*tgd [m]
    slot: str
    az: float = 0.0
    el: float = math.pi / 2.0


def _collect(epoch: ObservationEpoch, store: EphemerisStore,
             receiver_clock=None) -> list[_Candidate]:
    """Evaluate satellite states; an estimated receiver clock (meters per
    slot) is removed from the pseudorange used for the transmit time, so a
    pure clock bias does not shift the satellite evaluation epoch."""
    out = []
    for sat in epoch.satellites():
        obs = epoch.get(sat, Band.L1)
        if obs is None or not math.isfinite(obs.pseudorange):
            continue
        pr_for_time = obs.pseudorange
        if receiver_clock is not None:
            pr_for_time -= receiver_clock(sat)
        try:
            sv = observed_state(store, sat, epoch.time, pr_for_time)
        except EphemerisUnavailable:
            continue
        clock_corr = CLIGHT * sv.state.clock_bias - CLIGHT * sv.record.tgd
        out.append(_Candidate(sat=sat, pseudorange=obs.pseudorange,
                              sat_pos=sv.state.pos, clock_corr=clock_corr,
                              slot=CLOCK_SLOT[sat.constellation]))
    return out


def _active_slots(cands: list[_Candidate], base: str) -> list[str]:
    present = {c.slot for c in cands}
    slots = [base] + [s for s in CLOCK_SLOT_ORDER if s in present and s != base]
    return slots


def _solve(cands: list[_Candidate], x0: np.ndarray, iono: IonoCoefficients,
           t, apply_atmosphere: bool, humidity: float,
           use_weights: bool) -> tuple[np.ndarray, dict[str, float], np.ndarray, int, float, str]:
    base = "GPS" if any(c.slot == "GPS" for c in cands) else cands[0].slot
    slots = _active_slots(cands, base)
    n_par = 3 + len(slots)
    if len(cands) < n_par:
        raise SppError(f"only {len(cands)} usable satellites for {n_par} parameters")
    x = np.concatenate([x0, np.zeros(len(slots))])
    iterations = 0
    for it in range(10):
        iterations = it + 1
        plausible = abs(np.linalg.norm(x[:3]) - RE_WGS84) < 1.5e5
        llh = ecef2llh(x[:3]) if plausible else None
        a = np.zeros((len(cands), n_par))
        resid = np.zeros(len(cands))
        weights = np.ones(len(cands))
        for i, c in enumerate(cands):
            rng = np.linalg.norm(c.sat_pos - x[:3])
            u = (c.sat_pos - x[:3]) / rng
            atmos = 0.0
            if plausible:
                c.az, c.el = az_el(x[:3], c.sat_pos)
                if apply_atmosphere:
                    atmos = (klobuchar_delay(t, llh, c.az, c.el, iono)
                             + saastamoinen_delay(llh, c.el, humidity))
                if use_weights:
                    weights[i] = 1.0 / pseudorange_sigma(c.el) ** 2
            clock_model = x[3] + (x[3 + slots.index(c.slot)] if c.slot != base else 0.0)
            resid[i] = c.pseudorange + c.clock_corr - atmos - rng - clock_model
            a[i, :3] = -u
            a[i, 3] = 1.0
            if c.slot != base:
                a[i, 3 + slots.index(c.slot)] = 1.0
        w_sqrt = np.sqrt(weights)
        dx, *_ = np.linalg.lstsq(a * w_sqrt[:, None], resid * w_sqrt, rcond=None)
        x = x + dx
        if np.linalg.norm(dx[:3]) < 1e-7:
            clock = {slot: float(x[3 + k]) for k, slot in enumerate(slots)}
            rms = float(np.sqrt(np.mean(resid**2)))
            cov = np.linalg.inv(a.T @ (a * weights[:, None]))
            sigma = float(np.sqrt(np.trace(cov[:3, :3]) / 3.0))
            return x[:3], clock, sigma * np.ones(1), iterations, rms, base
    raise SppError("position solution did not converge in 10 iterations")


def solve_spp(epoch: ObservationEpoch, store: EphemerisStore,
              iono: IonoCoefficients, mask_el: float = math.radians(5.0),
              x0: Optional[np.ndarray] = None, apply_atmosphere: bool = True,
              humidity: float = 0.7) -> SppSolution:
    """Iterative weighted least squares on corrected pseudoranges.

    Runs one unmasked, unweighted pass to get a plausible position, applies
    the elevation mask (exclusive) and elevation-dependent weights, then
    refines once with the estimated receiver clock removed from the
    transmit-time computation, so position and clock separate cleanly.
    """
    cands = _collect(epoch, store)
    if len(cands) < 4:
        raise SppError(f"only {len(cands)} usable satellites at tow {epoch.time.tow:.0f}")
    if x0 is None:
        u0 = cands[0].sat_pos / np.linalg.norm(cands[0].sat_pos)
        x0 = RE_WGS84 * u0
    pos, _, _, _, _, _ = _solve(cands, np.asarray(x0, dtype=float), iono,
                                epoch.time, apply_atmosphere, humidity,
                                use_weights=False)

    def masked(cand_list):
        kept = []
        for c in cand_list:
            c.az, c.el = az_el(pos, c.sat_pos)
            if c.el > mask_el:
                kept.append(c)
        if len(kept) < 4:
            raise SppError(f"only {len(kept)} satellites above the elevation mask")
        return kept

    kept = masked(cands)
    pos, clock, sigma, iterations, rms, base = _solve(
        kept, pos, iono, epoch.time, apply_atmosphere, humidity, use_weights=True)
    solution = SppSolution(pos=pos, clock=clock, used_sats=[c.sat for c in kept],
                           sigma=float(sigma[0]), iterations=iterations,
                           residual_rms=rms, base_slot=base)
    for _ in range(2):
        cands = _collect(epoch, store, receiver_clock=solution.clock_for)
        kept = masked(cands)
        pos, clock, sigma, iterations, rms, base = _solve(
            kept, pos, iono, epoch.time, apply_atmosphere, humidity,
            use_weights=True)
        solution = SppSolution(pos=pos, clock=clock,
                               used_sats=[c.sat for c in kept],
                               sigma=float(sigma[0]), iterations=iterations,
                               residual_rms=rms, base_slot=base)
    return solution
