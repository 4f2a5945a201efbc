"""Deterministic GNSS observable simulator used as a verification oracle.

Generates carrier phase and pseudorange for a scripted trajectory against
a synthetic constellation, with configurable noise processes and injected
integer cycle slips, and emits broadcast ephemeris records that the
ephemeris module reproduces exactly.

The simulator shares the broadcast orbit evaluator with the estimator (so
orbits are consistent by construction and are not independently verified
here), but the full measurement and correction chain - the quantity under
test - is formed independently from the observation model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atmosphere import klobuchar_delay, saastamoinen_delay
from .constants import CLIGHT, GM_BDS, GM_GAL, GM_GLO, GM_GPS, OMGE, OMGE_GLO
from .ephemeris import (
    EphemerisRecord,
    EphemerisStore,
    GlonassState,
    KeplerElements,
    sat_state,
)
from .geodesy import az_el, ecef2llh, enu_matrix, llh2ecef, rotate_to_reception
from .gnsstime import GnssTime
from .types import (
    Band,
    CarrierPhaseObs,
    Constellation,
    GnssError,
    IonoCoefficients,
    ObservationEpoch,
    SatId,
    carrier_frequency,
)

# orbit radius and nominal inclination per constellation for synthesized orbits
_ORBIT_RADIUS = {
    Constellation.GPS: 26560e3,
    Constellation.QZSS: 42164e3,
    Constellation.GLONASS: 25510e3,
    Constellation.GALILEO: 29600e3,
    Constellation.BEIDOU: 27906e3,
}
_ORBIT_INCL_DEG = {
    Constellation.GPS: 55.0,
    Constellation.QZSS: 43.0,
    Constellation.GLONASS: 64.8,
    Constellation.GALILEO: 56.0,
    Constellation.BEIDOU: 55.0,
}
_GM_SIM = {
    Constellation.GPS: GM_GPS,
    Constellation.QZSS: GM_GPS,
    Constellation.GALILEO: GM_GAL,
    Constellation.BEIDOU: GM_BDS,
}

# 2004-vintage broadcast Klobuchar coefficients, used when atmosphere is on
DEFAULT_IONO = IonoCoefficients(
    alpha=[0.1118e-07, -0.7451e-08, -0.5961e-07, 0.1192e-06],
    beta=[0.1167e+06, -0.2294e+06, -0.1311e+06, 0.1049e+07],
)

DEFAULT_T0 = GnssTime(2200, 208800.0)
DEFAULT_SITE_LLH = (math.radians(35.0), math.radians(135.0), 50.0)


@dataclass
class SatSpec:
    """One simulated satellite: initial look angles and clock polynomial."""

    sat: str                 # e.g. "G06"
    az_deg: float
    el_deg: float
    af0: float = 0.0         # [s]
    af1: float = 0.0         # [s/s]
    fcn: int = 0             # GLONASS frequency channel

    def sat_id(self) -> SatId:
        sid = SatId.from_str(self.sat)
        if sid.constellation is Constellation.GLONASS:
            return SatId(sid.constellation, sid.prn, self.fcn)
        return sid


@dataclass
class SlipEvent:
    sat: str
    epoch_s: float           # seconds after scenario start
    cycles: int


@dataclass
class ScenarioConfig:
    name: str = "custom"
    t0: GnssTime = field(default_factory=lambda: DEFAULT_T0)
    duration_s: float = 100.0
    rate_hz: float = 1.0
    waypoints: list[tuple[float, float, float, float]] = field(default_factory=list)
    satellites: list[SatSpec] = field(default_factory=list)
    phase_sigma_m: float = 0.0
    pr_sigma_m: float = 0.0
    clock_walk_m: float = 0.0          # receiver clock random walk [m/sqrt(s)]
    sat_clock_walk_m: float = 0.0      # unmodeled satellite clock error process
    slips: list[SlipEvent] = field(default_factory=list)
    lli_prob: float = 0.5
    dual_freq: bool = False
    atmosphere: bool = False
    humidity: float = 0.7
    seed: int = 20220301

    def n_epochs(self) -> int:
        return int(round(self.duration_s * self.rate_hz))

    def position(self, t_s: float) -> np.ndarray:
        """Linear interpolation between waypoints (constant outside)."""
        wp = self.waypoints
        if not wp:
            raise GnssError("scenario has no waypoints")
        if t_s <= wp[0][0] or len(wp) == 1:
            return np.array(wp[0][1:4])
        for (s0, *p0), (s1, *p1) in zip(wp, wp[1:]):
            if t_s <= s1:
                f = (t_s - s0) / (s1 - s0)
                return (1.0 - f) * np.array(p0) + f * np.array(p1)
        return np.array(wp[-1][1:4])

    def validate(self) -> None:
        if self.n_epochs() < 1:
            raise GnssError("empty scenario: duration x rate yields no epochs")
        if not self.waypoints:
            raise GnssError("scenario has no waypoints")
        if not self.satellites:
            raise GnssError("scenario has no satellites")
        names = {s.sat for s in self.satellites}
        for ev in self.slips:
            if ev.sat not in names:
                raise GnssError(f"slip on unknown satellite {ev.sat}")
            if not 0.0 <= ev.epoch_s < self.duration_s:
                raise GnssError(f"slip epoch {ev.epoch_s} outside scenario duration")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "t0": {"week": self.t0.week, "tow": self.t0.tow},
            "duration_s": self.duration_s,
            "rate_hz": self.rate_hz,
            "waypoints": [list(w) for w in self.waypoints],
            "satellites": [{"sat": s.sat, "az_deg": s.az_deg, "el_deg": s.el_deg,
                            "af0": s.af0, "af1": s.af1, "fcn": s.fcn}
                           for s in self.satellites],
            "phase_sigma_m": self.phase_sigma_m,
            "pr_sigma_m": self.pr_sigma_m,
            "clock_walk_m": self.clock_walk_m,
            "sat_clock_walk_m": self.sat_clock_walk_m,
            "slips": [{"sat": e.sat, "epoch_s": e.epoch_s, "cycles": e.cycles}
                      for e in self.slips],
            "lli_prob": self.lli_prob,
            "dual_freq": self.dual_freq,
            "atmosphere": self.atmosphere,
            "humidity": self.humidity,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        cfg = cls(
            name=data.get("name", "custom"),
            t0=GnssTime(**data["t0"]) if "t0" in data else DEFAULT_T0,
            duration_s=float(data.get("duration_s", 100.0)),
            rate_hz=float(data.get("rate_hz", 1.0)),
            waypoints=[tuple(w) for w in data.get("waypoints", [])],
            satellites=[SatSpec(**s) for s in data.get("satellites", [])],
            phase_sigma_m=float(data.get("phase_sigma_m", 0.0)),
            pr_sigma_m=float(data.get("pr_sigma_m", 0.0)),
            clock_walk_m=float(data.get("clock_walk_m", 0.0)),
            sat_clock_walk_m=float(data.get("sat_clock_walk_m", 0.0)),
            slips=[SlipEvent(**e) for e in data.get("slips", [])],
            lli_prob=float(data.get("lli_prob", 0.5)),
            dual_freq=bool(data.get("dual_freq", False)),
            atmosphere=bool(data.get("atmosphere", False)),
            humidity=float(data.get("humidity", 0.7)),
            seed=int(data.get("seed", 20220301)),
        )
        return cfg


@dataclass
class TruthBundle:
    times: list[GnssTime]
    positions: np.ndarray    # (N, 3) ECEF [m]
    clock_m: np.ndarray      # receiver clock bias series [m]
    slips: dict[SatId, np.ndarray]   # cumulative cycles per epoch
    events: list[tuple[SatId, int, int]]  # (sat, epoch index, cycles)


@dataclass
class SimOutput:
    epochs: list[ObservationEpoch]
    store: EphemerisStore
    truth: TruthBundle
    iono: IonoCoefficients
    config: ScenarioConfig


def _los_point(site: np.ndarray, az: float, el: float, radius: float) -> np.ndarray:
    """Point at the given look angles from the site, at orbit radius."""
    llh = ecef2llh(site)
    enu_dir = np.array([math.sin(az) * math.cos(el),
                        math.cos(az) * math.cos(el),
                        math.sin(el)])
    u = enu_matrix(llh[0], llh[1]).T @ enu_dir
    su = float(site @ u)
    rho = -su + math.sqrt(su * su + radius * radius - float(site @ site))
    return site + rho * u


def _plane_through(point: np.ndarray, incl: float) -> np.ndarray:
    """Unit orbit normal with inclination incl containing the given point."""
    r_hat = point / np.linalg.norm(point)
    z = np.array([0.0, 0.0, 1.0])
    w1 = z - (z @ r_hat) * r_hat
    w1 /= np.linalg.norm(w1)
    w2 = np.cross(r_hat, z)
    w2 /= np.linalg.norm(w2)
    cos_phi = float(w1 @ z)
    a = math.cos(incl) / cos_phi
    b = math.sqrt(max(1.0 - a * a, 0.0))
    return a * w1 + b * w2


def kepler_through_los(site: np.ndarray, az: float, el: float, toe: GnssTime,
                       constellation: Constellation) -> KeplerElements:
    """Circular Kepler elements whose broadcast evaluation passes through
    the given look angles from the site exactly at toe."""
    radius = _ORBIT_RADIUS[constellation]
    point = _los_point(site, az, el, radius)
    r_hat = point / np.linalg.norm(point)
    phi = math.asin(float(r_hat[2]))
    incl = math.radians(max(_ORBIT_INCL_DEG[constellation], math.degrees(abs(phi)) + 5.0))
    n_hat = _plane_through(point, incl)
    node = np.cross(np.array([0.0, 0.0, 1.0]), n_hat)
    node /= np.linalg.norm(node)
    m_hat = np.cross(n_hat, node)
    u0 = math.atan2(float(r_hat @ m_hat), float(r_hat @ node))
    omega_eff = math.atan2(node[1], node[0])
    omge = OMGE
    return KeplerElements(
        sqrt_a=math.sqrt(radius), e=0.0, i0=incl,
        omega0=omega_eff + omge * toe.tow, omega=0.0, m0=u0,
    )


def glonass_state_through_los(site: np.ndarray, az: float, el: float
                              ) -> GlonassState:
    """Broadcast state vector of a circular GLONASS-like orbit through the
    given look angles (ECEF position and Earth-fixed velocity)."""
    radius = _ORBIT_RADIUS[Constellation.GLONASS]
    point = _los_point(site, az, el, radius)
    r_hat = point / np.linalg.norm(point)
    phi = math.asin(float(r_hat[2]))
    incl = math.radians(max(_ORBIT_INCL_DEG[Constellation.GLONASS],
                            math.degrees(abs(phi)) + 5.0))
    n_hat = _plane_through(point, incl)
    t_hat = np.cross(n_hat, r_hat)
    v_inertial = math.sqrt(GM_GLO / radius) * t_hat
    omega = np.array([0.0, 0.0, OMGE_GLO])
    v_ecef = v_inertial - np.cross(omega, point)
    return GlonassState(pos=point, vel=v_ecef, acc=np.zeros(3))


def build_ephemerides(cfg: ScenarioConfig) -> EphemerisStore:
    """Emit broadcast records reproducing the synthesized orbits."""
    store = EphemerisStore()
    site = cfg.position(0.0)
    for spec in cfg.satellites:
        sat = spec.sat_id()
        az, el = math.radians(spec.az_deg), math.radians(spec.el_deg)
        if sat.constellation is Constellation.GLONASS:
            # GLONASS validity is short: chain records, clock kept continuous
            state = glonass_state_through_los(site, az, el)
            toe = cfg.t0
            step = 600.0
            n_rec = max(1, int(math.ceil(cfg.duration_s / step)))
            for k in range(n_rec):
                rec = EphemerisRecord(
                    sat=sat, toe=toe, toc=toe,
                    af0=spec.af0 + spec.af1 * (toe - cfg.t0), af1=spec.af1, af2=0.0,
                    glonass_state=state, health=0)
                store.add(rec)
                if k + 1 < n_rec:
                    nxt = sat_state(rec, toe.add(step))
                    state = GlonassState(pos=nxt.pos, vel=nxt.vel, acc=np.zeros(3))
                    toe = toe.add(step)
        else:
            kepler = kepler_through_los(site, az, el, cfg.t0, sat.constellation)
            store.add(EphemerisRecord(
                sat=sat, toe=cfg.t0, toc=cfg.t0,
                af0=spec.af0, af1=spec.af1, af2=0.0,
                kepler=kepler, health=0))
    return store


def _light_time(store: EphemerisStore, sat: SatId, t: GnssTime,
                receiver: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Geometric light-time solution: reception-frame satellite position,
    range, and broadcast clock bias at transmit time."""
    tau = 0.075
    rec = store.select(sat, t)
    st = None
    pos = None
    for _ in range(10):
        t_tx = t.add(-tau)
        st = sat_state(rec, t_tx)
        pos = rotate_to_reception(st.pos, tau, OMGE)
        rng = float(np.linalg.norm(pos - receiver))
        tau_new = rng / CLIGHT
        if abs(tau_new - tau) < 1e-12:
            tau = tau_new
            break
        tau = tau_new
    return pos, tau * CLIGHT, st.clock_bias


def simulate(cfg: ScenarioConfig) -> SimOutput:
    """Generate observations, ephemerides and truth for a scenario."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    store = build_ephemerides(cfg)
    iono = DEFAULT_IONO if cfg.atmosphere else IonoCoefficients.absent()
    n = cfg.n_epochs()
    dt = 1.0 / cfg.rate_hz
    sats = [spec.sat_id() for spec in cfg.satellites]

    # per-satellite constants drawn first, in listed order, for determinism
    ambiguity = {s: {Band.L1: float(rng.integers(100000, 1000000)),
                     Band.L2: float(rng.integers(100000, 1000000))} for s in sats}

    slip_steps: dict[SatId, dict[int, int]] = {s: {} for s in sats}
    events: list[tuple[SatId, int, int]] = []
    for ev in cfg.slips:
        sat = next(s for s in sats if str(s) == ev.sat)
        idx = int(round(ev.epoch_s * cfg.rate_hz))
        slip_steps[sat][idx] = slip_steps[sat].get(idx, 0) + ev.cycles
        events.append((sat, idx, ev.cycles))

    clock_m = np.zeros(n)
    if cfg.clock_walk_m > 0:
        clock_m = np.cumsum(rng.normal(0.0, cfg.clock_walk_m * math.sqrt(dt), n))
    sat_clock_err = {s: np.zeros(n) for s in sats}
    if cfg.sat_clock_walk_m > 0:
        for s in sats:
            sat_clock_err[s] = np.cumsum(
                rng.normal(0.0, cfg.sat_clock_walk_m * math.sqrt(dt), n))

    epochs: list[ObservationEpoch] = []
    positions = np.zeros((n, 3))
    cum_slips = {s: np.zeros(n) for s in sats}
    times: list[GnssTime] = []
    for k in range(n):
        t = cfg.t0.add(k * dt)
        times.append(t)
        p = cfg.position(k * dt)
        positions[k] = p
        llh = ecef2llh(p)
        obs: list[CarrierPhaseObs] = []
        for spec, sat in zip(cfg.satellites, sats):
            cum = cum_slips[sat][k - 1] if k > 0 else 0.0
            cum += slip_steps[sat].get(k, 0)
            cum_slips[sat][k] = cum

            pos, rng_m, sat_clk = _light_time(store, sat, t, p)
            d_ts = sat_clk + sat_clock_err[sat][k] / CLIGHT
            az, el = az_el(p, pos)
            base = rng_m + clock_m[k] - CLIGHT * d_ts
            snr = 30.0 + 20.0 * math.sin(max(el, 0.0))
            slipped = slip_steps[sat].get(k, 0) != 0
            lli = bool(slipped and rng.random() < cfg.lli_prob)
            for band in (Band.L1, Band.L2) if cfg.dual_freq else (Band.L1,):
                freq = carrier_frequency(sat, band)
                lam = CLIGHT / freq
                iono_m = tropo_m = 0.0
                if cfg.atmosphere:
                    iono_m = klobuchar_delay(t, llh, az, el, iono, freq)
                    tropo_m = saastamoinen_delay(llh, el, cfg.humidity)
                pr = base + iono_m + tropo_m
                if cfg.pr_sigma_m > 0:
                    pr += rng.normal(0.0, cfg.pr_sigma_m)
                cycles = cum if band is Band.L1 else 0.0
                phase = (base - iono_m + tropo_m) / lam + ambiguity[sat][band] + cycles
                if cfg.phase_sigma_m > 0:
                    phase += rng.normal(0.0, cfg.phase_sigma_m) / lam
                obs.append(CarrierPhaseObs(
                    sat=sat, band=band, phase=phase, pseudorange=pr,
                    wavelength=lam, lli=lli if band is Band.L1 else False,
                    snr=round(snr, 1)))
        epochs.append(ObservationEpoch(time=t, obs=obs))

    truth = TruthBundle(times=times, positions=positions, clock_m=clock_m,
                        slips=cum_slips, events=events)
    return SimOutput(epochs=epochs, store=store, truth=truth, iono=iono,
                     config=cfg)


# ---------------------------------------------------------------------------
# canned scenarios

def _site_ecef() -> np.ndarray:
    return llh2ecef(*DEFAULT_SITE_LLH)


def _static_waypoint() -> list[tuple[float, float, float, float]]:
    p = _site_ecef()
    return [(0.0, float(p[0]), float(p[1]), float(p[2]))]


def scenario_static_noiseless(duration_s: float = 100.0,
                              atmosphere: bool = False) -> ScenarioConfig:
    """Eight GPS satellites, static receiver, all error processes zero."""
    els = [70, 55, 45, 40, 35, 30, 25, 15]
    azs = [10, 60, 110, 160, 210, 250, 300, 340]
    sats = [SatSpec(sat=f"G{i + 1:02d}", az_deg=az, el_deg=el,
                    af0=(i - 4) * 2e-5, af1=(i - 4) * 1e-12)
            for i, (az, el) in enumerate(zip(azs, els))]
    return ScenarioConfig(
        name="static-noiseless", duration_s=duration_s, rate_hz=1.0,
        waypoints=_static_waypoint(), satellites=sats,
        atmosphere=atmosphere, seed=1)


def scenario_low_elevation_slips(seed: int = 2) -> ScenarioConfig:
    """Static 400 s scenario with slips on three low-elevation satellites:
    the desk-scale analog of an open-sky static test.

    A near-zenith pair plus a mid-elevation ring keeps the vertical
    dilution of precision low, so the trajectory error reflects the phase
    noise floor rather than geometry."""
    high = [(88, 0), (80, 180), (31, 18), (29, 90), (30, 162), (28, 234), (32, 306)]
    low = [(14, 60), (13, 130), (12, 240)]
    sats = []
    for i, (el, az) in enumerate(high + low):
        sats.append(SatSpec(sat=f"G{i + 1:02d}", az_deg=az, el_deg=el,
                            af0=(i - 5) * 2e-5, af1=(i - 5) * 1e-12))
    slips = [SlipEvent(sat="G08", epoch_s=100.0, cycles=1),
             SlipEvent(sat="G09", epoch_s=200.0, cycles=-2),
             SlipEvent(sat="G10", epoch_s=280.0, cycles=5)]
    return ScenarioConfig(
        name="static-low-el-slips", duration_s=400.0, rate_hz=1.0,
        waypoints=_static_waypoint(), satellites=sats,
        phase_sigma_m=0.003, pr_sigma_m=0.3, clock_walk_m=0.3,
        slips=slips, lli_prob=0.5, dual_freq=True, atmosphere=False,
        seed=seed)


def scenario_mixed_static(duration_s: float = 60.0) -> ScenarioConfig:
    """Multi-constellation static scenario exercising all record types."""
    sats = [
        SatSpec(sat="G03", az_deg=20, el_deg=65, af0=3e-5),
        SatSpec(sat="G14", az_deg=80, el_deg=50, af0=-2e-5),
        SatSpec(sat="G22", az_deg=140, el_deg=40, af0=1e-5),
        SatSpec(sat="G31", az_deg=200, el_deg=30, af0=-4e-5),
        SatSpec(sat="E05", az_deg=260, el_deg=55, af0=2e-5),
        SatSpec(sat="E11", az_deg=320, el_deg=45, af0=-1e-5),
        SatSpec(sat="E24", az_deg=50, el_deg=25, af0=4e-5),
        SatSpec(sat="C08", az_deg=110, el_deg=60, af0=-3e-5),
        SatSpec(sat="C19", az_deg=170, el_deg=35, af0=1.5e-5),
        SatSpec(sat="R07", az_deg=230, el_deg=50, af0=2.5e-5, fcn=3),
        SatSpec(sat="R15", az_deg=290, el_deg=28, af0=-1.5e-5, fcn=-2),
        SatSpec(sat="J01", az_deg=350, el_deg=70, af0=5e-6),
    ]
    return ScenarioConfig(
        name="mixed-static", duration_s=duration_s, rate_hz=1.0,
        waypoints=_static_waypoint(), satellites=sats,
        phase_sigma_m=0.003, pr_sigma_m=0.5, clock_walk_m=0.3,
        dual_freq=False, atmosphere=False, seed=7)


def scenario_kinematic(duration_s: float = 120.0, seed: int = 5) -> ScenarioConfig:
    """Walking-pace rectangle at constant height, mild noise, one slip."""
    site = _site_ecef()
    llh = ecef2llh(site)
    east, north = enu_matrix(llh[0], llh[1])[0], enu_matrix(llh[0], llh[1])[1]
    corners = [(0.0, 0.0), (40.0, 0.0), (40.0, 30.0), (0.0, 30.0), (0.0, 0.0)]
    seg = duration_s / (len(corners) - 1)
    waypoints = []
    for i, (e, n_) in enumerate(corners):
        p = site + e * east + n_ * north
        waypoints.append((i * seg, float(p[0]), float(p[1]), float(p[2])))
    base = scenario_low_elevation_slips(seed=seed)
    return ScenarioConfig(
        name="kinematic-rectangle", duration_s=duration_s, rate_hz=1.0,
        waypoints=waypoints, satellites=base.satellites,
        phase_sigma_m=0.003, pr_sigma_m=0.5, clock_walk_m=0.5,
        slips=[SlipEvent(sat="G09", epoch_s=60.0, cycles=2)],
        lli_prob=0.5, dual_freq=True, atmosphere=False, seed=seed)


BUILTIN_SCENARIOS = {
    "static-noiseless": scenario_static_noiseless,
    "static-low-el-slips": scenario_low_elevation_slips,
    "mixed-static": scenario_mixed_static,
    "kinematic-rectangle": scenario_kinematic,
}
