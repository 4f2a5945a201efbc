"""Trajectory and cycle-slip estimation over a TDCP factor graph.

States are per-epoch ECEF positions with per-constellation receiver clock
biases (meters, expressed as a GPS-time base clock plus offsets). Every
tracked satellite carries a chain of cumulative-slip variables tied by
continuity factors whose strength is relaxed where slip evidence (LLI or
geometry-free jump) fires. TDCP factors connect epoch pairs at several
time offsets up to a cap, acting as loop closures that bound drift.

Two robust baselines share the same graph without slip variables: a Huber
kernel on the TDCP factors, or switchable constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .ephemeris import EphemerisStore, EphemerisUnavailable, sat_state
from .geodesy import az_el
from .gnsstime import GnssTime
from .solver import (
    KIND_SLIP,
    KIND_STATE,
    KIND_SWITCH,
    Factor,
    GaussNewtonOptions,
    GraphSolution,
    Huber,
    LinearFactor,
    SwitchableFactor,
    VariableKey,
    optimize,
    prior_factor,
)
from .spp import SppError, SppSolution, solve_spp
from .tdcp import TdcpMeasurement, build_tdcp, cached_observed_state, detect_slip_evidence
from .types import (
    CLOCK_SLOT,
    CLOCK_SLOT_ORDER,
    Band,
    GnssError,
    IonoCoefficients,
    ObservationEpoch,
    SatId,
)

METHOD_SLIP = "slip"
METHOD_HUBER = "huber"
METHOD_SWITCHABLE = "switchable"
METHODS = (METHOD_SLIP, METHOD_HUBER, METHOD_SWITCHABLE)

# gauge-fixing priors: exact values are irrelevant to relative geometry
_SIGMA_CLOCK_GAUGE = 10.0   # [m]
_PAIR_MATCH_TOL = 0.05      # [s]


class GraphBuildError(GnssError):
    """Session cannot form a connected, solvable graph."""


@dataclass
class MethodConfig:
    method: str = METHOD_SLIP
    loop_closure_offsets: tuple[float, ...] = (1.0, 10.0, 30.0, 60.0)
    max_loop_dt: float = 60.0
    sigma_b_normal: float = 0.01      # [cycles]
    sigma_b_slip: float = 10.0        # [cycles]
    sigma_b_anchor: float = 1e-3      # [cycles]
    # switch prior: s* = 1/(1 + sigma^2 r^2) at whitened residual r, so
    # 1.0 drives the switch below 0.1 once r exceeds ~10
    sigma_switch_prior: float = 1.0
    huber_c: float = 1.345
    mask_el_deg: float = 5.0
    apply_atmosphere: bool = True
    humidity: float = 0.7
    phase_sigma0: float = 0.003       # [m]
    gf_threshold: float = 0.05        # [m]
    epoch_interval: float = 1.0       # [s]; higher-rate input is decimated
    round_slips: bool = True
    max_iterations: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise GnssError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if any(d > self.max_loop_dt for d in self.loop_closure_offsets):
            raise GnssError("loop closure offsets must not exceed max_loop_dt")
        if not self.sigma_b_normal < self.sigma_b_slip:
            raise GnssError("sigma_b_normal must be smaller than sigma_b_slip")

    @property
    def mask_el(self) -> float:
        return math.radians(self.mask_el_deg)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "loop_closure_offsets": list(self.loop_closure_offsets),
            "max_loop_dt": self.max_loop_dt,
            "sigma_b_normal": self.sigma_b_normal,
            "sigma_b_slip": self.sigma_b_slip,
            "sigma_b_anchor": self.sigma_b_anchor,
            "sigma_switch_prior": self.sigma_switch_prior,
            "huber_c": self.huber_c,
            "mask_el_deg": self.mask_el_deg,
            "apply_atmosphere": self.apply_atmosphere,
            "humidity": self.humidity,
            "phase_sigma0": self.phase_sigma0,
            "gf_threshold": self.gf_threshold,
            "epoch_interval": self.epoch_interval,
            "round_slips": self.round_slips,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MethodConfig":
        kwargs = dict(data)
        if "loop_closure_offsets" in kwargs:
            kwargs["loop_closure_offsets"] = tuple(kwargs["loop_closure_offsets"])
        return cls(**kwargs)


@dataclass
class Session:
    epochs: list[ObservationEpoch]
    store: EphemerisStore
    iono: IonoCoefficients


@dataclass
class PreparedSession:
    """Per-epoch SPP, satellite usability, TDCP measurements and evidence."""

    times: list[GnssTime]
    epochs: list[ObservationEpoch]
    store: EphemerisStore
    spp: list[SppSolution]
    spp_failures: int
    usable: list[set[SatId]]
    chains: dict[SatId, tuple[int, int]]
    slots: list[str]
    base_slot: str
    measurements: dict[tuple[int, int], list[TdcpMeasurement]]
    slip_likely: set[tuple[SatId, int]]
    dropped_epochs: int


@dataclass
class OdometryGraph:
    factors: list[Factor]
    initial: dict[VariableKey, np.ndarray]
    prepared: PreparedSession
    config: MethodConfig
    counts: dict[str, int]


@dataclass
class Trajectory:
    times: list[GnssTime]
    positions: np.ndarray  # (N, 3) ECEF

    def __len__(self):
        return len(self.times)


@dataclass
class OdometryResult:
    trajectory: Trajectory
    slips: dict[SatId, list[tuple[GnssTime, float]]]
    report: dict
    solution: GraphSolution
    converged: bool


def _decimate(epochs: list[ObservationEpoch], interval: float) -> list[ObservationEpoch]:
    if interval <= 0:
        return list(epochs)
    kept = []
    for ep in epochs:
        if not kept or ep.time - kept[-1].time >= interval - 1e-3:
            kept.append(ep)
    return kept


def _usable_satellites(epoch: ObservationEpoch, store: EphemerisStore,
                       pos: np.ndarray, mask_el: float,
                       state_cache: dict) -> set[SatId]:
    out = set()
    for sat in epoch.satellites():
        obs = epoch.get(sat, Band.L1)
        if obs is None or not math.isfinite(obs.pseudorange):
            continue
        try:
            sv = cached_observed_state(store, sat, epoch, obs.pseudorange, state_cache)
        except EphemerisUnavailable:
            continue
        _, el = az_el(pos, sv.state.pos)
        if el >= mask_el:
            out.add(sat)
    return out


def prepare_session(session: Session, config: MethodConfig) -> PreparedSession:
    """Run SPP, usability screening, TDCP formation and slip evidence."""
    epochs = _decimate(session.epochs, config.epoch_interval)
    if not epochs:
        raise GraphBuildError("session has no epochs")

    state_cache: dict = {}
    spp: list[SppSolution] = []
    spp_failures = 0
    prev: Optional[SppSolution] = None
    usable: list[set[SatId]] = []
    kept: list[ObservationEpoch] = []
    dropped = 0
    empty_run = 0
    for k, ep in enumerate(epochs):
        try:
            sol = solve_spp(ep, session.store, session.iono, config.mask_el,
                            x0=prev.pos if prev else None,
                            apply_atmosphere=config.apply_atmosphere,
                            humidity=config.humidity)
        except SppError as exc:
            if prev is None:
                raise GraphBuildError(f"single point positioning failed at the "
                                      f"first epoch: {exc}") from exc
            sol = prev
            spp_failures += 1
        sats = _usable_satellites(ep, session.store, sol.pos, config.mask_el,
                                  state_cache)
        if not sats:
            dropped += 1
            empty_run += 1
            if empty_run > 10:
                raise GraphBuildError(
                    "graph disconnected: more than 10 consecutive epochs "
                    "without usable satellites")
            continue
        empty_run = 0
        if kept and ep.time - kept[-1].time > config.max_loop_dt:
            raise GraphBuildError(
                f"graph disconnected: gap of {ep.time - kept[-1].time:.0f} s "
                f"exceeds the {config.max_loop_dt:.0f} s loop-closure cap")
        kept.append(ep)
        spp.append(sol)
        usable.append(sats)
        prev = sol

    if len(kept) < 2:
        raise GraphBuildError("fewer than 2 usable epochs")

    times = [ep.time for ep in kept]
    chains: dict[SatId, tuple[int, int]] = {}
    for k, sats in enumerate(usable):
        for sat in sats:
            first, _ = chains.get(sat, (k, k))
            chains[sat] = (first, k)

    slot_set = {CLOCK_SLOT[s.constellation] for sats in usable for s in sats}
    base = "GPS" if "GPS" in slot_set else sorted(slot_set)[0]
    slots = [base] + [s for s in CLOCK_SLOT_ORDER if s in slot_set and s != base]

    rel_times = np.array([t - times[0] for t in times])
    measurements: dict[tuple[int, int], list[TdcpMeasurement]] = {}
    for i in range(len(times)):
        for offset in sorted(config.loop_closure_offsets):
            target = rel_times[i] + offset
            j = int(np.searchsorted(rel_times, target))
            if j > 0 and (j == len(rel_times)
                          or abs(rel_times[j - 1] - target) < abs(rel_times[j] - target)):
                j -= 1
            if j <= i or abs(rel_times[j] - target) > _PAIR_MATCH_TOL:
                continue
            if (i, j) in measurements:
                continue
            meas = build_tdcp(
                kept[i], kept[j], session.store, session.iono,
                spp[i].pos, spp[j].pos, config.mask_el,
                apply_atmosphere=config.apply_atmosphere,
                humidity=config.humidity, sigma0=config.phase_sigma0,
                state_cache=state_cache)
            meas = [m for m in meas if m.sat in usable[i] and m.sat in usable[j]]
            if meas:
                measurements[(i, j)] = meas

    slip_likely: set[tuple[SatId, int]] = set()
    for k in range(1, len(kept)):
        for ev in detect_slip_evidence(kept[k - 1], kept[k], config.gf_threshold):
            if ev.slip_likely:
                slip_likely.add((ev.sat, k))
    for sat, (first, last) in chains.items():
        for k in range(first + 1, last + 1):
            if sat in usable[k] and sat not in usable[k - 1]:
                slip_likely.add((sat, k))  # reacquisition after an outage

    return PreparedSession(
        times=times, epochs=kept, store=session.store, spp=spp,
        spp_failures=spp_failures, usable=usable, chains=chains,
        slots=slots, base_slot=base, measurements=measurements,
        slip_likely=slip_likely, dropped_epochs=dropped)


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, a: int) -> int:
        self.parent.setdefault(a, a)
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _state_row(meas: TdcpMeasurement, u: np.ndarray,
               slots: list[str], base: str) -> np.ndarray:
    """Coefficients of one TDCP residual on a state vector [p, clocks]."""
    row = np.zeros(3 + len(slots))
    row[:3] = -u
    row[3] = 1.0
    slot = CLOCK_SLOT[meas.sat.constellation]
    if slot != base:
        row[3 + slots.index(slot)] = 1.0
    return row


def build_graph(session: Union[Session, PreparedSession],
                config: Optional[MethodConfig] = None) -> OdometryGraph:
    """Assemble the factor graph for the configured method."""
    config = config or MethodConfig()
    prepared = session if isinstance(session, PreparedSession) else \
        prepare_session(session, config)

    slots, base = prepared.slots, prepared.base_slot
    state_dim = 3 + len(slots)
    n = len(prepared.times)
    use_slip_nodes = config.method == METHOD_SLIP

    factors: list[Factor] = []
    counts = {"tdcp": 0, "slip_rel": 0, "slip_anchor": 0, "position_anchor": 0,
              "clock_gauge": 0, "switch_prior": 0, "state_nodes": n,
              "slip_nodes": 0, "switch_nodes": 0}
    initial: dict[VariableKey, np.ndarray] = {}

    def state_key(k: int) -> VariableKey:
        return VariableKey(KIND_STATE, k)

    def slip_key(sat: SatId, k: int) -> VariableKey:
        return VariableKey(KIND_SLIP, k, SatId(sat.constellation, sat.prn))

    for k in range(n):
        x = np.zeros(state_dim)
        x[:3] = prepared.spp[k].pos
        sol = prepared.spp[k]
        x[3] = sol.clock.get(base, sol.clock.get(sol.base_slot, 0.0))
        for j, slot in enumerate(slots[1:], start=4):
            x[j] = sol.clock.get(slot, 0.0)
        initial[state_key(k)] = x

    # anchor the first position to its single-point solution
    anchor = prepared.spp[0]
    pos_sigma = max(anchor.sigma, 1e-4)
    factors.append(LinearFactor(
        [state_key(0)], [np.hstack([np.eye(3), np.zeros((3, state_dim - 3))])],
        anchor.pos, np.eye(3) / pos_sigma))
    counts["position_anchor"] += 1

    # slip chains: nodes span tracked and temporarily-invisible epochs
    if use_slip_nodes:
        for sat, (first, last) in sorted(prepared.chains.items(),
                                         key=lambda kv: kv[0].sort_key()):
            for k in range(first, last + 1):
                initial[slip_key(sat, k)] = np.zeros(1)
                counts["slip_nodes"] += 1
            factors.append(prior_factor(slip_key(sat, first), [0.0],
                                        config.sigma_b_anchor))
            counts["slip_anchor"] += 1
            for k in range(first, last):
                sigma = config.sigma_b_slip if (sat, k + 1) in prepared.slip_likely \
                    else config.sigma_b_normal
                factors.append(LinearFactor(
                    [slip_key(sat, k), slip_key(sat, k + 1)],
                    [np.array([[-1.0]]), np.array([[1.0]])],
                    [0.0], 1.0 / sigma))
                counts["slip_rel"] += 1

    switch_serial = 0
    kernel = Huber(config.huber_c) if config.method == METHOD_HUBER else None
    for (i, j), meas_list in sorted(prepared.measurements.items()):
        for meas in meas_list:
            # one shared line of sight per pair keeps absolute position a
            # pure gauge freedom (translation invariance of the graph)
            row = _state_row(meas, meas.u, slots, base)
            target = meas.corrected - meas.delta_l
            sqrt_info = 1.0 / math.sqrt(meas.variance)
            if use_slip_nodes:
                lam = meas.wavelength
                factor: Factor = LinearFactor(
                    [state_key(i), state_key(j),
                     slip_key(meas.sat, i), slip_key(meas.sat, j)],
                    [-row, row, np.array([[-lam]]), np.array([[lam]])],
                    [target], sqrt_info)
            else:
                factor = LinearFactor(
                    [state_key(i), state_key(j)], [-row, row],
                    [target], sqrt_info, kernel=kernel)
                if config.method == METHOD_SWITCHABLE:
                    s_key = VariableKey(KIND_SWITCH, switch_serial)
                    switch_serial += 1
                    initial[s_key] = np.ones(1)
                    counts["switch_nodes"] += 1
                    factors.append(prior_factor(s_key, [1.0],
                                                config.sigma_switch_prior))
                    counts["switch_prior"] += 1
                    factor = SwitchableFactor(factor, s_key)
            factors.append(factor)
            counts["tdcp"] += 1

    # one gauge prior per disconnected clock-slot component
    for slot_idx, slot in enumerate(slots):
        uf = _UnionFind()
        for k in range(n):
            uf.find(k)
        for (i, j), meas_list in prepared.measurements.items():
            for meas in meas_list:
                meas_slot = CLOCK_SLOT[meas.sat.constellation]
                if meas_slot == slot or slot == base:
                    uf.union(i, j)
                    break
        anchored: set[int] = set()
        for k in range(n):
            root = uf.find(k)
            if root in anchored:
                continue
            anchored.add(root)
            coeff = np.zeros((1, state_dim))
            coeff[0, 3 + slot_idx] = 1.0
            sol = prepared.spp[root]
            if slot == base:
                target = sol.clock.get(base, sol.clock.get(sol.base_slot, 0.0))
            else:
                target = sol.clock.get(slot, 0.0)
            factors.append(LinearFactor([state_key(root)], [coeff],
                                        [target], 1.0 / _SIGMA_CLOCK_GAUGE))
            counts["clock_gauge"] += 1

    return OdometryGraph(factors=factors, initial=initial, prepared=prepared,
                         config=config, counts=counts)


def _extract_slips(graph: OdometryGraph, values) -> dict[SatId, list[tuple[GnssTime, float]]]:
    out: dict[SatId, list[tuple[GnssTime, float]]] = {}
    for sat, (first, last) in sorted(graph.prepared.chains.items(),
                                     key=lambda kv: kv[0].sort_key()):
        key_sat = SatId(sat.constellation, sat.prn)
        series = []
        for k in range(first, last + 1):
            v = values.get(VariableKey(KIND_SLIP, k, key_sat))
            if v is not None:
                series.append((graph.prepared.times[k], float(v[0])))
        if series:
            out[sat] = series
    return out


def _rounded_refit(graph: OdometryGraph, solution: GraphSolution,
                   options: GaussNewtonOptions) -> GraphSolution:
    """Freeze slip chains at the nearest integers and re-solve the states."""
    prepared, config = graph.prepared, graph.config
    slots, base = prepared.slots, prepared.base_slot
    rounded = {k: np.round(v) for k, v in solution.values.items()
               if k.kind == KIND_SLIP}
    factors: list[Factor] = []
    for f in graph.factors:
        if isinstance(f, LinearFactor) and any(k.kind == KIND_SLIP for k in f.keys):
            state_keys = [k for k in f.keys if k.kind == KIND_STATE]
            if not state_keys:
                continue  # slip anchors and continuity factors drop out
            shift = 0.0
            coeffs = []
            for key, a in zip(f.keys, f.coeffs):
                if key.kind == KIND_SLIP:
                    shift += float(a[0, 0] * rounded[key][0])
                else:
                    coeffs.append(a)
            factors.append(LinearFactor(state_keys, coeffs,
                                        f.target - shift, f.sqrt_info))
        else:
            factors.append(f)
    initial = {k: v.copy() for k, v in solution.values.items()
               if k.kind != KIND_SLIP}
    refit = optimize(factors, initial, options)
    refit.values.update(rounded)
    return refit


def estimate_trajectory(session: Union[Session, PreparedSession],
                        config: Optional[MethodConfig] = None) -> OdometryResult:
    """Build the graph, optimize, and optionally refit with integer slips."""
    config = config or MethodConfig()
    graph = build_graph(session, config)
    options = GaussNewtonOptions(max_iterations=config.max_iterations)
    solution = optimize(graph.factors, graph.initial, options)
    integer_rounded = False
    if config.method == METHOD_SLIP and config.round_slips and solution.converged:
        solution = _rounded_refit(graph, solution, options)
        integer_rounded = True

    prepared = graph.prepared
    positions = np.vstack([solution.values[VariableKey(KIND_STATE, k)][:3]
                           for k in range(len(prepared.times))])
    trajectory = Trajectory(times=list(prepared.times), positions=positions)
    slips = _extract_slips(graph, solution.values)
    report = {
        "schema_version": 1,
        "method": config.method,
        "converged": solution.converged,
        "iterations": solution.iterations,
        "final_cost": solution.cost,
        "message": solution.message,
        "integer_rounded": integer_rounded,
        "epochs": len(prepared.times),
        "dropped_epochs": prepared.dropped_epochs,
        "spp_failures": prepared.spp_failures,
        "clock_slots": prepared.slots,
        "factor_counts": graph.counts,
        "config": config.to_dict(),
    }
    return OdometryResult(trajectory=trajectory, slips=slips, report=report,
                          solution=solution, converged=solution.converged)
