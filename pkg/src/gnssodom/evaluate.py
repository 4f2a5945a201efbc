"""Metrics and diagnostics: trajectory error, TDCP residual-vs-offset table.

Trajectory comparison uses translation-only alignment at the first common
epoch: the estimator produces a relative trajectory hung off a single
pseudorange anchor, so rotational alignment would hide heading-consistent
error rather than reveal it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geodesy import ecef2enu
from .gnsstime import GnssTime
from .odometry import Trajectory
from .spp import SppError, solve_spp
from .tdcp import build_tdcp
from .types import GnssError, IonoCoefficients, ObservationEpoch, SatId


class EvaluationError(GnssError):
    """Trajectories cannot be compared (no overlapping epochs)."""


@dataclass
class AteReport:
    rms: float
    max: float
    errors: np.ndarray          # per-epoch 3D error norms [m]
    alignment: np.ndarray       # translation applied to the estimate [m]
    n_common: int

    def to_dict(self) -> dict:
        return {
            "rms_m": self.rms,
            "max_m": self.max,
            "n_common_epochs": self.n_common,
            "alignment_m": [float(v) for v in self.alignment],
        }


def ate(traj: Trajectory, truth: Trajectory, max_dt: float = 0.1) -> AteReport:
    """Absolute trajectory error after first-epoch translation alignment."""
    if len(traj) == 0 or len(truth) == 0:
        raise EvaluationError("empty trajectory")
    truth_rel = np.array([t - truth.times[0] for t in truth.times])
    pairs = []
    for i, t in enumerate(traj.times):
        rel = t - truth.times[0]
        j = int(np.searchsorted(truth_rel, rel))
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < len(truth_rel) and abs(truth_rel[cand] - rel) <= max_dt:
                if best is None or abs(truth_rel[cand] - rel) < abs(truth_rel[best] - rel):
                    best = cand
        if best is not None:
            pairs.append((i, best))
    if len(pairs) < 2:
        raise EvaluationError("fewer than 2 overlapping epochs between trajectories")
    i0, j0 = pairs[0]
    alignment = truth.positions[j0] - traj.positions[i0]
    diffs = np.array([traj.positions[i] + alignment - truth.positions[j]
                      for i, j in pairs])
    errors = np.linalg.norm(diffs, axis=1)
    return AteReport(rms=float(np.sqrt(np.mean(errors**2))),
                     max=float(np.max(errors)), errors=errors,
                     alignment=alignment, n_common=len(pairs))


@dataclass
class DdResidualRow:
    sat: SatId
    dt: float            # pair time offset [s]
    tow: float           # of the pair's first epoch
    residual: float      # double-differenced TDCP residual [m]


def dd_residual_series(epochs: Sequence[ObservationEpoch], store,
                       iono: IonoCoefficients, reference_sat: SatId,
                       offsets: Iterable[float] = tuple(range(1, 61)),
                       static_pos: Optional[np.ndarray] = None,
                       apply_atmosphere: bool = True,
                       humidity: float = 0.7) -> list[DdResidualRow]:
    """Between-satellite differenced TDCP residuals per time offset.

    With a static receiver the residual motion term vanishes, and the
    between-satellite difference removes the receiver clock change; what
    is left is correction model error (and any cycle slip). Pairs where
    the reference satellite is missing are skipped.
    """
    if static_pos is None:
        sols = []
        for ep in epochs[: min(len(epochs), 10)]:
            try:
                sols.append(solve_spp(ep, store, iono,
                                      apply_atmosphere=apply_atmosphere,
                                      humidity=humidity).pos)
            except SppError:
                continue
        if not sols:
            raise EvaluationError("no epoch yields a single-point position")
        static_pos = np.mean(np.asarray(sols), axis=0)

    rel_times = np.array([ep.time - epochs[0].time for ep in epochs])
    rows: list[DdResidualRow] = []
    for i in range(len(epochs)):
        for dt in offsets:
            target = rel_times[i] + dt
            j = int(np.searchsorted(rel_times, target))
            if j >= len(rel_times) or abs(rel_times[j] - target) > 0.05:
                continue
            meas = build_tdcp(epochs[i], epochs[j], store, iono,
                              static_pos, static_pos,
                              apply_atmosphere=apply_atmosphere,
                              humidity=humidity)
            by_sat = {m.sat: m.corrected - m.delta_l for m in meas}
            if reference_sat not in by_sat:
                continue
            ref = by_sat[reference_sat]
            for sat, value in by_sat.items():
                if sat == reference_sat:
                    continue
                rows.append(DdResidualRow(sat=sat, dt=float(dt),
                                          tow=epochs[i].time.tow,
                                          residual=value - ref))
    return rows


# ---------------------------------------------------------------------------
# CSV interchange

def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Columns: tow, x, y, z (ECEF) and E, N, U relative to the first epoch."""
    enu = ecef2enu(traj.positions[0], traj.positions)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tow", "x", "y", "z", "E", "N", "U"])
        for t, p, e in zip(traj.times, traj.positions, enu):
            w.writerow([f"{t.tow:.3f}"] + [f"{v:.6f}" for v in p]
                       + [f"{v:.6f}" for v in e])


def read_trajectory_csv(path, week: int = 0) -> Trajectory:
    times: list[GnssTime] = []
    rows: list[list[float]] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"tow", "x", "y", "z"} <= set(reader.fieldnames):
            raise EvaluationError(f"{path}: expected columns tow,x,y,z")
        for row in reader:
            times.append(GnssTime(week, float(row["tow"])))
            rows.append([float(row["x"]), float(row["y"]), float(row["z"])])
    if not rows:
        raise EvaluationError(f"{path}: no rows")
    return Trajectory(times=times, positions=np.asarray(rows))


def write_slips_csv(path, slips: dict[SatId, list[tuple[GnssTime, float]]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tow", "sat", "cycles"])
        for sat in sorted(slips, key=lambda s: s.sort_key()):
            for t, b in slips[sat]:
                w.writerow([f"{t.tow:.3f}", str(sat), f"{b:.4f}"])


def write_dd_residuals_csv(path, rows: list[DdResidualRow]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sat", "dt", "tow", "residual"])
        for r in rows:
            w.writerow([str(r.sat), f"{r.dt:.3f}", f"{r.tow:.3f}", f"{r.residual:.6f}"])
