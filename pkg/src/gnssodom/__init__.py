"""GNSS carrier-phase odometry with explicit cycle-slip estimation.

Estimates centimeter-level relative trajectories from a single receiver's
RINEX data by factor-graph optimization over time-differenced carrier
phase, with cycle slips in the estimated state, plus robust-optimization
baselines and a deterministic simulator for verification.
"""

from .gnsstime import GnssTime
from .odometry import (
    METHOD_HUBER,
    METHOD_SLIP,
    METHOD_SWITCHABLE,
    MethodConfig,
    OdometryResult,
    Session,
    Trajectory,
    build_graph,
    estimate_trajectory,
    prepare_session,
)
from .types import Band, CarrierPhaseObs, Constellation, GnssError, ObservationEpoch, SatId

__version__ = "0.1.0"

__all__ = [
    "Band",
    "CarrierPhaseObs",
    "Constellation",
    "GnssError",
    "GnssTime",
    "METHOD_HUBER",
    "METHOD_SLIP",
    "METHOD_SWITCHABLE",
    "MethodConfig",
    "ObservationEpoch",
    "OdometryResult",
    "SatId",
    "Session",
    "Trajectory",
    "build_graph",
    "estimate_trajectory",
    "prepare_session",
    "__version__",
]
