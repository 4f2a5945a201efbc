"""Core observation domain types shared across the toolkit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .constants import (
    FREQ_B1I,
    FREQ_E5B,
    FREQ_G1_BASE,
    FREQ_G1_STEP,
    FREQ_G2_BASE,
    FREQ_G2_STEP,
    FREQ_L1,
    FREQ_L2,
)
from .gnsstime import GnssTime


class GnssError(Exception):
    """Base error for this package."""


class Constellation(Enum):
    GPS = "G"
    GLONASS = "R"
    GALILEO = "E"
    BEIDOU = "C"
    QZSS = "J"

    @property
    def letter(self) -> str:
        return self.value

    @classmethod
    def from_letter(cls, letter: str) -> "Constellation":
        for c in cls:
            if c.value == letter:
                return c
        raise GnssError(f"unknown constellation letter {letter!r}")


# valid PRN ranges per constellation (RINEX satellite numbers)
_PRN_RANGE = {
    Constellation.GPS: (1, 32),
    Constellation.GLONASS: (1, 27),
    Constellation.GALILEO: (1, 36),
    Constellation.BEIDOU: (1, 63),
    Constellation.QZSS: (1, 10),
}

# receiver clock slot per constellation; QZSS shares the GPS time base
CLOCK_SLOT = {
    Constellation.GPS: "GPS",
    Constellation.QZSS: "GPS",
    Constellation.GLONASS: "GLO",
    Constellation.GALILEO: "GAL",
    Constellation.BEIDOU: "BDS",
}
CLOCK_SLOT_ORDER = ("GPS", "GLO", "GAL", "BDS")


@dataclass(frozen=True)
class SatId:
    """Satellite identity; GLONASS additionally carries its FDMA channel."""

    constellation: Constellation
    prn: int
    fcn: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        lo, hi = _PRN_RANGE[self.constellation]
        if not lo <= self.prn <= hi:
            raise GnssError(f"prn {self.prn} out of range for {self.constellation.name}")
        if self.fcn is not None and not -7 <= self.fcn <= 6:
            raise GnssError(f"GLONASS frequency channel {self.fcn} out of range")

    def __str__(self) -> str:
        return f"{self.constellation.letter}{self.prn:02d}"

    @classmethod
    def from_str(cls, text: str, fcn: Optional[int] = None) -> "SatId":
        text = text.strip()
        if len(text) < 2:
            raise GnssError(f"bad satellite id {text!r}")
        return cls(Constellation.from_letter(text[0]), int(text[1:]), fcn)

    def sort_key(self) -> tuple:
        return (self.constellation.letter, self.prn)

    def __repr__(self):
        return f"SatId({self})"


class Band(Enum):
    """Frequency band class: L1-class primary, L2/E5b-class secondary."""

    L1 = 1
    L2 = 2


def carrier_frequency(sat: SatId, band: Band) -> float:
    """Carrier frequency in Hz for a satellite/band (GLONASS needs fcn)."""
    c = sat.constellation
    if c in (Constellation.GPS, Constellation.QZSS):
        return FREQ_L1 if band is Band.L1 else FREQ_L2
    if c is Constellation.GALILEO:
        return FREQ_L1 if band is Band.L1 else FREQ_E5B
    if c is Constellation.BEIDOU:
        return FREQ_B1I if band is Band.L1 else FREQ_E5B
    if c is Constellation.GLONASS:
        if sat.fcn is None:
            raise GnssError(f"GLONASS {sat} has no frequency channel number")
        if band is Band.L1:
            return FREQ_G1_BASE + sat.fcn * FREQ_G1_STEP
        return FREQ_G2_BASE + sat.fcn * FREQ_G2_STEP
    raise GnssError(f"unsupported constellation {c}")


@dataclass
class CarrierPhaseObs:
    """One satellite's observables on one band at one epoch."""

    sat: SatId
    band: Band
    phase: float            # carrier phase [cycles]
    pseudorange: float      # [m]; NaN when the band carries phase only
    wavelength: float       # [m]
    lli: bool = False       # loss-of-lock, bit 0 of the RINEX LLI digit
    doppler: Optional[float] = None  # [Hz]
    snr: Optional[float] = None      # [dB-Hz]

    def __post_init__(self):
        if not self.wavelength > 0:
            raise GnssError(f"nonpositive wavelength for {self.sat}")
        if not math.isfinite(self.phase):
            raise GnssError(f"non-finite phase for {self.sat}")


@dataclass
class ObservationEpoch:
    """All observations of one receiver epoch."""

    time: GnssTime
    obs: list[CarrierPhaseObs]

    def get(self, sat: SatId, band: Band = Band.L1) -> Optional[CarrierPhaseObs]:
        for o in self.obs:
            if o.sat == sat and o.band is band:
                return o
        return None

    def satellites(self) -> list[SatId]:
        seen: dict[SatId, None] = {}
        for o in self.obs:
            seen.setdefault(o.sat)
        return list(seen)


@dataclass
class IonoCoefficients:
    """Klobuchar broadcast alpha/beta coefficient sets."""

    alpha: np.ndarray
    beta: np.ndarray
    present: bool = True

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.alpha.shape != (4,) or self.beta.shape != (4,):
            raise GnssError("iono coefficients must be 4 alpha + 4 beta values")
        if not (np.isfinite(self.alpha).all() and np.isfinite(self.beta).all()):
            raise GnssError("iono coefficients must be finite")

    @classmethod
    def absent(cls) -> "IonoCoefficients":
        return cls(np.zeros(4), np.zeros(4), present=False)
