"""GPS week / seconds-of-week time scale with calendar conversions."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from functools import total_ordering

from .constants import SECONDS_IN_WEEK

GPS_EPOCH = _dt.datetime(1980, 1, 6)


@total_ordering
@dataclass(frozen=True)
class GnssTime:
    """A GPS-time instant as (week, seconds of week), tow in [0, 604800)."""

    week: int
    tow: float

    def __post_init__(self):
        week, tow = self.week, self.tow
        if tow >= SECONDS_IN_WEEK or tow < 0.0:
            shift = int(tow // SECONDS_IN_WEEK)
            object.__setattr__(self, "week", week + shift)
            object.__setattr__(self, "tow", tow - shift * SECONDS_IN_WEEK)

    def __sub__(self, other: "GnssTime") -> float:
        """Signed difference in seconds."""
        return (self.week - other.week) * SECONDS_IN_WEEK + (self.tow - other.tow)

    def add(self, seconds: float) -> "GnssTime":
        return GnssTime(self.week, self.tow + seconds)

    def __lt__(self, other: "GnssTime") -> bool:
        if self.week != other.week:
            return self.week < other.week
        return self.tow < other.tow

    def __eq__(self, other) -> bool:
        if not isinstance(other, GnssTime):
            return NotImplemented
        return self.week == other.week and self.tow == other.tow

    def __hash__(self):
        return hash((self.week, self.tow))

    @classmethod
    def from_civil(cls, year: int, month: int, day: int,
                   hour: int = 0, minute: int = 0, second: float = 0.0) -> "GnssTime":
        """Convert a calendar epoch already expressed in GPS time."""
        whole = int(second)
        base = _dt.datetime(year, month, day, hour, minute) - GPS_EPOCH
        total = base.total_seconds() + whole
        week = int(total // SECONDS_IN_WEEK)
        tow = total - week * SECONDS_IN_WEEK + (second - whole)
        return cls(week, tow)

    def to_civil(self) -> tuple[int, int, int, int, int, float]:
        total = self.week * SECONDS_IN_WEEK + self.tow
        whole = int(total)
        frac = total - whole
        d = GPS_EPOCH + _dt.timedelta(seconds=whole)
        return d.year, d.month, d.day, d.hour, d.minute, d.second + frac

    def __repr__(self):
        return f"GnssTime(week={self.week}, tow={self.tow:.3f})"
