"""RINEX 3.x observation/navigation parsing and writing."""

from .nav import NavData, parse_nav, write_nav
from .obs import ObsData, ParseReport, RinexError, parse_obs, write_obs

__all__ = [
    "NavData",
    "ObsData",
    "ParseReport",
    "RinexError",
    "parse_nav",
    "parse_obs",
    "write_nav",
    "write_obs",
]
