"""RINEX 3.x navigation file reading and writing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from io import StringIO
from typing import IO, Iterable, Optional

import numpy as np

from ..constants import GPS_UTC_LEAP_SECONDS
from ..ephemeris import EphemerisRecord, EphemerisStore, GlonassState, KeplerElements
from ..gnsstime import GnssTime
from ..types import Constellation, GnssError, IonoCoefficients, SatId
from .obs import ParseReport, RinexError, Source, _check_version, _field, _open

# BeiDou time starts 1356 weeks and 14 s after GPS time
_BDT_WEEK_OFFSET = 1356
_BDT_SECOND_OFFSET = 14.0

_KEPLER_SYSTEMS = (Constellation.GPS, Constellation.GALILEO,
                   Constellation.BEIDOU, Constellation.QZSS)


@dataclass
class NavData:
    store: EphemerisStore
    iono: IonoCoefficients
    report: ParseReport


def _dfloat(text: str) -> float:
    text = text.strip().replace("D", "E").replace("d", "e")
    if not text:
        return math.nan
    return float(text)


def _record_fields(line: str, start: int = 4) -> list[float]:
    return [_dfloat(_field(line, s, s + 19)) for s in range(start, 80, 19)]


def _read_nav_header(stream: IO[str]) -> tuple[IonoCoefficients, ParseReport]:
    report = ParseReport()
    alpha = np.zeros(4)
    beta = np.zeros(4)
    seen = False
    first = True
    for raw in stream:
        line = raw.rstrip("\n")
        label = _field(line, 60, 80).strip()
        if first:
            if label != "RINEX VERSION / TYPE":
                raise RinexError("missing header: first line is not RINEX VERSION / TYPE")
            _check_version(line, "N")
            first = False
            continue
        if label == "END OF HEADER":
            iono = IonoCoefficients(alpha, beta, present=seen)
            return iono, report
        if label == "IONOSPHERIC CORR":
            kind = _field(line, 0, 4).strip()
            values = [_dfloat(_field(line, 5 + 12 * k, 17 + 12 * k)) for k in range(4)]
            if kind == "GPSA":
                alpha = np.array(values)
                seen = True
            elif kind == "GPSB":
                beta = np.array(values)
                seen = True
    raise RinexError("missing header: END OF HEADER not found")


def _toc_to_gps(const: Constellation, t: GnssTime) -> GnssTime:
    if const is Constellation.BEIDOU:
        return GnssTime(t.week + _BDT_WEEK_OFFSET, t.tow + _BDT_SECOND_OFFSET)
    if const is Constellation.GLONASS:
        return t.add(GPS_UTC_LEAP_SECONDS)
    return t


def _parse_kepler(sat: SatId, toc: GnssTime, clock: list[float],
                  orbit: list[list[float]]) -> EphemerisRecord:
    const = sat.constellation
    kepler = KeplerElements(
        sqrt_a=orbit[1][3], e=orbit[1][1], i0=orbit[3][0], omega0=orbit[2][2],
        omega=orbit[3][2], m0=orbit[0][3], delta_n=orbit[0][2], idot=orbit[4][0],
        omega_dot=orbit[3][3], cuc=orbit[1][0], cus=orbit[1][2], crc=orbit[3][1],
        crs=orbit[0][1], cic=orbit[2][1], cis=orbit[2][3],
    )
    week = int(orbit[4][2])
    toe_sow = orbit[2][0]
    if const is Constellation.BEIDOU:
        toe = GnssTime(week + _BDT_WEEK_OFFSET, toe_sow + _BDT_SECOND_OFFSET)
        tgd = orbit[5][2]
        health = int(orbit[5][1])
    elif const is Constellation.GALILEO:
        toe = GnssTime(week, toe_sow)
        tgd = orbit[5][2]  # BGD E5a/E1
        health = int(orbit[5][1]) & 0x7  # E1-B signal/data health bits
    else:
        toe = GnssTime(week, toe_sow)
        tgd = orbit[5][2]
        health = int(orbit[5][1])
    fields = [kepler.sqrt_a, kepler.e, kepler.i0, kepler.omega0, kepler.omega,
              kepler.m0, kepler.delta_n, kepler.idot, kepler.omega_dot,
              kepler.cuc, kepler.cus, kepler.crc, kepler.crs, kepler.cic,
              kepler.cis, clock[0], clock[1], clock[2], tgd, toe_sow]
    if not all(math.isfinite(v) for v in fields):
        raise GnssError(f"non-finite field in {sat} record")
    return EphemerisRecord(
        sat=sat, toe=toe, toc=_toc_to_gps(const, toc),
        af0=clock[0], af1=clock[1], af2=clock[2],
        kepler=kepler, tgd=tgd, health=health, iode=int(orbit[0][0]),
    )


def _parse_glonass(sat: SatId, toc_utc: GnssTime, clock: list[float],
                   orbit: list[list[float]]) -> EphemerisRecord:
    pos = np.array([orbit[0][0], orbit[1][0], orbit[2][0]]) * 1e3
    vel = np.array([orbit[0][1], orbit[1][1], orbit[2][1]]) * 1e3
    acc = np.array([orbit[0][2], orbit[1][2], orbit[2][2]]) * 1e3
    health = int(orbit[0][3])
    fcn = int(orbit[1][3])
    if not (np.isfinite(pos).all() and np.isfinite(vel).all() and np.isfinite(acc).all()
            and all(math.isfinite(v) for v in clock[:2])):
        raise GnssError(f"non-finite field in {sat} record")
    toc = _toc_to_gps(Constellation.GLONASS, toc_utc)
    return EphemerisRecord(
        sat=SatId(sat.constellation, sat.prn, fcn), toe=toc, toc=toc,
        af0=-clock[0], af1=clock[1], af2=0.0,  # -TauN, +GammaN
        glonass_state=GlonassState(pos, vel, acc), health=health,
    )


def parse_nav(source: Source,
              validity: Optional[dict[Constellation, float]] = None) -> NavData:
    """Parse a RINEX 3.x navigation file into an ephemeris store.

    Records with non-finite fields or undecodable layout are skipped and
    counted; Klobuchar coefficients come from the header when present,
    otherwise they are zero and flagged absent.
    """
    stream = _open(source)
    iono, report = _read_nav_header(stream)
    store = EphemerisStore(validity=validity)
    lines = iter(stream)
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        sat_text = line[0:3].strip()
        try:
            sat = SatId.from_str(sat_text)
        except (GnssError, ValueError):
            report.skipped_records += 1
            report.warn(f"unrecognized record start {line[:30]!r}")
            continue
        n_orbit = 3 if sat.constellation is Constellation.GLONASS else 7
        try:
            toc = GnssTime.from_civil(
                int(line[4:8]), int(line[9:11]), int(line[12:14]),
                int(line[15:17]), int(line[18:20]), float(line[21:23]))
            clock = _record_fields(line, start=23)
            orbit = []
            for _ in range(n_orbit):
                orbit.append(_record_fields(next(lines).rstrip("\n")))
            if sat.constellation is Constellation.GLONASS:
                record = _parse_glonass(sat, toc, clock, orbit)
            elif sat.constellation in _KEPLER_SYSTEMS:
                record = _parse_kepler(sat, toc, clock, orbit)
            else:
                report.skipped_records += 1
                continue
        except StopIteration:
            report.skipped_records += 1
            report.warn("truncated final record")
            break
        except (GnssError, ValueError, IndexError) as exc:
            report.skipped_records += 1
            report.warn(f"skipped {sat} record: {exc}")
            continue
        store.add(record)
        report.epochs += 1
    return NavData(store=store, iono=iono, report=report)


# ---------------------------------------------------------------------------
# writing

def _efmt(value: float) -> str:
    return f"{value:19.12E}"


def _nav_lines(values: list[float], first_prefix: str) -> list[str]:
    # first line carries the 3 clock fields; orbit lines carry 4 each
    lines = [first_prefix + "".join(_efmt(v) for v in values[:3])]
    for i in range(3, len(values), 4):
        lines.append("    " + "".join(_efmt(v) for v in values[i:i + 4]))
    return lines


def write_nav(records: Iterable[EphemerisRecord],
              iono: Optional[IonoCoefficients] = None) -> str:
    """Serialize ephemeris records to RINEX 3.04 navigation text."""
    out = StringIO()

    def hline(content: str, label: str) -> None:
        out.write(f"{content:<60.60s}{label:<20s}".rstrip() + "\n")

    hline(f"{3.04:9.2f}{'':11s}{'N: GNSS NAV DATA':<20s}{'M: MIXED':<20s}",
          "RINEX VERSION / TYPE")
    hline(f"{'gnssodom':<20s}{'gnssodom':<20s}{'20220301 000000 UTC':<20s}",
          "PGM / RUN BY / DATE")
    if iono is not None and iono.present:
        a = iono.alpha
        b = iono.beta
        hline("GPSA " + "".join(f"{v:12.4E}" for v in a), "IONOSPHERIC CORR")
        hline("GPSB " + "".join(f"{v:12.4E}" for v in b), "IONOSPHERIC CORR")
    hline("", "END OF HEADER")

    for rec in sorted(records, key=lambda r: (r.sat.sort_key(), r.toe.week, r.toe.tow)):
        const = rec.sat.constellation
        if const is Constellation.GLONASS:
            toc_sys = rec.toc.add(-GPS_UTC_LEAP_SECONDS)
        elif const is Constellation.BEIDOU:
            toc_sys = GnssTime(rec.toc.week - _BDT_WEEK_OFFSET,
                               rec.toc.tow - _BDT_SECOND_OFFSET)
        else:
            toc_sys = rec.toc
        y, m, d, hh, mm, ss = toc_sys.to_civil()
        head = f"{rec.sat!s} {y:4d} {m:02d} {d:02d} {hh:02d} {mm:02d} {int(round(ss)):02d}"
        if const is Constellation.GLONASS:
            g = rec.glonass_state
            values = [-rec.af0, rec.af1, 0.0,
                      g.pos[0] / 1e3, g.vel[0] / 1e3, g.acc[0] / 1e3, float(rec.health),
                      g.pos[1] / 1e3, g.vel[1] / 1e3, g.acc[1] / 1e3, float(rec.sat.fcn or 0),
                      g.pos[2] / 1e3, g.vel[2] / 1e3, g.acc[2] / 1e3, 0.0]
        else:
            k = rec.kepler
            if const is Constellation.BEIDOU:
                week = rec.toe.week - _BDT_WEEK_OFFSET
                toe_sow = rec.toe.tow - _BDT_SECOND_OFFSET
            else:
                week = rec.toe.week
                toe_sow = rec.toe.tow
            values = [rec.af0, rec.af1, rec.af2,
                      float(rec.iode), k.crs, k.delta_n, k.m0,
                      k.cuc, k.e, k.cus, k.sqrt_a,
                      toe_sow, k.cic, k.omega0, k.cis,
                      k.i0, k.crc, k.omega, k.omega_dot,
                      k.idot, 0.0, float(week), 0.0,
                      2.0, float(rec.health), rec.tgd, 0.0,
                      toe_sow, 4.0]
        for text in _nav_lines(values, head.ljust(23)[:23]):
            out.write(text.rstrip() + "\n")
    return out.getvalue()
