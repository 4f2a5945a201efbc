"""RINEX 3.x observation file reading and writing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from io import StringIO
from typing import IO, Iterable, Optional, Union

from ..constants import CLIGHT
from ..gnsstime import GnssTime
from ..types import (
    Band,
    CarrierPhaseObs,
    Constellation,
    GnssError,
    ObservationEpoch,
    SatId,
    carrier_frequency,
)
from .codes import classify_band, preferred_code

Source = Union[str, bytes, IO[str]]


class RinexError(GnssError):
    """Hard parse failure (malformed header, unsupported version)."""


@dataclass
class ParseReport:
    """Machine-readable summary of skips and warnings during parsing."""

    epochs: int = 0
    observations: int = 0
    skipped_epochs: int = 0
    out_of_order: int = 0
    skipped_records: int = 0
    messages: list[str] = field(default_factory=list)

    @property
    def warning_count(self) -> int:
        return self.skipped_epochs + self.out_of_order + self.skipped_records

    def warn(self, message: str) -> None:
        if len(self.messages) < 100:
            self.messages.append(message)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "observations": self.observations,
            "skipped_epochs": self.skipped_epochs,
            "out_of_order": self.out_of_order,
            "skipped_records": self.skipped_records,
            "warning_count": self.warning_count,
            "messages": self.messages,
        }


@dataclass
class ObsData:
    epochs: list[ObservationEpoch]
    report: ParseReport
    glonass_fcn: dict[SatId, int] = field(default_factory=dict)


def _open(source: Source) -> IO[str]:
    if isinstance(source, bytes):
        return StringIO(source.decode("ascii", errors="replace"))
    if isinstance(source, str):
        return StringIO(source)
    return source


def _field(line: str, start: int, end: int) -> str:
    return line[start:end] if len(line) > start else ""


def _parse_float(text: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    return float(text)


def _check_version(line: str, expected_type: str) -> float:
    try:
        version = float(line[0:9])
    except ValueError:
        raise RinexError(f"malformed header line: {line.rstrip()!r}") from None
    if not 3.0 <= version < 4.0:
        raise RinexError(f"unsupported RINEX version {version:.2f}; only 3.x is supported")
    ftype = line[20:21]
    if ftype != expected_type:
        raise RinexError(f"expected file type {expected_type!r}, got {ftype!r}")
    return version


def _read_header(stream: IO[str]) -> tuple[dict, ParseReport]:
    report = ParseReport()
    header: dict = {"obs_types": {}, "glonass_fcn": {}, "version": None}
    pending_sys: Optional[Constellation] = None
    first = True
    for raw in stream:
        line = raw.rstrip("\n")
        label = _field(line, 60, 80).strip()
        if first:
            if label != "RINEX VERSION / TYPE":
                raise RinexError("missing header: first line is not RINEX VERSION / TYPE")
            header["version"] = _check_version(line, "O")
            first = False
            continue
        if label == "END OF HEADER":
            return header, report
        if label == "SYS / # / OBS TYPES":
            sys_char = line[0:1]
            if sys_char != " ":
                try:
                    pending_sys = Constellation.from_letter(sys_char)
                except GnssError:
                    pending_sys = None  # unsupported system (e.g. SBAS): ignore
                    continue
                header["obs_types"][pending_sys] = []
            if pending_sys is None:
                continue
            for k in range(13):
                code = _field(line, 7 + 4 * k, 10 + 4 * k).strip()
                if code:
                    header["obs_types"][pending_sys].append(code)
        elif label == "GLONASS SLOT / FRQ #":
            for k in range(8):
                start = 4 + 7 * k
                sat_text = _field(line, start, start + 3).strip()
                fcn_text = _field(line, start + 4, start + 6).strip()
                if not sat_text or not fcn_text:
                    continue
                try:
                    sat = SatId.from_str(sat_text)
                    header["glonass_fcn"][sat] = int(fcn_text)
                except (GnssError, ValueError):
                    report.warn(f"bad GLONASS SLOT / FRQ # entry {sat_text!r}")
    raise RinexError("missing header: END OF HEADER not found")


def _parse_epoch_line(line: str) -> tuple[GnssTime, int, int]:
    if not line.startswith(">"):
        raise ValueError("not an epoch line")
    year = int(line[2:6])
    month = int(line[7:9])
    day = int(line[10:12])
    hour = int(line[13:15])
    minute = int(line[16:18])
    second = float(line[18:29])
    flag = int(line[29:32])
    nsat = int(line[32:35])
    return GnssTime.from_civil(year, month, day, hour, minute, second), flag, nsat


def _build_sat_obs(sat: SatId, codes: list[str], values: dict[str, tuple[float, str]],
                   report: ParseReport) -> list[CarrierPhaseObs]:
    """Assemble per-band observations from the raw (code -> value, flags) map."""
    result = []
    available = [c for c, (v, _) in values.items() if math.isfinite(v) and v != 0.0]
    for band in (Band.L1, Band.L2):
        phase_code = preferred_code(sat.constellation, band,
                                    [c for c in available if c[0] == "L"])
        if phase_code is None:
            continue
        phase, flags = values[phase_code]
        lli_digit = flags[0] if len(flags) > 0 and flags[0].isdigit() else "0"
        lli = bool(int(lli_digit) & 1)
        attr = phase_code[1:]

        def _pick(kind: str) -> Optional[float]:
            same = kind + attr
            if same in values and math.isfinite(values[same][0]) and values[same][0] != 0.0:
                return values[same][0]
            code = preferred_code(sat.constellation, band,
                                  [c for c in available if c[0] == kind])
            return values[code][0] if code else None

        pseudorange = _pick("C")
        doppler = _pick("D")
        snr = _pick("S")
        try:
            wavelength = CLIGHT / carrier_frequency(sat, band)
        except GnssError:
            report.skipped_records += 1
            report.warn(f"{sat}: no GLONASS frequency channel; observation dropped")
            continue
        result.append(CarrierPhaseObs(
            sat=sat, band=band, phase=phase,
            pseudorange=pseudorange if pseudorange is not None else math.nan,
            wavelength=wavelength, lli=lli, doppler=doppler, snr=snr,
        ))
    return result


def parse_obs(source: Source,
              glonass_fcn: Optional[dict[SatId, int]] = None) -> ObsData:
    """Parse a RINEX 3.x observation file into epoch-wise observations.

    Epochs that cannot be decoded, or that break the strictly-increasing
    time order, are skipped and counted in the report.
    """
    stream = _open(source)
    header, report = _read_header(stream)
    fcn_map = dict(header["glonass_fcn"])
    if glonass_fcn:
        fcn_map.update(glonass_fcn)
    obs_types: dict[Constellation, list[str]] = header["obs_types"]

    epochs: list[ObservationEpoch] = []
    lines = iter(stream)
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if not line.startswith(">"):
            # stray record line, e.g. the tail of a broken epoch header
            continue
        try:
            time, flag, nsat = _parse_epoch_line(line)
        except (ValueError, IndexError):
            report.skipped_epochs += 1
            report.warn(f"unparseable epoch line: {line[:40]!r}")
            continue
        sat_lines = []
        try:
            for _ in range(nsat):
                sat_lines.append(next(lines).rstrip("\n"))
        except StopIteration:
            report.skipped_epochs += 1
            report.warn("truncated final epoch")
            break
        if flag not in (0, 1):  # power failure / header-in-data events skipped
            report.skipped_epochs += 1
            continue
        epoch_obs: list[CarrierPhaseObs] = []
        ok = True
        for sat_line in sat_lines:
            sat_text = sat_line[0:3].strip()
            try:
                sat = SatId.from_str(sat_text)
            except (GnssError, ValueError):
                ok = False
                break
            if sat.constellation not in obs_types:
                continue
            if sat.constellation is Constellation.GLONASS:
                sat = SatId(sat.constellation, sat.prn, fcn_map.get(SatId(sat.constellation, sat.prn)))
            values: dict[str, tuple[float, str]] = {}
            for k, code in enumerate(obs_types[sat.constellation]):
                text = _field(sat_line, 3 + 16 * k, 17 + 16 * k)
                flags = _field(sat_line, 17 + 16 * k, 19 + 16 * k)
                try:
                    value = _parse_float(text)
                except ValueError:
                    ok = False
                    break
                values[code] = (value, flags)
            if not ok:
                break
            epoch_obs.extend(_build_sat_obs(sat, obs_types[sat.constellation], values, report))
        if not ok:
            report.skipped_epochs += 1
            report.warn(f"unparseable records in epoch at tow {time.tow:.1f}")
            continue
        if epochs and time - epochs[-1].time <= 0:
            report.out_of_order += 1
            report.warn(f"epoch at tow {time.tow:.1f} not after its predecessor; rejected")
            continue
        epochs.append(ObservationEpoch(time=time, obs=epoch_obs))
        report.epochs += 1
        report.observations += len(epoch_obs)
    return ObsData(epochs=epochs, report=report, glonass_fcn=fcn_map)


# ---------------------------------------------------------------------------
# writing

# canonical codes emitted per constellation and band: (code, phase, snr)
_WRITE_CODES = {
    Constellation.GPS: {Band.L1: "1C", Band.L2: "2W"},
    Constellation.QZSS: {Band.L1: "1C", Band.L2: "2X"},
    Constellation.GLONASS: {Band.L1: "1C", Band.L2: "2C"},
    Constellation.GALILEO: {Band.L1: "1C", Band.L2: "7Q"},
    Constellation.BEIDOU: {Band.L1: "2I", Band.L2: "7I"},
}

_HEADER_DATE = "20220301 000000 UTC"  # fixed so outputs are reproducible


def _obs_field(value: Optional[float], lli: bool = False) -> str:
    if value is None or not math.isfinite(value):
        return " " * 16
    flag = "1" if lli else " "
    return f"{value:14.3f}{flag} "


def write_obs(epochs: Iterable[ObservationEpoch],
              glonass_fcn: Optional[dict[SatId, int]] = None,
              marker: str = "SIM") -> str:
    """Serialize epochs to RINEX 3.04 observation text."""
    epochs = list(epochs)
    systems: dict[Constellation, set[Band]] = {}
    has_doppler = False
    fcn_map = dict(glonass_fcn or {})
    for ep in epochs:
        for o in ep.obs:
            systems.setdefault(o.sat.constellation, set()).add(o.band)
            has_doppler = has_doppler or o.doppler is not None
            if o.sat.constellation is Constellation.GLONASS and o.sat.fcn is not None:
                fcn_map.setdefault(SatId(o.sat.constellation, o.sat.prn), o.sat.fcn)

    out = StringIO()

    def hline(content: str, label: str) -> None:
        out.write(f"{content:<60.60s}{label:<20s}\n".rstrip() + "\n")

    hline(f"{3.04:9.2f}{'':11s}{'OBSERVATION DATA':<20s}{'M':<20s}", "RINEX VERSION / TYPE")
    hline(f"{'gnssodom':<20s}{'gnssodom':<20s}{_HEADER_DATE:<20s}", "PGM / RUN BY / DATE")
    hline(f"{marker:<60s}", "MARKER NAME")
    code_lists: dict[Constellation, list[str]] = {}
    for const in sorted(systems, key=lambda c: c.letter):
        codes = []
        for band in sorted(systems[const], key=lambda b: b.value):
            suffix = _WRITE_CODES[const][band]
            codes += [f"C{suffix}", f"L{suffix}", f"S{suffix}"]
            if has_doppler:
                codes.append(f"D{suffix}")
        code_lists[const] = codes
        text = f"{const.letter}  {len(codes):3d}" + "".join(f" {c:<3s}" for c in codes)
        hline(text, "SYS / # / OBS TYPES")
    if Constellation.GLONASS in systems and fcn_map:
        sats = sorted(fcn_map, key=lambda s: s.prn)
        text = f"{len(sats):3d}"
        for sat in sats[:8]:
            text += f" {sat!s} {fcn_map[sat]:2d}"
        hline(text, "GLONASS SLOT / FRQ #")
    if epochs:
        y, m, d, hh, mm, ss = epochs[0].time.to_civil()
        hline(f"{y:6d}{m:6d}{d:6d}{hh:6d}{mm:6d}{ss:13.7f}     {'GPS':<3s}", "TIME OF FIRST OBS")
    hline("", "END OF HEADER")

    for ep in epochs:
        y, m, d, hh, mm, ss = ep.time.to_civil()
        sats = ep.satellites()
        out.write(f"> {y:4d} {m:02d} {d:02d} {hh:02d} {mm:02d}{ss:11.7f}  0{len(sats):3d}\n")
        for sat in sats:
            line = f"{sat!s}"
            for code in code_lists[sat.constellation]:
                band = classify_band(sat.constellation, code)
                o = ep.get(sat, band)
                if o is None:
                    line += " " * 16
                    continue
                if code[0] == "C":
                    line += _obs_field(o.pseudorange)
                elif code[0] == "L":
                    line += _obs_field(o.phase, o.lli)
                elif code[0] == "S":
                    line += _obs_field(o.snr)
                else:
                    line += _obs_field(o.doppler)
            out.write(line.rstrip() + "\n")
    return out.getvalue()
