"""Observation code tables: band classification and preference order.

The receivers behind this toolkit emit a variety of RINEX 3 observation
codes; which tracking attribute ends up in a file is receiver-specific, so
the preferred attribute order below is a documented choice and can be
overridden through the CLI config.
"""

from __future__ import annotations

from ..types import Band, Constellation

# per constellation: band -> (frequency digits accepted, attribute preference)
# first matching digit wins, then attributes in the listed order; an
# attribute not listed ranks after all listed ones.
CODE_TABLE: dict[Constellation, dict[Band, tuple[tuple[str, ...], str]]] = {
    Constellation.GPS: {
        Band.L1: (("1",), "CWXPYLMSN"),
        Band.L2: (("2",), "WCXPYLMSDN"),
    },
    Constellation.QZSS: {
        Band.L1: (("1",), "CXZSLB"),
        Band.L2: (("2",), "XLS"),
    },
    Constellation.GLONASS: {
        Band.L1: (("1",), "CP"),
        Band.L2: (("2",), "CP"),
    },
    Constellation.GALILEO: {
        Band.L1: (("1",), "CXBAZ"),
        Band.L2: (("7",), "QXIZ"),
    },
    # B1I appears as C2I from RINEX 3.03 on but as C1I in 3.02
    Constellation.BEIDOU: {
        Band.L1: (("2", "1"), "IXQ"),
        Band.L2: (("7",), "IXQ"),
    },
}


def classify_band(constellation: Constellation, code: str) -> Band | None:
    """Map a 3-char observation code (e.g. 'L1C') to a band class."""
    digit = code[1]
    for band, (digits, _) in CODE_TABLE[constellation].items():
        if digit in digits:
            return band
    return None


def code_rank(constellation: Constellation, code: str) -> tuple[int, int]:
    """Sort key: lower is more preferred within one band."""
    digits, attrs = CODE_TABLE[constellation][classify_band(constellation, code)]
    digit_rank = digits.index(code[1])
    attr = code[2] if len(code) > 2 else " "
    attr_rank = attrs.index(attr) if attr in attrs else len(attrs)
    return digit_rank, attr_rank


def preferred_code(constellation: Constellation, band: Band,
                   available: list[str]) -> str | None:
    """Pick the preferred observation code of one band from those present."""
    candidates = [c for c in available if classify_band(constellation, c) is band]
    if not candidates:
        return None
    return min(candidates, key=lambda c: code_rank(constellation, c))
