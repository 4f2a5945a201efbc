import math

import numpy as np
import pytest

from gnssodom.ephemeris import EphemerisRecord, GlonassState, KeplerElements
from gnssodom.gnsstime import GnssTime
from gnssodom.rinex import RinexError, parse_nav, parse_obs, write_nav, write_obs
from gnssodom.sim import scenario_mixed_static, simulate
from gnssodom.types import Band, Constellation, IonoCoefficients, SatId

OBS_HEADER = (
    "     3.04           OBSERVATION DATA    M                   RINEX VERSION / TYPE\n"
    "G    4 C1C L1C D1C S1C                                      SYS / # / OBS TYPES\n"
    "                                                            END OF HEADER\n"
)


def _obs_line(sat, pr, phase, lli_char=" ", doppler=1824.677, snr=49.5):
    return (f"{sat}{pr:14.3f}  {phase:14.3f}{lli_char} "
            f"{doppler:14.3f}  {snr:14.3f}  \n")


def test_parse_obs_crafted_single_epoch():
    # phase field "123456789.123" with LLI digit 4: bit 0 unset -> lli False
    content = OBS_HEADER + "> 2022 03 01 00 00 30.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456789.123, "4")
    data = parse_obs(content)
    assert data.report.epochs == 1
    assert data.report.warning_count == 0
    (epoch,) = data.epochs
    assert epoch.time == GnssTime(2199, 172830.0)
    obs = epoch.get(SatId.from_str("G01"), Band.L1)
    assert obs.phase == pytest.approx(123456789.123, abs=1e-9)
    assert obs.lli is False
    assert obs.pseudorange == pytest.approx(20832356.351, abs=1e-9)
    assert obs.doppler == pytest.approx(1824.677)
    assert obs.snr == pytest.approx(49.5)


def test_parse_obs_lli_bit0_set():
    content = OBS_HEADER + "> 2022 03 01 00 00 30.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456789.123, "1")
    data = parse_obs(content)
    assert data.epochs[0].obs[0].lli is True
    # bit 1 (cycle-slip-possible) alone must not set the flag
    content = OBS_HEADER + "> 2022 03 01 00 00 30.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456789.123, "2")
    assert parse_obs(content).epochs[0].obs[0].lli is False


def test_parse_obs_empty_input_is_missing_header():
    with pytest.raises(RinexError, match="missing header"):
        parse_obs("")


def test_parse_obs_rejects_rinex2():
    content = OBS_HEADER.replace("3.04", "2.11")
    with pytest.raises(RinexError, match="version"):
        parse_obs(content)


def test_parse_obs_rejects_wrong_first_line():
    with pytest.raises(RinexError, match="RINEX VERSION / TYPE"):
        parse_obs("garbage line that is not a header\n")


def test_parse_obs_out_of_order_epoch_rejected():
    content = OBS_HEADER \
        + "> 2022 03 01 00 00 30.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456789.123) \
        + "> 2022 03 01 00 00 29.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456788.123)
    data = parse_obs(content)
    assert len(data.epochs) == 1
    assert data.report.out_of_order == 1
    assert data.report.warning_count == 1


def test_parse_obs_unparseable_epoch_skipped():
    content = OBS_HEADER \
        + "> 2022 03 01 00 00 30.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456789.123) \
        + "> 2022 03 01 xx 00 31.0000000  0  1\n" \
        + _obs_line("G01", 20832356.351, 123456789.123)
    data = parse_obs(content)
    assert len(data.epochs) == 1
    assert data.report.skipped_epochs == 1


def test_parse_obs_code_preference_c1c_over_c1w():
    header = (
        "     3.04           OBSERVATION DATA    M                   RINEX VERSION / TYPE\n"
        "G    4 C1W L1W C1C L1C                                      SYS / # / OBS TYPES\n"
        "                                                            END OF HEADER\n"
    )
    line = (f"G01{20000000.111:14.3f}  {105000000.111:14.3f}  "
            f"{20000000.222:14.3f}  {105000000.222:14.3f}  \n")
    data = parse_obs(header + "> 2022 03 01 00 00 30.0000000  0  1\n" + line)
    obs = data.epochs[0].get(SatId.from_str("G01"), Band.L1)
    # the 1C attribute outranks 1W for both code and phase
    assert obs.phase == pytest.approx(105000000.222)
    assert obs.pseudorange == pytest.approx(20000000.222)


def _hline(content, label):
    return f"{content:<60s}{label}\n"


NAV_HEADER = (
    _hline("     3.04           N: GNSS NAV DATA    M: MIXED", "RINEX VERSION / TYPE")
    + _hline("GPSA " + "".join(f"{v:12.4E}" for v in (1.1180e-8, -7.4510e-9, -5.9600e-8, 1.1920e-7)),
             "IONOSPHERIC CORR")
    + _hline("GPSB " + "".join(f"{v:12.4E}" for v in (1.1670e5, -2.2940e5, -1.3110e5, 1.0490e6)),
             "IONOSPHERIC CORR")
    + _hline("", "END OF HEADER")
)

# GPS record: sqrt(A) = 5153.7, toe = 208800 s of week 2199, healthy
GPS_RECORD = """G01 2022 03 01 10 00 00 1.000000000000E-04 2.000000000000E-12 0.000000000000E+00
     1.000000000000E+01 2.500000000000E+01 4.000000000000E-09 1.500000000000E+00
    -1.000000000000E-06 1.000000000000E-02 5.000000000000E-06 5.153700000000E+03
     2.088000000000E+05 1.000000000000E-07 2.000000000000E+00-2.000000000000E-07
     9.600000000000E-01 1.800000000000E+02-1.234000000000E+00-8.000000000000E-09
    -4.000000000000E-10 0.000000000000E+00 2.199000000000E+03 0.000000000000E+00
     2.000000000000E+00 0.000000000000E+00 5.000000000000E-09 0.000000000000E+00
     2.088000000000E+05 4.000000000000E+00
"""

# GLONASS record: epoch given in UTC, position/velocity/acceleration in km
GLO_RECORD = """R07 2022 03 01 09 59 42-5.000000000000E-05 1.000000000000E-12 0.000000000000E+00
     1.123456000000E+04-2.345600000000E-01 1.000000000000E-09 0.000000000000E+00
    -1.987654000000E+04 1.234500000000E+00 0.000000000000E+00 3.000000000000E+00
     9.876543000000E+03 3.210900000000E+00-1.000000000000E-09 0.000000000000E+00
"""


def test_parse_nav_gps_semi_major_axis():
    data = parse_nav(NAV_HEADER + GPS_RECORD)
    assert data.report.epochs == 1
    rec = data.store.select(SatId.from_str("G01"), GnssTime(2199, 208800.0))
    assert rec.kepler.sqrt_a ** 2 == pytest.approx(26560623.69, abs=1e-4)
    assert rec.toe == GnssTime(2199, 208800.0)
    assert rec.af0 == pytest.approx(1e-4)
    assert rec.tgd == pytest.approx(5e-9)
    assert rec.health == 0


def test_parse_nav_header_iono():
    data = parse_nav(NAV_HEADER + GPS_RECORD)
    assert data.iono.present
    assert data.iono.alpha[0] == pytest.approx(1.118e-8)
    assert data.iono.beta[3] == pytest.approx(1.049e6)


def test_parse_nav_missing_iono_flagged_absent():
    header = NAV_HEADER.splitlines()
    content = "\n".join([header[0], header[3]]) + "\n" + GPS_RECORD
    data = parse_nav(content)
    assert not data.iono.present
    assert (data.iono.alpha == 0).all()


def test_parse_nav_glonass_units_and_time():
    data = parse_nav(NAV_HEADER + GLO_RECORD)
    sat = SatId.from_str("R07")
    # UTC 09:59:42 + 18 leap seconds = GPS 10:00:00
    rec = data.store.select(sat, GnssTime(2199, 208800.0))
    assert rec.toe == GnssTime(2199, 208800.0)
    assert rec.glonass_state.pos[0] == pytest.approx(1.123456e7)
    assert rec.glonass_state.vel[1] == pytest.approx(1234.5)
    assert rec.glonass_state.acc[2] == pytest.approx(-1e-6)
    assert rec.sat.fcn == 3
    assert rec.af0 == pytest.approx(5e-5)  # clock stored as -TauN


def test_parse_nav_nonfinite_record_skipped():
    bad = GPS_RECORD.replace("5.153700000000E+03", "             NaN   ")
    data = parse_nav(NAV_HEADER + bad + GLO_RECORD)
    assert data.report.skipped_records == 1
    assert data.report.epochs == 1  # the GLONASS record survives


def test_nav_write_parse_round_trip():
    sim = simulate(scenario_mixed_static(duration_s=5))
    text = write_nav(sim.store.records(), sim.iono)
    data = parse_nav(text)
    assert len(data.store) == len(sim.store)
    for sat in sim.store.satellites():
        t = sim.epochs[0].time
        a = sim.store.select(sat, t)
        b = data.store.select(sat, t)
        assert abs(b.toe - a.toe) < 1.0
        assert b.af0 == pytest.approx(a.af0, abs=1e-15)
        if a.kepler is not None:
            assert b.kepler.sqrt_a == pytest.approx(a.kepler.sqrt_a, abs=1e-9)
            assert b.kepler.m0 == pytest.approx(a.kepler.m0, abs=1e-12)
        else:
            np.testing.assert_allclose(b.glonass_state.pos, a.glonass_state.pos,
                                       atol=1e-6)
            assert b.sat.fcn == a.sat.fcn


def test_obs_write_parse_round_trip():
    sim = simulate(scenario_mixed_static(duration_s=5))
    text = write_obs(sim.epochs, sim.store.glonass_fcn())
    data = parse_obs(text)
    assert data.report.epochs == len(sim.epochs)
    assert data.report.warning_count == 0
    for orig_epoch, parsed_epoch in zip(sim.epochs, data.epochs):
        assert abs(parsed_epoch.time - orig_epoch.time) < 1e-6
        for obs in orig_epoch.obs:
            back = parsed_epoch.get(obs.sat, obs.band)
            assert back is not None, f"{obs.sat} missing after round trip"
            assert back.phase == pytest.approx(obs.phase, abs=1e-3)
            assert back.pseudorange == pytest.approx(obs.pseudorange, abs=1e-3)
            assert back.lli == obs.lli
            assert back.wavelength == pytest.approx(obs.wavelength, abs=1e-12)


def test_obs_round_trip_preserves_lli_exactly():
    sim = simulate(scenario_mixed_static(duration_s=5))
    sim.epochs[2].obs[4].lli = True
    text = write_obs(sim.epochs, sim.store.glonass_fcn())
    data = parse_obs(text)
    flagged = [(k, o.sat, o.band) for k, ep in enumerate(data.epochs)
               for o in ep.obs if o.lli]
    marked = sim.epochs[2].obs[4]
    assert flagged == [(2, marked.sat, marked.band)]


def test_parse_obs_is_deterministic():
    sim = simulate(scenario_mixed_static(duration_s=5))
    text = write_obs(sim.epochs, sim.store.glonass_fcn())
    a = parse_obs(text)
    b = parse_obs(text)
    for ea, eb in zip(a.epochs, b.epochs):
        for oa, ob in zip(ea.obs, eb.obs):
            assert oa.phase == ob.phase and oa.pseudorange == ob.pseudorange
