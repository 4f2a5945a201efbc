"""Physical and GNSS signal constants."""

CLIGHT = 299792458.0  # speed of light [m/s]

# WGS-84 ellipsoid
RE_WGS84 = 6378137.0
FE_WGS84 = 1.0 / 298.257223563
OMGE = 7.2921151467e-5  # Earth rotation rate [rad/s]

# gravitational constants used by the broadcast orbit algorithms
GM_GPS = 3.986005e14
GM_GAL = 3.986004418e14
GM_BDS = 3.986004418e14
OMGE_BDS = 7.292115e-5

# GLONASS (PZ-90.02) values for the broadcast state-vector integration
GM_GLO = 3.9860044e14
RE_GLO = 6378136.0
J2_GLO = 1.0826257e-3
OMGE_GLO = 7.292115e-5

# carrier frequencies [Hz]
FREQ_L1 = 1575.42e6       # GPS/QZSS L1, Galileo E1
FREQ_L2 = 1227.60e6       # GPS/QZSS L2
FREQ_E5B = 1207.14e6      # Galileo E5b, BeiDou B2b
FREQ_B1I = 1561.098e6     # BeiDou B1I
FREQ_G1_BASE = 1602.0e6   # GLONASS G1 = base + k * 562.5 kHz
FREQ_G1_STEP = 0.5625e6
FREQ_G2_BASE = 1246.0e6   # GLONASS G2 = base + k * 437.5 kHz
FREQ_G2_STEP = 0.4375e6

# relativistic clock correction factor -2*sqrt(GM)/c^2 [s/sqrt(m)]
F_RELATIVITY = -4.442807633e-10

SECONDS_IN_WEEK = 604800.0
SECONDS_IN_HALF_WEEK = 302400.0

# GPS - UTC leap seconds (constant since 2017; only GLONASS record epochs
# need it, and TDCP differencing is insensitive to a wrong constant)
GPS_UTC_LEAP_SECONDS = 18.0

WAVELENGTH_L1 = CLIGHT / FREQ_L1
