"""Physical and geodetic constants shared across the package."""

import math

# WGS-84 defining parameters
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

GM_EARTH = 3.986005e14  # m^3/s^2, GPS ICD value
OMEGA_EARTH = 7.2921151467e-5  # rad/s

SPEED_OF_LIGHT = 299792458.0
SECONDS_PER_WEEK = 604800.0

GPS_L1_FREQ = 1575.42e6
GPS_L1_WAVELENGTH = SPEED_OF_LIGHT / GPS_L1_FREQ
GPS_CA_CHIP_LENGTH = SPEED_OF_LIGHT / 1.023e6

DEFAULT_ELEVATION_MASK = math.radians(33.0)
DEFAULT_ANTENNA_HEIGHT = 1.7
