"""Almanac ingestion, Keplerian propagation and receiver-relative geometry.

Satellite positions are almanac grade: two-body Kepler motion with the
secular RAAN drift carried in the almanac and no harmonic corrections.
That is plenty for deciding which satellites are above a mask or behind
a building.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .constants import (
    GM_EARTH,
    OMEGA_EARTH,
    SECONDS_PER_WEEK,
    WGS84_A,
    WGS84_B,
    WGS84_E2,
)

log = logging.getLogger(__name__)

KEPLER_TOL = 1e-12
KEPLER_MAX_ITER = 50


class AlmanacError(ValueError):
    pass


class KeplerConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlmanacRecord:
    sat_id: str
    sqrt_semimajor: float
    eccentricity: float
    inclination: float
    raan_at_week_epoch: float
    raan_rate: float
    arg_perigee: float
    mean_anomaly_at_epoch: float
    toa: float
    week: int
    health: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eccentricity < 1.0:
            raise AlmanacError(f"{self.sat_id}: eccentricity {self.eccentricity} outside [0, 1)")
        if not self.sqrt_semimajor > 0.0:
            raise AlmanacError(f"{self.sat_id}: sqrt_semimajor must be positive")
        angles = (self.inclination, self.raan_at_week_epoch, self.raan_rate,
                  self.arg_perigee, self.mean_anomaly_at_epoch, self.toa)
        if not all(math.isfinite(a) for a in angles):
            raise AlmanacError(f"{self.sat_id}: non-finite orbital element")

    @property
    def constellation(self) -> str:
        return constellation_of(self.sat_id)

    @property
    def semimajor(self) -> float:
        return self.sqrt_semimajor ** 2


@dataclass(frozen=True)
class SatelliteState:
    sat_id: str
    position_ecef: np.ndarray
    epoch: float

    @property
    def constellation(self) -> str:
        return constellation_of(self.sat_id)


@dataclass(frozen=True)
class GeodeticPosition:
    latitude: float
    longitude: float
    height: float

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2 + 1e-15:
            raise ValueError("latitude outside [-pi/2, pi/2]")
        if abs(self.longitude) > math.pi + 1e-15:
            raise ValueError("longitude outside [-pi, pi]")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, h_m: float = 0.0) -> GeodeticPosition:
        return cls(math.radians(lat_deg), math.radians(lon_deg), float(h_m))


@dataclass(frozen=True)
class TopocentricView:
    azimuth: float
    elevation: float
    range: float


def constellation_of(sat_id: str) -> str:
    """Leading letter of a constellation-qualified id such as ``G05``."""
    return sat_id[0] if sat_id and sat_id[0].isalpha() else "G"


# ---------------------------------------------------------------------------
# YUMA parsing

# Keys are normalised by lower-casing and dropping everything that is not
# a letter or digit, so "SQRT(A)  (m 1/2)" becomes "sqrtam12".
_KEY_MAP = {
    "id": "prn",
    "prn": "prn",
    "satid": "sat_id",
    "health": "health",
    "eccentricity": "eccentricity",
    "timeofapplicabilitys": "toa",
    "timeofapplicability": "toa",
    "toa": "toa",
    "orbitalinclinationrad": "inclination",
    "inclination": "inclination",
    "rateofrightascenrs": "raan_rate",
    "raanrate": "raan_rate",
    "sqrtam12": "sqrt_semimajor",
    "sqrta": "sqrt_semimajor",
    "sqrtsemimajor": "sqrt_semimajor",
    "rightascenatweekrad": "raan_at_week_epoch",
    "raanatweekepoch": "raan_at_week_epoch",
    "argumentofperigeerad": "arg_perigee",
    "argperigee": "arg_perigee",
    "meananomrad": "mean_anomaly_at_epoch",
    "meananomalyatepoch": "mean_anomaly_at_epoch",
    "week": "week",
    "constellation": "constellation",
}

_REQUIRED = ("eccentricity", "toa", "inclination", "raan_rate", "sqrt_semimajor",
             "raan_at_week_epoch", "arg_perigee", "mean_anomaly_at_epoch", "week")


def _norm_key(key: str) -> str:
    return re.sub(r"[^a-z0-9]", "", key.lower())


def _split_blocks(text: str) -> list[list[str]]:
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return blocks


def _parse_block(lines: list[str], constellation: str) -> AlmanacRecord:
    fields: dict[str, str] = {}
    for line in lines:
        if ":" not in line:
            continue  # banner lines such as "**** Week 150 almanac for PRN-01 ****"
        key, _, value = line.partition(":")
        name = _KEY_MAP.get(_norm_key(key))
        if name is not None:
            fields[name] = value.strip()

    missing = [k for k in _REQUIRED if k not in fields]
    if "prn" not in fields and "sat_id" not in fields:
        missing.append("id")
    if missing:
        raise AlmanacError(f"missing keys: {', '.join(missing)}")

    if "sat_id" in fields:
        sat_id = fields["sat_id"]
    else:
        prefix = fields.get("constellation", constellation).strip().upper()[:1] or "G"
        sat_id = f"{prefix}{int(fields['prn']):02d}"

    try:
        return AlmanacRecord(
            sat_id=sat_id,
            sqrt_semimajor=float(fields["sqrt_semimajor"]),
            eccentricity=float(fields["eccentricity"]),
            inclination=float(fields["inclination"]),
            raan_at_week_epoch=float(fields["raan_at_week_epoch"]),
            raan_rate=float(fields["raan_rate"]),
            arg_perigee=float(fields["arg_perigee"]),
            mean_anomaly_at_epoch=float(fields["mean_anomaly_at_epoch"]),
            toa=float(fields["toa"]),
            week=int(float(fields["week"])),
            health=int(float(fields.get("health", "0"))),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, AlmanacError):
            raise
        raise AlmanacError(f"{sat_id}: {exc}") from exc


def parse_almanac(text: str, constellation: str = "G",
                  diagnostics: list[str] | None = None) -> list[AlmanacRecord]:
    """Parse a YUMA-style almanac document.

    Parameters
    ----------
    text : str
        Blocks of ``key: value`` lines separated by blank lines.
    constellation : str
        Prefix letter for satellite ids when a block has no
        ``constellation`` key of its own.
    diagnostics : list, optional
        Receives one message per rejected block.

    Returns
    -------
    list of AlmanacRecord
        Well-formed blocks in document order.
    """
    if not text or not text.strip():
        raise AlmanacError("empty almanac document")
    records = []
    for i, block in enumerate(_split_blocks(text)):
        try:
            records.append(_parse_block(block, constellation))
        except AlmanacError as exc:
            msg = f"block {i}: {exc}"
            log.warning("rejected almanac %s", msg)
            if diagnostics is not None:
                diagnostics.append(msg)
    return records


def format_yuma(records: list[AlmanacRecord]) -> str:
    """Render records back into the YUMA layout accepted by :func:`parse_almanac`."""
    out = []
    for r in records:
        out.append(f"******** Week {r.week} almanac for {r.sat_id} ********\n"
                   f"ID:                         {int(r.sat_id[1:]):02d}\n"
                   f"Health:                     {r.health:03d}\n"
                   f"Eccentricity:               {r.eccentricity:.10E}\n"
                   f"Time of Applicability(s):  {r.toa:.4f}\n"
                   f"Orbital Inclination(rad):   {r.inclination:.10f}\n"
                   f"Rate of Right Ascen(r/s):  {r.raan_rate:.10E}\n"
                   f"SQRT(A)  (m 1/2):           {r.sqrt_semimajor:.6f}\n"
                   f"Right Ascen at Week(rad):  {r.raan_at_week_epoch:.10E}\n"
                   f"Argument of Perigee(rad):   {r.arg_perigee:.10f}\n"
                   f"Mean Anom(rad):            {r.mean_anomaly_at_epoch:.10E}\n"
                   f"Af0(s):                     0.0000000000E+000\n"
                   f"Af1(s/s):                   0.0000000000E+000\n"
                   f"week:                        {r.week}\n")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Propagation

def solve_kepler(mean_anomaly: float, eccentricity: float) -> float:
    """Eccentric anomaly E with ``|M - (E - e sin E)| < 1e-12``."""
    m = math.remainder(mean_anomaly, 2.0 * math.pi)
    e = eccentricity
    ecc = m if e < 0.8 else math.copysign(math.pi, m) if m else math.pi
    for _ in range(KEPLER_MAX_ITER):
        resid = m - (ecc - e * math.sin(ecc))
        if abs(resid) < KEPLER_TOL:
            return ecc + (mean_anomaly - m)
        ecc += resid / (1.0 - e * math.cos(ecc))
    raise KeplerConvergenceError(f"Kepler iteration did not converge (M={mean_anomaly}, e={e})")


def propagate(rec: AlmanacRecord, t: float, week: int | None = None) -> SatelliteState:
    """ECEF position of ``rec`` at ``t`` seconds of week.

    ``week`` defaults to the almanac week, so ``t`` may be given as plain
    seconds of week when scenario and almanac share a week.
    """
    tk = t - rec.toa
    if week is not None:
        tk += (week - rec.week) * SECONDS_PER_WEEK
    if abs(tk) > SECONDS_PER_WEEK:
        raise ValueError(f"epoch is {tk:.0f} s from toa, more than one week")

    a = rec.semimajor
    n0 = math.sqrt(GM_EARTH / a ** 3)
    mean_anom = rec.mean_anomaly_at_epoch + n0 * tk
    ecc_anom = solve_kepler(mean_anom, rec.eccentricity)

    e = rec.eccentricity
    true_anom = math.atan2(math.sqrt(1.0 - e * e) * math.sin(ecc_anom), math.cos(ecc_anom) - e)
    u = true_anom + rec.arg_perigee
    r = a * (1.0 - e * math.cos(ecc_anom))
    raan = rec.raan_at_week_epoch + (rec.raan_rate - OMEGA_EARTH) * tk - OMEGA_EARTH * rec.toa

    xp, yp = r * math.cos(u), r * math.sin(u)
    ci, si = math.cos(rec.inclination), math.sin(rec.inclination)
    co, so = math.cos(raan), math.sin(raan)
    pos = np.array([xp * co - yp * ci * so, xp * so + yp * ci * co, yp * si])
    return SatelliteState(rec.sat_id, pos, float(t))


def propagate_all(records: list[AlmanacRecord], t: float, week: int | None = None,
                  healthy_only: bool = True) -> list[SatelliteState]:
    return [propagate(r, t, week) for r in records if not (healthy_only and r.health)]


# ---------------------------------------------------------------------------
# Frames

def geodetic_to_ecef(g: GeodeticPosition) -> np.ndarray:
    sl, cl = math.sin(g.latitude), math.cos(g.latitude)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sl * sl)
    return np.array([
        (n + g.height) * cl * math.cos(g.longitude),
        (n + g.height) * cl * math.sin(g.longitude),
        (n * (1.0 - WGS84_E2) + g.height) * sl,
    ])


def ecef_to_geodetic(xyz) -> GeodeticPosition:
    """Inverse of :func:`geodetic_to_ecef` by fixed-point iteration on latitude."""
    x, y, z = (float(v) for v in xyz)
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    if p < 1e-9:
        lat = math.copysign(math.pi / 2, z) if z else math.pi / 2
        return GeodeticPosition(lat, lon, abs(z) - WGS84_B)
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    for _ in range(30):
        sl = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sl * sl)
        new = math.atan2(z + WGS84_E2 * n * sl, p)
        if abs(new - lat) < 1e-15:
            lat = new
            break
        lat = new
    sl, cl = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sl * sl)
    # height formula stable at all latitudes
    h = p * cl + z * sl - n * (1.0 - WGS84_E2 * sl * sl)
    return GeodeticPosition(lat, lon, h)


def enu_rotation(lat: float, lon: float) -> np.ndarray:
    """Rows are the East, North, Up unit vectors expressed in ECEF."""
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def topocentric(rx_ecef, sat: SatelliteState) -> TopocentricView:
    rx = np.asarray(rx_ecef, dtype=float)
    los = sat.position_ecef - rx
    rng = float(np.linalg.norm(los))
    if rng < 1e-6:
        raise ValueError("receiver coincides with satellite")
    g = ecef_to_geodetic(rx)
    e, n, u = enu_rotation(g.latitude, g.longitude) @ (los / rng)
    el = math.atan2(u, math.hypot(e, n))
    az = math.atan2(e, n) % (2.0 * math.pi)
    return TopocentricView(az, el, rng)


def los_from_view(view: TopocentricView) -> np.ndarray:
    """ENU unit vector reconstructed from azimuth and elevation."""
    ce = math.cos(view.elevation)
    return np.array([ce * math.sin(view.azimuth), ce * math.cos(view.azimuth), math.sin(view.elevation)])
