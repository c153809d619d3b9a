"""Extruded-footprint urban scene and single-bounce ray geometry.

The scene lives in a local East-North-Up tangent-plane frame anchored at
``Scene.origin``. Buildings are vertical prisms; every footprint edge is a
vertical wall facet and the footprint itself is a flat roof. Reflections
are found with the image method, which is exact for one specular bounce
off a planar facet. Paths with two or more bounces are not received.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import DEFAULT_ANTENNA_HEIGHT, GPS_L1_WAVELENGTH
from .orbits import GeodeticPosition, SatelliteState, enu_rotation, geodetic_to_ecef

# Grazing tolerance; a ray touching a facet boundary within EPS is blocked.
EPS = 1e-9


class ReceptionCondition(enum.Enum):
    LOS_ONLY = "LOS_ONLY"
    LOS_NLOS = "LOS_NLOS"
    NLOS_ONLY = "NLOS_ONLY"
    NO_SIGNAL = "NO_SIGNAL"

    @property
    def severity(self) -> int:
        """Conservative ordering: NO_SIGNAL is worst."""
        return _SEVERITY[self]

    @property
    def received(self) -> bool:
        return self is not ReceptionCondition.NO_SIGNAL


_SEVERITY = {
    ReceptionCondition.LOS_ONLY: 0,
    ReceptionCondition.LOS_NLOS: 1,
    ReceptionCondition.NLOS_ONLY: 2,
    ReceptionCondition.NO_SIGNAL: 3,
}


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True)
class Building:
    footprint: np.ndarray
    height: float
    reflection_coefficient: float = 0.5

    def __post_init__(self):
        poly = np.asarray(self.footprint, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise ValueError("footprint needs at least 3 (x, y) vertices")
        if np.allclose(poly[0], poly[-1]) and len(poly) > 3:
            poly = poly[:-1]
        area = _signed_area(poly)
        if abs(area) < 1e-12:
            raise ValueError("degenerate footprint")
        if area < 0:
            poly = poly[::-1].copy()
        n = len(poly)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                    raise ValueError("footprint is self-intersecting")
        if not self.height > 0:
            raise ValueError("building height must be positive")
        if not 0.0 <= self.reflection_coefficient <= 1.0:
            raise ValueError("reflection coefficient must lie in [0, 1]")
        poly.setflags(write=False)
        object.__setattr__(self, "footprint", poly)


@dataclass(frozen=True)
class RoadSegment:
    centerline: np.ndarray
    lane_count: int = 2
    lane_width: float = 3.7

    def __post_init__(self):
        line = np.asarray(self.centerline, dtype=float)
        if line.ndim != 2 or line.shape[1] != 2 or len(line) < 2:
            raise ValueError("centerline needs at least 2 (x, y) points")
        if np.any(np.linalg.norm(np.diff(line, axis=0), axis=1) < 1e-9):
            raise ValueError("consecutive centerline points must be distinct")
        if self.lane_count < 1 or not self.lane_width > 0:
            raise ValueError("lane_count >= 1 and lane_width > 0 required")
        line.setflags(write=False)
        object.__setattr__(self, "centerline", line)

    @property
    def width(self) -> float:
        return self.lane_count * self.lane_width

    def lateral_offsets(self, include_edges: bool = True) -> list[float]:
        """Lane-centre offsets from the centreline, plus the two road edges."""
        half = 0.5 * self.width
        offs = [-half + (i + 0.5) * self.lane_width for i in range(self.lane_count)]
        if include_edges:
            offs = [-half] + offs + [half]
        return offs


@dataclass(frozen=True)
class ReceiverPose:
    position: np.ndarray
    antenna_height: float = DEFAULT_ANTENNA_HEIGHT

    def __post_init__(self):
        pos = np.zeros(3)
        p = np.asarray(self.position, dtype=float)
        pos[: len(p)] = p
        if not self.antenna_height > 0:
            raise ValueError("antenna height must be positive")
        object.__setattr__(self, "position", pos)

    @property
    def antenna(self) -> np.ndarray:
        return self.position + np.array([0.0, 0.0, self.antenna_height])


@dataclass(frozen=True)
class ReflectedPath:
    facet_id: int
    reflection_point: np.ndarray
    path_length_excess: float
    amplitude_ratio: float
    phase_offset: float


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd test; points within EPS of an edge count as inside."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = poly[None, :, :]
    b = np.roll(poly, -1, axis=0)[None, :, :]
    ax, ay, bx, by = a[..., 0], a[..., 1], b[..., 0], b[..., 1]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (y - ay) * (bx - ax) / (by - ay)
    inside = np.count_nonzero(straddle & (x < xint), axis=1) % 2 == 1
    ex, ey = bx - ax, by - ay
    l2 = ex * ex + ey * ey
    tt = np.clip(((x - ax) * ex + (y - ay) * ey) / l2, 0.0, 1.0)
    dist = np.hypot(x - (ax + tt * ex), y - (ay + tt * ey))
    return inside | np.any(dist <= EPS, axis=1)


@dataclass
class Scene:
    buildings: list[Building]
    origin: GeodeticPosition = field(default_factory=lambda: GeodeticPosition(0.0, 0.0, 0.0))
    roads: list[RoadSegment] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.buildings = list(self.buildings)
        self.roads = list(self.roads)
        self.origin_ecef = geodetic_to_ecef(self.origin)
        self.rotation = enu_rotation(self.origin.latitude, self.origin.longitude)
        p0, p1, h, coeff, owner = [], [], [], [], []
        for bi, b in enumerate(self.buildings):
            fp = b.footprint
            for j in range(len(fp)):
                p0.append(fp[j])
                p1.append(fp[(j + 1) % len(fp)])
                h.append(b.height)
                coeff.append(b.reflection_coefficient)
                owner.append(bi)
        self.wall_p0 = np.array(p0, dtype=float).reshape(-1, 2)
        edge = np.array(p1, dtype=float).reshape(-1, 2) - self.wall_p0
        self.wall_length = np.linalg.norm(edge, axis=1)
        self.wall_dir = edge / np.where(self.wall_length > 0, self.wall_length, 1.0)[:, None]
        # outward normal of a counter-clockwise edge
        self.wall_normal = np.column_stack([self.wall_dir[:, 1], -self.wall_dir[:, 0]])
        self.wall_height = np.array(h, dtype=float)
        self.wall_coeff = np.array(coeff, dtype=float)
        self.wall_building = np.array(owner, dtype=int)
        self._wall_offset = np.einsum("ij,ij->i", self.wall_p0, self.wall_normal)

    @property
    def n_facets(self) -> int:
        return len(self.wall_height)

    # frames -----------------------------------------------------------------
    def to_local(self, ecef) -> np.ndarray:
        return self.rotation @ (np.asarray(ecef, dtype=float) - self.origin_ecef)

    def to_ecef(self, local) -> np.ndarray:
        return self.origin_ecef + self.rotation.T @ np.asarray(local, dtype=float)

    def sky_direction(self, sat: SatelliteState, point) -> np.ndarray:
        v = self.to_local(sat.position_ecef) - np.asarray(point, dtype=float)
        return v / np.linalg.norm(v)

    # occlusion --------------------------------------------------------------
    def blocked(self, origins, dirs, tmax=None, skip_facet=None) -> np.ndarray:
        """Which rays ``origin + t * dir`` hit a facet or roof for EPS < t < tmax - EPS."""
        O = np.atleast_2d(np.asarray(origins, dtype=float))
        D = np.atleast_2d(np.asarray(dirs, dtype=float))
        m = len(O)
        tmax = np.full(m, np.inf) if tmax is None else np.broadcast_to(np.asarray(tmax, dtype=float), (m,))
        out = np.zeros(m, dtype=bool)
        if self.n_facets == 0 or m == 0:
            return out

        denom = D[:, :2] @ self.wall_normal.T
        num = self._wall_offset[None, :] - O[:, :2] @ self.wall_normal.T
        # rays parallel to a facet get t = inf; the resulting NaNs never hit
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-15, num / denom, np.inf)
            hx = O[:, None, 0] + t * D[:, None, 0] - self.wall_p0[None, :, 0]
            hy = O[:, None, 1] + t * D[:, None, 1] - self.wall_p0[None, :, 1]
            s = hx * self.wall_dir[None, :, 0] + hy * self.wall_dir[None, :, 1]
            z = O[:, None, 2] + t * D[:, None, 2]
            hit = ((t > EPS) & (t < tmax[:, None] - EPS)
                   & (s >= -EPS) & (s <= self.wall_length[None, :] + EPS)
                   & (z >= -EPS) & (z <= self.wall_height[None, :] + EPS))
        if skip_facet is not None:
            skip = np.broadcast_to(np.asarray(skip_facet, dtype=int), (m,))
            rows = np.nonzero(skip >= 0)[0]
            hit[rows, skip[rows]] = False
        out |= hit.any(axis=1)

        dz = D[:, 2]
        for b in self.buildings:
            todo = ~out & (np.abs(dz) > 1e-15)
            if not todo.any():
                break
            idx = np.nonzero(todo)[0]
            tr = (b.height - O[idx, 2]) / dz[idx]
            ok = (tr > EPS) & (tr < tmax[idx] - EPS)
            if not ok.any():
                continue
            idx, tr = idx[ok], tr[ok]
            pts = O[idx, :2] + tr[:, None] * D[idx, :2]
            out[idx[_points_in_polygon(pts, b.footprint)]] = True
        return out

    # io ---------------------------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict, name: str = "") -> Scene:
        o = doc.get("origin", {})
        origin = GeodeticPosition.from_degrees(o.get("lat_deg", 0.0), o.get("lon_deg", 0.0), o.get("h_m", 0.0))
        buildings = [Building(np.asarray(b["footprint"], dtype=float), float(b["height_m"]),
                              float(b.get("reflection_coeff", 0.5)))
                     for b in doc.get("buildings", [])]
        roads = [RoadSegment(np.asarray(r["centerline"], dtype=float), int(r.get("lane_count", 2)),
                             float(r.get("lane_width_m", 3.7)))
                 for r in doc.get("roads", [])]
        return cls(buildings, origin, roads, name=doc.get("name", name))

    @classmethod
    def load(cls, path) -> Scene:
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), name=path.stem)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "origin": {"lat_deg": math.degrees(self.origin.latitude),
                       "lon_deg": math.degrees(self.origin.longitude),
                       "h_m": self.origin.height},
            "buildings": [{"footprint": b.footprint.tolist(), "height_m": b.height,
                           "reflection_coeff": b.reflection_coefficient} for b in self.buildings],
            "roads": [{"centerline": r.centerline.tolist(), "lane_count": r.lane_count,
                       "lane_width_m": r.lane_width} for r in self.roads],
        }


def los_blocked(scene: Scene, rx: ReceiverPose, sat_direction) -> bool:
    d = np.asarray(sat_direction, dtype=float)
    return bool(scene.blocked(rx.antenna[None, :], d[None, :])[0])


def reflections(scene: Scene, rx: ReceiverPose, sat_direction,
                wavelength: float = GPS_L1_WAVELENGTH,
                sat_position=None) -> list[ReflectedPath]:
    """Single-bounce specular paths off vertical wall facets.

    Parameters
    ----------
    sat_direction : array_like
        Unit vector from the antenna toward the satellite (scene frame).
    wavelength : float
        Carrier wavelength used for the phase offset.
    sat_position : array_like, optional
        Satellite position in the scene frame. When given, path excess is
        computed for a finite-range source instead of a plane wave.
    """
    if scene.n_facets == 0:
        return []
    A = rx.antenna
    d = np.asarray(sat_direction, dtype=float)
    n = scene.wall_normal
    dist = A[:2] @ n.T - scene._wall_offset
    finite = sat_position is not None
    if finite:
        S = np.asarray(sat_position, dtype=float)
        dn = S[:2] @ n.T - scene._wall_offset  # satellite height above each facet plane
    else:
        dn = n @ d[:2]
    cand = np.nonzero((dist > EPS) & (dn > EPS))[0]
    if len(cand) == 0:
        return []

    n3 = np.column_stack([n[cand], np.zeros(len(cand))])
    image = A[None, :] - 2.0 * dist[cand, None] * n3
    if finite:
        tau = dist[cand] / (dist[cand] + dn[cand])
        R = image + tau[:, None] * (S[None, :] - image)
        s_img = np.linalg.norm(S[None, :] - image, axis=1)
        s_dir = np.linalg.norm(S - A)
        # |S - A'| - |S - A| without cancellation at orbital ranges
        excess = ((A[None, :] - image) * (2.0 * S[None, :] - A[None, :] - image)).sum(axis=1) / (s_img + s_dir)
    else:
        R = image + (dist[cand] / dn[cand])[:, None] * d[None, :]
        excess = 2.0 * dist[cand] * dn[cand]

    u = (R[:, :2] - scene.wall_p0[cand]) * scene.wall_dir[cand]
    s = u.sum(axis=1)
    z = R[:, 2]
    inside = ((s > EPS) & (s < scene.wall_length[cand] - EPS)
              & (z > EPS) & (z < scene.wall_height[cand] - EPS) & (excess > 0))
    if not inside.any():
        return []
    cand, R, excess = cand[inside], R[inside], excess[inside]

    to_rx = A[None, :] - R
    len_rx = np.linalg.norm(to_rx, axis=1)
    if finite:
        to_sat = S[None, :] - R
        len_sat = np.linalg.norm(to_sat, axis=1)
        dir_sat = to_sat / len_sat[:, None]
    else:
        len_sat = np.full(len(cand), np.inf)
        dir_sat = np.broadcast_to(d, R.shape)
    origins = np.vstack([R, R])
    dirs = np.vstack([to_rx / len_rx[:, None], dir_sat])
    tmax = np.concatenate([len_rx, len_sat])
    skip = np.concatenate([cand, cand])
    blk = scene.blocked(origins, dirs, tmax, skip).reshape(2, -1).any(axis=0)

    paths = []
    for k in np.nonzero(~blk)[0]:
        ex = float(excess[k])
        paths.append(ReflectedPath(
            facet_id=int(cand[k]),
            reflection_point=R[k].copy(),
            path_length_excess=ex,
            amplitude_ratio=float(scene.wall_coeff[cand[k]]),
            phase_offset=2.0 * math.pi * math.fmod(ex, wavelength) / wavelength,
        ))
    return paths


def classify(scene: Scene, rx: ReceiverPose, sat: SatelliteState, mask: float,
             wavelength: float = GPS_L1_WAVELENGTH, plane_wave: bool = True):
    """Reception condition of ``sat`` at ``rx`` and the usable reflections.

    Satellites below ``mask`` are NO_SIGNAL regardless of the scene; the
    mask stands in for blockage by surrounding taller vehicles.
    """
    if not 0.0 <= mask < math.pi / 2:
        raise ValueError("mask must lie in [0, pi/2)")
    d = scene.sky_direction(sat, rx.antenna)
    if math.asin(min(1.0, d[2])) < mask:
        return ReceptionCondition.NO_SIGNAL, []
    sat_local = None if plane_wave else scene.to_local(sat.position_ecef)
    paths = reflections(scene, rx, d, wavelength, sat_local)
    if los_blocked(scene, rx, d):
        return (ReceptionCondition.NLOS_ONLY, paths) if paths else (ReceptionCondition.NO_SIGNAL, [])
    return (ReceptionCondition.LOS_NLOS, paths) if paths else (ReceptionCondition.LOS_ONLY, [])
