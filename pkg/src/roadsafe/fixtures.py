"""Builders for the bundled demo data (almanacs, scenes, planning network).

Running ``python -m roadsafe.fixtures [outdir]`` regenerates everything
under ``roadsafe/data``. All randomness is seeded, so output is stable.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .orbits import AlmanacRecord, format_yuma

DATA_DIR = Path(__file__).with_name("data")
ORIGIN = {"lat_deg": 34.05, "lon_deg": -118.25, "h_m": 50.0}
ALMANAC_WEEK = 2200
ALMANAC_TOA = 319488.0


def synthetic_constellation(prefix: str, planes: list[int], sqrt_a: float, incl_deg: float,
                            raan_rate: float, seed: int, week: int = ALMANAC_WEEK,
                            toa: float = ALMANAC_TOA) -> list[AlmanacRecord]:
    """Walker-like constellation with small seeded perturbations."""
    rng = np.random.default_rng(seed)
    n_planes = len(planes)
    recs = []
    prn = 1
    for p, count in enumerate(planes):
        raan = math.remainder(2 * math.pi * p / n_planes + 0.3, 2 * math.pi)
        for j in range(count):
            m0 = math.remainder(2 * math.pi * j / count + p * math.pi / (n_planes * count), 2 * math.pi)
            recs.append(AlmanacRecord(
                sat_id=f"{prefix}{prn:02d}",
                sqrt_semimajor=sqrt_a + rng.uniform(-1.5, 1.5),
                eccentricity=float(rng.uniform(0.001, 0.015)),
                inclination=math.radians(incl_deg + rng.uniform(-0.8, 0.8)),
                raan_at_week_epoch=raan + rng.uniform(-0.01, 0.01),
                raan_rate=raan_rate,
                arg_perigee=float(rng.uniform(-math.pi, math.pi)),
                mean_anomaly_at_epoch=m0,
                toa=toa,
                week=week,
            ))
            prn += 1
    return recs


def gps_almanac() -> list[AlmanacRecord]:
    return synthetic_constellation("G", [5, 5, 5, 5, 5, 6], 5153.6, 55.0, -8.0e-9, seed=11)


def glonass_almanac() -> list[AlmanacRecord]:
    return synthetic_constellation("R", [8, 8, 8], math.sqrt(25510e3), 64.8, -5.9e-9, seed=12)


# ---------------------------------------------------------------------------
# Scenes

def _box(x0, y0, x1, y1, h, coeff=0.5):
    return {"footprint": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]], "height_m": h, "reflection_coeff": coeff}


def _scene(name, buildings, roads):
    return {"name": name, "origin": ORIGIN, "buildings": buildings, "roads": roads}


def open_field_scene() -> dict:
    return _scene("open_field", [], [{"centerline": [[-100, 0], [100, 0]], "lane_count": 2, "lane_width_m": 3.7}])


def single_wall_scene() -> dict:
    # 18 m slab facing the road from the north side
    return _scene("single_wall", [_box(-60, 16, 60, 30, 18.0, 0.6)],
                  [{"centerline": [[-100, 0], [100, 0]], "lane_count": 2, "lane_width_m": 3.7}])


def canyon_scene() -> dict:
    """North-south street, 30 m between facades, lined with towers of varying height."""
    buildings = []
    heights_w = [30, 12, 45, 10, 25]
    heights_e = [20, 40, 12, 50, 15]
    for i, (hw, he) in enumerate(zip(heights_w, heights_e)):
        y0 = -125 + 50 * i
        buildings.append(_box(-45, y0, -15, y0 + 42, hw, 0.5))
        buildings.append(_box(15, y0 + 4, 45, y0 + 46, he, 0.5))
    return _scene("canyon", buildings,
                  [{"centerline": [[0, -120], [0, 120]], "lane_count": 4, "lane_width_m": 3.5}])


# ---------------------------------------------------------------------------
# Four-corridor planning network

CORRIDOR_OFFSETS = {1: 600.0, 2: 200.0, 3: -200.0, 4: -600.0}
CORRIDOR_SPAN = 4000.0
NODE_SPACING = 10.0


def _corridor_points(y: float) -> np.ndarray:
    corners = np.array([[0.0, 0.0], [500.0, y], [CORRIDOR_SPAN - 500.0, y], [CORRIDOR_SPAN, 0.0]])
    pts = [corners[0]]
    for a, b in zip(corners[:-1], corners[1:]):
        k = math.ceil(np.linalg.norm(b - a) / NODE_SPACING)
        pts.extend(a + (b - a) * (j / k) for j in range(1, k + 1))
    return np.array(pts)


def _corridor_hpl(corridor: int, s: np.ndarray, length: float) -> list:
    """Authored HPL profile along a corridor as a function of arc length."""
    mid = 0.5 * length
    out = []
    for d in s:
        if corridor == 1:
            v = 11.0 if abs(d - mid) < 60 else 5.5
        elif corridor == 2:
            v = 6.0
        elif corridor == 3:
            # 200 m stretch of available but unacceptable HPL
            v = 12.0 if mid - 100 < d <= mid + 100 else 5.0
        else:
            v = None if abs(d - mid) < 25 else 5.8
        out.append(v)
    return out


def four_paths_network():
    """Graph and single-epoch HPL map for the four-corridor planning demo.

    Corridor 2 is fully safe and cheapest among feasible routes. Corridor 3
    would be cheapest without constraints but carries a 200 m unacceptable
    stretch. Corridors 1 and 4 are feasible and costlier.

    Returns
    -------
    graph : dict
        ``{"nodes": [...], "edges": [...]}`` JSON document.
    hpl : dict
        node id -> HPL in metres or None (unavailable).
    corridors : dict
        corridor number -> list of node ids from start to target.
    """
    nodes = [{"id": 0, "x": 0.0, "y": 0.0}, {"id": 1, "x": CORRIDOR_SPAN, "y": 0.0}]
    hpl = {0: 6.0, 1: 6.0}
    edges = []
    corridors = {}
    for c, y in CORRIDOR_OFFSETS.items():
        pts = _corridor_points(y)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        values = _corridor_hpl(c, s, s[-1])
        ids = [0]
        for p, v in zip(pts[1:-1], values[1:-1]):
            nid = len(nodes)
            nodes.append({"id": nid, "x": round(float(p[0]), 6), "y": round(float(p[1]), 6)})
            hpl[nid] = v
            ids.append(nid)
        ids.append(1)
        corridors[c] = ids
        edges.extend([a, b] for a, b in zip(ids[:-1], ids[1:]))
    return {"nodes": nodes, "edges": edges}, hpl, corridors


def four_paths_scene() -> dict:
    """Short street section with a wall-lined stretch, used for overbounding runs."""
    buildings = [_box(-60, 14, 60, 35, 22.0, 0.5), _box(-60, -35, 60, -14, 14.0, 0.4)]
    return _scene("four_paths", buildings,
                  [{"centerline": [[-100, 0], [100, 0]], "lane_count": 3, "lane_width_m": 3.6}])


def _scenario(scene_file, planner=None, faults=None, **extra):
    doc = {
        "scene": scene_file,
        "almanacs": [{"path": "almanac_gps.yuma", "constellation": "G"},
                     {"path": "almanac_glonass.yuma", "constellation": "R"}],
        "week": ALMANAC_WEEK,
        "epochs": {"start_s": ALMANAC_TOA, "step_s": 600.0, "count": 12},
        "elevation_mask_deg": 33.0,
        "lateral_sweep": {"node_spacing_m": 10.0, "include_edges": True},
        "truth": {"node_id": 5, "lateral_offset_m": 1.85},
    }
    if planner:
        doc["planner"] = planner
    if faults:
        doc["faults"] = faults
    doc.update(extra)
    return doc


def write_all(outdir=DATA_DIR) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "almanac_gps.yuma").write_text(format_yuma(gps_almanac()))
    (out / "almanac_glonass.yuma").write_text(format_yuma(glonass_almanac()))
    for name, fn in [("open_field", open_field_scene), ("single_wall", single_wall_scene),
                     ("canyon", canyon_scene), ("four_paths", four_paths_scene)]:
        (out / f"{name}.scene.json").write_text(json.dumps(fn(), indent=1) + "\n")

    graph, hpl, corridors = four_paths_network()
    (out / "four_paths.graph.json").write_text(json.dumps(graph) + "\n")
    (out / "four_paths.candidates.json").write_text(
        json.dumps({f"corridor_{c}": ids for c, ids in corridors.items()}) + "\n")
    epoch = ALMANAC_TOA
    with (out / "four_paths.map.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("node_id", "x_m", "y_m", "epoch_s", "hpl_m", "n_visible"))
        for n in graph["nodes"]:
            v = hpl[n["id"]]
            w.writerow((n["id"], f"{n['x']:.3f}", f"{n['y']:.3f}", f"{epoch:g}",
                        "UNAVAILABLE" if v is None else repr(v), 0 if v is None else 10))
    (out / "four_paths.map.json").write_text(json.dumps(
        {"scene_id": "four_paths", "almanac_id": "authored", "config_hash": "authored",
         "mask_rad": math.radians(33.0), "epochs": [epoch]}, indent=2, sort_keys=True) + "\n")

    planner = {"t_hpl": 10.0, "t_safe": 0.9, "d_safe": 150.0, "epoch": epoch,
               "start": 0, "target": 1, "graph": "four_paths.graph.json", "map": "four_paths.map.csv",
               "candidates": "four_paths.candidates.json"}
    scenarios = {
        "open_field": _scenario("open_field.scene.json"),
        "single_wall": _scenario("single_wall.scene.json"),
        "canyon": _scenario("canyon.scene.json", truth={"node_id": 12, "lateral_offset_m": 1.75}),
        "four_paths": _scenario("four_paths.scene.json", planner=planner),
        "open_field_fault": _scenario("open_field.scene.json",
                                      faults=[{"sat_id": "G07", "bias_m": 80.0, "epochs": [2, 3, 4]}]),
    }
    for name, doc in scenarios.items():
        (out / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    write_all(sys.argv[1] if len(sys.argv) > 1 else DATA_DIR)
