"""Conservative HPL prediction maps over a road network.

Each map node sits on a road centreline. The receiver's lane is unknown in
advance, so the node is evaluated at several lateral offsets across the
road and the worst case is kept per satellite: a satellite lost at any
offset is treated as lost, the worst reception condition wins, and the
largest-magnitude predicted bias is used.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .araim import (DegenerateGeometryError, FdeFailure, GeometryContext, HplResult, IntegrityConfig,
                    WlsConvergenceError, exclusion_minimum, forced_exclusion, mhss_snapshot, run_araim)
from .constants import DEFAULT_ANTENNA_HEIGHT, DEFAULT_ELEVATION_MASK, GPS_L1_WAVELENGTH
from .orbits import AlmanacRecord, SatelliteState, constellation_of, propagate_all
from .pseudorange import (ChipParams, ErrorModelConfig, PseudorangePrediction, condition_bias,
                          sigma_model, simulate_measurements)
from .scene import ReceiverPose, ReceptionCondition, Scene, classify

UNAVAILABLE = "UNAVAILABLE"
MAP_COLUMNS = ("node_id", "x_m", "y_m", "epoch_s", "hpl_m", "n_visible")


@dataclass(frozen=True)
class PredictionConfig:
    mask: float = DEFAULT_ELEVATION_MASK
    chip: ChipParams = field(default_factory=ChipParams)
    error_model: ErrorModelConfig = field(default_factory=ErrorModelConfig)
    integrity: IntegrityConfig = field(default_factory=IntegrityConfig)
    wavelength: float = GPS_L1_WAVELENGTH
    plane_wave: bool = True
    antenna_height: float = DEFAULT_ANTENNA_HEIGHT
    exclusion_hypotheses: bool = True

    def __post_init__(self):
        if not 0.0 <= self.mask < math.pi / 2:
            raise ValueError("mask must lie in [0, pi/2)")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    def digest(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MapNode:
    node_id: int
    position: np.ndarray
    lateral_offsets: tuple = (0.0,)
    lateral_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    road_width: float | None = None

    def __post_init__(self):
        pos = np.zeros(3)
        p = np.asarray(self.position, dtype=float).reshape(-1)
        pos[: len(p)] = p
        object.__setattr__(self, "position", pos)
        d = np.asarray(self.lateral_direction, dtype=float)[:2]
        object.__setattr__(self, "lateral_direction", d / np.linalg.norm(d))
        object.__setattr__(self, "lateral_offsets", tuple(float(o) for o in self.lateral_offsets))
        if not self.lateral_offsets:
            raise ValueError("a map node needs at least one lateral offset")
        if self.road_width is not None and max(abs(o) for o in self.lateral_offsets) > 0.5 * self.road_width + 1e-9:
            raise ValueError("lateral offsets exceed the road width")

    def offset_point(self, offset: float) -> np.ndarray:
        p = self.position.copy()
        p[:2] += offset * self.lateral_direction
        return p


@dataclass(frozen=True)
class HplCell:
    node_id: int
    epoch: float
    value: float | None
    n_visible: int
    conditions: Mapping = field(default_factory=dict)
    reason: str = ""

    def __post_init__(self):
        if self.value is not None and not (math.isfinite(self.value) and self.value > 0):
            raise ValueError("an available HPL must be finite and positive")

    @property
    def available(self) -> bool:
        return self.value is not None


@dataclass
class HplMap:
    cells: dict
    nodes: dict
    epochs: tuple
    mask: float
    metadata: dict = field(default_factory=dict)

    def value(self, node_id, epoch) -> float | None:
        return self.cells[(node_id, epoch)].value

    def at_epoch(self, epoch) -> dict:
        return {nid: self.cells[(nid, epoch)].value for nid in self.nodes}

    def rows(self):
        for nid in sorted(self.nodes):
            for t in self.epochs:
                c = self.cells[(nid, t)]
                p = self.nodes[nid].position
                yield (nid, f"{p[0]:.3f}", f"{p[1]:.3f}", f"{t:g}",
                       UNAVAILABLE if c.value is None else repr(c.value), c.n_visible)

    def write(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MAP_COLUMNS)
            w.writerows(self.rows())
        meta = dict(self.metadata, mask_rad=self.mask, epochs=list(self.epochs))
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path) -> HplMap:
        path = Path(path)
        cells, nodes, epochs = {}, {}, []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MAP_COLUMNS:
                raise ValueError(f"{path}: unexpected map header {reader.fieldnames}")
            for row in reader:
                nid = int(row["node_id"])
                t = float(row["epoch_s"])
                nodes.setdefault(nid, MapNode(nid, [float(row["x_m"]), float(row["y_m"]), 0.0]))
                if t not in epochs:
                    epochs.append(t)
                v = None if row["hpl_m"] == UNAVAILABLE else float(row["hpl_m"])
                cells[(nid, t)] = HplCell(nid, t, v, int(row["n_visible"]))
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        return cls(cells, nodes, tuple(sorted(epochs)), meta.get("mask_rad", DEFAULT_ELEVATION_MASK), meta)


# ---------------------------------------------------------------------------
# Road network sampling

def sample_road_nodes(scene: Scene, spacing: float = 10.0, include_edges: bool = True,
                      merge_tol: float = 1e-6):
    """Nodes every ``spacing`` metres along each road plus the edges joining them.

    Road endpoints that coincide are merged into one junction node.

    Returns
    -------
    nodes : list of MapNode
    edges : list of (int, int)
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    nodes: list[MapNode] = []
    edges: list[tuple[int, int]] = []

    def node_at(p, lat_dir, offsets, width):
        for n in nodes:
            if np.linalg.norm(n.position[:2] - p) <= merge_tol:
                return n.node_id
        nodes.append(MapNode(len(nodes), [p[0], p[1], 0.0], offsets, lat_dir, width))
        return nodes[-1].node_id

    for road in scene.roads:
        offsets = road.lateral_offsets(include_edges)
        line = road.centerline
        prev = None
        for a, b in zip(line[:-1], line[1:]):
            seg = b - a
            length = float(np.linalg.norm(seg))
            u = seg / length
            lat = np.array([-u[1], u[0]])
            k = max(1, math.ceil(length / spacing - 1e-9))
            for j in range(0 if prev is None else 1, k + 1):
                nid = node_at(a + seg * (j / k), lat, offsets, road.width)
                if prev is not None and prev != nid:
                    edges.append((prev, nid))
                prev = nid
    return nodes, edges


# ---------------------------------------------------------------------------
# Per-satellite observations

@dataclass(frozen=True)
class SatObservation:
    sat_id: str
    condition: ReceptionCondition
    bias: float
    elevation: float


def lane_observation(scene: Scene, point, sat: SatelliteState, cfg: PredictionConfig) -> SatObservation:
    """Reception condition, predicted bias and elevation at one ground point."""
    rx = ReceiverPose(point, cfg.antenna_height)
    cond, paths = classify(scene, rx, sat, cfg.mask, cfg.wavelength, cfg.plane_wave)
    el = math.asin(min(1.0, scene.sky_direction(sat, rx.antenna)[2]))
    bias = 0.0 if cond is ReceptionCondition.NO_SIGNAL else condition_bias(cond, paths, cfg.chip)
    return SatObservation(sat.sat_id, cond, bias, el)


def worst_case(observations: Sequence[SatObservation]) -> SatObservation:
    """Combine one satellite's observations across lateral offsets."""
    cond = max((o.condition for o in observations), key=lambda c: c.severity)
    bias = 0.0
    if cond is not ReceptionCondition.NO_SIGNAL:
        bias = max((o.bias for o in observations), key=abs)
    el = min(o.elevation for o in observations)
    return SatObservation(observations[0].sat_id, cond, bias, el)


def conservative_observation(scene: Scene, node: MapNode, sat: SatelliteState,
                             cfg: PredictionConfig) -> SatObservation:
    return worst_case([lane_observation(scene, node.offset_point(o), sat, cfg) for o in node.lateral_offsets])


def conservative_visibility(scene: Scene, node: MapNode, sat: SatelliteState, mask: float,
                            cfg: PredictionConfig = PredictionConfig()):
    """Worst reception condition and bias of ``sat`` across the node's offsets."""
    if mask != cfg.mask:
        cfg = PredictionConfig(mask, cfg.chip, cfg.error_model, cfg.integrity, cfg.wavelength,
                               cfg.plane_wave, cfg.antenna_height)
    obs = conservative_observation(scene, node, sat, cfg)
    return obs.condition, obs.bias


# ---------------------------------------------------------------------------
# Cells

def predictions_for(scene: Scene, point, sats: Sequence[SatelliteState],
                    observations: Sequence[SatObservation], cfg: PredictionConfig):
    """Predicted pseudoranges (scene frame) for the received satellites."""
    antenna = np.asarray(point, dtype=float) + np.array([0.0, 0.0, cfg.antenna_height])
    preds, positions = [], []
    for sat, obs in zip(sats, observations):
        if obs.condition is ReceptionCondition.NO_SIGNAL:
            continue
        s = scene.to_local(sat.position_ecef)
        preds.append(PseudorangePrediction(sat.sat_id, obs.condition, float(np.linalg.norm(s - antenna)),
                                           obs.bias, sigma_model(obs.elevation, cfg.error_model)))
        positions.append(s)
    return preds, np.array(positions).reshape(-1, 3), antenna


def _context(preds, positions) -> GeometryContext:
    labels = tuple(constellation_of(p.sat_id) for p in preds)
    return GeometryContext(positions, labels, np.array([p.sigma for p in preds]), tuple(p.sat_id for p in preds))


def integrity_from_predictions(preds, positions, rho, antenna, cfg: PredictionConfig):
    """Run FDE and the HPL on a measurement vector; returns (HplResult, excluded ids)."""
    labels = tuple(constellation_of(p.sat_id) for p in preds)
    if len(preds) < exclusion_minimum(labels):
        return HplResult.unavailable(f"{len(preds)} satellites cannot support FDE"), ()
    ctx = _context(preds, positions)
    outcome, _, hpl = run_araim(np.asarray(rho, dtype=float), ctx, cfg.integrity, antenna)
    excluded = () if outcome is None else tuple(sorted(ctx.sat_ids[i] for i in outcome.excluded))
    return hpl, excluded


def exclusion_units(preds, suspects) -> list:
    """Exclusions a receiver might make: each suspect alone or its whole constellation."""
    ids = [p.sat_id for p in preds]
    labels = [constellation_of(i) for i in ids]
    units = []
    for sid in suspects:
        if sid in ids:
            units.append(frozenset([ids.index(sid)]))
    for c in sorted({constellation_of(sid) for sid in suspects if sid in ids}):
        units.append(frozenset(i for i, lab in enumerate(labels) if lab == c))
    return list(dict.fromkeys(units))


def exclusion_hypotheses(preds, suspects, max_exclusions: int = 2) -> list:
    """Index sets a receiver might exclude given the suspect satellites.

    Units (a suspect or its constellation), unions of two units, and any
    single satellite alone or next to one unit: with a bias present, FDE
    may pick a wrong satellite first.
    """
    units = exclusion_units(preds, suspects)
    if not units:
        return []
    singles = [frozenset([i]) for i in range(len(preds))]
    out = units + singles
    if max_exclusions >= 2:
        out += [a | b for a, b in itertools.combinations(units, 2)]
        out += [u | s for u in units for s in singles if not s <= u]
    return list(dict.fromkeys(x for x in out if len(x) < len(preds)))


def exclusion_hypotheses_hpl(preds, positions, rho, antenna, suspects, cfg: PredictionConfig,
                             skip=()) -> HplResult | None:
    """Largest post-exclusion HPL over :func:`exclusion_hypotheses`.

    A receiver may exclude a biased satellite (or the constellation it
    belongs to) that the noise-free prediction keeps, and the exclusion
    inflates its HPL. Returns None when no hypothesis applies, and an
    unavailable result when one of them has no bound.
    """
    ctx = _context(preds, positions)
    rho = np.asarray(rho, dtype=float)
    skip = {frozenset(x) for x in skip}
    snap0 = None
    worst = None
    for excl in exclusion_hypotheses(preds, suspects, cfg.integrity.max_exclusions):
        if excl in skip:
            continue
        try:
            if snap0 is None:
                snap0 = mhss_snapshot(ctx, rho, cfg.integrity, antenna)
            h = forced_exclusion(rho, ctx, excl, cfg.integrity, antenna, snap0).hpl(cfg.integrity)
        except (FdeFailure, DegenerateGeometryError, WlsConvergenceError):
            continue  # no receiver could end up on this subset
        if not h.available:
            return h
        if worst is None or h.hpl > worst.hpl:
            worst = h
    return worst


def _cell(node_id, epoch, hpl: HplResult, preds, conditions) -> HplCell:
    value = hpl.hpl if hpl.available and hpl.hpl > 0 and math.isfinite(hpl.hpl) else None
    return HplCell(node_id, epoch, value, len(preds), conditions, hpl.reason)


def predict_cell(scene: Scene, node: MapNode, sats: Sequence[SatelliteState],
                 cfg: PredictionConfig = PredictionConfig(), epoch: float = 0.0,
                 return_hpl: bool = False):
    """Conservative HPL at one node and epoch from noise-free predictions.

    The worst-case satellite set (see :func:`worst_case`) is evaluated at
    the node. With ``cfg.exclusion_hypotheses`` the value is also raised
    to the predicted HPL at each individual offset and to the post-exclusion
    HPL of every exclusion involving a satellite predicted to carry a bias
    at any offset (see :func:`exclusion_hypotheses_hpl`). Hypotheses only
    depend on which satellites are in view, so they are evaluated once per
    distinct satellite set.
    """
    per_offset = [[lane_observation(scene, node.offset_point(o), s, cfg) for o in node.lateral_offsets]
                  for s in sats]
    obs = [worst_case(o) for o in per_offset]
    preds, pos, antenna = predictions_for(scene, node.position, sats, obs, cfg)
    candidates = [(preds, pos, antenna)]
    if cfg.exclusion_hypotheses:
        for j, off in enumerate(node.lateral_offsets):
            candidates.append(predictions_for(scene, node.offset_point(off), sats, [o[j] for o in per_offset], cfg))
    suspects = [o[0].sat_id for o in per_offset if any(x.bias != 0.0 for x in o)]

    hpl = None
    seen_sets = set()
    for k, (p, ps, ant) in enumerate(candidates):
        rho = [x.pseudorange for x in p]
        h, excluded = integrity_from_predictions(p, ps, rho, ant, cfg)
        if h.available and cfg.exclusion_hypotheses:
            ids = tuple(x.sat_id for x in p)
            if suspects and ids not in seen_sets:
                seen_sets.add(ids)
                skip = [frozenset(ids.index(e) for e in excluded)] if excluded else []
                alt = exclusion_hypotheses_hpl(p, ps, rho, ant, suspects, cfg, skip)
                if alt is not None and (not alt.available or alt.hpl > h.hpl):
                    h = alt
        if not h.available:
            hpl = h if k == 0 else HplResult.unavailable(f"offset {node.lateral_offsets[k - 1]:g} m: {h.reason}")
            break
        if hpl is None or h.hpl > hpl.hpl:
            hpl = h
    cell = _cell(node.node_id, epoch, hpl, preds, {o.sat_id: o.condition for o in obs})
    return (cell, hpl) if return_hpl else cell


@dataclass(frozen=True)
class LaneSetup:
    """Lane-specific predictions at one fixed lateral offset."""
    node: MapNode
    offset: float
    predictions: list
    positions: np.ndarray
    conditions: dict


def lane_setup(scene: Scene, node: MapNode, offset: float, sats: Sequence[SatelliteState],
               cfg: PredictionConfig = PredictionConfig()) -> LaneSetup:
    point = node.offset_point(offset)
    obs = [lane_observation(scene, point, s, cfg) for s in sats]
    preds, pos, _ = predictions_for(scene, point, sats, obs, cfg)
    return LaneSetup(node, offset, preds, pos, {o.sat_id: o.condition for o in obs})


def lane_hpl(setup: LaneSetup, cfg: PredictionConfig = PredictionConfig(), seed=None,
             extra_bias: dict | None = None, epoch: float = 0.0):
    """HPL from lane-specific pseudoranges.

    With ``seed=None`` and no injected bias the noise-free predictions are
    processed; otherwise measurements are simulated around them (noise,
    receiver clock, injected faults) and handled like a receiver would.

    Returns
    -------
    (HplResult, tuple of excluded satellite ids)
    """
    preds = setup.predictions
    if seed is None and not extra_bias:
        rho = [p.pseudorange for p in preds]
    else:
        samples = simulate_measurements(preds, cfg.error_model, seed=seed, epoch=epoch, extra_bias=extra_bias)
        rho = [m.pseudorange for m in samples]
    # the receiver does not know its lane: start from the node position
    start = setup.node.position + np.array([0.0, 0.0, cfg.antenna_height])
    return integrity_from_predictions(preds, setup.positions, rho, start, cfg)


def lane_cell(scene: Scene, node: MapNode, offset: float, sats: Sequence[SatelliteState],
              cfg: PredictionConfig = PredictionConfig(), epoch: float = 0.0,
              seed=None, extra_bias: dict | None = None):
    """HPL cell at one fixed lateral offset; see :func:`lane_hpl`.

    Returns
    -------
    (HplCell, HplResult, tuple of excluded satellite ids)
    """
    setup = lane_setup(scene, node, offset, sats, cfg)
    hpl, excluded = lane_hpl(setup, cfg, seed, extra_bias, epoch)
    return _cell(node.node_id, epoch, hpl, setup.predictions, setup.conditions), hpl, excluded


# ---------------------------------------------------------------------------
# Maps

def _cell_job(args):
    scene, node, sats, cfg, epoch = args
    return predict_cell(scene, node, sats, cfg, epoch)


def generate_map(scene: Scene, nodes: Sequence[MapNode], epochs: Sequence[float],
                 almanac: Sequence[AlmanacRecord], cfg: PredictionConfig = PredictionConfig(),
                 week: int | None = None, workers: int | None = None,
                 almanac_id: str = "") -> HplMap:
    """Conservative HPL for every (node, epoch) pair.

    Cells are independent; ``workers > 1`` evaluates them in a process
    pool. The result does not depend on evaluation order or worker count.
    """
    epochs = tuple(float(t) for t in epochs)
    if not epochs:
        raise ValueError("at least one epoch is required")
    if any(b <= a for a, b in zip(epochs[:-1], epochs[1:])):
        raise ValueError("epochs must be strictly increasing")
    sats_at = {t: propagate_all(list(almanac), t, week) for t in epochs}
    jobs = [(scene, n, sats_at[t], cfg, t) for n in nodes for t in epochs]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        cells = [_cell_job(j) for j in jobs]
    meta = {"scene_id": scene.name, "almanac_id": almanac_id, "config_hash": cfg.digest(),
            "n_nodes": len(nodes), "n_epochs": len(epochs)}
    return HplMap({(c.node_id, c.epoch): c for c in cells}, {n.node_id: n for n in nodes}, epochs, cfg.mask, meta)
