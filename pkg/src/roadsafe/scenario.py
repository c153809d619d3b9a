"""Scenario documents: one JSON file configuring every pipeline stage.

Paths inside a scenario are resolved relative to the scenario file. Any
key left out takes the value from :data:`DEFAULTS`.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .araim import IntegrityConfig
from .orbits import AlmanacRecord, parse_almanac
from .planner import PlannerConfig
from .pseudorange import ChipParams, ErrorModelConfig
from .relmap import PredictionConfig
from .scene import Scene

DEFAULTS = {
    "scene": None,
    "almanacs": [],
    "week": None,
    "epochs": {"start_s": 0.0, "step_s": 60.0, "count": 1},
    "elevation_mask_deg": 33.0,
    "lateral_sweep": {"node_spacing_m": 10.0, "include_edges": True},
    "error_model": {"sigma_zenith": 0.5, "elevation_exponent": 1.0, "sigma_floor": 0.1,
                    "clock_bias_true": 150.0},
    "integrity": {"phmi_hor": 9.8e-8, "phmi_vert": 9.8e-8, "p_sat_fault": 1e-5, "p_const_fault": 1e-8,
                  "p_sat_not_monitored": 1e-10, "p_const_not_monitored": 1e-10,
                  "mode_probability_floor": 1e-8, "k_fa": None, "p_false_alert": 1e-6,
                  "nominal_bias": 0.75, "hpl_tolerance": 1e-15, "combine": "rss", "max_exclusions": 2},
    "chip": {"chip_length": 299792458.0 / 1.023e6, "correlator_spacing": 1.0, "cutoff": 1.5},
    "signal": {"carrier_wavelength_m": 299792458.0 / 1575.42e6, "plane_wave": True, "antenna_height_m": 1.7},
    "planner": {"t_hpl": 10.0, "t_safe": 0.95, "d_safe": 150.0, "epoch": None, "unavailable_penalty": None,
                "strict": False, "start": None, "target": None, "graph": None, "map": None,
                "candidates": None},
    "truth": {"node_id": 0, "lateral_offset_m": 0.0},
    "faults": [],
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class FaultInjection:
    sat_id: str
    bias_m: float
    epoch_indices: tuple


@dataclass
class Scenario:
    name: str
    base_dir: Path
    scene: Scene
    almanac: list
    almanac_id: str
    week: int | None
    epochs: tuple
    prediction: PredictionConfig
    node_spacing: float
    include_edges: bool
    planner: PlannerConfig
    planner_files: dict = field(default_factory=dict)
    truth_node: int = 0
    truth_offset: float = 0.0
    faults: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def fault_biases(self, epoch_index: int) -> dict:
        return {f.sat_id: f.bias_m for f in self.faults if epoch_index in f.epoch_indices}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _epochs(spec) -> tuple:
    if isinstance(spec, list):
        ep = tuple(float(t) for t in spec)
    else:
        count = int(spec["count"])
        if count < 1:
            raise ScenarioError("epochs.count must be at least 1")
        ep = tuple(float(spec["start_s"]) + i * float(spec["step_s"]) for i in range(count))
    if not ep or any(b <= a for a, b in zip(ep[:-1], ep[1:])):
        raise ScenarioError("epochs must be non-empty and strictly increasing")
    return ep


def scenario_from_dict(doc: dict, base_dir=".", name: str = "scenario") -> Scenario:
    """Validate a scenario document; every invariant is checked before use."""
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, doc)
    base = Path(base_dir)
    try:
        if not cfg["scene"]:
            raise ScenarioError("scenario needs a scene file")
        scene_path = base / cfg["scene"]
        if not scene_path.exists():
            raise ScenarioError(f"scene file not found: {scene_path}")
        scene = Scene.load(scene_path)
        if not cfg["almanacs"]:
            raise ScenarioError("scenario needs at least one almanac")
        almanac: list[AlmanacRecord] = []
        ids = []
        for a in cfg["almanacs"]:
            p = base / a["path"]
            if not p.exists():
                raise ScenarioError(f"almanac file not found: {p}")
            almanac.extend(parse_almanac(p.read_text(), a.get("constellation", "G")))
            ids.append(p.name)
        if len({r.sat_id for r in almanac}) != len(almanac):
            raise ScenarioError("duplicate satellite ids across almanacs")

        sig = cfg["signal"]
        mask = math.radians(float(cfg["elevation_mask_deg"]))
        prediction = PredictionConfig(
            mask=mask, chip=ChipParams(**cfg["chip"]), error_model=ErrorModelConfig(**cfg["error_model"]),
            integrity=IntegrityConfig(**cfg["integrity"]), wavelength=float(sig["carrier_wavelength_m"]),
            plane_wave=bool(sig["plane_wave"]), antenna_height=float(sig["antenna_height_m"]))
        epochs = _epochs(cfg["epochs"])
        sweep = cfg["lateral_sweep"]
        if not float(sweep["node_spacing_m"]) > 0:
            raise ScenarioError("lateral_sweep.node_spacing_m must be positive")
        pl = dict(cfg["planner"])
        files = {k: pl.pop(k) for k in ("start", "target", "graph", "map", "candidates")}
        if pl["epoch"] is None:
            pl["epoch"] = epochs[0]
        planner = PlannerConfig(**pl)
        faults = []
        for f in cfg["faults"]:
            if not f.get("sat_id"):
                raise ScenarioError("fault entries need a sat_id")
            if f["sat_id"] not in {r.sat_id for r in almanac}:
                raise ScenarioError(f"fault satellite {f['sat_id']} is not in the almanac")
            idx = tuple(int(i) for i in f.get("epochs", range(len(epochs))))
            faults.append(FaultInjection(str(f["sat_id"]), float(f["bias_m"]), idx))
        week = None if cfg["week"] is None else int(cfg["week"])
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc
    return Scenario(name, base, scene, almanac, "+".join(ids), week, epochs, prediction,
                    float(sweep["node_spacing_m"]), bool(sweep["include_edges"]), planner, files,
                    int(cfg["truth"]["node_id"]), float(cfg["truth"]["lateral_offset_m"]), faults, cfg)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc, path.parent, path.stem)


def bundled_scenario(name: str) -> Scenario:
    return load_scenario(Path(__file__).with_name("data") / f"{name}.json")


BUNDLED = ("open_field", "single_wall", "canyon", "four_paths")
