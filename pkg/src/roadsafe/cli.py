"""Command-line entry point: ``roadsafe <command> [options]``.

Exit codes: 0 success, 1 invalid input, 2 no feasible path, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .araim import DegenerateGeometryError, WlsConvergenceError
from .orbits import AlmanacError, KeplerConvergenceError, propagate_all
from .planner import PlannerConfig, RoadGraph, astar_plan, evaluate_path, report, result_to_dict
from .relmap import MAP_COLUMNS, UNAVAILABLE, HplMap, generate_map, lane_hpl, lane_setup, predict_cell, sample_road_nodes
from .scenario import DEFAULTS, ScenarioError, load_scenario

log = logging.getLogger("roadsafe")

EXIT_OK, EXIT_INPUT, EXIT_NO_PATH, EXIT_NUMERIC = 0, 1, 2, 3
LOG_COLUMNS = ("epoch_s", "n_used", "excluded", "hpl_m", "predicted_hpl_m", "available")


class NoFeasiblePath(RuntimeError):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _epochs(sc, args):
    if args.epoch is None:
        return sc.epochs
    if args.epoch not in sc.epochs:
        raise ScenarioError(f"epoch {args.epoch} is not on the scenario epoch grid")
    return (args.epoch,)


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    nodes, edges = sample_road_nodes(sc.scene, sc.node_spacing, sc.include_edges)
    print(f"{sc.name}: ok ({len(sc.almanac)} satellites, {len(sc.epochs)} epochs, "
          f"{len(sc.scene.buildings)} buildings, {len(nodes)} road nodes)")
    return EXIT_OK


def cmd_predict_map(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    nodes, edges = sample_road_nodes(sc.scene, sc.node_spacing, sc.include_edges)
    hmap = generate_map(sc.scene, nodes, _epochs(sc, args), sc.almanac, sc.prediction, sc.week,
                        workers=args.workers, almanac_id=sc.almanac_id)
    path = hmap.write(out / f"{sc.name}.map.csv")
    graph = RoadGraph.from_edges({n.node_id: n.position[:2] for n in nodes}, edges)
    (out / f"{sc.name}.graph.json").write_text(json.dumps(graph.to_dict()) + "\n")
    n_unavail = sum(not c.available for c in hmap.cells.values())
    print(f"wrote {path} ({len(hmap.cells)} cells, {n_unavail} unavailable)")
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    files = sc.planner_files
    graph_path = Path(args.graph) if args.graph else (sc.resolve(files["graph"]) if files.get("graph") else None)
    map_path = Path(args.map) if args.map else (sc.resolve(files["map"]) if files.get("map") else None)
    if graph_path is None or map_path is None:
        raise ScenarioError("plan needs a graph and a map (scenario planner block or --graph/--map)")
    graph = RoadGraph.load(graph_path)
    hmap = HplMap.read(map_path)
    start = args.start if args.start is not None else files.get("start")
    target = args.target if args.target is not None else files.get("target")
    if start is None or target is None:
        raise ScenarioError("plan needs start and target nodes")
    cfg = sc.planner
    epoch = args.epoch if args.epoch is not None else cfg.epoch
    if epoch not in hmap.epochs:
        epoch = hmap.epochs[0] if args.epoch is None else epoch
        if epoch not in hmap.epochs:
            raise ScenarioError(f"epoch {epoch} not present in map {map_path}")
    cfg = PlannerConfig(cfg.t_hpl, cfg.t_safe, cfg.d_safe, epoch, cfg.unavailable_penalty, cfg.strict, cfg.d_quantum)
    missing = [n for n in graph.positions if (n, epoch) not in hmap.cells]
    if missing:
        raise ScenarioError(f"map has no HPL for {len(missing)} graph nodes at epoch {epoch:g}")
    hpl = hmap.at_epoch(epoch)
    result = astar_plan(graph, hpl, int(start), int(target), cfg)

    rows = []
    # scenario candidates refer to the scenario graph
    cand_file = None if args.graph else files.get("candidates")
    if args.candidates or cand_file:
        cands = json.loads(Path(args.candidates or sc.resolve(cand_file)).read_text())
        rows = [evaluate_path(p, graph, hpl, cfg, label=str(k)) for k, p in cands.items()]
    if result.found:
        rows.append(evaluate_path(result.path, graph, hpl, cfg, label="planned"))
    (out / "report.csv").write_text(report(rows))
    (out / "plan.json").write_text(json.dumps(result_to_dict(result), indent=2) + "\n")
    if not result.found:
        raise NoFeasiblePath("no feasible path")
    print(f"path with {len(result.path)} nodes, cost {result.cost:.3f}, safe ratio {result.safe_ratio:.2f}%, "
          f"max unacceptable run {result.max_continuous_unacceptable:.2f} m")
    return EXIT_OK


def cmd_araim(args) -> int:
    """Simulated receiver at the scenario truth pose, one FDE/HPL run per epoch."""
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    nodes, _ = sample_road_nodes(sc.scene, sc.node_spacing, sc.include_edges)
    by_id = {n.node_id: n for n in nodes}
    if sc.truth_node not in by_id:
        raise ScenarioError(f"truth node {sc.truth_node} is not a road node")
    node = by_id[sc.truth_node]
    if node.road_width is not None and abs(sc.truth_offset) > 0.5 * node.road_width:
        raise ScenarioError("truth lateral offset lies outside the road")
    rows = []
    for k, t in enumerate(sc.epochs):
        if args.epoch is not None and t != args.epoch:
            continue
        sats = propagate_all(sc.almanac, t, sc.week)
        setup = lane_setup(sc.scene, node, sc.truth_offset, sats, sc.prediction)
        rng = np.random.default_rng([args.seed, k])
        hpl, excluded = lane_hpl(setup, sc.prediction, seed=rng, extra_bias=sc.fault_biases(k), epoch=t)
        predicted = predict_cell(sc.scene, node, sats, sc.prediction, t)
        rows.append((f"{t:g}", len(setup.predictions) - len(excluded), ";".join(excluded),
                     repr(hpl.hpl) if hpl.available else UNAVAILABLE,
                     repr(predicted.value) if predicted.available else UNAVAILABLE, int(hpl.available)))
    path = out / f"{sc.name}.araim.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(rows)
    for r in rows:
        print(f"epoch {r[0]}: used {r[1]}, excluded [{r[2]}], HPL {r[3]}, predicted {r[4]}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    """Delimited series for external plotting tools, one row per input row."""
    src = Path(args.input)
    with src.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        rows = list(reader)
    out = _out_dir(args)
    if header == MAP_COLUMNS:
        rows.sort(key=lambda r: (int(r["node_id"]), float(r["epoch_s"])))
        xy = {}
        for r in rows:
            xy.setdefault(int(r["node_id"]), (float(r["x_m"]), float(r["y_m"])))
        dist, total, prev = {}, 0.0, None
        for nid in sorted(xy):
            if prev is not None:
                total += math.dist(xy[prev], xy[nid])
            dist[nid] = total
            prev = nid
        path = out / f"{src.stem}.series.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("node_id", "epoch_s", "distance_m", "hpl_m"))
            for r in rows:
                hpl = "nan" if r["hpl_m"] == UNAVAILABLE else r["hpl_m"]
                w.writerow((r["node_id"], r["epoch_s"], f"{dist[int(r['node_id'])]:.3f}", hpl))
    elif header == LOG_COLUMNS:
        path = out / f"{src.stem}.series.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch_s", "measured_hpl_m", "predicted_hpl_m"))
            for r in rows:
                w.writerow((r["epoch_s"], "nan" if r["hpl_m"] == UNAVAILABLE else r["hpl_m"],
                            "nan" if r["predicted_hpl_m"] == UNAVAILABLE else r["predicted_hpl_m"]))
    else:
        raise ScenarioError(f"{src}: not an HPL map or ARAIM log")
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadsafe", description=__doc__.splitlines()[0])
    p.add_argument("--print-defaults", action="store_true", help="print the default scenario document and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=0, help="random seed (u64)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--epoch", type=float, default=None, help="restrict to one epoch (s of week)")

    sp = sub.add_parser("validate", help="check a scenario file")
    common(sp)
    sp.set_defaults(func=cmd_validate)
    sp = sub.add_parser("predict-map", help="generate the conservative HPL map")
    common(sp)
    sp.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    sp.set_defaults(func=cmd_predict_map)
    sp = sub.add_parser("plan", help="safety-constrained route over an HPL map")
    common(sp)
    sp.add_argument("--map", help="HPL map CSV (overrides the scenario)")
    sp.add_argument("--graph", help="road graph JSON (overrides the scenario)")
    sp.add_argument("--start", type=int)
    sp.add_argument("--target", type=int)
    sp.add_argument("--candidates", help="JSON {label: [node ids]} of routes to include in the report")
    sp.set_defaults(func=cmd_plan)
    sp = sub.add_parser("araim", help="FDE/HPL log for simulated measurements at the truth pose")
    common(sp)
    sp.set_defaults(func=cmd_araim)
    sp = sub.add_parser("plot-data", help="export plottable series from a map or ARAIM log")
    common(sp, scenario=False)
    sp.add_argument("--input", required=True, help="map CSV or ARAIM log CSV")
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        print(json.dumps(DEFAULTS, indent=2))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except NoFeasiblePath as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except (ScenarioError, AlmanacError, FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateGeometryError, WlsConvergenceError, KeplerConvergenceError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
