"""Safety-constrained route planning over an HPL map.

The objective is the sum over traversed edges of edge length times the HPL
at the edge's destination node. A route is feasible when the share of safe
nodes (HPL available and below ``t_hpl``) exceeds ``t_safe`` and no run of
consecutive unsafe nodes covers ``d_safe`` metres or more.

:func:`astar_plan` is a constrained A* search: the running unsafe
distance is stored per node, the ``d_safe`` guard is applied when a node
is popped and the safe-node ratio is only checked once the target is
popped. Closed nodes are never reopened and a neighbour is only updated
when its cumulative cost improves. ``strict=True`` keys search states by
(node, quantised unsafe distance) instead, so a cheaper but longer-outage
predecessor cannot mask a feasible alternative.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EDGE_TOL = 1e-6


class OracleBoundError(RuntimeError):
    pass


@dataclass
class RoadGraph:
    positions: dict
    adjacency: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, positions: Mapping, edges: Sequence, lengths: Sequence | None = None) -> RoadGraph:
        pos = {int(k): np.asarray(v, dtype=float)[:2] for k, v in positions.items()}
        adj: dict = {k: {} for k in pos}
        for i, (a, b) in enumerate(edges):
            a, b = int(a), int(b)
            if a not in pos or b not in pos:
                raise ValueError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            d = float(np.linalg.norm(pos[a] - pos[b]))
            if lengths is not None:
                given = float(lengths[i])
                if abs(given - d) > EDGE_TOL:
                    raise ValueError(f"edge ({a}, {b}) length {given} differs from node distance {d}")
            if not d > 0:
                raise ValueError(f"edge ({a}, {b}) has zero length")
            adj[a][b] = d
            adj[b][a] = d
        return cls(pos, adj)

    @classmethod
    def from_dict(cls, doc: dict) -> RoadGraph:
        positions = {n["id"]: (n["x"], n["y"]) for n in doc["nodes"]}
        edges, lengths = [], []
        for e in doc["edges"]:
            if isinstance(e, dict):
                edges.append((e["a"], e["b"]))
                lengths.append(e.get("length_m"))
            else:
                edges.append((e[0], e[1]))
                lengths.append(e[2] if len(e) > 2 else None)
        if any(x is None for x in lengths):
            lengths = None
        return cls.from_edges(positions, edges, lengths)

    @classmethod
    def load(cls, path) -> RoadGraph:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        nodes = [{"id": k, "x": float(p[0]), "y": float(p[1])} for k, p in sorted(self.positions.items())]
        edges = sorted({(min(a, b), max(a, b)) for a in self.adjacency for b in self.adjacency[a]})
        return {"nodes": nodes, "edges": [list(e) for e in edges]}

    def __contains__(self, node) -> bool:
        return node in self.positions

    def neighbors(self, node):
        return sorted(self.adjacency[node].items())

    def edge_length(self, a, b) -> float:
        try:
            return self.adjacency[a][b]
        except KeyError:
            raise ValueError(f"nodes {a} and {b} are not adjacent") from None

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(self.positions[a] - self.positions[b]))


@dataclass(frozen=True)
class PlannerConfig:
    t_hpl: float = 10.0
    t_safe: float = 0.95
    d_safe: float = 150.0
    epoch: float = 0.0
    unavailable_penalty: float | None = None
    strict: bool = False
    d_quantum: float = 1e-6

    def __post_init__(self):
        if not (self.t_hpl > 0 and self.d_safe > 0 and self.d_quantum > 0):
            raise ValueError("t_hpl, d_safe and d_quantum must be positive")
        if not 0 < self.t_safe <= 1:
            raise ValueError("t_safe must lie in (0, 1]")
        if self.unavailable_penalty is not None and not self.unavailable_penalty > 0:
            raise ValueError("unavailable_penalty must be positive")

    @property
    def penalty(self) -> float:
        return 10.0 * self.t_hpl if self.unavailable_penalty is None else self.unavailable_penalty

    def slack(self) -> PlannerConfig:
        """Same config with both constraints disabled."""
        return PlannerConfig(math.inf, 1e-12, math.inf, self.epoch, self.penalty, self.strict, self.d_quantum)


@dataclass
class SearchNodeState:
    node: int
    g: float
    h: float
    d_unacceptable: float
    safenode: int
    parent: SearchNodeState | None = None

    @property
    def f(self) -> float:
        return self.g + self.h


@dataclass(frozen=True)
class PathResult:
    path: tuple
    cost: float
    travel_distance: float
    avg_hpl: float
    safe_ratio: float
    max_continuous_unacceptable: float
    feasible: bool
    label: str = ""
    reason: str = ""
    expanded: int = 0
    tracked_cost: float | None = None
    tracked_max_unacceptable: float | None = None

    @classmethod
    def failure(cls, reason: str = "no feasible path", expanded: int = 0) -> PathResult:
        return cls((), math.nan, math.nan, math.nan, math.nan, math.nan, False, reason=reason, expanded=expanded)

    @property
    def found(self) -> bool:
        return bool(self.path)


def _hpl_slice(hpl_map, epoch):
    return hpl_map.at_epoch(epoch) if hasattr(hpl_map, "at_epoch") else hpl_map


def is_safe(value, cfg: PlannerConfig) -> bool:
    return value is not None and math.isfinite(value) and value < cfg.t_hpl


def cost_weight(value, cfg: PlannerConfig) -> float:
    return cfg.penalty if value is None or not math.isfinite(value) else float(value)


def path_cost(path: Sequence, graph: RoadGraph, hpl_map, cfg: PlannerConfig = PlannerConfig()) -> float:
    """Sum of edge length times destination-node HPL, in path order."""
    hpl = _hpl_slice(hpl_map, cfg.epoch)
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        total = total + graph.edge_length(a, b) * cost_weight(hpl.get(b), cfg)
    return total


def path_feasibility(path: Sequence, graph: RoadGraph, hpl_map, cfg: PlannerConfig = PlannerConfig()):
    """Safe-node ratio (percent), longest unsafe run (m) and feasibility."""
    if not path:
        raise ValueError("empty path")
    hpl = _hpl_slice(hpl_map, cfg.epoch)
    safe = [is_safe(hpl.get(n), cfg) for n in path]
    ratio = sum(safe) / len(path)
    run = longest = 0.0
    for i in range(1, len(path)):
        if safe[i]:
            run = 0.0
        else:
            run = run + graph.edge_length(path[i - 1], path[i])
            longest = max(longest, run)
    feasible = ratio > cfg.t_safe and longest < cfg.d_safe
    return 100.0 * ratio, longest, feasible


def evaluate_path(path: Sequence, graph: RoadGraph, hpl_map, cfg: PlannerConfig = PlannerConfig(),
                  label: str = "", **extra) -> PathResult:
    hpl = _hpl_slice(hpl_map, cfg.epoch)
    path = tuple(path)
    ratio, longest, feasible = path_feasibility(path, graph, hpl, cfg)
    travel = 0.0
    for a, b in zip(path[:-1], path[1:]):
        travel += graph.edge_length(a, b)
    avail = [hpl[n] for n in path if hpl.get(n) is not None and math.isfinite(hpl[n])]
    return PathResult(path, path_cost(path, graph, hpl, cfg), travel,
                      float(np.mean(avail)) if avail else math.nan, ratio, longest, feasible, label, **extra)


def _reconstruct(state: SearchNodeState):
    nodes, max_d = [], 0.0
    while state is not None:
        nodes.append(state.node)
        max_d = max(max_d, state.d_unacceptable)
        state = state.parent
    return tuple(reversed(nodes)), max_d


def astar_plan(graph: RoadGraph, hpl_map, start, target, cfg: PlannerConfig = PlannerConfig()) -> PathResult:
    """Minimum-cost feasible route from ``start`` to ``target``.

    Returns a failed :class:`PathResult` (``found`` is False) when the open
    set empties without a feasible route.
    """
    if start not in graph or target not in graph:
        raise ValueError("start and target must be graph nodes")
    hpl = _hpl_slice(hpl_map, cfg.epoch)

    def key(state: SearchNodeState):
        if not cfg.strict:
            return state.node
        return state.node, round(state.d_unacceptable / cfg.d_quantum)

    root = SearchNodeState(start, 0.0, graph.distance(start, target), 0.0, 1)
    best = {key(root): root}
    closed = set()
    heap = [(root.f, root.g, start, 0, root)]
    counter = 1
    expanded = 0
    while heap:
        _, _, _, _, cur = heapq.heappop(heap)
        k = key(cur)
        if k in closed or best.get(k) is not cur:
            continue  # stale heap entry
        if cur.d_unacceptable >= cfg.d_safe:
            continue
        if cur.node == target:
            path, max_d = _reconstruct(cur)
            result = evaluate_path(path, graph, hpl, cfg, expanded=expanded, tracked_cost=cur.g,
                                   tracked_max_unacceptable=max_d)
            if result.feasible:
                return result
            continue
        closed.add(k)
        expanded += 1
        for nb, length in graph.neighbors(cur.node):
            value = hpl.get(nb)
            g = cur.g + length * cost_weight(value, cfg)
            if is_safe(value, cfg):
                cand = SearchNodeState(nb, g, graph.distance(nb, target), 0.0, 1, cur)
            else:
                cand = SearchNodeState(nb, g, graph.distance(nb, target), cur.d_unacceptable + length, 0, cur)
            ck = key(cand)
            if ck in closed:
                continue
            prev = best.get(ck)
            if prev is not None and prev.g <= g:
                continue
            best[ck] = cand
            heapq.heappush(heap, (cand.f, cand.g, nb, counter, cand))
            counter += 1
    return PathResult.failure(expanded=expanded)


def exhaustive_oracle(graph: RoadGraph, hpl_map, start, target, cfg: PlannerConfig = PlannerConfig(),
                      max_nodes: int = 15, max_paths: int = 2_000_000) -> PathResult:
    """Minimum-cost feasible simple path by enumeration (small graphs only)."""
    if start not in graph or target not in graph:
        raise ValueError("start and target must be graph nodes")
    if len(graph.positions) > max_nodes:
        raise OracleBoundError(f"graph has {len(graph.positions)} nodes, oracle bound is {max_nodes}")
    hpl = _hpl_slice(hpl_map, cfg.epoch)
    best = None
    n_paths = 0
    stack = [(start, (start,))]
    while stack:
        node, path = stack.pop()
        if node == target:
            n_paths += 1
            if n_paths > max_paths:
                raise OracleBoundError(f"more than {max_paths} simple paths")
            res = evaluate_path(path, graph, hpl, cfg)
            if res.feasible and (best is None or (res.cost, len(path), path) < (best.cost, len(best.path), best.path)):
                best = res
            continue
        on_path = set(path)
        for nb, _ in graph.neighbors(node):
            if nb not in on_path:
                stack.append((nb, path + (nb,)))
    return best if best is not None else PathResult.failure()


REPORT_COLUMNS = ("path", "cost", "travel_distance_m", "avg_hpl_m", "safe_ratio_pct",
                  "max_continuous_unacceptable_m")


def report(results: Sequence[PathResult]) -> str:
    """Comparison table, one row per result in input order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for i, r in enumerate(results):
        w.writerow((r.label or f"path_{i + 1}", repr(r.cost), repr(r.travel_distance), repr(r.avg_hpl),
                    repr(r.safe_ratio), repr(r.max_continuous_unacceptable)))
    return buf.getvalue()


def result_to_dict(r: PathResult) -> dict:
    return {"found": r.found, "feasible": r.feasible, "path": list(r.path), "cost": r.cost,
            "travel_distance_m": r.travel_distance, "avg_hpl_m": r.avg_hpl, "safe_ratio_pct": r.safe_ratio,
            "max_continuous_unacceptable_m": r.max_continuous_unacceptable, "reason": r.reason,
            "expanded": r.expanded}
