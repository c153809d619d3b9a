import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import box

from roadsafe import araim
from roadsafe.orbits import SatelliteState, propagate_all
from roadsafe.pseudorange import sigma_model
from roadsafe.relmap import (HplMap, MapNode, PredictionConfig, SatObservation, conservative_visibility,
                             generate_map, predict_cell, predictions_for, sample_road_nodes, worst_case)
from roadsafe.scenario import bundled_scenario
from roadsafe.scene import ReceptionCondition, Scene

L, N, NS = ReceptionCondition.LOS_ONLY, ReceptionCondition.LOS_NLOS, ReceptionCondition.NO_SIGNAL


@pytest.fixture(scope="module")
def canyon():
    sc = bundled_scenario("canyon")
    nodes, _ = sample_road_nodes(sc.scene, sc.node_spacing, sc.include_edges)
    return sc, nodes


@pytest.fixture(scope="module")
def open_field():
    return bundled_scenario("open_field")


def sat_in(scene, az_deg, el_deg, sid="G01"):
    az, el = math.radians(az_deg), math.radians(el_deg)
    d = np.array([math.cos(el) * math.sin(az), math.cos(el) * math.cos(az), math.sin(el)])
    return SatelliteState(sid, scene.to_ecef(2.0e7 * d), 0.0)


def test_map_node_validation():
    with pytest.raises(ValueError):
        MapNode(0, [0, 0], ())
    with pytest.raises(ValueError):
        MapNode(0, [0, 0], (-4.0, 4.0), road_width=7.0)
    assert MapNode(1, [2.0, 3.0]).position.tolist() == [2.0, 3.0, 0.0]


def test_conservative_visibility_all_los():
    scene = Scene([])
    node = MapNode(0, [0, 0], (-3.0, 0.0, 3.0))
    assert conservative_visibility(scene, node, sat_in(scene, 40, 60), math.radians(33)) == (L, 0.0)


def test_conservative_visibility_lost_at_one_offset():
    # the wall top sits at 84 deg from the north lane and 66 deg from the south lane
    scene = Scene([box(-50, 5, 50, 15, 20)])
    node = MapNode(0, [0, 0], (-3.0, 3.0))
    sat = sat_in(scene, 0, 75)
    cond, bias = conservative_visibility(scene, node, sat, math.radians(33))
    assert cond is NS and bias == 0.0
    only_south = MapNode(0, [0, 0], (-3.0,))
    assert conservative_visibility(scene, only_south, sat, math.radians(33))[0] is L


def test_worst_case_takes_largest_bias():
    obs = [SatObservation("G01", N, 0.8, 0.7), SatObservation("G01", N, 2.3, 0.6)]
    w = worst_case(obs)
    assert w.condition is N and w.bias == 2.3 and w.elevation == 0.6
    mixed = worst_case([SatObservation("G01", L, 0.0, 0.9), SatObservation("G01", N, -1.2, 0.8)])
    assert mixed.condition is N and mixed.bias == -1.2


def test_condition_severity_order():
    order = [ReceptionCondition.LOS_ONLY, ReceptionCondition.LOS_NLOS, ReceptionCondition.NLOS_ONLY,
             ReceptionCondition.NO_SIGNAL]
    assert [c.severity for c in order] == sorted(c.severity for c in order)


def test_open_sky_cell_equals_direct_araim(open_field):
    sc = open_field
    t = sc.epochs[0]
    sats = propagate_all(sc.almanac, t, sc.week)
    node = MapNode(0, [0.0, 0.0, 0.0])
    # a low mask puts ten or more satellites in view
    cfg = dataclasses.replace(sc.prediction, mask=math.radians(10))
    cell = predict_cell(sc.scene, node, sats, cfg, t)
    # build the same measurement problem by hand
    antenna = np.array([0.0, 0.0, cfg.antenna_height])
    pos, sig, labels = [], [], []
    for s in sats:
        local = sc.scene.to_local(s.position_ecef)
        el = math.asin((local - antenna)[2] / np.linalg.norm(local - antenna))
        if el < cfg.mask:
            continue
        pos.append(local)
        sig.append(sigma_model(el, cfg.error_model))
        labels.append(s.sat_id[0])
    pos = np.array(pos)
    assert len(pos) >= 10 and cell.n_visible == len(pos)
    ctx = araim.GeometryContext(pos, tuple(labels), np.array(sig))
    rho = np.linalg.norm(pos - antenna, axis=1)
    _, _, hpl = araim.run_araim(rho, ctx, cfg.integrity, antenna)
    assert cell.available and hpl.available
    assert cell.value == pytest.approx(hpl.hpl, rel=1e-12)


def test_zero_visible_under_high_mask(open_field):
    sc = open_field
    cfg = dataclasses.replace(sc.prediction, mask=math.radians(89.9))
    sats = propagate_all(sc.almanac, sc.epochs[0], sc.week)
    cell = predict_cell(sc.scene, MapNode(0, [0.0, 0.0]), sats, cfg, sc.epochs[0])
    assert not cell.available and cell.n_visible == 0


def test_canyon_cell_with_three_visible_is_unavailable(canyon):
    sc, nodes = canyon
    hpl_min = None
    for t in sc.epochs:
        sats = propagate_all(sc.almanac, t, sc.week)
        for node in nodes:
            obs = [conservative_visibility(sc.scene, node, s, sc.prediction.mask, sc.prediction)[0] for s in sats]
            if sum(c is not NS for c in obs) == 3:
                hpl_min = predict_cell(sc.scene, node, sats, sc.prediction, t)
                break
        if hpl_min is not None:
            break
    assert hpl_min is not None, "fixture should contain a three-satellite cell"
    assert hpl_min.n_visible == 3 and not hpl_min.available and hpl_min.reason


@pytest.fixture(scope="module")
def small_canyon_map(canyon):
    sc, nodes = canyon
    sub = nodes[::5]
    return sc, sub, generate_map(sc.scene, sub, sc.epochs[:2], sc.almanac, sc.prediction, sc.week)


def test_map_is_complete_and_consistent(small_canyon_map):
    sc, nodes, m = small_canyon_map
    assert set(m.cells) == {(n.node_id, t) for n in nodes for t in sc.epochs[:2]}
    for c in m.cells.values():
        labels = [sid[0] for sid, cond in c.conditions.items() if cond is not NS]
        assert len(labels) == c.n_visible
        if c.n_visible < araim.exclusion_minimum(labels):
            assert not c.available
        if not c.available:
            assert c.reason


def test_single_cell_map_equals_predict_cell(canyon):
    sc, nodes = canyon
    node, t = nodes[3], sc.epochs[1]
    m = generate_map(sc.scene, [node], [t], sc.almanac, sc.prediction, sc.week)
    cell = predict_cell(sc.scene, node, propagate_all(sc.almanac, t, sc.week), sc.prediction, t)
    assert m.cells[(node.node_id, t)] == cell


def test_permutation_and_parallel_determinism(small_canyon_map):
    sc, nodes, m = small_canyon_map
    rev = generate_map(sc.scene, nodes[::-1], sc.epochs[:2], sc.almanac, sc.prediction, sc.week)
    par = generate_map(sc.scene, nodes, sc.epochs[:2], sc.almanac, sc.prediction, sc.week, workers=2)
    assert list(rev.rows()) == list(m.rows()) == list(par.rows())


def test_map_rejects_bad_epochs(canyon):
    sc, nodes = canyon
    with pytest.raises(ValueError):
        generate_map(sc.scene, nodes[:1], [], sc.almanac, sc.prediction)
    with pytest.raises(ValueError):
        generate_map(sc.scene, nodes[:1], [10.0, 10.0], sc.almanac, sc.prediction)


def test_map_file_roundtrip(small_canyon_map, tmp_path):
    _, _, m = small_canyon_map
    path = m.write(tmp_path / "c.map.csv")
    header = path.read_text().splitlines()[0]
    assert header == "node_id,x_m,y_m,epoch_s,hpl_m,n_visible"
    back = HplMap.read(path)
    assert back.epochs == m.epochs and back.mask == m.mask
    assert back.metadata["config_hash"] == m.metadata["config_hash"]
    for key, c in m.cells.items():
        assert back.cells[key].value == c.value and back.cells[key].n_visible == c.n_visible


def test_predictions_use_lowest_elevation_sigma(canyon):
    sc, nodes = canyon
    sats = propagate_all(sc.almanac, sc.epochs[0], sc.week)
    obs = [SatObservation(s.sat_id, L, 0.0, 0.7) for s in sats[:6]]
    preds, _, _ = predictions_for(sc.scene, nodes[0].position, sats[:6], obs, sc.prediction)
    assert all(p.sigma == sigma_model(0.7, sc.prediction.error_model) for p in preds)


def test_sample_nodes_spacing_and_offsets(canyon):
    sc, nodes = canyon
    road = sc.scene.roads[0]
    width = road.lane_count * road.lane_width
    for n in nodes:
        assert max(abs(o) for o in n.lateral_offsets) <= width / 2 + 1e-9
    _, edges = sample_road_nodes(sc.scene, sc.node_spacing)
    pos = {n.node_id: n.position for n in nodes}
    assert all(np.linalg.norm(pos[a] - pos[b]) <= sc.node_spacing + 1e-9 for a, b in edges)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.0, 1.4), st.floats(0.0, 1.4))
def test_mask_monotone_n_visible(seed, m1, m2):
    sc = bundled_scenario("canyon")
    nodes, _ = sample_road_nodes(sc.scene, sc.node_spacing)
    rng = np.random.default_rng(seed)
    node = nodes[int(rng.integers(len(nodes)))]
    t = sc.epochs[int(rng.integers(len(sc.epochs)))]
    sats = propagate_all(sc.almanac, t, sc.week)
    lo, hi = sorted((m1, m2))
    count = [sum(conservative_visibility(sc.scene, node, s, m, sc.prediction)[0] is not NS for s in sats)
             for m in (lo, hi)]
    assert count[1] <= count[0]


def test_prediction_config_digest_changes():
    a, b = PredictionConfig(), PredictionConfig(mask=0.3)
    assert a.digest() == PredictionConfig().digest() != b.digest()
