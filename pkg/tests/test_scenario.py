import json
import math

import pytest

from roadsafe.fixtures import DATA_DIR
from roadsafe.scenario import BUNDLED, DEFAULTS, ScenarioError, bundled_scenario, load_scenario, scenario_from_dict


def base_doc():
    return json.loads((DATA_DIR / "open_field.json").read_text())


def test_bundled_scenarios_load():
    for name in BUNDLED:
        sc = bundled_scenario(name)
        assert sc.name == name
        assert len(sc.epochs) == 12
        assert sc.prediction.mask == pytest.approx(math.radians(33.0))


def test_defaults_merge_keeps_unset_keys():
    doc = base_doc()
    doc["integrity"] = {"phmi_hor": 1e-7}
    sc = scenario_from_dict(doc, DATA_DIR)
    assert sc.prediction.integrity.phmi_hor == 1e-7
    assert sc.prediction.integrity.p_false_alert == DEFAULTS["integrity"]["p_false_alert"]
    assert sc.planner.t_hpl == DEFAULTS["planner"]["t_hpl"]


def test_planner_epoch_defaults_to_first_epoch():
    sc = scenario_from_dict(base_doc(), DATA_DIR)
    assert sc.planner.epoch == sc.epochs[0]


def test_epoch_list_and_grid():
    doc = base_doc()
    doc["epochs"] = [10.0, 20.0, 40.0]
    assert scenario_from_dict(doc, DATA_DIR).epochs == (10.0, 20.0, 40.0)
    doc["epochs"] = [10.0, 10.0]
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc, DATA_DIR)
    doc["epochs"] = {"start_s": 0.0, "step_s": 60.0, "count": 0}
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc, DATA_DIR)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d.update(scene="nowhere.scene.json"),
    lambda d: d.update(almanacs=[]),
    lambda d: d.update(almanacs=[{"path": "missing.yuma"}]),
    lambda d: d.update(elevation_mask_deg=95.0),
    lambda d: d.update(integrity={"mode_probability_floor": 0.0}),
    lambda d: d.update(integrity={"bogus": 1}),
    lambda d: d.update(chip={"correlator_spacing": 2.0}),
    lambda d: d.update(planner={"t_safe": 1.5}),
    lambda d: d.update(lateral_sweep={"node_spacing_m": 0.0}),
    lambda d: d.update(faults=[{"sat_id": "G99", "bias_m": 50.0}]),
    lambda d: d.update(faults=[{"bias_m": 50.0}]),
])
def test_invalid_documents_rejected(mutate):
    doc = base_doc()
    mutate(doc)
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc, DATA_DIR)


def test_duplicate_almanac_rejected():
    doc = base_doc()
    doc["almanacs"] = doc["almanacs"] + doc["almanacs"][:1]
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc, DATA_DIR)


def test_fault_epochs():
    sc = bundled_scenario("open_field_fault")
    assert sc.fault_biases(2) == {"G07": 80.0}
    assert sc.fault_biases(0) == {}


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "none.json")
