import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import box, discriminator_lock, fermat_reflection

from roadsafe.constants import GPS_CA_CHIP_LENGTH
from roadsafe.orbits import SatelliteState
from roadsafe.pseudorange import (ChipParams, ErrorModelConfig, PseudorangePrediction, coherent_early_late_envelope,
                                  los_nlos_bias, nlos_bias, predict_pseudorange, sigma_model,
                                  simulate_measurements)
from roadsafe.scene import ReceiverPose, ReceptionCondition, ReflectedPath, Scene, reflections

CHIP = ChipParams()


def path(excess, alpha=0.5, phase=0.0, facet=0):
    return ReflectedPath(facet, np.zeros(3), excess, alpha, phase)


def test_chip_params_validation():
    with pytest.raises(ValueError):
        ChipParams(correlator_spacing=1.5)
    with pytest.raises(ValueError):
        ChipParams(correlator_spacing=0.5, cutoff=0.4)
    with pytest.raises(ValueError):
        ChipParams(chip_length=0.0)


def test_nlos_bias_examples():
    assert nlos_bias([path(37.2)]) == 37.2
    assert nlos_bias([path(12.0), path(30.0)]) == 12.0
    with pytest.raises(ValueError):
        nlos_bias([])


def test_nlos_bias_canyon_matches_fermat_minimum():
    scene = Scene([box(-60, 8, 60, 28, 40), box(-30, 20, -10, 40, 45), box(-60, -30, 60, -12, 6)])
    rx = ReceiverPose(np.array([0.0, 1.5, 0.0]))
    el, az = math.radians(40), math.radians(160)
    d = np.array([math.cos(el) * math.sin(az), math.cos(el) * math.cos(az), math.sin(el)])
    paths = reflections(scene, rx, d)
    assert len(paths) >= 1
    oracle = min(fermat_reflection(scene, p.facet_id, rx.antenna, d)[1] for p in paths)
    assert nlos_bias(paths) == pytest.approx(oracle, abs=1e-3)


def test_los_nlos_long_delay_and_zero_excess():
    assert los_nlos_bias([path(2.0 * CHIP.chip_length, 0.9)]) == 0.0
    assert los_nlos_bias([path(0.0, 0.9)]) == 0.0
    assert los_nlos_bias([]) == 0.0


def test_envelope_closed_form_and_discriminator_oracle():
    # in-phase reflection at half amplitude, 0.1 chip delay, 1 chip spacing
    value = los_nlos_bias([path(0.1 * CHIP.chip_length, 0.5, 0.0)], CHIP)
    assert value == pytest.approx(0.5 * 0.1 / 1.5 * CHIP.chip_length, rel=1e-12)
    assert value / CHIP.chip_length == pytest.approx(discriminator_lock(0.1, 0.5, 1.0), abs=1e-12)


@pytest.mark.parametrize("spacing", [0.1, 0.5, 1.0])
def test_envelope_matches_oracle_grid(spacing):
    for a in np.linspace(-0.9, 1.0, 12):
        for delay in np.linspace(0.02, 1.6, 25):
            assert coherent_early_late_envelope(delay, a, spacing) == pytest.approx(
                discriminator_lock(delay, a, spacing), abs=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 2 * math.pi), st.floats(1.5, 10.0), st.floats(0.05, 1.0))
def test_cutoff_property(alpha, phase, delay, spacing):
    chip = ChipParams(correlator_spacing=spacing)
    assert los_nlos_bias([path(delay * chip.chip_length, alpha, phase)], chip) == 0.0


@given(st.lists(st.tuples(st.floats(0.0, 1.6), st.floats(0.0, 1.0), st.floats(0.0, 2 * math.pi)),
                min_size=1, max_size=5), st.floats(0.05, 1.0))
def test_bias_bounded_by_spacing(paths, spacing):
    chip = ChipParams(correlator_spacing=spacing)
    b = los_nlos_bias([path(d * chip.chip_length, a, p) for d, a, p in paths], chip)
    assert abs(b) <= 0.5 * spacing * chip.chip_length * (1 + 1e-12)
    assert abs(b) <= max(a for _, a, _ in paths) * 0.5 * spacing * chip.chip_length * (1 + 1e-12)


@given(st.floats(0.01, 1.4), st.floats(0.0, 1.0), st.floats(0.0, 2 * math.pi))
def test_envelope_sign_follows_phase(delay, alpha, phase):
    b = los_nlos_bias([path(delay * CHIP.chip_length, alpha, phase)])
    c = math.cos(phase)
    assert b == 0.0 or math.copysign(1.0, b) == math.copysign(1.0, c)


@given(st.floats(0.01, 1.4), st.floats(0.0, 0.02), st.floats(0.0, 2 * math.pi))
def test_envelope_odd_to_first_order(delay, alpha, phase):
    # exact oddness fails at finite amplitude: in and out of phase differ at O(alpha^2)
    plus = los_nlos_bias([path(delay * CHIP.chip_length, alpha, phase)])
    minus = los_nlos_bias([path(delay * CHIP.chip_length, alpha, phase + math.pi)])
    assert abs(plus + minus) <= 4 * alpha ** 2 * CHIP.chip_length + 1e-9


def test_sigma_model():
    cfg = ErrorModelConfig(sigma_zenith=0.5, elevation_exponent=1.0, sigma_floor=0.1)
    assert sigma_model(math.pi / 2, cfg) == 0.5
    assert sigma_model(math.radians(30), cfg) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        sigma_model(0.0, cfg)


@given(st.floats(0.01, 1.57), st.floats(0.01, 1.57))
def test_sigma_monotone(e1, e2):
    lo, hi = sorted((e1, e2))
    assert sigma_model(lo) >= sigma_model(hi)


@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(-50, 50))
def test_nlos_bias_translation_invariant(dx, dy, dz):
    scene = Scene([box(-60, 15, 60, 30, 40)])
    shifted = Scene([box(-60 + dx, 15 + dy, 60 + dx, 30 + dy, 40)])
    d = np.array([0.1, -0.7, 0.7])
    d /= np.linalg.norm(d)
    rx = ReceiverPose(np.zeros(3))
    rx2 = ReceiverPose(np.array([dx, dy, 0.0]))
    a, b = reflections(scene, rx, d), reflections(shifted, rx2, d)
    assert nlos_bias(a) == pytest.approx(nlos_bias(b), abs=1e-9)
    del dz


def _sat():
    return SatelliteState("G05", np.array([1.5e7, 1.0e7, 1.8e7]), 0.0)


def test_predict_los_only_is_geometric_range():
    rx = np.array([6.378e6, 0.0, 0.0])
    p = predict_pseudorange(_sat(), rx, ReceptionCondition.LOS_ONLY, [])
    assert p.rho_bias == 0.0 and p.iono_delay == 0.0 and p.tropo_delay == 0.0
    assert p.pseudorange == np.linalg.norm(_sat().position_ecef - rx)


def test_predict_nlos_passthrough_and_no_signal():
    rx = np.array([6.378e6, 0.0, 0.0])
    p = predict_pseudorange(_sat(), rx, ReceptionCondition.NLOS_ONLY, [path(25.0), path(40.0)])
    assert p.rho_bias == 25.0
    with pytest.raises(ValueError):
        predict_pseudorange(_sat(), rx, ReceptionCondition.NO_SIGNAL, [])


def test_predict_canyon_term_by_term():
    scene = Scene([box(-60, 12, 60, 30, 40, 0.6)])
    rx_local = ReceiverPose(np.zeros(3))
    el, az = math.radians(45), math.radians(190)
    d = np.array([math.cos(el) * math.sin(az), math.cos(el) * math.cos(az), math.sin(el)])
    sat = SatelliteState("G09", scene.to_ecef(rx_local.antenna + 2.0e7 * d), 0.0)
    paths = reflections(scene, rx_local, d)
    cfg = ErrorModelConfig()
    rx = scene.to_ecef(rx_local.antenna)
    p = predict_pseudorange(sat, rx, ReceptionCondition.LOS_NLOS, paths, CHIP, cfg, iono_delay=1.5,
                            tropo_delay=2.5)
    geometric = float(np.linalg.norm(sat.position_ecef - rx))
    expected_bias = coherent_early_late_envelope(paths[0].path_length_excess / CHIP.chip_length,
                                                 0.6 * math.cos(paths[0].phase_offset), 1.0) * CHIP.chip_length
    assert p.r_los == geometric
    assert p.rho_bias == pytest.approx(expected_bias, abs=1e-12)
    assert p.pseudorange == pytest.approx(geometric + 1.5 + 2.5 + expected_bias, abs=1e-6)
    assert p.sigma == pytest.approx(sigma_model(el, cfg), rel=1e-6)


def _preds(n=6):
    return [PseudorangePrediction(f"G{i:02d}", ReceptionCondition.LOS_ONLY, 2.0e7 + 1000.0 * i, 0.0, 0.8)
            for i in range(n)]


def test_simulate_noiseless_limit():
    cfg = ErrorModelConfig(clock_bias_true=150.0)
    preds = [PseudorangePrediction("G01", ReceptionCondition.LOS_ONLY, 2.1e7, 0.0, 1e-300)]
    s = simulate_measurements(preds, cfg, seed=3)
    assert s[0].pseudorange == 2.1e7 + 150.0


def test_simulate_deterministic():
    a = simulate_measurements(_preds(), seed=42)
    b = simulate_measurements(_preds(), seed=42)
    assert a == b
    assert simulate_measurements(_preds(), seed=43) != a


def test_simulate_statistics():
    cfg = ErrorModelConfig(clock_bias_true=150.0)
    pred = PseudorangePrediction("G01", ReceptionCondition.NLOS_ONLY, 2.0e7, 12.0, 0.8)
    rng = np.random.default_rng(9)
    res = np.array([simulate_measurements([pred], cfg, seed=rng)[0].pseudorange for _ in range(10_000)])
    res -= 2.0e7 + 150.0 + 12.0
    n = len(res)
    assert abs(res.mean()) < 3 * 0.8 / math.sqrt(n)
    assert abs(res.std(ddof=1) - 0.8) < 3 * 0.8 / math.sqrt(2 * (n - 1))


def test_simulate_injected_bias():
    base = simulate_measurements(_preds(), seed=1)
    hit = simulate_measurements(_preds(), seed=1, extra_bias={"G02": 100.0})
    diff = [h.pseudorange - b.pseudorange for h, b in zip(hit, base)]
    assert diff[2] == pytest.approx(100.0) and sum(abs(x) for i, x in enumerate(diff) if i != 2) == 0.0


def test_gps_chip_length():
    assert GPS_CA_CHIP_LENGTH == pytest.approx(293.05, abs=0.01)
