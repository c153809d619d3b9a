"""Pseudorange prediction from path geometry.

A predicted pseudorange is the geometric range plus a condition-dependent
bias: the extra travel distance of the earliest reflection when only NLOS
signals arrive, or the code-tracking error of a delay lock loop when the
direct signal and short-delay reflections overlap.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .constants import GPS_CA_CHIP_LENGTH
from .orbits import SatelliteState, topocentric
from .scene import ReceptionCondition, ReflectedPath


@dataclass(frozen=True)
class ChipParams:
    chip_length: float = GPS_CA_CHIP_LENGTH
    correlator_spacing: float = 1.0
    cutoff: float = 1.5

    def __post_init__(self):
        if not self.chip_length > 0:
            raise ValueError("chip_length must be positive")
        if not 0 < self.correlator_spacing <= 1:
            raise ValueError("correlator_spacing must lie in (0, 1]")
        if not self.cutoff > self.correlator_spacing:
            raise ValueError("cutoff must exceed correlator_spacing")


@dataclass(frozen=True)
class ErrorModelConfig:
    sigma_zenith: float = 0.5
    elevation_exponent: float = 1.0
    sigma_floor: float = 0.1
    clock_bias_true: float = 150.0

    def __post_init__(self):
        if not (self.sigma_zenith > 0 and self.sigma_floor > 0):
            raise ValueError("sigma_zenith and sigma_floor must be positive")


@dataclass(frozen=True)
class PseudorangePrediction:
    sat_id: str
    condition: ReceptionCondition
    r_los: float
    rho_bias: float
    sigma: float
    iono_delay: float = 0.0
    tropo_delay: float = 0.0

    @property
    def pseudorange(self) -> float:
        return self.r_los + self.iono_delay + self.tropo_delay + self.rho_bias


@dataclass(frozen=True)
class MeasurementSample:
    sat_id: str
    pseudorange: float
    epoch: float


def coherent_early_late_envelope(delay: float, a: float, spacing: float) -> float:
    """Tracking error in chips of a coherent early-late DLL.

    Ideal triangular code correlation, one reflection of relative in-phase
    amplitude ``a`` (amplitude ratio times cosine of the phase offset)
    delayed by ``delay`` chips, early-late spacing ``spacing`` chips. The
    error ramps as ``a*delay/(1+a)``, plateaus at ``a*spacing/2`` and
    returns to zero at ``1 + spacing/2`` chips.
    """
    if delay <= 0.0 or a == 0.0:
        return 0.0
    e = 0.5 * spacing
    if delay >= 1.0 + e:
        return 0.0
    if delay <= (1.0 + a) * e:
        return a * delay / (1.0 + a)
    if delay <= 1.0 - e + a * e:
        return a * e
    return a * (1.0 + e - delay) / (2.0 - a)


Envelope = Callable[[float, float, float], float]


def nlos_bias(paths: Sequence[ReflectedPath]) -> float:
    """Extra travel distance of the earliest-arriving reflection."""
    if not paths:
        raise ValueError("NLOS bias needs at least one reflected path")
    return min(p.path_length_excess for p in paths)


def los_nlos_bias(paths: Sequence[ReflectedPath], chip: ChipParams = ChipParams(),
                  envelope: Envelope = coherent_early_late_envelope) -> float:
    """Code-tracking bias in metres when the direct signal is also tracked.

    Reflections delayed by ``chip.cutoff`` chips or more contribute nothing.
    Contributions of several reflections are summed and the total is
    clamped to the single-path worst case of the strongest reflection.
    """
    if not paths:
        return 0.0
    total = 0.0
    alpha_max = 0.0
    for p in paths:
        delay = p.path_length_excess / chip.chip_length
        alpha_max = max(alpha_max, min(1.0, p.amplitude_ratio))
        if delay >= chip.cutoff:
            continue
        a = min(1.0, p.amplitude_ratio) * math.cos(p.phase_offset)
        total += envelope(delay, a, chip.correlator_spacing) * chip.chip_length
    bound = alpha_max * 0.5 * chip.correlator_spacing * chip.chip_length
    return min(bound, max(-bound, total))


def sigma_model(elevation: float, cfg: ErrorModelConfig = ErrorModelConfig()) -> float:
    if not elevation > 0:
        raise ValueError("elevation must be positive")
    s = math.sin(min(elevation, math.pi / 2))
    return max(cfg.sigma_floor, cfg.sigma_zenith / s ** cfg.elevation_exponent)


def condition_bias(condition: ReceptionCondition, paths: Sequence[ReflectedPath],
                   chip: ChipParams = ChipParams()) -> float:
    if condition is ReceptionCondition.NLOS_ONLY:
        return nlos_bias(paths)
    if condition is ReceptionCondition.LOS_NLOS:
        return los_nlos_bias(paths, chip)
    if condition is ReceptionCondition.LOS_ONLY:
        return 0.0
    raise ValueError("no pseudorange exists for a NO_SIGNAL satellite")


def predict_pseudorange(sat: SatelliteState, rx_ecef, condition: ReceptionCondition,
                        paths: Sequence[ReflectedPath], chip: ChipParams = ChipParams(),
                        cfg: ErrorModelConfig = ErrorModelConfig(), elevation: float | None = None,
                        iono_delay: float = 0.0, tropo_delay: float = 0.0) -> PseudorangePrediction:
    """Predicted pseudorange with atmospheric delays assumed differentially removed."""
    if condition is ReceptionCondition.NO_SIGNAL:
        raise ValueError("no pseudorange exists for a NO_SIGNAL satellite")
    rx = np.asarray(rx_ecef, dtype=float)
    r_los = float(np.linalg.norm(sat.position_ecef - rx))
    if elevation is None:
        elevation = topocentric(rx, sat).elevation
    return PseudorangePrediction(
        sat_id=sat.sat_id,
        condition=condition,
        r_los=r_los,
        rho_bias=condition_bias(condition, paths, chip),
        sigma=sigma_model(elevation, cfg),
        iono_delay=iono_delay,
        tropo_delay=tropo_delay,
    )


def simulate_measurements(predictions: Sequence[PseudorangePrediction],
                          cfg: ErrorModelConfig = ErrorModelConfig(),
                          seed: int | np.random.Generator | None = 0,
                          epoch: float = 0.0,
                          extra_bias: dict[str, float] | None = None) -> list[MeasurementSample]:
    """Noisy pseudoranges around lane-specific predictions.

    ``extra_bias`` injects additional per-satellite errors (fault
    injection). Every draw comes from the generator built from ``seed``,
    so a fixed seed reproduces the samples exactly.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    extra_bias = extra_bias or {}
    noise = rng.standard_normal(len(predictions))
    out = []
    for p, w in zip(predictions, noise):
        rho = (p.r_los + p.iono_delay + p.tropo_delay + cfg.clock_bias_true + p.rho_bias
               + extra_bias.get(p.sat_id, 0.0) + p.sigma * w)
        out.append(MeasurementSample(p.sat_id, rho, epoch))
    return out
