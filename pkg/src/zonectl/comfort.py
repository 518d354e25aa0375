"""Comfort indices and the scalar control reward.

PMV follows Fanger's steady-state heat balance as standardised in ISO 7730,
with the clothing surface temperature found by fixed-point iteration. The
three penalties are dead-band distances from the comfort ranges; the reward
is their weighted, min-max normalised sum, negated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MET_TO_WM2 = 58.15
PMV_SCALE_LIMIT = 3.0
DEFAULT_METABOLIC_RATE = 70.0  # W/m2
DEFAULT_CLOTHING = 0.5  # clo


class ComfortError(ValueError):
    pass


class PmvConvergenceError(ArithmeticError):
    """Clothing surface temperature iteration failed to settle."""


@dataclass(frozen=True)
class PmvInputs:
    t_air: float
    t_radiant: float
    air_speed: float
    rh: float
    metabolic_rate: float = DEFAULT_METABOLIC_RATE
    clothing: float = DEFAULT_CLOTHING


@dataclass(frozen=True)
class ComfortRanges:
    pmv_limit: float = 0.5
    illum_low: float = 500.0
    illum_high: float = 1000.0
    co2_low: float = 400.0
    co2_high: float = 1000.0

    def __post_init__(self):
        if not self.pmv_limit > 0:
            raise ComfortError("pmv_limit must be > 0")
        if not self.illum_low < self.illum_high:
            raise ComfortError("illum_low must be < illum_high")
        if not self.co2_low < self.co2_high:
            raise ComfortError("co2_low must be < co2_high")


@dataclass(frozen=True)
class RewardWeights:
    energy: float = 2.0
    thermal: float = 3.0
    visual: float = 1.0
    air: float = 1.0

    def __post_init__(self):
        w = self.as_tuple()
        if any(x < 0 for x in w):
            raise ComfortError("reward weights must be >= 0")
        if not any(x > 0 for x in w):
            raise ComfortError("reward weights must not all be zero")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.energy, self.thermal, self.visual, self.air)


# Weight presets explored for the energy/comfort balance; "balanced" is the default.
WEIGHT_PRESETS = {
    "uniform": RewardWeights(1, 1, 1, 1),
    "energy5": RewardWeights(5, 1, 1, 1),
    "energy10": RewardWeights(10, 1, 1, 1),
    "balanced": RewardWeights(2, 3, 1, 1),
    "thermal5": RewardWeights(2, 5, 1, 1),
}


@dataclass(frozen=True)
class NormBounds:
    """(min, max) per reward term: energy kWh/step, thermal, visual lux, air ppm."""

    energy: tuple[float, float]
    thermal: tuple[float, float] = (0.0, 2.5)
    visual: tuple[float, float] = (0.0, 1000.0)
    air: tuple[float, float] = (0.0, 1000.0)

    def __post_init__(self):
        for name in ("energy", "thermal", "visual", "air"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ComfortError(f"norm bounds {name}: min {lo} must be < max {hi}")


def pmv(inputs: PmvInputs) -> float:
    """Predicted mean vote, clamped to the seven-point scale [-3, 3].

    External work is taken as zero; ``metabolic_rate`` is in W/m2.
    """
    ta, tr, v, rh = inputs.t_air, inputs.t_radiant, inputs.air_speed, inputs.rh
    m = inputs.metabolic_rate
    if v < 0 or not 0 <= rh <= 100 or inputs.clothing < 0 or m <= 0:
        raise ComfortError(f"invalid PMV inputs {inputs}")

    pa = rh * 10.0 * math.exp(16.6536 - 4030.183 / (ta + 235.0))  # vapour pressure, Pa
    icl = 0.155 * inputs.clothing  # m2K/W
    mw = m  # no external work
    fcl = 1.0 + 1.29 * icl if icl <= 0.078 else 1.05 + 0.645 * icl
    hcf = 12.1 * math.sqrt(v)
    taa = ta + 273.0
    tra = tr + 273.0

    tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1)
    p1 = icl * fcl
    p2 = p1 * 3.96
    p3 = p1 * 100.0
    p4 = p1 * taa
    p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0) ** 4
    xn = tcla / 100.0
    xf = tcla / 50.0
    hc = hcf
    for _ in range(150):
        if abs(xn - xf) <= 0.00015:
            break
        xf = (xf + xn) / 2.0
        hcn = 2.38 * abs(100.0 * xf - taa) ** 0.25
        hc = max(hcf, hcn)
        xn = (p5 + p4 * hc - p2 * xf**4) / (100.0 + p3 * hc)
    else:
        raise PmvConvergenceError(f"clothing temperature did not converge for {inputs}")
    tcl = 100.0 * xn - 273.0

    hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa)  # skin diffusion
    hl2 = 0.42 * (mw - 58.15) if mw > 58.15 else 0.0  # sweating
    hl3 = 1.7e-5 * m * (5867.0 - pa)  # latent respiration
    hl4 = 0.0014 * m * (34.0 - ta)  # dry respiration
    hl5 = 3.96 * fcl * (xn**4 - (tra / 100.0) ** 4)  # radiation
    hl6 = fcl * hc * (tcl - ta)  # convection
    ts = 0.303 * math.exp(-0.036 * m) + 0.028
    value = ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6)
    return max(-PMV_SCALE_LIMIT, min(PMV_SCALE_LIMIT, value))


def thermal_penalty(pmv_value: float, limit: float) -> float:
    # symmetric dead band [-limit, limit]
    if not limit > 0:
        raise ComfortError("pmv limit must be > 0")
    return max(0.0, abs(pmv_value) - limit)


def _band_penalty(x: float, low: float, high: float) -> float:
    if not low < high:
        raise ComfortError(f"band low {low} must be < high {high}")
    if x < low:
        return low - x
    if x > high:
        return x - high
    return 0.0


def visual_penalty(illuminance: float, low: float, high: float) -> float:
    return _band_penalty(illuminance, low, high)


def air_penalty(co2: float, low: float, high: float) -> float:
    return _band_penalty(co2, low, high)


def normalize(x: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


def reward(
    energy: float,
    thermal: float,
    visual: float,
    air: float,
    weights: RewardWeights,
    bounds: NormBounds,
) -> float:
    """Negated weighted sum of the clamped, normalised energy and comfort terms."""
    return -(
        weights.energy * normalize(energy, bounds.energy)
        + weights.thermal * normalize(thermal, bounds.thermal)
        + weights.visual * normalize(visual, bounds.visual)
        + weights.air * normalize(air, bounds.air)
    )
