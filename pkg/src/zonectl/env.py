"""Episode-level environment: simulator + comfort + reward + observation stacking."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import envsim
from .comfort import (
    ComfortRanges,
    NormBounds,
    PmvInputs,
    RewardWeights,
    air_penalty,
    pmv,
    reward,
    thermal_penalty,
    visual_penalty,
)
from .envsim import ActionGrid, ActionTuple, ObsBounds, ZoneParams, ZoneState
from .weather import WeatherSeries

SUBSYSTEMS = ("hvac", "light", "blind", "window")


def default_norm_bounds(params: ZoneParams, dt: float = 900.0) -> NormBounds:
    e_max = dt * (params.heating_capacity / params.heating_efficiency + params.max_light_power) / 3.6e6
    return NormBounds(energy=(0.0, e_max))


@dataclass(frozen=True)
class EnvConfig:
    params: ZoneParams = field(default_factory=ZoneParams)
    grid: ActionGrid = field(default_factory=ActionGrid.uniform)
    ranges: ComfortRanges = field(default_factory=ComfortRanges)
    weights: RewardWeights = field(default_factory=RewardWeights)
    norm_bounds: NormBounds | None = None
    obs_bounds: ObsBounds = field(default_factory=ObsBounds)
    history_depth: int = 3
    dt: float = 900.0
    metabolic_rate: float = 70.0
    clothing: float = 0.5

    def __post_init__(self):
        if self.norm_bounds is None:
            object.__setattr__(self, "norm_bounds", default_norm_bounds(self.params, self.dt))
        if self.history_depth < 0:
            raise ValueError("history_depth must be >= 0")
        if self.dt > self.params.stable_step():
            raise envsim.ParamError(
                f"control step {self.dt} s exceeds the Euler stability bound "
                f"{self.params.stable_step():.0f} s (C / max conductance)"
            )

    @property
    def obs_dim(self) -> int:
        return envsim.N_OBS_ITEMS * (self.history_depth + 1)


@dataclass(frozen=True)
class StepRecord:
    sim_time: float
    t_out: float
    t_in: float
    co2: float
    rh_in: float
    illuminance: float
    p_heat: float
    p_cool: float
    p_fan: float
    p_light: float
    h: float
    l: float
    b: float
    w: float
    pmv: float
    energy_kwh: float
    reward: float


def pinned_indices(grid: ActionGrid) -> tuple[int, int, int, int]:
    """Fixed actions for subsystems a controller does not drive: lights full, blind and window shut."""
    return (grid.nearest_setpoint_index(22.0), len(grid.light_levels) - 1, 0, 0)


class BuildingEnv:
    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.state: ZoneState | None = None
        self.weather: WeatherSeries | None = None
        self.k = 0
        self.last_action: ActionTuple | None = None
        self.history: deque = deque(maxlen=max(cfg.history_depth, 1))
        self.last_pmv = 0.0

    def pmv_of(self, inputs: PmvInputs) -> float:
        return pmv(
            PmvInputs(
                inputs.t_air,
                inputs.t_radiant,
                inputs.air_speed,
                inputs.rh,
                self.cfg.metabolic_rate,
                self.cfg.clothing,
            )
        )

    def _observe(self) -> np.ndarray:
        cfg = self.cfg
        wx = self.weather[self.k]
        current = envsim.normalize_observation(
            envsim.raw_observation(self.state, wx, self.last_action, self.last_pmv), cfg.obs_bounds
        )
        if not self.history:
            for _ in range(cfg.history_depth):
                self.history.append(current)
        obs = envsim.observe(
            self.state, wx, self.last_action, self.last_pmv, list(self.history), cfg.obs_bounds,
            cfg.history_depth,
        )
        if cfg.history_depth:
            self.history.appendleft(current)
        return obs

    def reset(
        self, weather: WeatherSeries, start: int, seed: int, initial_action: ActionTuple
    ) -> np.ndarray:
        if not 0 <= start < len(weather):
            raise IndexError("episode start outside the weather series")
        self.weather = weather
        self.k = start
        self.state = envsim.reset(self.cfg.params, weather[start], seed)
        self.last_action = initial_action
        self.history.clear()
        self.last_pmv = self.pmv_of(PmvInputs(self.state.t_in, self.state.t_in, 0.1, self.state.rh_in))
        return self._observe()

    @property
    def at_block_end(self) -> bool:
        return self.k >= len(self.weather) - 1

    def step(self, indices) -> tuple[np.ndarray, float, bool, StepRecord]:
        """Apply an action; returns (next observation, reward, terminal, record).

        ``terminal`` is true only on the last record of the weather block.
        """
        cfg = self.cfg
        action = envsim.decode_action(cfg.grid, indices)
        wx = self.weather[self.k]
        self.state, out = envsim.step(self.state, action, wx, cfg.params, cfg.dt)
        p = self.pmv_of(out.pmv_inputs)
        ranges = cfg.ranges
        r = reward(
            out.energy_step,
            thermal_penalty(p, ranges.pmv_limit),
            visual_penalty(out.illuminance, ranges.illum_low, ranges.illum_high),
            air_penalty(out.co2, ranges.co2_low, ranges.co2_high),
            cfg.weights,
            cfg.norm_bounds,
        )
        record = StepRecord(
            sim_time=self.state.sim_time,
            t_out=wx.t_out,
            t_in=self.state.t_in,
            co2=self.state.co2,
            rh_in=self.state.rh_in,
            illuminance=self.state.illuminance,
            p_heat=out.p_heat,
            p_cool=out.p_cool,
            p_fan=out.p_fan,
            p_light=out.p_light,
            h=action.setpoint,
            l=action.light,
            b=action.blind,
            w=action.window,
            pmv=p,
            energy_kwh=out.energy_step,
            reward=r,
        )
        terminal = self.at_block_end
        if not terminal:
            self.k += 1
        self.last_action = action
        self.last_pmv = p
        return self._observe(), r, terminal, record
