"""Reduced-order single-zone building simulator.

A 1R1C thermal network (envelope resistance, lumped capacitance) advanced by
explicit Euler at the control step, with four actuated subsystems:

* HVAC: an ideal-load unit driving the zone toward one temperature setpoint,
  limited by heating/cooling capacity,
* lights: dimming ratio, adds illuminance and internal gain,
* blind: slat angle, scales solar and visible transmittance,
* window: opening ratio, adds (wind-assisted) natural ventilation.

CO2 and humidity are well-mixed single-node balances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterator, Sequence

import numpy as np

from .comfort import PmvInputs
from .weather import WeatherRecord

RHO_AIR = 1.2  # kg/m3
CP_AIR = 1005.0  # J/(kg K)
OCCUPANT_HEAT = 100.0  # W per person, sensible
OCCUPANT_MOISTURE = 0.3  # %RH per hour per person
SUPPLY_DELTA_T = 10.0  # K between supply air and zone, sizes fan airflow
N_OBS_ITEMS = 15

OBS_ITEMS = (
    "t_out",
    "rh_out",
    "t_in",
    "rh_in",
    "diffuse_solar",
    "direct_solar",
    "solar_angle",
    "wind_speed",
    "wind_dir",
    "pmv",
    "heating_setpoint",
    "cooling_setpoint",
    "light_level",
    "window_fraction",
    "blind_angle",
)


class SimulationError(ArithmeticError):
    """Simulator produced a non-finite state."""


class ParamError(ValueError):
    pass


@dataclass(frozen=True)
class ZoneParams:
    envelope_resistance: float = 1.0 / 150.0  # K/W
    thermal_capacitance: float = 4.0e6  # J/K
    volume: float = 300.0  # m3
    floor_area: float = 100.0  # m2
    window_area: float = 2.0  # m2
    infiltration_ach: float = 0.6  # 1/h
    max_vent_ach: float = 6.0  # 1/h, window fully open at reference wind
    heating_capacity: float = 8000.0  # W
    cooling_capacity: float = 8000.0  # W
    heating_efficiency: float = 0.9
    cooling_cop: float = 3.0
    fan_coeff: float = 600.0  # W per kg/s (~500 Pa / (rho * 0.7))
    max_light_power: float = 1000.0  # W
    max_light_lux: float = 600.0  # lux at full output
    daylight_factor: float = 0.01
    occupant_count_schedule: tuple[float, ...] = (
        0, 0, 0, 0, 0, 0, 0, 1, 3, 4, 4, 4, 3, 4, 4, 4, 4, 3, 1, 0, 0, 0, 0, 0,
    )
    co2_gen_per_person: float = 0.0052  # L/s
    outdoor_co2: float = 400.0  # ppm
    blind_transmittance_closed: float = 0.05
    blind_transmittance_open: float = 0.8
    hvac_deadband: float = 0.5  # K, HVAC idles within setpoint +- deadband

    def __post_init__(self):
        positive = (
            "envelope_resistance",
            "thermal_capacitance",
            "volume",
            "floor_area",
            "window_area",
            "heating_capacity",
            "cooling_capacity",
            "heating_efficiency",
            "cooling_cop",
            "fan_coeff",
            "max_light_power",
            "max_light_lux",
            "co2_gen_per_person",
            "outdoor_co2",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParamError(f"{name} must be > 0")
        for name in ("infiltration_ach", "max_vent_ach", "hvac_deadband"):
            if getattr(self, name) < 0:
                raise ParamError(f"{name} must be >= 0")
        if not 0 < self.daylight_factor <= 1:
            raise ParamError("daylight_factor must be in (0, 1]")
        for name in ("blind_transmittance_closed", "blind_transmittance_open"):
            if not 0 <= getattr(self, name) <= 1:
                raise ParamError(f"{name} must be in [0, 1]")
        if len(self.occupant_count_schedule) not in (24, 168):
            raise ParamError("occupant_count_schedule must have 24 or 168 entries")
        if any(x < 0 for x in self.occupant_count_schedule):
            raise ParamError("occupant counts must be >= 0")

    def max_conductance(self) -> float:
        """Largest zone-to-outdoor conductance (W/K): envelope plus peak ventilation."""
        ach = self.infiltration_ach + self.max_vent_ach * 2.0
        return 1.0 / self.envelope_resistance + RHO_AIR * CP_AIR * self.volume * ach / 3600.0

    def stable_step(self) -> float:
        """Largest step (s) for which Euler never overshoots the outdoor temperature."""
        return self.thermal_capacitance / self.max_conductance()


@dataclass(frozen=True)
class ActionGrid:
    hvac_setpoints: tuple[float, ...]
    light_levels: tuple[float, ...]
    blind_angles: tuple[float, ...]
    window_fractions: tuple[float, ...]

    def __post_init__(self):
        for name, lo, hi in (
            ("light_levels", 0.0, 1.0),
            ("blind_angles", 0.0, 180.0),
            ("window_fractions", 0.0, 1.0),
        ):
            vals = getattr(self, name)
            if min(vals) < lo or max(vals) > hi:
                raise ParamError(f"{name} must lie in [{lo}, {hi}]")
        for name in ("hvac_setpoints", "light_levels", "blind_angles", "window_fractions"):
            vals = getattr(self, name)
            if len(vals) < 1 or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ParamError(f"{name} must be non-empty and strictly increasing")

    @classmethod
    def uniform(cls, n_hvac=66, n_light=33, n_blind=33, n_window=33, hvac_low=16.0, hvac_step=0.25):
        """Setpoints from ``hvac_low`` in ``hvac_step`` increments; others span their range."""
        return cls(
            hvac_setpoints=tuple(hvac_low + hvac_step * k for k in range(n_hvac)),
            light_levels=_linspace(0.0, 1.0, n_light),
            blind_angles=_linspace(0.0, 180.0, n_blind),
            window_fractions=_linspace(0.0, 1.0, n_window),
        )

    @classmethod
    def spanning(cls, n_hvac, n_light, n_blind, n_window, hvac_low=16.0, hvac_high=32.25):
        """Reduced grid covering the same physical ranges with fewer values."""
        return cls(
            hvac_setpoints=_linspace(hvac_low, hvac_high, n_hvac),
            light_levels=_linspace(0.0, 1.0, n_light),
            blind_angles=_linspace(0.0, 180.0, n_blind),
            window_fractions=_linspace(0.0, 1.0, n_window),
        )

    @property
    def branches(self) -> tuple[tuple[float, ...], ...]:
        return (self.hvac_setpoints, self.light_levels, self.blind_angles, self.window_fractions)

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return tuple(len(b) for b in self.branches)  # type: ignore[return-value]

    @property
    def n_joint(self) -> int:
        return math.prod(self.sizes)

    def nearest_setpoint_index(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.hvac_setpoints) - t)))

    def enumerate_indices(self) -> Iterator[tuple[int, int, int, int]]:
        return product(*(range(n) for n in self.sizes))


def _linspace(lo: float, hi: float, n: int) -> tuple[float, ...]:
    if n == 1:
        return (lo,)
    return tuple(float(x) for x in np.linspace(lo, hi, n))


@dataclass(frozen=True)
class ActionTuple:
    h_idx: int
    l_idx: int
    b_idx: int
    w_idx: int
    setpoint: float
    light: float
    blind: float
    window: float

    @property
    def indices(self) -> tuple[int, int, int, int]:
        return (self.h_idx, self.l_idx, self.b_idx, self.w_idx)


def decode_action(grid: ActionGrid, indices: Sequence[int]) -> ActionTuple:
    if len(indices) != 4:
        raise IndexError(f"expected 4 branch indices, got {len(indices)}")
    for d, (i, n) in enumerate(zip(indices, grid.sizes)):
        if not 0 <= int(i) < n:
            raise IndexError(f"branch {d} index {i} out of range [0, {n})")
    h, l, b, w = (int(i) for i in indices)
    return ActionTuple(
        h, l, b, w,
        setpoint=grid.hvac_setpoints[h],
        light=grid.light_levels[l],
        blind=grid.blind_angles[b],
        window=grid.window_fractions[w],
    )


@dataclass(frozen=True)
class ZoneState:
    t_in: float
    rh_in: float
    co2: float
    illuminance: float
    sim_time: float


@dataclass(frozen=True)
class SimOutput:
    p_heat: float
    p_cool: float
    p_fan: float
    p_light: float
    energy_step: float  # kWh
    pmv_inputs: PmvInputs
    illuminance: float
    co2: float


def occupancy(schedule: Sequence[float], sim_time: float) -> float:
    if len(schedule) not in (24, 168):
        raise ParamError(f"schedule must have 24 or 168 entries, got {len(schedule)}")
    hour = int(sim_time // 3600) % len(schedule)
    return float(schedule[hour])


def blind_transmittance(angle_deg: float, params: ZoneParams) -> float:
    """Transmittance rising from closed (0 or 180 deg) to open (90 deg) as cos(angle - 90)."""
    openness = max(0.0, math.cos(math.radians(angle_deg - 90.0)))
    lo, hi = params.blind_transmittance_closed, params.blind_transmittance_open
    return lo + (hi - lo) * openness


def ventilation_ach(action: ActionTuple, wx: WeatherRecord, params: ZoneParams) -> float:
    wind_factor = min(2.0, max(0.5, 0.5 + wx.wind_speed / 10.0))
    return params.infiltration_ach + action.window * params.max_vent_ach * wind_factor


def _relax(x: float, target: float, rate: float, source: float, dt: float) -> float:
    # exact solution of dx/dt = source - rate * (x - target) over dt
    if rate <= 0:
        return x + source * dt
    x_eq = target + source / rate
    return x_eq + (x - x_eq) * math.exp(-rate * dt)


def step(
    state: ZoneState,
    action: ActionTuple,
    wx: WeatherRecord,
    params: ZoneParams,
    dt: float = 900.0,
    hvac_enabled: bool = True,
) -> tuple[ZoneState, SimOutput]:
    """Advance the zone by ``dt`` seconds under ``action`` and weather ``wx``.

    With ``hvac_enabled=False`` the zone free-floats (used for passive studies).
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    ach = ventilation_ach(action, wx, params)
    tau = blind_transmittance(action.blind, params)
    q_sol = params.window_area * (wx.direct_solar + wx.diffuse_solar) * tau
    occupants = occupancy(params.occupant_count_schedule, state.sim_time)
    p_light = action.light * params.max_light_power
    q_int = OCCUPANT_HEAT * occupants + p_light

    c = params.thermal_capacitance
    g_env = 1.0 / params.envelope_resistance
    g_vent = RHO_AIR * CP_AIR * params.volume * ach / 3600.0
    dT_out = wx.t_out - state.t_in
    t_free = state.t_in + dt / c * ((g_env + g_vent) * dT_out + q_sol + q_int)

    q_hvac = 0.0
    if hvac_enabled:
        lo = action.setpoint - params.hvac_deadband
        hi = action.setpoint + params.hvac_deadband
        if t_free < lo:
            q_hvac = min(params.heating_capacity, c * (lo - t_free) / dt)
        elif t_free > hi:
            q_hvac = -min(params.cooling_capacity, c * (t_free - hi) / dt)
    t_in = t_free + dt / c * q_hvac

    gen_ppm = params.co2_gen_per_person * occupants * 1000.0 / params.volume  # ppm/s
    co2 = _relax(state.co2, params.outdoor_co2, ach / 3600.0, gen_ppm, dt)
    rh_in = _relax(state.rh_in, wx.rh_out, ach / 3600.0, OCCUPANT_MOISTURE * occupants / 3600.0, dt)
    rh_in = min(100.0, max(0.0, rh_in))
    illuminance = (
        params.daylight_factor * wx.ext_illuminance * tau + action.light * params.max_light_lux
    )

    q_heat = max(0.0, q_hvac)
    q_cool = max(0.0, -q_hvac)
    p_heat = q_heat / params.heating_efficiency
    p_cool = q_cool / params.cooling_cop
    p_fan = params.fan_coeff * abs(q_hvac) / (CP_AIR * SUPPLY_DELTA_T)
    energy = dt * (p_heat + p_cool + p_fan + p_light) / 3.6e6

    new_state = ZoneState(
        t_in=t_in, rh_in=rh_in, co2=co2, illuminance=illuminance, sim_time=state.sim_time + dt
    )
    if not all(math.isfinite(x) for x in (t_in, rh_in, co2, illuminance)):
        raise SimulationError(f"non-finite zone state {new_state}")
    air_speed = 0.1 + 0.05 * action.window * wx.wind_speed
    out = SimOutput(
        p_heat=p_heat,
        p_cool=p_cool,
        p_fan=p_fan,
        p_light=p_light,
        energy_step=energy,
        pmv_inputs=PmvInputs(t_air=t_in, t_radiant=t_in, air_speed=air_speed, rh=rh_in),
        illuminance=illuminance,
        co2=co2,
    )
    return new_state, out


def reset(params: ZoneParams, wx0: WeatherRecord, seed: int) -> ZoneState:
    rng = np.random.default_rng(seed)
    return ZoneState(
        t_in=float(rng.uniform(18.0, 26.0)),
        rh_in=wx0.rh_out,
        co2=params.outdoor_co2,
        illuminance=0.0,
        sim_time=wx0.timestamp,
    )


@dataclass(frozen=True)
class ObsBounds:
    """Min-max bounds for the 15 observation items, keyed by item name."""

    items: dict = field(
        default_factory=lambda: {
            "t_out": (-20.0, 45.0),
            "rh_out": (0.0, 100.0),
            "t_in": (10.0, 40.0),
            "rh_in": (0.0, 100.0),
            "diffuse_solar": (0.0, 500.0),
            "direct_solar": (0.0, 1000.0),
            "solar_angle": (0.0, 180.0),
            "wind_speed": (0.0, 20.0),
            "wind_dir": (0.0, 360.0),
            "pmv": (-3.0, 3.0),
            "heating_setpoint": (16.0, 32.25),
            "cooling_setpoint": (16.0, 32.25),
            "light_level": (0.0, 1.0),
            "window_fraction": (0.0, 1.0),
            "blind_angle": (0.0, 180.0),
        }
    )

    def __post_init__(self):
        missing = set(OBS_ITEMS) - set(self.items)
        if missing:
            raise ParamError(f"observation bounds missing {sorted(missing)}")
        for k, (lo, hi) in self.items.items():
            if not lo < hi:
                raise ParamError(f"observation bounds {k}: min must be < max")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.items[k][0] for k in OBS_ITEMS], dtype=float)
        hi = np.array([self.items[k][1] for k in OBS_ITEMS], dtype=float)
        return lo, hi


def raw_observation(
    state: ZoneState, wx: WeatherRecord, last_action: ActionTuple, pmv_avg: float
) -> np.ndarray:
    return np.array(
        [
            wx.t_out,
            wx.rh_out,
            state.t_in,
            state.rh_in,
            wx.diffuse_solar,
            wx.direct_solar,
            wx.solar_incident_angle,
            wx.wind_speed,
            wx.wind_dir,
            pmv_avg,
            last_action.setpoint,
            last_action.setpoint,
            last_action.light,
            last_action.window,
            last_action.blind,
        ],
        dtype=float,
    )


def normalize_observation(raw: np.ndarray, bounds: ObsBounds) -> np.ndarray:
    lo, hi = bounds.arrays()
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


def observe(
    state: ZoneState,
    wx: WeatherRecord,
    last_action: ActionTuple,
    pmv_avg: float,
    history: Sequence[np.ndarray],
    bounds: ObsBounds,
    depth: int = 3,
) -> np.ndarray:
    """Stack the current normalised observation with ``depth`` previous ones, newest first.

    ``history`` holds earlier single-step observations, most recent first.
    """
    if len(history) < depth:
        raise ValueError(f"history has {len(history)} entries, need {depth}")
    current = normalize_observation(raw_observation(state, wx, last_action, pmv_avg), bounds)
    return np.concatenate([current, *history[:depth]])
