"""Run configuration: one YAML document, validated up front.

Every section maps onto a core-package object; unknown keys are rejected so
typos surface as errors rather than silently falling back to defaults.
See ``configs/default.yaml`` for a commented example of every section.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .agent import AgentHyper
from .comfort import WEIGHT_PRESETS, ComfortRanges, NormBounds, RewardWeights
from .env import SUBSYSTEMS, EnvConfig, default_norm_bounds
from .envsim import ActionGrid, ObsBounds, ZoneParams
from .weather import WeatherProfile, WeatherSeries, load_weather_csv, resample, synth_weather


class ConfigError(ValueError):
    """Invalid configuration; message lists offending field paths."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticSource(_Model):
    t_mean: float = 12.0
    t_daily_amp: float = Field(5.0, ge=0)
    t_seasonal_amp: float = Field(8.0, ge=0)
    solar_peak: float = Field(800.0, ge=0)
    noise_sd: float = Field(1.0, ge=0)
    start_day: int = 0
    rh_mean: float = Field(55.0, ge=0, le=100)
    wind_mean: float = Field(3.0, ge=0)
    days: int = Field(360, ge=1)
    seed: int = 0

    def profile(self) -> WeatherProfile:
        return WeatherProfile(**self.model_dump(exclude={"days", "seed"}))


class LocationConfig(_Model):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    csv: Optional[Path] = None
    synthetic: Optional[SyntheticSource] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ValueError("exactly one of 'csv' or 'synthetic' must be given")
        if self.csv is not None and not self.csv.is_file():
            raise ValueError(f"weather file {self.csv} does not exist")
        return self


class WeatherConfig(_Model):
    step_seconds: float = 900.0
    train_fraction: float = Field(0.8, gt=0, lt=1)
    block_steps: int = Field(2880, ge=1)
    split_seed: int = 0
    locations: list[LocationConfig] = Field(min_length=1)

    @field_validator("step_seconds")
    @classmethod
    def _divides_day(cls, v):
        if v <= 0 or 86400 % v != 0:
            raise ValueError("step_seconds must divide 86400")
        return v

    @field_validator("locations")
    @classmethod
    def _unique(cls, v):
        names = [loc.name for loc in v]
        if len(set(names)) != len(names):
            raise ValueError("location names must be unique")
        return v


class ZoneConfig(_Model):
    envelope_resistance: float = Field(1.0 / 150.0, gt=0)
    thermal_capacitance: float = Field(4.0e6, gt=0)
    volume: float = Field(300.0, gt=0)
    floor_area: float = Field(100.0, gt=0)
    window_area: float = Field(2.0, gt=0)
    infiltration_ach: float = Field(0.6, ge=0)
    max_vent_ach: float = Field(6.0, ge=0)
    heating_capacity: float = Field(8000.0, gt=0)
    cooling_capacity: float = Field(8000.0, gt=0)
    heating_efficiency: float = Field(0.9, gt=0)
    cooling_cop: float = Field(3.0, gt=0)
    fan_coeff: float = Field(600.0, gt=0)
    max_light_power: float = Field(1000.0, gt=0)
    max_light_lux: float = Field(600.0, gt=0)
    daylight_factor: float = Field(0.01, gt=0, le=1)
    occupant_count_schedule: Optional[list[float]] = None
    co2_gen_per_person: float = Field(0.0052, gt=0)
    outdoor_co2: float = Field(400.0, gt=0)
    blind_transmittance_closed: float = Field(0.05, ge=0, le=1)
    blind_transmittance_open: float = Field(0.8, ge=0, le=1)
    hvac_deadband: float = Field(0.5, ge=0)

    @field_validator("occupant_count_schedule")
    @classmethod
    def _schedule(cls, v):
        if v is not None and len(v) not in (24, 168):
            raise ValueError("schedule must have 24 (daily) or 168 (weekly) entries")
        if v is not None and min(v) < 0:
            raise ValueError("occupant counts must be >= 0")
        return v

    def build(self) -> ZoneParams:
        d = self.model_dump()
        if d["occupant_count_schedule"] is None:
            d.pop("occupant_count_schedule")
        else:
            d["occupant_count_schedule"] = tuple(d["occupant_count_schedule"])
        return ZoneParams(**d)


class GridConfig(_Model):
    n_hvac: int = Field(66, ge=1)
    n_light: int = Field(33, ge=1)
    n_blind: int = Field(33, ge=1)
    n_window: int = Field(33, ge=1)
    hvac_low: float = 16.0
    hvac_high: float = 32.25
    spacing: Literal["step", "span"] = "step"

    def build(self) -> ActionGrid:
        if self.spacing == "step":
            step = (self.hvac_high - self.hvac_low) / max(self.n_hvac - 1, 1)
            return ActionGrid.uniform(self.n_hvac, self.n_light, self.n_blind, self.n_window,
                                      self.hvac_low, step)
        return ActionGrid.spanning(self.n_hvac, self.n_light, self.n_blind, self.n_window,
                                   self.hvac_low, self.hvac_high)


class ComfortConfig(_Model):
    pmv_limit: float = Field(0.5, gt=0)
    illum_low: float = 500.0
    illum_high: float = 1000.0
    co2_low: float = 400.0
    co2_high: float = 1000.0
    metabolic_rate: float = Field(70.0, gt=0)
    clothing: float = Field(0.5, ge=0)

    @model_validator(mode="after")
    def _bands(self):
        if not self.illum_low < self.illum_high:
            raise ValueError("illum_low must be < illum_high")
        if not self.co2_low < self.co2_high:
            raise ValueError("co2_low must be < co2_high")
        return self


class WeightsConfig(_Model):
    energy: float = Field(ge=0)
    thermal: float = Field(ge=0)
    visual: float = Field(ge=0)
    air: float = Field(ge=0)


class RewardConfig(_Model):
    preset: Optional[str] = "balanced"
    weights: Optional[WeightsConfig] = None

    @model_validator(mode="after")
    def _choice(self):
        if self.weights is None and self.preset not in WEIGHT_PRESETS:
            raise ValueError(f"preset must be one of {sorted(WEIGHT_PRESETS)}")
        if self.weights is not None and not any(self.weights.model_dump().values()):
            raise ValueError("weights must not all be zero")
        return self

    def build(self) -> RewardWeights:
        if self.weights is not None:
            return RewardWeights(**self.weights.model_dump())
        return WEIGHT_PRESETS[self.preset]


Pair = tuple[float, float]


class NormBoundsConfig(_Model):
    energy: Optional[Pair] = None  # default derived from capacities
    thermal: Pair = (0.0, 2.5)
    visual: Pair = (0.0, 1000.0)
    air: Pair = (0.0, 1000.0)

    @model_validator(mode="after")
    def _ordered(self):
        for name in ("energy", "thermal", "visual", "air"):
            pair = getattr(self, name)
            if pair is not None and not pair[0] < pair[1]:
                raise ValueError(f"{name}: min must be < max")
        return self


class ObservationConfig(_Model):
    history_depth: int = Field(3, ge=0)
    bounds: dict[str, Pair] = Field(default_factory=dict)

    @field_validator("bounds")
    @classmethod
    def _known(cls, v):
        known = set(ObsBounds().items)
        bad = sorted(set(v) - known)
        if bad:
            raise ValueError(f"unknown observation items {bad}")
        for k, (lo, hi) in v.items():
            if not lo < hi:
                raise ValueError(f"{k}: min must be < max")
        return v


class AgentConfig(_Model):
    gamma: float = Field(0.99, gt=0, lt=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(1e-4, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    target_sync_interval: int = Field(1000, ge=1)
    exploration_sd: float = Field(0.2, ge=0)
    episodes: int = Field(1000, ge=1)
    episode_steps: int = Field(2880, ge=1)
    replay_capacity: int = Field(1_000_000, ge=1)
    per_alpha: float = Field(0.6, ge=0)
    per_beta0: float = Field(0.4, ge=0, le=1)
    per_beta_steps: int = Field(2_000_000, ge=1)
    warmup: Optional[int] = Field(None, ge=0)
    train_every: int = Field(1, ge=1)
    checkpoint_every: int = Field(50, ge=1)
    trunk_sizes: tuple[int, ...] = (512, 256)
    branch_hidden: int = Field(128, ge=1)
    enabled: list[Literal["hvac", "light", "blind", "window"]] = list(SUBSYSTEMS)
    input_dim: Optional[int] = None  # optional explicit check against the observation size

    @field_validator("enabled")
    @classmethod
    def _hvac_required(cls, v):
        if "hvac" not in v:
            raise ValueError("the HVAC subsystem cannot be disabled")
        return v

    def build(self) -> AgentHyper:
        return AgentHyper(**self.model_dump(exclude={"enabled", "input_dim"}))


class RuleConfig(_Model):
    target_f: float = Field(75.0, ge=65, le=80)
    gain_f: float = Field(0.5, gt=0)


class RunConfig(_Model):
    seed: int = 0
    output_dir: Path = Path("out")
    weather: WeatherConfig
    zone: ZoneConfig = ZoneConfig()
    grid: GridConfig = GridConfig()
    comfort: ComfortConfig = ComfortConfig()
    reward: RewardConfig = RewardConfig()
    norm_bounds: NormBoundsConfig = NormBoundsConfig()
    observation: ObservationConfig = ObservationConfig()
    agent: AgentConfig = AgentConfig()
    rule: RuleConfig = RuleConfig()
    eval_days: Optional[int] = Field(None, ge=1)
    simulate_days: int = Field(30, ge=1)

    @model_validator(mode="after")
    def _cross_checks(self):
        params = self.zone.build()
        stable = params.stable_step()
        if self.weather.step_seconds > stable:
            raise ValueError(
                f"weather.step_seconds {self.weather.step_seconds} exceeds the explicit-Euler "
                f"stability bound C/G_max = {stable:.0f} s; raise zone.thermal_capacitance or "
                "lower the ventilation rates"
            )
        grid = self.grid.build()
        lo, hi = min(grid.hvac_setpoints), max(grid.hvac_setpoints)
        obs_dim = 15 * (self.observation.history_depth + 1)
        if self.agent.input_dim is not None and self.agent.input_dim != obs_dim:
            raise ValueError(
                f"agent.input_dim {self.agent.input_dim} does not match the observation size "
                f"15 * (observation.history_depth + 1) = {obs_dim}"
            )
        sp_bounds = self.observation.bounds.get("heating_setpoint", (16.0, 32.25))
        if lo < sp_bounds[0] - 1e-9 or hi > sp_bounds[1] + 1e-9:
            raise ValueError(
                f"grid setpoints [{lo}, {hi}] fall outside observation bounds {sp_bounds}"
            )
        return self

    # -- builders -----------------------------------------------------------

    def env_config(self) -> EnvConfig:
        params = self.zone.build()
        c = self.comfort
        ranges = ComfortRanges(c.pmv_limit, c.illum_low, c.illum_high, c.co2_low, c.co2_high)
        nb = self.norm_bounds
        energy = nb.energy or default_norm_bounds(params, self.weather.step_seconds).energy
        obs_items = dict(ObsBounds().items)
        obs_items.update(self.observation.bounds)
        return EnvConfig(
            params=params,
            grid=self.grid.build(),
            ranges=ranges,
            weights=self.reward.build(),
            norm_bounds=NormBounds(energy, nb.thermal, nb.visual, nb.air),
            obs_bounds=ObsBounds(obs_items),
            history_depth=self.observation.history_depth,
            dt=self.weather.step_seconds,
            metabolic_rate=c.metabolic_rate,
            clothing=c.clothing,
        )

    def hyper(self) -> AgentHyper:
        return self.agent.build()

    def location_series(self, loc: LocationConfig) -> WeatherSeries:
        step = self.weather.step_seconds
        if loc.synthetic is not None:
            s = loc.synthetic
            return synth_weather(s.profile(), s.seed, s.days, step, location_tag=loc.name)
        series = load_weather_csv(loc.csv, location_tag=loc.name)
        if series.step_seconds != step:
            series = resample(series, step)
        return series

    def location(self, name: str | None) -> LocationConfig:
        if name is None:
            return self.weather.locations[0]
        for loc in self.weather.locations:
            if loc.name == name:
                return loc
        raise ConfigError(f"weather.locations: no location named {name!r}")


def _list_index(key: str, node: list, p: str, allow_append: bool) -> int:
    try:
        i = int(p)
    except ValueError:
        raise ConfigError(f"--set {key}: {p!r} is not a list index") from None
    if not 0 <= i < len(node) + (1 if allow_append else 0):
        raise ConfigError(f"--set {key}: index {i} out of range (list has {len(node)} items)")
    return i


def _set_dotted(doc: dict, key: str, value: Any) -> None:
    """Assign ``value`` at a dotted path; a list index equal to its length appends."""
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[_list_index(key, node, p, False)]
        else:
            node = node.setdefault(p, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"--set {key}: {p} is not a section")
    last = parts[-1]
    if isinstance(node, list):
        i = _list_index(key, node, last, True)
        if i == len(node):
            node.append(value)
        else:
            node[i] = value
    else:
        node[last] = value


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def load_config(path: str | Path | None, overrides: list[str] | None = None,
                base_dir: Path | None = None) -> RunConfig:
    """Load YAML, apply ``key=value`` overrides (values parsed as YAML), validate.

    Relative weather CSV paths resolve against the config file's directory.
    """
    doc: dict = {}
    if path is not None:
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base_dir = base_dir or path.parent
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"--set {key}: cannot parse {raw!r}") from exc
        _set_dotted(doc, key.strip(), value)
    if base_dir is not None:
        for loc in (doc.get("weather") or {}).get("locations") or []:
            if isinstance(loc, dict) and loc.get("csv") and not Path(loc["csv"]).is_absolute():
                loc["csv"] = str(base_dir / loc["csv"])
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
