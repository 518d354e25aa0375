"""Weather series: CSV ingestion, resampling, synthesis and train/test splitting.

A :class:`WeatherSeries` is an immutable, evenly stepped sequence of
:class:`WeatherRecord` samples. Everything downstream (simulator, observations)
reads records by integer step index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

SECONDS_PER_DAY = 86400
LUMINOUS_EFFICACY = 110.0  # lm/W, global horizontal solar -> outdoor illuminance
EPISODE_BLOCK_STEPS = 2880  # one month at 900 s

CSV_COLUMNS = (
    "timestamp",
    "t_out",
    "rh_out",
    "diffuse_solar",
    "direct_solar",
    "solar_angle",
    "wind_speed",
    "wind_dir",
)
OPTIONAL_COLUMN = "ext_illuminance"


class WeatherError(ValueError):
    """Raised for malformed or out-of-range weather data."""


@dataclass(frozen=True)
class WeatherRecord:
    timestamp: float
    t_out: float
    rh_out: float
    diffuse_solar: float
    direct_solar: float
    solar_incident_angle: float
    wind_speed: float
    wind_dir: float
    ext_illuminance: float

    def validate(self) -> None:
        for name in ("diffuse_solar", "direct_solar", "wind_speed", "ext_illuminance"):
            value = getattr(self, name)
            if not value >= 0:
                raise WeatherError(f"{name}={value} must be >= 0")
        if not 0 <= self.rh_out <= 100:
            raise WeatherError(f"rh_out={self.rh_out} outside [0, 100]")
        if not 0 <= self.solar_incident_angle <= 180:
            raise WeatherError(f"solar_angle={self.solar_incident_angle} outside [0, 180]")
        if not 0 <= self.wind_dir < 360:
            raise WeatherError(f"wind_dir={self.wind_dir} outside [0, 360)")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise WeatherError(f"{f.name} is not finite")


_NUMERIC_FIELDS = tuple(f.name for f in fields(WeatherRecord) if f.name != "timestamp")
# CSV column name -> record attribute
_CSV_TO_FIELD = {"solar_angle": "solar_incident_angle"}


@dataclass(frozen=True)
class WeatherSeries:
    step_seconds: float
    records: tuple[WeatherRecord, ...]
    location_tag: str = ""

    def __post_init__(self):
        if len(self.records) < 2:
            raise WeatherError("a weather series needs at least 2 records")
        if self.step_seconds <= 0 or SECONDS_PER_DAY % self.step_seconds != 0:
            raise WeatherError(f"step {self.step_seconds} s does not divide 86400")
        t0 = self.records[0].timestamp
        for k, rec in enumerate(self.records):
            expected = t0 + k * self.step_seconds
            if not math.isclose(rec.timestamp, expected, rel_tol=0, abs_tol=1e-6):
                raise WeatherError(
                    f"record {k}: timestamp {rec.timestamp} breaks constant step {self.step_seconds}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, k: int) -> WeatherRecord:
        return self.records[k]

    @property
    def span(self) -> float:
        return self.records[-1].timestamp - self.records[0].timestamp

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def slice(self, start: int, stop: int) -> "WeatherSeries":
        return WeatherSeries(self.step_seconds, self.records[start:stop], self.location_tag)


def _illuminance_from_solar(direct: float, diffuse: float) -> float:
    return LUMINOUS_EFFICACY * (direct + diffuse)


def load_weather_csv(path: str | Path, location_tag: str | None = None) -> WeatherSeries:
    """Read a weather CSV (see README for the column set) into a validated series.

    ``ext_illuminance`` is optional and derived from the solar columns when absent.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise WeatherError(f"{path}: empty file") from None
        has_lux = header == [*CSV_COLUMNS, OPTIONAL_COLUMN]
        if header != list(CSV_COLUMNS) and not has_lux:
            raise WeatherError(f"{path}: unexpected header {header}")
        records = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise WeatherError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            values = {}
            for col, raw in zip(header, row):
                if not raw.strip():
                    raise WeatherError(f"{path}:{line}: missing value in column {col}")
                try:
                    values[_CSV_TO_FIELD.get(col, col)] = float(raw)
                except ValueError:
                    raise WeatherError(f"{path}:{line}: column {col}: cannot parse {raw!r}") from None
            if not has_lux:
                values["ext_illuminance"] = _illuminance_from_solar(
                    values["direct_solar"], values["diffuse_solar"]
                )
            rec = WeatherRecord(**values)
            try:
                rec.validate()
            except WeatherError as exc:
                raise WeatherError(f"{path}:{line}: {exc}") from None
            if records and rec.timestamp <= records[-1].timestamp:
                raise WeatherError(f"{path}:{line}: timestamps must be strictly increasing")
            records.append(rec)
    if len(records) < 2:
        raise WeatherError(f"{path}: need at least 2 records")
    step = records[1].timestamp - records[0].timestamp
    try:
        return WeatherSeries(step, tuple(records), location_tag or path.stem)
    except WeatherError as exc:
        raise WeatherError(f"{path}: {exc}") from None


def write_weather_csv(series: WeatherSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*CSV_COLUMNS, OPTIONAL_COLUMN])
        for r in series.records:
            writer.writerow(
                [
                    repr(r.timestamp),
                    repr(r.t_out),
                    repr(r.rh_out),
                    repr(r.diffuse_solar),
                    repr(r.direct_solar),
                    repr(r.solar_incident_angle),
                    repr(r.wind_speed),
                    repr(r.wind_dir),
                    repr(r.ext_illuminance),
                ]
            )


def _interp_angle(t_new: np.ndarray, t: np.ndarray, deg: np.ndarray) -> np.ndarray:
    # shortest-arc interpolation between bracketing samples
    idx = np.clip(np.searchsorted(t, t_new, side="right") - 1, 0, len(t) - 2)
    frac = (t_new - t[idx]) / (t[idx + 1] - t[idx])
    delta = (deg[idx + 1] - deg[idx] + 180.0) % 360.0 - 180.0
    out = (deg[idx] + frac * delta) % 360.0
    # exact hits keep the stored value (avoids 360.0 - tiny rounding)
    out[frac == 0.0] = deg[idx][frac == 0.0]
    out[frac == 1.0] = deg[idx + 1][frac == 1.0]
    out[out >= 360.0] = 0.0
    return out


def resample(series: WeatherSeries, step: float) -> WeatherSeries:
    """Re-grid a series onto ``step`` seconds starting at the first timestamp.

    Fields are interpolated linearly, wind direction along the shorter arc.
    The new grid covers every multiple of ``step`` up to the last timestamp.
    """
    if step <= 0 or SECONDS_PER_DAY % step != 0:
        raise WeatherError(f"step {step} s does not divide 86400")
    if step > series.span:
        raise WeatherError(f"step {step} s exceeds series span {series.span} s")
    if step == series.step_seconds:
        return series
    t = series.column("timestamp")
    n_new = int(math.floor(series.span / step + 1e-9)) + 1
    t_new = t[0] + step * np.arange(n_new)
    cols = {}
    for name in _NUMERIC_FIELDS:
        y = series.column(name)
        if name == "wind_dir":
            cols[name] = _interp_angle(t_new, t, y)
        else:
            cols[name] = np.interp(t_new, t, y)
    records = tuple(
        WeatherRecord(timestamp=float(t_new[k]), **{n: float(cols[n][k]) for n in _NUMERIC_FIELDS})
        for k in range(n_new)
    )
    return WeatherSeries(step, records, series.location_tag)


@dataclass(frozen=True)
class WeatherProfile:
    """Parameters of the synthetic weather generator.

    Temperatures in degC, solar in W/m2. ``start_day`` is the day of year the
    series begins on (0 = 1 January), which places it on the seasonal cycle.
    """

    t_mean: float = 12.0
    t_daily_amp: float = 5.0
    t_seasonal_amp: float = 8.0
    solar_peak: float = 800.0
    noise_sd: float = 0.0
    start_day: int = 0
    rh_mean: float = 55.0
    wind_mean: float = 3.0
    diffuse_fraction: float = 0.2
    sunrise_hour: float = 6.0
    sunset_hour: float = 18.0

    def __post_init__(self):
        for name in ("t_daily_amp", "t_seasonal_amp", "solar_peak", "noise_sd", "wind_mean"):
            if getattr(self, name) < 0:
                raise WeatherError(f"profile.{name} must be >= 0")
        if not 0 <= self.diffuse_fraction <= 1:
            raise WeatherError("profile.diffuse_fraction must be in [0, 1]")
        if not 0 <= self.sunrise_hour < self.sunset_hour <= 24:
            raise WeatherError("profile needs 0 <= sunrise_hour < sunset_hour <= 24")


def synth_weather(
    profile: WeatherProfile, seed: int, days: int, step: float = 900.0, location_tag: str = "synthetic"
) -> WeatherSeries:
    """Generate a deterministic synthetic series of ``days`` whole days.

    Temperature follows a diurnal sinusoid (minimum near sunrise, maximum at
    15:00) on top of an annual cosine, with AR(1) noise of standard deviation
    ``noise_sd``. Solar radiation is a half-sine between sunrise and sunset
    scaled by a cloudiness factor in [0, 1].
    """
    if days < 1:
        raise WeatherError("days must be >= 1")
    if step <= 0 or SECONDS_PER_DAY % step != 0:
        raise WeatherError(f"step {step} s does not divide 86400")
    rng = np.random.default_rng(seed)
    n = int(days * SECONDS_PER_DAY / step)
    t = step * np.arange(n)
    hour = (t % SECONDS_PER_DAY) / 3600.0
    doy = profile.start_day + t / SECONDS_PER_DAY

    # AR(1) with ~6 h correlation time; stationary sd = noise_sd
    phi = math.exp(-step / (6 * 3600.0))
    innov = rng.standard_normal((4, n))
    drive = math.sqrt(1 - phi * phi) * innov
    drive[:, 0] = innov[:, 0]
    noise = lfilter([1.0], [1.0, -phi], drive, axis=1)

    seasonal = -profile.t_seasonal_amp * np.cos(2 * np.pi * (doy - 15.0) / 365.0)
    diurnal = profile.t_daily_amp * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
    t_out = profile.t_mean + seasonal + diurnal + profile.noise_sd * noise[0]

    day_len = profile.sunset_hour - profile.sunrise_hour
    phase = np.pi * (hour - profile.sunrise_hour) / day_len
    shape = np.where((hour > profile.sunrise_hour) & (hour < profile.sunset_hour), np.sin(phase), 0.0)
    clear = np.clip(1.0 - 0.5 * profile.noise_sd * np.abs(noise[1]), 0.0, 1.0)
    glob = profile.solar_peak * shape * clear
    diffuse = profile.diffuse_fraction * glob
    direct = glob - diffuse
    angle = np.degrees(np.arccos(np.clip(np.sin(phase), -1.0, 1.0)))
    angle = np.where(shape > 0, angle, np.maximum(angle, 90.0))

    rh = np.clip(profile.rh_mean - 1.5 * diurnal + 5.0 * profile.noise_sd * noise[2], 0.0, 100.0)
    wind = np.maximum(0.0, profile.wind_mean * (1.0 + 0.3 * np.sin(2 * np.pi * (hour - 14) / 24))
                      + profile.noise_sd * noise[3])
    wind_dir = (225.0 + np.cumsum(rng.normal(0.0, 5.0, n))) % 360.0

    records = tuple(
        WeatherRecord(
            timestamp=float(t[k]),
            t_out=float(t_out[k]),
            rh_out=float(rh[k]),
            diffuse_solar=float(diffuse[k]),
            direct_solar=float(direct[k]),
            solar_incident_angle=float(angle[k]),
            wind_speed=float(wind[k]),
            wind_dir=float(wind_dir[k]),
            ext_illuminance=_illuminance_from_solar(float(direct[k]), float(diffuse[k])),
        )
        for k in range(n)
    )
    return WeatherSeries(step, records, location_tag)


def split_blocks(series: WeatherSeries, block_steps: int = EPISODE_BLOCK_STEPS) -> list[WeatherSeries]:
    n_blocks = len(series) // block_steps
    return [series.slice(b * block_steps, (b + 1) * block_steps) for b in range(n_blocks)]


def split_train_test(
    series: WeatherSeries,
    train_fraction: float = 0.8,
    seed: int = 0,
    block_steps: int = EPISODE_BLOCK_STEPS,
) -> tuple[list[WeatherSeries], list[WeatherSeries]]:
    """Cut ``series`` into whole episode blocks and assign them randomly.

    A trailing partial block is dropped. Both sides must end up non-empty.
    """
    if not 0 < train_fraction <= 1:
        raise WeatherError("train_fraction must be in (0, 1]")
    blocks = split_blocks(series, block_steps)
    if len(blocks) < 2:
        raise WeatherError(f"need at least 2 blocks of {block_steps} steps, have {len(blocks)}")
    n_train = int(round(train_fraction * len(blocks)))
    if n_train == 0 or n_train == len(blocks):
        raise WeatherError(
            f"train_fraction {train_fraction} leaves an empty partition with {len(blocks)} blocks"
        )
    order = np.random.default_rng(seed).permutation(len(blocks))
    train_ids = sorted(order[:n_train].tolist())
    test_ids = sorted(order[n_train:].tolist())
    return [blocks[i] for i in train_ids], [blocks[i] for i in test_ids]


def constant_record(**overrides) -> WeatherRecord:
    """A calm, dark, mild record; handy for tests and steady-state studies."""
    base = WeatherRecord(
        timestamp=0.0,
        t_out=20.0,
        rh_out=50.0,
        diffuse_solar=0.0,
        direct_solar=0.0,
        solar_incident_angle=90.0,
        wind_speed=0.0,
        wind_dir=0.0,
        ext_illuminance=0.0,
    )
    return replace(base, **overrides)


def concat(parts: Sequence[WeatherSeries]) -> WeatherSeries:
    """Join series end to end, re-stamping timestamps onto one grid."""
    step = parts[0].step_seconds
    recs = []
    for p in parts:
        if p.step_seconds != step:
            raise WeatherError("cannot concatenate series with different steps")
        recs.extend(p.records)
    t0 = recs[0].timestamp
    recs = [replace(r, timestamp=t0 + k * step) for k, r in enumerate(recs)]
    return WeatherSeries(step, tuple(recs), parts[0].location_tag)
