"""Evaluation metrics, calibration statistics, ablations and comparison reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .comfort import ComfortRanges
from .env import SUBSYSTEMS, StepRecord

# Guideline 14 limits: (|MBE| %, CVRMSE %)
CALIBRATION_LIMITS = {"monthly": (5.0, 15.0), "hourly": (10.0, 30.0)}
ABLATION_ORDER = (
    ("hvac",),
    ("hvac", "light"),
    ("hvac", "light", "blind"),
    ("hvac", "light", "blind", "window"),
)
REPORT_CONVENTIONS = (
    "energy_delta_pct = 100 * (candidate - baseline) / baseline (negative = candidate uses less); "
    "energy_saving_pct = 100 * (baseline - candidate) / baseline; "
    "std is the population standard deviation (divide by N); "
    "violation rate counts samples outside the closed comfort band"
)


class MetricsError(ValueError):
    pass


def violation_rate(samples: Sequence[float], low: float, high: float) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise MetricsError("violation rate of an empty series")
    return float(np.count_nonzero((x < low) | (x > high)) / x.size)


def _paired(measured, simulated) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(measured, dtype=float)
    s = np.asarray(simulated, dtype=float)
    if m.shape != s.shape or m.ndim != 1:
        raise MetricsError(f"series are misaligned: {m.shape} vs {s.shape}")
    if m.size == 0:
        raise MetricsError("empty series")
    return m, s


def mbe(measured, simulated) -> float:
    """Mean bias error in percent of the measured total."""
    m, s = _paired(measured, simulated)
    total = m.sum()
    if total == 0:
        raise MetricsError("MBE undefined: measured values sum to zero")
    return float(100.0 * (m - s).sum() / total)


def cvrmse(measured, simulated) -> float:
    """Root-mean-square error in percent of the measured mean."""
    m, s = _paired(measured, simulated)
    mean = m.mean()
    if mean == 0:
        raise MetricsError("CVRMSE undefined: measured mean is zero")
    return float(100.0 * math.sqrt(np.mean((m - s) ** 2)) / mean)


@dataclass(frozen=True)
class CalibrationReport:
    mbe: float
    cvrmse: float
    granularity: str
    mbe_limit: float
    cvrmse_limit: float

    @property
    def mbe_pass(self) -> bool:
        return abs(self.mbe) <= self.mbe_limit

    @property
    def cvrmse_pass(self) -> bool:
        return self.cvrmse <= self.cvrmse_limit

    @property
    def passed(self) -> bool:
        return self.mbe_pass and self.cvrmse_pass

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(mbe_pass=self.mbe_pass, cvrmse_pass=self.cvrmse_pass, passed=self.passed)
        return d


def calibration_report(measured, simulated, granularity: str) -> CalibrationReport:
    if granularity not in CALIBRATION_LIMITS:
        raise MetricsError(f"granularity must be one of {sorted(CALIBRATION_LIMITS)}")
    mbe_lim, cv_lim = CALIBRATION_LIMITS[granularity]
    return CalibrationReport(mbe(measured, simulated), cvrmse(measured, simulated), granularity,
                             mbe_lim, cv_lim)


@dataclass(frozen=True)
class EpisodeMetrics:
    pmv_mean: float
    pmv_std: float
    pmv_violation: float
    illuminance_mean: float
    illuminance_std: float
    illuminance_violation: float
    co2_mean: float
    co2_std: float
    co2_violation: float
    energy_kwh: float
    energy_heating_kwh: float
    energy_cooling_kwh: float
    energy_fan_kwh: float
    energy_lighting_kwh: float
    steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(trace: Sequence[StepRecord], ranges: ComfortRanges, dt: float = 900.0) -> EpisodeMetrics:
    if not trace:
        raise MetricsError("cannot summarise an empty trace")
    pmv = np.array([r.pmv for r in trace])
    lux = np.array([r.illuminance for r in trace])
    co2 = np.array([r.co2 for r in trace])
    to_kwh = dt / 3.6e6
    return EpisodeMetrics(
        pmv_mean=float(pmv.mean()),
        pmv_std=float(pmv.std()),
        pmv_violation=violation_rate(pmv, -ranges.pmv_limit, ranges.pmv_limit),
        illuminance_mean=float(lux.mean()),
        illuminance_std=float(lux.std()),
        illuminance_violation=violation_rate(lux, ranges.illum_low, ranges.illum_high),
        co2_mean=float(co2.mean()),
        co2_std=float(co2.std()),
        co2_violation=violation_rate(co2, ranges.co2_low, ranges.co2_high),
        energy_kwh=float(sum(r.energy_kwh for r in trace)),
        energy_heating_kwh=float(sum(r.p_heat for r in trace) * to_kwh),
        energy_cooling_kwh=float(sum(r.p_cool for r in trace) * to_kwh),
        energy_fan_kwh=float(sum(r.p_fan for r in trace) * to_kwh),
        energy_lighting_kwh=float(sum(r.p_light for r in trace) * to_kwh),
        steps=len(trace),
    )


def daily_energy(trace: Sequence[StepRecord], day_seconds: float = 86400.0) -> list[tuple[int, float]]:
    """Energy per calendar day, days numbered from the first record."""
    if not trace:
        return []
    t0 = trace[0].sim_time
    days: dict[int, float] = {}
    for r in trace:
        # sim_time stamps the end of the step
        d = int((r.sim_time - t0) // day_seconds)
        days[d] = days.get(d, 0.0) + r.energy_kwh
    return sorted(days.items())


def ablation_variants(enabled_sets: Iterable[Sequence[str]] | None = None) -> list[tuple[str, ...]]:
    """Validate and order subsystem subsets by the HVAC, L, B, W addition sequence."""
    sets = ABLATION_ORDER if enabled_sets is None else enabled_sets
    out = []
    for s in sets:
        s = tuple(x for x in SUBSYSTEMS if x in set(s))
        if "hvac" not in s:
            raise MetricsError("ablation variants must keep the HVAC subsystem")
        out.append(s)
    return sorted(set(out), key=lambda s: (len(s), [SUBSYSTEMS.index(x) for x in s]))


def variant_name(enabled: Sequence[str]) -> str:
    tags = {"hvac": "HVAC", "light": "L", "blind": "B", "window": "W"}
    return "bdq_" + "_".join(tags[s] for s in enabled)


def ablation_run(
    train_and_eval: Callable[[tuple[str, ...]], EpisodeMetrics],
    enabled_sets: Iterable[Sequence[str]] | None = None,
) -> list[tuple[str, EpisodeMetrics]]:
    """Train/evaluate one agent per subsystem subset; ``train_and_eval`` does the work."""
    return [(variant_name(v), train_and_eval(v)) for v in ablation_variants(enabled_sets)]


def saving_pct(baseline: float, candidate: float) -> float | None:
    if baseline == 0:
        return None
    return 100.0 * (baseline - candidate) / baseline


def _neg(x):
    return None if x is None else -x


def compare_report(
    entries: Sequence[tuple[str, EpisodeMetrics]],
    baseline: str,
    out_dir: str | Path,
    daily: dict[str, list[tuple[int, float]]] | None = None,
    stem: str = "report",
) -> dict:
    """Write ``<stem>.json``, ``<stem>.csv`` and optional ``daily_energy_<method>.csv`` files."""
    if len(entries) < 2:
        raise MetricsError("a comparison needs at least two entries")
    names = [n for n, _ in entries]
    if len(set(names)) != len(names):
        raise MetricsError("duplicate method names in comparison")
    if baseline not in names:
        raise MetricsError(f"baseline {baseline!r} not among {names}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = dict(entries)[baseline]
    rows = []
    for name, m in entries:
        d = m.to_dict()
        rows.append(
            {
                "method": name,
                **d,
                "energy_delta_pct": _neg(saving_pct(base.energy_kwh, m.energy_kwh)),
                "energy_saving_pct": saving_pct(base.energy_kwh, m.energy_kwh),
            }
        )
    report = {"baseline": baseline, "conventions": REPORT_CONVENTIONS, "methods": rows}
    if daily:
        report["daily_energy"] = {k: [[d, e] for d, e in v] for k, v in daily.items()}
    (out_dir / f"{stem}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    columns = ["method", *EpisodeMetrics.__dataclass_fields__, "energy_delta_pct", "energy_saving_pct"]
    with (out_dir / f"{stem}.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r[k] is None else r[k]) for k in columns})
    for method, series in (daily or {}).items():
        with (out_dir / f"daily_energy_{method}.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["day", "energy_kwh"])
            for day, e in series:
                writer.writerow([day, repr(e)])
    return report
