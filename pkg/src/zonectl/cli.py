"""``zonectl`` command-line entry point.

Commands: simulate, train, eval, compare, calibrate-check, synth-weather.
All commands take ``--config``, ``--seed``, ``--out`` and repeatable
``--set key=value`` overrides, and write only inside the output directory.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import BDQAgent, Policy, evaluate, run_episode, train
from .baselines import RandomPolicy, RuleBasedController
from .checkpoint import CheckpointError, CheckpointMismatchError
from .config import ConfigError, RunConfig, load_config
from .env import BuildingEnv, StepRecord, pinned_indices
from .envsim import ParamError
from .evalkit import (
    EpisodeMetrics,
    MetricsError,
    calibration_report,
    compare_report,
    daily_energy,
    summarize,
    variant_name,
)
from .weather import WeatherError, split_train_test, write_weather_csv

log = logging.getLogger("zonectl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
TRACE_COLUMNS = ("sim_time", "t_in", "co2", "rh_in", "illuminance", "p_heat", "p_cool", "p_fan",
                 "p_light", "h", "l", "b", "w")
LOG_COLUMNS = ("episode", "steps", "accum_reward", "mean_loss", "epsilon_beta", "energy_kwh",
               "violation_pmv", "violation_lux", "violation_co2")
SMOOTH_WINDOW = 10
BUNDLED_CONFIGS = ("default", "toy", "long")


class UsageError(ValueError):
    pass


# -- output helpers ---------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_trace(path: Path, records: Sequence[StepRecord]) -> None:
    write_csv(path, TRACE_COLUMNS, ([getattr(r, c) for c in TRACE_COLUMNS] for r in records))


def read_trace(path: Path) -> dict[str, np.ndarray]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError(f"{path}: empty trace")
    missing = set(TRACE_COLUMNS) - set(rows[0])
    if missing:
        raise UsageError(f"{path}: trace lacks columns {sorted(missing)}")
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]}


def smooth(values: Sequence[float], window: int = SMOOTH_WINDOW) -> list[float]:
    """Trailing moving average; the first ``window - 1`` entries average what is available."""
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1): i + 1]
        out.append(float(sum(chunk) / len(chunk)))
    return out


# -- config -----------------------------------------------------------------


def resolve_config_path(name: str | None) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    if p.is_file():
        return p
    if name in BUNDLED_CONFIGS:
        return Path(str(resources.files("zonectl") / "configs" / f"{name}.yaml"))
    raise ConfigError(f"config file {name} does not exist")


def build_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={args.out}")
    path = resolve_config_path(args.config or "default")
    return load_config(path, overrides)


def location_split(cfg: RunConfig, loc):
    series = cfg.location_series(loc)
    w = cfg.weather
    return split_train_test(series, w.train_fraction, w.split_seed, w.block_steps)


def load_agent(path: Path, cfg: RunConfig) -> BDQAgent:
    env_cfg = cfg.env_config()
    return BDQAgent.load(path, grid=env_cfg.grid, obs_dim=env_cfg.obs_dim)


# -- commands ---------------------------------------------------------------


def _controller(kind: str, cfg: RunConfig, checkpoint: str | None, seed: int) -> Policy:
    grid = cfg.env_config().grid
    if kind == "rule":
        return RuleBasedController(grid, cfg.rule.target_f, cfg.rule.gain_f)
    if kind == "random":
        return RandomPolicy(grid, seed)
    if kind == "checkpoint":
        if not checkpoint:
            raise UsageError("--controller checkpoint needs --checkpoint PATH")
        agent = load_agent(Path(checkpoint), cfg)
        agent.sigma = 0.0
        return agent
    raise UsageError(f"unknown controller {kind!r}")


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = cfg.output_dir
    env_cfg = cfg.env_config()
    loc = cfg.location(args.location)
    series = cfg.location_series(loc)
    days = args.days or cfg.simulate_days
    steps = min(len(series), int(round(days * 86400 / env_cfg.dt)))
    policy = _controller(args.controller, cfg, args.checkpoint, cfg.seed)
    env = BuildingEnv(env_cfg)
    records, _, aborted = run_episode(env, policy, series, 0, steps, cfg.seed, pinned_indices(env_cfg.grid))
    if aborted:
        raise ArithmeticError("simulation aborted on a non-finite state")
    metrics = summarize(records, env_cfg.ranges, env_cfg.dt)
    write_trace(out / "trace.csv", records)
    write_json(out / "metrics.json", {"method": args.controller, "location": loc.name,
                                      "metrics": metrics.to_dict()})
    print(f"{args.controller} over {len(records)} steps: {metrics.energy_kwh:.2f} kWh, "
          f"PMV violation {metrics.pmv_violation:.3f}")
    return EXIT_OK


def _read_log(path: Path, upto_episode: int) -> list[list[str]]:
    if not path.exists():
        return []
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r for r in rows if int(r[0]) <= upto_episode]


def _train_one(cfg: RunConfig, out: Path, enabled: Sequence[str], resume: Path | None) -> BDQAgent:
    env_cfg = cfg.env_config()
    hyper = cfg.hyper()
    blocks = []
    for loc in cfg.weather.locations:
        blocks.extend(location_split(cfg, loc)[0])
    env = BuildingEnv(env_cfg)
    if resume is not None:
        agent = BDQAgent.load(resume, grid=env_cfg.grid, obs_dim=env_cfg.obs_dim, hyper=hyper)
        if set(agent.enabled) != set(enabled):
            raise CheckpointMismatchError(
                f"{resume}: checkpoint subsystems {list(agent.enabled)} differ from {list(enabled)}")
    else:
        agent = BDQAgent(env_cfg.grid, env_cfg.obs_dim, hyper, seed=cfg.seed, enabled=enabled)
    log_path = out / "training_log.csv"
    rows = _read_log(log_path, agent.episodes_done)
    ckpt_dir = out / "checkpoints"

    def flush():
        write_csv(log_path, LOG_COLUMNS, rows)
        rewards = [float(r[2]) for r in rows]
        write_csv(out / "convergence.csv", ("episode", "accum_reward", "smoothed_reward"),
                  ([int(r[0]), rw, sm] for r, rw, sm in zip(rows, rewards, smooth(rewards))))

    def on_episode(res):
        if res.records:
            m = summarize(res.records, env_cfg.ranges, env_cfg.dt)
            tail = [m.energy_kwh, m.pmv_violation, m.illuminance_violation, m.co2_violation]
        else:
            tail = [0.0, float("nan"), float("nan"), float("nan")]
        rows.append([str(res.episode + 1), *(_fmt(v) for v in
                     [res.steps, res.accum_reward, res.mean_loss, res.beta, *tail])])
        done = agent.episodes_done
        if done % hyper.checkpoint_every == 0 or done == hyper.episodes:
            flush()
            agent.save(ckpt_dir / f"episode_{done:05d}.ckpt")
            agent.save(ckpt_dir / "resume.ckpt", include_replay=True)
            log.info("episode %d: reward %.1f, checkpoint written", done, res.accum_reward)

    train(agent, env, blocks, seed=cfg.seed, on_episode=on_episode)
    flush()
    agent.save(out / "agent.ckpt")
    return agent


def cmd_train(args, cfg: RunConfig) -> int:
    out = cfg.output_dir
    if args.ablation:
        from .evalkit import ablation_variants

        for variant in ablation_variants():
            name = variant_name(variant)
            _train_one(cfg, out / name, variant, None)
            print(f"trained {name}")
        return EXIT_OK
    resume = Path(args.resume) if args.resume else None
    agent = _train_one(cfg, out, cfg.agent.enabled, resume)
    print(f"trained {variant_name(agent.enabled)} for {agent.episodes_done} episodes")
    return EXIT_OK


def _parse_named(items: Sequence[str]) -> list[tuple[str | None, str]]:
    out = []
    for item in items:
        name, sep, path = item.partition("=")
        out.append((name, path) if sep else (None, item))
    return out


def cmd_eval(args, cfg: RunConfig) -> int:
    env_cfg = cfg.env_config()
    methods: list[tuple[str, Policy]] = []
    for kind in [b for b in (args.baselines or "").split(",") if b]:
        methods.append((kind, _controller(kind, cfg, None, cfg.seed)))
    for name, path in _parse_named(args.checkpoint or []):
        agent = load_agent(Path(path), cfg)
        methods.append((name or variant_name(agent.enabled), agent))
    if len(methods) < 2:
        raise UsageError("eval needs at least two methods (baselines and/or checkpoints)")
    baseline = args.baseline or methods[0][0]
    steps = None if cfg.eval_days is None else int(round(cfg.eval_days * 86400 / env_cfg.dt))
    for loc in cfg.weather.locations:
        _, test_blocks = location_split(cfg, loc)
        entries, daily = [], {}
        loc_dir = cfg.output_dir / loc.name
        for name, policy in methods:
            env = BuildingEnv(env_cfg)
            records = evaluate(env, policy, test_blocks, cfg.seed, steps)
            entries.append((name, summarize(records, env_cfg.ranges, env_cfg.dt)))
            daily[name] = daily_energy(records)
            write_trace(loc_dir / f"trace_{name}.csv", records)
        compare_report(entries, baseline, loc_dir, daily)
        for name, m in entries:
            print(f"{loc.name} {name}: {m.energy_kwh:.2f} kWh, violations pmv {m.pmv_violation:.3f} "
                  f"lux {m.illuminance_violation:.3f} co2 {m.co2_violation:.3f}")
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    entries = []
    for name, path in _parse_named(args.metrics):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            m = EpisodeMetrics(**doc["metrics"])
        except (KeyError, TypeError) as exc:
            raise UsageError(f"{path}: not a metrics file ({exc})") from exc
        entries.append((name or doc.get("method", Path(path).stem), m))
    baseline = args.baseline or entries[0][0]
    compare_report(entries, baseline, cfg.output_dir)
    print(f"wrote {cfg.output_dir / 'report.json'}")
    return EXIT_OK


def _bins(times: np.ndarray, width: float) -> np.ndarray:
    return np.floor(times / width).astype(np.int64)


def cmd_calibrate_check(args, cfg: RunConfig) -> int:
    """Aggregate the simulated trace to the measured granularity and compare.

    The trace timestamps mark step ends; the measured CSV (``timestamp,<column>``)
    timestamps mark bin starts. Hourly bins are 3600 s, monthly bins 30 days.
    """
    width = {"hourly": 3600.0, "monthly": 30 * 86400.0}[args.granularity]
    trace = read_trace(Path(args.trace))
    col = args.column
    if col not in trace:
        raise UsageError(f"trace has no column {col!r}")
    dt = cfg.weather.step_seconds
    sim_bins = _bins(trace["sim_time"] - dt, width)
    keys, inv = np.unique(sim_bins, return_inverse=True)
    sim_mean = np.bincount(inv, weights=trace[col]) / np.bincount(inv)
    with Path(args.measured).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "timestamp" not in rows[0] or col not in rows[0]:
        raise UsageError(f"{args.measured}: expected columns timestamp,{col}")
    m_bins = _bins(np.array([float(r["timestamp"]) for r in rows]), width)
    m_vals = np.array([float(r[col]) for r in rows])
    if len(m_bins) != len(keys) or not np.array_equal(np.sort(m_bins), keys):
        raise MetricsError(
            f"measured series ({len(m_bins)} {args.granularity} values) is misaligned with the "
            f"simulated trace ({len(keys)} values)"
        )
    measured = m_vals[np.argsort(m_bins, kind="stable")]
    rep = calibration_report(measured, sim_mean, args.granularity)
    write_json(cfg.output_dir / "calibration.json", rep.to_dict())
    print(f"{args.granularity}: MBE {rep.mbe:.2f}% CVRMSE {rep.cvrmse:.2f}% -> "
          f"{'pass' if rep.passed else 'fail'}")
    return EXIT_OK


def cmd_synth_weather(args, cfg: RunConfig) -> int:
    locs = [cfg.location(args.location)] if args.location else cfg.weather.locations
    for loc in locs:
        series = cfg.location_series(loc)
        if args.days:
            n = min(len(series), int(round(args.days * 86400 / series.step_seconds)))
            series = series.slice(0, n)
        path = cfg.output_dir / f"weather_{loc.name}.csv"
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        write_weather_csv(series, path)
        print(f"wrote {path} ({len(series)} records)")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "calibrate-check": cmd_calibrate_check,
    "synth-weather": cmd_synth_weather,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config path or bundled name (default, toy, long)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted config override, e.g. agent.lr=5e-4 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="zonectl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one controller and write a trace")
    s.add_argument("--controller", choices=("rule", "random", "checkpoint"), default="rule")
    s.add_argument("--checkpoint")
    s.add_argument("--days", type=float)
    s.add_argument("--location")

    s = sub.add_parser("train", parents=[common], help="train the branching agent")
    s.add_argument("--resume", help="checkpoint to continue from (checkpoints/resume.ckpt)")
    s.add_argument("--ablation", action="store_true",
                   help="train one agent per subsystem subset (HVAC, +L, +B, +W)")

    s = sub.add_parser("eval", parents=[common], help="evaluate methods on the test weather")
    s.add_argument("--checkpoint", action="append", metavar="[NAME=]PATH")
    s.add_argument("--baselines", default="rule,random", help="comma list of rule, random")
    s.add_argument("--baseline", help="reference method for percent deltas (default: first)")

    s = sub.add_parser("compare", parents=[common], help="compare metrics files from simulate")
    s.add_argument("metrics", nargs="+", metavar="[NAME=]METRICS_JSON")
    s.add_argument("--baseline")

    s = sub.add_parser("calibrate-check", parents=[common], help="MBE/CVRMSE against measurements")
    s.add_argument("--trace", required=True)
    s.add_argument("--measured", required=True)
    s.add_argument("--granularity", choices=("hourly", "monthly"), default="hourly")
    s.add_argument("--column", default="t_in")

    s = sub.add_parser("synth-weather", parents=[common], help="write configured weather as CSV")
    s.add_argument("--days", type=float)
    s.add_argument("--location")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ParamError, CheckpointMismatchError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError, WeatherError, MetricsError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
