"""Branching dueling double-Q agent and its training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import neural
from .checkpoint import CheckpointMismatchError, read_container, write_container
from .env import SUBSYSTEMS, BuildingEnv, StepRecord, pinned_indices
from .envsim import ActionGrid, SimulationError, ZoneState, decode_action
from .neural import AdamState, ForwardOutput, NetConfig, Params
from .replay import PrioritizedReplay
from .weather import WeatherSeries

log = logging.getLogger(__name__)

PRIORITY_EPS = 1e-6


@dataclass(frozen=True)
class AgentHyper:
    gamma: float = 0.99
    batch_size: int = 64
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    target_sync_interval: int = 1000
    exploration_sd: float = 0.2
    episodes: int = 1000
    episode_steps: int = 2880
    replay_capacity: int = 1_000_000
    per_alpha: float = 0.6
    per_beta0: float = 0.4
    per_beta_steps: int = 2_000_000
    warmup: int | None = None  # default 10 * batch_size
    train_every: int = 1
    checkpoint_every: int = 50
    trunk_sizes: tuple[int, ...] = (512, 256)
    branch_hidden: int = 128

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.target_sync_interval < 1:
            raise ValueError("target_sync_interval must be >= 1")
        if self.exploration_sd < 0:
            raise ValueError("exploration_sd must be >= 0")
        if self.batch_size < 1 or self.episode_steps < 1 or self.train_every < 1:
            raise ValueError("batch_size, episode_steps and train_every must be >= 1")

    @property
    def warmup_steps(self) -> int:
        return 10 * self.batch_size if self.warmup is None else self.warmup


# ---------------------------------------------------------------------------
# core update math


def select_action(
    config: NetConfig,
    params: Params,
    s: np.ndarray,
    sigma: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Greedy branch indices perturbed by Gaussian noise of ``sigma * n_d`` indices."""
    out = neural.forward(config, params, s)
    g = neural.greedy(out)[0]
    if sigma == 0:
        return g
    sizes = np.asarray(config.actions_per_branch)
    xi = rng.standard_normal(len(sizes))
    return np.clip(np.rint(g + xi * sigma * sizes), 0, sizes - 1).astype(np.int64)


def td_targets(
    config: NetConfig,
    batch: dict,
    online: Params,
    target: Params,
    gamma: float,
    target_config: NetConfig | None = None,
) -> np.ndarray:
    """One shared target per transition: R + gamma * mean_d Q-_d(s', argmax_a Q_d(s', a))."""
    s_next = batch["s_next"]
    on = neural.forward(config, online, s_next)
    tg = neural.forward(target_config or config, target, s_next)
    rows = np.arange(s_next.shape[0])
    evals = [tg.q_values[d][rows, on.q_values[d].argmax(axis=1)] for d in range(config.n_branches)]
    bootstrap = np.mean(evals, axis=0)
    not_done = 1.0 - np.asarray(batch["done"], dtype=float)
    return np.asarray(batch["r"], dtype=float) + gamma * not_done * bootstrap


def loss_and_grads(
    config: NetConfig,
    batch: dict,
    y: np.ndarray,
    online: Params,
    weights: np.ndarray | None = None,
) -> tuple[float, Params, np.ndarray]:
    """Importance-weighted squared TD error summed over branches, averaged over the batch.

    Returns (loss, gradients, new priorities).
    """
    out: ForwardOutput = neural.forward(config, online, batch["s"])
    a = np.asarray(batch["a"])
    batch_n = a.shape[0]
    rows = np.arange(batch_n)
    w = np.ones(batch_n) if weights is None else np.asarray(weights, dtype=float)
    residuals = np.stack([y - out.q_values[d][rows, a[:, d]] for d in range(config.n_branches)], axis=1)
    loss = float(np.mean(w * (residuals**2).sum(axis=1)))
    if not math.isfinite(loss):
        raise neural.NetworkError("non-finite loss")
    grad_q = []
    for d in range(config.n_branches):
        g = np.zeros_like(out.q_values[d])
        g[rows, a[:, d]] = -2.0 * w * residuals[:, d] / batch_n
        grad_q.append(g)
    grads = neural.backward(config, online, out, grad_q)
    priorities = np.abs(residuals).mean(axis=1) + PRIORITY_EPS
    return loss, grads, priorities


def sync_target(online: Params, target: Params) -> None:
    for k, v in online.items():
        np.copyto(target[k], v)


# ---------------------------------------------------------------------------
# policies


class Policy:
    """Maps (observation, zone state) to the four branch indices of the full grid."""

    name = "policy"

    def reset(self) -> None:
        pass

    def act(self, obs: np.ndarray, zone: ZoneState) -> tuple[int, int, int, int]:
        raise NotImplementedError


class BDQAgent(Policy):
    """Online/target networks, optimiser and replay for a subset of subsystems.

    Subsystems not in ``enabled`` are pinned (lights full, blind and window
    shut) and have no network branch.
    """

    name = "bdq"

    def __init__(
        self,
        grid: ActionGrid,
        obs_dim: int,
        hyper: AgentHyper,
        seed: int = 0,
        enabled: Sequence[str] = SUBSYSTEMS,
    ):
        enabled = tuple(s for s in SUBSYSTEMS if s in set(enabled))
        if "hvac" not in enabled:
            raise ValueError("the HVAC branch cannot be disabled")
        self.grid = grid
        self.hyper = hyper
        self.enabled = enabled
        self.branch_ids = [SUBSYSTEMS.index(s) for s in enabled]
        self.pinned = pinned_indices(grid)
        self.config = NetConfig(
            input_dim=obs_dim,
            actions_per_branch=tuple(grid.sizes[i] for i in self.branch_ids),
            trunk_sizes=hyper.trunk_sizes,
            branch_hidden=hyper.branch_hidden,
        )
        self.online = neural.init_xavier(self.config, seed)
        self.target = neural.copy_params(self.online)
        self.adam = AdamState.for_params(
            self.online, lr=hyper.lr, beta1=hyper.adam_beta1, beta2=hyper.adam_beta2, eps=hyper.adam_eps
        )
        self.replay = PrioritizedReplay(
            hyper.replay_capacity,
            obs_dim,
            self.config.n_branches,
            alpha=hyper.per_alpha,
            beta0=hyper.per_beta0,
            beta_anneal_steps=hyper.per_beta_steps,
        )
        self.rng = np.random.default_rng(seed)
        self.total_steps = 0
        self.episodes_done = 0
        self.sigma = 0.0

    def expand(self, branch_idx: Sequence[int]) -> tuple[int, int, int, int]:
        full = list(self.pinned)
        for i, v in zip(self.branch_ids, branch_idx):
            full[i] = int(v)
        return tuple(full)  # type: ignore[return-value]

    def project(self, full_idx: Sequence[int]) -> np.ndarray:
        return np.array([full_idx[i] for i in self.branch_ids], dtype=np.int64)

    def act(self, obs, zone=None):
        return self.expand(select_action(self.config, self.online, obs, self.sigma, self.rng))

    def learn(self) -> float | None:
        h = self.hyper
        if len(self.replay) < max(h.warmup_steps, 1) or self.total_steps % h.train_every:
            return None
        idx, batch, weights = self.replay.sample(h.batch_size, self.rng, self.total_steps)
        y = td_targets(self.config, batch, self.online, self.target, h.gamma)
        loss, grads, prio = loss_and_grads(self.config, batch, y, self.online, weights)
        neural.adam_step(self.online, grads, self.adam)
        self.replay.update_priorities(idx, prio)
        return loss

    def observe_transition(self, s, full_a, r, s_next, terminal) -> float | None:
        self.replay.add(s, self.project(full_a), r, s_next, terminal)
        self.total_steps += 1
        loss = self.learn()
        if self.total_steps % self.hyper.target_sync_interval == 0:
            sync_target(self.online, self.target)
        return loss

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path, include_replay: bool = False, extra: dict | None = None) -> None:
        meta = {
            "kind": "bdq",
            "net_config": self.config.to_dict(),
            "enabled": list(self.enabled),
            "grid": [list(b) for b in self.grid.branches],
            "hyper": _jsonable(asdict(self.hyper)),
            "adam": {"step": self.adam.step, "lr": self.adam.lr, "beta1": self.adam.beta1,
                     "beta2": self.adam.beta2, "eps": self.adam.eps},
            "total_steps": self.total_steps,
            "episodes_done": self.episodes_done,
            "rng_state": _jsonable(self.rng.bit_generator.state),
            "has_replay": include_replay,
            "extra": extra or {},
        }
        arrays = {}
        for prefix, p in (("online", self.online), ("target", self.target),
                          ("adam.m", self.adam.m), ("adam.v", self.adam.v)):
            for k, v in p.items():
                arrays[f"{prefix}/{k}"] = v
        if include_replay:
            arrays.update(self.replay.state_arrays())
        write_container(path, meta, arrays)

    @classmethod
    def load(
        cls,
        path: str | Path,
        grid: ActionGrid | None = None,
        obs_dim: int | None = None,
        hyper: AgentHyper | None = None,
    ) -> "BDQAgent":
        """Restore an agent. ``grid``/``obs_dim`` are checked against the file when given."""
        meta, arrays = read_container(path)
        if meta.get("kind") != "bdq":
            raise CheckpointMismatchError(f"{path}: not an agent checkpoint")
        saved_grid = ActionGrid(*(tuple(b) for b in meta["grid"]))
        if grid is not None and [list(b) for b in grid.branches] != meta["grid"]:
            raise CheckpointMismatchError(
                f"{path}: action grid {saved_grid.sizes} does not match configured grid {grid.sizes}"
            )
        net_cfg = NetConfig.from_dict(meta["net_config"])
        if obs_dim is not None and net_cfg.input_dim != obs_dim:
            raise CheckpointMismatchError(
                f"{path}: network input {net_cfg.input_dim} != observation size {obs_dim}"
            )
        saved_hyper = meta["hyper"]
        saved_hyper["trunk_sizes"] = tuple(saved_hyper["trunk_sizes"])
        if hyper is None:
            hyper = AgentHyper(**saved_hyper)
        elif (tuple(hyper.trunk_sizes), hyper.branch_hidden) != (net_cfg.trunk_sizes, net_cfg.branch_hidden):
            raise CheckpointMismatchError(f"{path}: network sizes differ from configuration")
        agent = cls(saved_grid, net_cfg.input_dim, hyper, seed=0, enabled=meta["enabled"])
        for prefix, p in (("online", agent.online), ("target", agent.target),
                          ("adam.m", agent.adam.m), ("adam.v", agent.adam.v)):
            for k in p:
                key = f"{prefix}/{k}"
                if key not in arrays or arrays[key].shape != p[k].shape:
                    raise CheckpointMismatchError(f"{path}: array {key} missing or mis-shaped")
                p[k] = arrays[key]
        agent.adam.step = int(meta["adam"]["step"])
        agent.total_steps = int(meta["total_steps"])
        agent.episodes_done = int(meta["episodes_done"])
        agent.rng.bit_generator.state = meta["rng_state"]
        if meta.get("has_replay"):
            agent.replay.load_arrays(arrays)
        agent.meta_extra = meta.get("extra", {})
        return agent


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# rollouts and training


@dataclass
class EpisodeResult:
    episode: int
    steps: int
    accum_reward: float
    mean_loss: float
    beta: float
    records: list[StepRecord] = field(default_factory=list, repr=False)
    aborted: bool = False


def run_episode(
    env: BuildingEnv,
    policy: Policy,
    weather: WeatherSeries,
    start: int,
    steps: int,
    seed: int,
    initial_action: Sequence[int],
    learner: BDQAgent | None = None,
) -> tuple[list[StepRecord], list[float], bool]:
    """Roll ``policy`` for ``steps`` control steps. The first action is ``initial_action``.

    When ``learner`` is given every transition is stored and learned from.
    Returns (records, losses, aborted).
    """
    grid = env.cfg.grid
    obs = env.reset(weather, start, seed, decode_action(grid, initial_action))
    policy.reset()
    records, losses = [], []
    action = tuple(int(i) for i in initial_action)
    for t in range(steps):
        if t > 0:
            action = policy.act(obs, env.state)
        try:
            next_obs, r, terminal, rec = env.step(action)
        except SimulationError as exc:
            log.warning("episode aborted at step %d: %s", t, exc)
            return records, losses, True
        records.append(rec)
        if learner is not None:
            loss = learner.observe_transition(obs, action, r, next_obs, terminal)
            if loss is not None:
                losses.append(loss)
        obs = next_obs
        if terminal:
            break
    return records, losses, False


def train(
    agent: BDQAgent,
    env: BuildingEnv,
    blocks: Sequence[WeatherSeries],
    seed: int,
    episodes: int | None = None,
    on_episode: Callable[[EpisodeResult], None] | None = None,
) -> list[EpisodeResult]:
    """Train for ``episodes`` more episodes (default ``hyper.episodes`` in total).

    Each episode draws a training block and a start offset, a random initial
    zone temperature and a random initial action, then learns online.
    """
    if not blocks:
        raise ValueError("need at least one training weather block")
    h = agent.hyper
    total = h.episodes if episodes is None else agent.episodes_done + episodes
    results = []
    agent.sigma = h.exploration_sd
    while agent.episodes_done < total:
        ep = agent.episodes_done
        ep_rng = np.random.default_rng([seed, ep])
        block = blocks[int(ep_rng.integers(len(blocks)))]
        steps = min(h.episode_steps, len(block))
        start = int(ep_rng.integers(0, len(block) - steps + 1))
        init = [int(ep_rng.integers(n)) for n in env.cfg.grid.sizes]
        init = agent.expand(agent.project(init))
        records, losses, aborted = run_episode(
            env, agent, block, start, steps, int(ep_rng.integers(2**31)), init, learner=agent
        )
        agent.episodes_done += 1
        res = EpisodeResult(
            episode=ep,
            steps=len(records),
            accum_reward=float(sum(r.reward for r in records)),
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
            beta=agent.replay.beta(agent.total_steps),
            records=records,
            aborted=aborted,
        )
        results.append(res)
        if on_episode is not None:
            on_episode(res)
    agent.sigma = 0.0
    return results


def evaluate(
    env: BuildingEnv,
    policy: Policy,
    blocks: Sequence[WeatherSeries],
    seed: int,
    steps: int | None = None,
) -> list[StepRecord]:
    """Run ``policy`` greedily over each block from its start; concatenated records."""
    if isinstance(policy, BDQAgent):
        policy.sigma = 0.0
    records: list[StepRecord] = []
    for b, block in enumerate(blocks):
        n = len(block) if steps is None else min(steps, len(block))
        rng = np.random.default_rng([seed, b])
        init = pinned_indices(env.cfg.grid)
        recs, _, _ = run_episode(env, policy, block, 0, n, int(rng.integers(2**31)), init)
        records.extend(recs)
    return records
