import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import numeric_grad, td_target_oracle
from zonectl import neural
from zonectl.agent import (
    AgentHyper,
    BDQAgent,
    loss_and_grads,
    select_action,
    sync_target,
    td_targets,
    train,
)
from zonectl.checkpoint import CheckpointMismatchError, CorruptCheckpointError
from zonectl.env import BuildingEnv, EnvConfig
from zonectl.envsim import ActionGrid
from zonectl.neural import NetConfig
from zonectl.replay import PrioritizedReplay, SumTree
from zonectl.weather import WeatherProfile, split_blocks, synth_weather

TOY = NetConfig(input_dim=4, actions_per_branch=(3, 3), trunk_sizes=(5,), branch_hidden=4)


def _params(cfg, seed):
    p = neural.init_xavier(cfg, seed)
    rng = np.random.default_rng(seed + 7)
    for k in p:
        p[k] = p[k] + rng.normal(0, 0.2, size=p[k].shape)
    return p


def _batch(cfg, seed, n=6):
    rng = np.random.default_rng(seed)
    return {
        "s": rng.normal(size=(n, cfg.input_dim)),
        "a": np.stack([rng.integers(k, size=n) for k in cfg.actions_per_branch], axis=1),
        "r": rng.normal(size=n),
        "s_next": rng.normal(size=(n, cfg.input_dim)),
        "done": rng.random(n) < 0.3,
    }


def _constant_net(cfg, value, advantages):
    """Net with zero weights whose outputs are fixed by the output biases."""
    p = {k: np.zeros_like(v) for k, v in neural.init_xavier(cfg, 0).items()}
    p["value_out.b"][:] = value
    for d, row in enumerate(advantages):
        p[f"adv{d}_out.b"] = np.asarray(row, dtype=float)
    return p


def test_td_target_worked_example():
    cfg = NetConfig(input_dim=1, actions_per_branch=(2, 2), trunk_sizes=(), branch_hidden=1)
    # online argmaxes: branch 1 -> index 1, branch 2 -> index 0
    online = _constant_net(cfg, 0.0, [[0.5, 2.0], [1.0, 0.2]])
    # target: Q_1 = [0.8, 1.5], Q_2 = [0.8, 1.5]
    target = _constant_net(cfg, 1.15, [[-0.35, 0.35], [-0.35, 0.35]])
    batch = {"s_next": np.zeros((1, 1)), "r": np.array([1.0]), "done": np.array([False])}
    # check our construction, then the target
    assert neural.forward(cfg, target, np.zeros(1)).q_values[0][0, 1] == pytest.approx(1.5)
    assert neural.forward(cfg, target, np.zeros(1)).q_values[1][0, 0] == pytest.approx(0.8)
    y = td_targets(cfg, batch, online, target, 0.99)
    assert y[0] == pytest.approx(2.1385, abs=1e-12)
    batch["done"] = np.array([True])
    assert td_targets(cfg, batch, online, target, 0.99)[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_td_targets_match_oracle(seed):
    online, target = _params(TOY, seed), _params(TOY, seed + 1)
    batch = _batch(TOY, seed)
    y = td_targets(TOY, batch, online, target, 0.9)
    for i in range(len(y)):
        ref = td_target_oracle(TOY, online, target, batch["r"][i], batch["s_next"][i], batch["done"][i], 0.9)
        assert abs(y[i] - ref) <= 1e-12


def test_td_targets_same_nets_is_branch_averaged_max():
    p = _params(TOY, 3)
    batch = _batch(TOY, 3)
    batch["done"][:] = False
    y = td_targets(TOY, batch, p, p, 0.5)
    out = neural.forward(TOY, p, batch["s_next"])
    ref = batch["r"] + 0.5 * np.mean([q.max(axis=1) for q in out.q_values], axis=0)
    assert np.allclose(y, ref, rtol=0, atol=1e-12)


def test_loss_zero_residual():
    p = _params(TOY, 1)
    batch = _batch(TOY, 1, n=4)
    q = neural.forward(TOY, p, batch["s"]).q_values
    rows = np.arange(4)
    y = q[0][rows, batch["a"][:, 0]]
    single = NetConfig(input_dim=4, actions_per_branch=(3,), trunk_sizes=(5,), branch_hidden=4)
    ps = {k: v for k, v in p.items() if not k.startswith("adv1")}
    loss, _, prio = loss_and_grads(single, {"s": batch["s"], "a": batch["a"][:, :1]}, y, ps)
    assert loss == pytest.approx(0.0, abs=1e-24)
    assert np.allclose(prio, 1e-6, rtol=0, atol=1e-15)


def test_loss_single_branch_residual_two():
    cfg = NetConfig(input_dim=2, actions_per_branch=(3,), trunk_sizes=(), branch_hidden=2)
    p = {k: np.zeros_like(v) for k, v in neural.init_xavier(cfg, 0).items()}
    batch = {"s": np.zeros((1, 2)), "a": np.array([[1]])}
    loss, _, prio = loss_and_grads(cfg, batch, np.array([2.0]), p, np.array([1.0]))
    assert loss == pytest.approx(4.0)
    assert prio[0] == pytest.approx(2.0 + 1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_loss_gradient_finite_differences(seed):
    p = _params(TOY, seed)
    batch = _batch(TOY, seed)
    y = np.random.default_rng(seed).normal(size=len(batch["r"]))
    w = np.random.default_rng(seed + 1).uniform(0.2, 1.0, size=len(y))
    _, grads, _ = loss_and_grads(TOY, batch, y, p, w)
    num = numeric_grad(lambda: loss_and_grads(TOY, batch, y, p, w)[0], p)
    for k in p:
        a, n = grads[k], num[k]
        assert np.linalg.norm(a - n) <= 1e-4 * max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)


def test_loss_decreases_on_frozen_batch():
    cfg = NetConfig(input_dim=4, actions_per_branch=(3, 3), trunk_sizes=(16,), branch_hidden=8)
    p = neural.init_xavier(cfg, 0)
    batch = _batch(cfg, 0, n=16)
    y = np.random.default_rng(1).normal(size=16)
    adam = neural.AdamState.for_params(p, lr=1e-3)
    losses = []
    for _ in range(100):
        loss, g, _ = loss_and_grads(cfg, batch, y, p)
        losses.append(loss)
        neural.adam_step(p, g, adam)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_gamma_zero_regresses_toward_reward():
    cfg = NetConfig(input_dim=4, actions_per_branch=(3, 3), trunk_sizes=(8,), branch_hidden=4)
    p = neural.init_xavier(cfg, 2)
    batch = _batch(cfg, 2, n=8)
    y = td_targets(cfg, batch, p, p, 0.0)
    assert np.array_equal(y, batch["r"])
    rows = np.arange(8)

    def err():
        q = neural.forward(cfg, p, batch["s"]).q_values
        return sum(np.abs(q[d][rows, batch["a"][:, d]] - y).sum() for d in range(2))

    before = err()
    _, g, _ = loss_and_grads(cfg, batch, y, p)
    for k in p:
        p[k] -= 1e-3 * g[k]
    assert err() < before


def test_select_action_greedy_and_clamped():
    p = _params(TOY, 0)
    s = np.ones(4)
    greedy = neural.greedy(neural.forward(TOY, p, s))[0]
    assert np.array_equal(select_action(TOY, p, s, 0.0), greedy)
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = select_action(TOY, p, s, 0.2, rng)
        assert (a >= 0).all() and (a <= 2).all()


def test_exploration_histogram_unimodal():
    cfg = NetConfig(input_dim=1, actions_per_branch=(33,), trunk_sizes=(), branch_hidden=1)
    p = {k: np.zeros_like(v) for k, v in neural.init_xavier(cfg, 0).items()}
    p["adv0_out.b"][12] = 1.0
    rng = np.random.default_rng(1)
    draws = np.array([select_action(cfg, p, np.zeros(1), 0.2, rng)[0] for _ in range(100_000)])
    hist = np.bincount(draws, minlength=33)
    mode = int(hist.argmax())
    assert mode == 12
    # interior bins only: clamping collects the tails in the two end bins
    assert all(hist[i] >= hist[i - 1] for i in range(2, mode + 1))
    assert all(hist[i] <= hist[i - 1] for i in range(mode + 1, 32))


def test_sync_target_copy_and_isolation():
    online, target = _params(TOY, 0), _params(TOY, 1)
    sync_target(online, target)
    x = np.random.default_rng(0).normal(size=(3, 4))
    for a, b in zip(neural.forward(TOY, online, x).q_values, neural.forward(TOY, target, x).q_values):
        assert np.array_equal(a, b)
    frozen = neural.copy_params(target)
    adam = neural.AdamState.for_params(online)
    _, g, _ = loss_and_grads(TOY, _batch(TOY, 0), np.zeros(6), online)
    neural.adam_step(online, g, adam)
    assert all(np.array_equal(frozen[k], target[k]) for k in target)


# -- replay -----------------------------------------------------------------


def test_sum_tree():
    t = SumTree(5)
    t.update(np.arange(5), np.array([1.0, 2.0, 3.0, 4.0, 0.0]))
    assert t.total == 10.0
    assert t.find(np.array([0.5, 1.5, 3.5, 9.9])).tolist() == [0, 1, 2, 3]


def test_replay_capacity_and_eviction():
    r = PrioritizedReplay(4, obs_dim=2, n_branches=1)
    for i in range(6):
        r.add(np.full(2, i), [0], float(i), np.zeros(2), False)
    assert len(r) == 4
    assert sorted(r.r[:4].tolist()) == [2.0, 3.0, 4.0, 5.0]


def test_replay_new_items_get_max_priority():
    r = PrioritizedReplay(8, obs_dim=1, n_branches=1, alpha=1.0)
    r.add([0], [0], 0, [0], False)
    r.update_priorities(np.array([0]), np.array([5.0]))
    slot = r.add([1], [0], 0, [0], False)
    assert r.raw_priorities()[slot] == pytest.approx(5.0)
    with pytest.raises(ValueError):
        r.update_priorities(np.array([0]), np.array([0.0]))


def test_replay_importance_weights():
    r = PrioritizedReplay(16, obs_dim=1, n_branches=1, alpha=0.6, beta0=0.4, beta_anneal_steps=100)
    for i in range(10):
        r.add([i], [0], 0, [0], False)
    r.update_priorities(np.arange(10), np.arange(1, 11, dtype=float))
    assert r.beta(0) == 0.4 and r.beta(50) == pytest.approx(0.7) and r.beta(500) == 1.0
    idx, _, w = r.sample(32, np.random.default_rng(0), step=0)
    assert w.max() == pytest.approx(1.0)
    p = np.arange(1, 11) ** 0.6
    prob = p[idx] / p.sum()
    expect = (10 * prob) ** -0.4
    assert np.allclose(w, expect / expect.max())


# -- agent plumbing -----------------------------------------------------------


def _small_agent(seed=0, enabled=("hvac", "light", "blind", "window")):
    grid = ActionGrid.spanning(4, 3, 3, 3)
    cfg = EnvConfig(grid=grid, history_depth=1)
    hyper = AgentHyper(batch_size=8, warmup=16, replay_capacity=500, trunk_sizes=(16,), branch_hidden=8,
                       episode_steps=24, episodes=3, target_sync_interval=10)
    return BDQAgent(grid, cfg.obs_dim, hyper, seed=seed, enabled=enabled), cfg


def _blocks():
    return split_blocks(synth_weather(WeatherProfile(noise_sd=1.0), 0, 4), 96)


def test_agent_disabled_branches_pinned():
    agent, cfg = _small_agent(enabled=("hvac",))
    assert agent.config.n_branches == 1
    a = agent.act(np.zeros(cfg.obs_dim))
    assert a[1:] == (2, 0, 0)
    with pytest.raises(ValueError):
        _small_agent(enabled=("light",))


def test_training_reproducible():
    def run():
        agent, cfg = _small_agent()
        res = train(agent, BuildingEnv(cfg), _blocks(), seed=3)
        return [r.accum_reward for r in res], agent

    (r1, a1), (r2, a2) = run(), run()
    assert r1 == r2 and len(r1) == 3
    assert all(np.array_equal(a1.online[k], a2.online[k]) for k in a1.online)
    assert a1.total_steps == 72


def test_checkpoint_round_trip(tmp_path):
    agent, cfg = _small_agent()
    train(agent, BuildingEnv(cfg), _blocks(), seed=0, episodes=1)
    path = tmp_path / "a.ckpt"
    agent.save(path, include_replay=True)
    back = BDQAgent.load(path, grid=agent.grid, obs_dim=cfg.obs_dim)
    x = np.random.default_rng(0).normal(size=(4, cfg.obs_dim))
    for a, b in zip(neural.forward(agent.config, agent.online, x).q_values,
                    neural.forward(back.config, back.online, x).q_values):
        assert np.array_equal(a, b)
    assert np.array_equal(agent.replay.raw_priorities(), back.replay.raw_priorities())
    assert back.episodes_done == 1 and back.adam.step == agent.adam.step


def test_resume_matches_uninterrupted(tmp_path):
    agent, cfg = _small_agent()
    full = train(agent, BuildingEnv(cfg), _blocks(), seed=5)
    first, cfg = _small_agent()
    train(first, BuildingEnv(cfg), _blocks(), seed=5, episodes=1)
    first.save(tmp_path / "r.ckpt", include_replay=True)
    resumed = BDQAgent.load(tmp_path / "r.ckpt")
    rest = train(resumed, BuildingEnv(cfg), _blocks(), seed=5)
    assert [r.episode for r in rest] == [1, 2]
    assert [r.accum_reward for r in rest] == [r.accum_reward for r in full[1:]]


def test_checkpoint_errors(tmp_path):
    agent, cfg = _small_agent()
    path = tmp_path / "a.ckpt"
    agent.save(path)
    data = path.read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptCheckpointError):
        BDQAgent.load(tmp_path / "t.ckpt")
    flipped = bytearray(data)
    flipped[-10] ^= 0xFF
    (tmp_path / "f.ckpt").write_bytes(bytes(flipped))
    with pytest.raises(CorruptCheckpointError):
        BDQAgent.load(tmp_path / "f.ckpt")
    with pytest.raises(CheckpointMismatchError, match="action grid"):
        BDQAgent.load(path, grid=ActionGrid.spanning(5, 3, 3, 3))
    with pytest.raises(CheckpointMismatchError):
        BDQAgent.load(path, obs_dim=cfg.obs_dim + 1)
    (tmp_path / "bad.ckpt").write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CorruptCheckpointError):
        BDQAgent.load(tmp_path / "bad.ckpt")


def test_checkpoint_bytes_deterministic(tmp_path):
    a1, _ = _small_agent(seed=4)
    a2, _ = _small_agent(seed=4)
    a1.save(tmp_path / "1.ckpt", include_replay=True)
    a2.save(tmp_path / "2.ckpt", include_replay=True)
    assert (tmp_path / "1.ckpt").read_bytes() == (tmp_path / "2.ckpt").read_bytes()
