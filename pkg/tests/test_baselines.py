import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from zonectl import neural
from zonectl.agent import AgentHyper, BDQAgent, td_targets
from zonectl.baselines import (
    COOLING_LIMITS_F,
    HEATING_LIMITS_F,
    RandomPolicy,
    RuleBasedController,
    RuleState,
    c_to_f,
    ddqn_hvac_agent,
    f_to_c,
    random_policy,
    rule_based_step,
)
from zonectl.env import BuildingEnv, EnvConfig
from zonectl.envsim import ActionGrid, ZoneState

GRID = ActionGrid.uniform()


def zone_f(t_f):
    return ZoneState(t_in=f_to_c(t_f), rh_in=50, co2=400, illuminance=0, sim_time=0)


def test_conversions():
    assert f_to_c(32) == 0 and c_to_f(100) == 212
    assert abs(c_to_f(f_to_c(71.3)) - 71.3) < 1e-12


def test_warm_up():
    st_ = RuleState()
    a = rule_based_step(st_, zone_f(60), GRID)
    assert (st_.heating_setpoint, st_.cooling_setpoint) == (70.0, 74.0)
    assert a.setpoint == GRID.hvac_setpoints[GRID.nearest_setpoint_index(f_to_c(72.0))]


def test_saturates_upwards():
    st_ = RuleState()
    for _ in range(100):
        rule_based_step(st_, zone_f(50), GRID)
    assert (st_.heating_setpoint, st_.cooling_setpoint) == (72.0, 80.0)


def test_saturates_downwards():
    st_ = RuleState()
    for _ in range(100):
        rule_based_step(st_, zone_f(95), GRID)
    assert st_.heating_setpoint == 65.0
    assert st_.cooling_setpoint == 72.0


def test_holds_inside_tolerance():
    st_ = RuleState()
    rule_based_step(st_, zone_f(75), GRID)
    rule_based_step(st_, zone_f(75.3), GRID)
    assert (st_.heating_setpoint, st_.cooling_setpoint) == (70.0, 74.0)


def test_pinned_subsystems():
    st_ = RuleState()
    for t in (50, 75, 95):
        a = rule_based_step(st_, zone_f(t), GRID)
        assert a.light == 1.0 and a.blind == GRID.blind_angles[0] and a.window == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(30, 120), min_size=1, max_size=60))
def test_rule_state_invariants(temps):
    st_ = RuleState()
    for t in temps:
        a = rule_based_step(st_, zone_f(t), GRID)
        assert HEATING_LIMITS_F[0] <= st_.heating_setpoint <= HEATING_LIMITS_F[1]
        assert COOLING_LIMITS_F[0] <= st_.cooling_setpoint <= COOLING_LIMITS_F[1]
        assert st_.heating_setpoint <= st_.cooling_setpoint - 1.0
        assert a.l_idx == 32 and a.b_idx == 0 and a.w_idx == 0


def test_controller_reset():
    c = RuleBasedController(GRID)
    c.act(None, zone_f(50))
    c.act(None, zone_f(50))
    assert c.state.heating_setpoint > 70
    c.reset()
    assert c.state.heating_setpoint == 70 and not c.state.warmed_up


def test_random_policy_uniform_and_seeded():
    pol = RandomPolicy(GRID, seed=11)
    draws = np.array([pol.draw().indices for _ in range(100_000)])
    for d, n in enumerate(GRID.sizes):
        se = np.sqrt((n * n - 1) / 12.0 / len(draws))
        assert abs(draws[:, d].mean() - (n - 1) / 2) < 5 * se
        assert draws[:, d].min() >= 0 and draws[:, d].max() <= n - 1
    a = [next(g).indices for g in [random_policy(GRID, 3)] for _ in range(20)]
    b = [next(g).indices for g in [random_policy(GRID, 3)] for _ in range(20)]
    assert a == b


def test_ddqn_hvac_is_single_branch():
    cfg = EnvConfig(history_depth=0)
    agent = ddqn_hvac_agent(GRID, cfg.obs_dim, AgentHyper(trunk_sizes=(8,), branch_hidden=4))
    assert agent.config.actions_per_branch == (66,)
    a = agent.act(np.zeros(cfg.obs_dim))
    assert a[1:] == (32, 0, 0)


def test_single_branch_target_reduces_to_double_dqn():
    cfg = neural.NetConfig(input_dim=3, actions_per_branch=(5,), trunk_sizes=(4,), branch_hidden=3)
    online, target = neural.init_xavier(cfg, 0), neural.init_xavier(cfg, 1)
    rng = np.random.default_rng(0)
    batch = {"s_next": rng.normal(size=(7, 3)), "r": rng.normal(size=7), "done": np.zeros(7, bool)}
    y = td_targets(cfg, batch, online, target, 0.9)
    q_on = neural.forward(cfg, online, batch["s_next"]).q_values[0]
    q_tg = neural.forward(cfg, target, batch["s_next"]).q_values[0]
    ref = batch["r"] + 0.9 * q_tg[np.arange(7), q_on.argmax(axis=1)]
    assert np.allclose(y, ref, rtol=0, atol=1e-12)


def test_bdq_with_one_branch_matches_ddqn_hvac():
    cfg = EnvConfig(history_depth=0)
    hyper = AgentHyper(trunk_sizes=(8,), branch_hidden=4, batch_size=4, warmup=4)
    a = ddqn_hvac_agent(GRID, cfg.obs_dim, hyper, seed=2)
    b = BDQAgent(GRID, cfg.obs_dim, hyper, seed=2, enabled=("hvac",))
    rng = np.random.default_rng(0)
    for _ in range(12):
        s, s2 = rng.random(cfg.obs_dim), rng.random(cfg.obs_dim)
        act = (int(rng.integers(66)), 32, 0, 0)
        r = float(rng.normal())
        la = a.observe_transition(s, act, r, s2, False)
        lb = b.observe_transition(s, act, r, s2, False)
        assert la == lb
    assert all(np.array_equal(a.online[k], b.online[k]) for k in a.online)


def test_rule_controller_runs_in_env():
    from zonectl.agent import evaluate
    from zonectl.weather import WeatherProfile, split_blocks, synth_weather

    cfg = EnvConfig()
    blocks = split_blocks(synth_weather(WeatherProfile(t_mean=5, t_seasonal_amp=0), 0, 2), 96)
    recs = evaluate(BuildingEnv(cfg), RuleBasedController(cfg.grid), blocks, 0)
    assert len(recs) == 192
    assert all(r.l == 1.0 and r.b == 0.0 and r.w == 0.0 for r in recs)
