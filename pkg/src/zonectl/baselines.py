"""Reference controllers.

* :class:`RuleBasedController` mirrors a commissioned campus policy: separate
  heating/cooling setpoints in degF that start at (70, 74), are nudged up or
  down together to hold the zone at a target temperature, and stay inside
  their limits. Lights are always full on; blind and window stay shut.
* :func:`ddqn_hvac_agent` is the branching agent restricted to the HVAC branch.
* :class:`RandomPolicy` draws every branch uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import AgentHyper, BDQAgent, Policy
from .env import pinned_indices
from .envsim import ActionGrid, ActionTuple, ZoneState, decode_action

HEATING_LIMITS_F = (65.0, 72.0)
COOLING_LIMITS_F = (72.0, 80.0)
WARMUP_SETPOINTS_F = (70.0, 74.0)
MIN_SEPARATION_F = 1.0


def f_to_c(f: float) -> float:
    return (f - 32.0) * 5.0 / 9.0


def c_to_f(c: float) -> float:
    return c * 9.0 / 5.0 + 32.0


@dataclass
class RuleState:
    heating_setpoint: float = WARMUP_SETPOINTS_F[0]  # degF
    cooling_setpoint: float = WARMUP_SETPOINTS_F[1]  # degF
    heating_integrator: float = 0.0
    cooling_integrator: float = 0.0
    warmed_up: bool = False

    def check(self) -> None:
        lo_h, hi_h = HEATING_LIMITS_F
        lo_c, hi_c = COOLING_LIMITS_F
        ok = (
            lo_h <= self.heating_setpoint <= hi_h
            and lo_c <= self.cooling_setpoint <= hi_c
            and self.heating_setpoint <= self.cooling_setpoint - MIN_SEPARATION_F
        )
        if not ok:
            raise RuntimeError(f"rule-based setpoints violate their limits: {self}")


def _shift(state: RuleState, delta: float) -> None:
    """Move both setpoints by ``delta`` degF, each stopping at its own limit."""
    h = min(max(state.heating_setpoint + delta, HEATING_LIMITS_F[0]), HEATING_LIMITS_F[1])
    c = min(max(state.cooling_setpoint + delta, COOLING_LIMITS_F[0]), COOLING_LIMITS_F[1])
    if h > c - MIN_SEPARATION_F:
        # only reachable when one side is pinned at a limit
        if delta > 0:
            h = c - MIN_SEPARATION_F
        else:
            c = h + MIN_SEPARATION_F
    state.heating_setpoint, state.cooling_setpoint = h, c


def rule_based_step(
    state: RuleState,
    zone: ZoneState,
    grid: ActionGrid,
    target_f: float = 75.0,
    gain_f: float = 0.5,
    tolerance_f: float = 0.5,
) -> ActionTuple:
    """One control step; mutates ``state`` and returns the action to apply.

    The first call only performs the warm-up assignment (70, 74) degF.
    """
    if not state.warmed_up:
        state.heating_setpoint, state.cooling_setpoint = WARMUP_SETPOINTS_F
        state.warmed_up = True
    else:
        t_f = c_to_f(zone.t_in)
        # heating loop asks for more heat when the zone is cold, cooling loop for more cooling when warm
        heat_err = max(0.0, target_f - t_f)
        cool_err = max(0.0, t_f - target_f)
        state.heating_integrator += heat_err
        state.cooling_integrator += cool_err
        if heat_err > tolerance_f:
            _shift(state, gain_f)
        elif cool_err > tolerance_f:
            _shift(state, -gain_f)
    state.check()
    mid_c = f_to_c(0.5 * (state.heating_setpoint + state.cooling_setpoint))
    _, light, blind, window = pinned_indices(grid)
    return decode_action(grid, (grid.nearest_setpoint_index(mid_c), light, blind, window))


class RuleBasedController(Policy):
    name = "rule"

    def __init__(self, grid: ActionGrid, target_f: float = 75.0, gain_f: float = 0.5):
        self.grid = grid
        self.target_f = target_f
        self.gain_f = gain_f
        self.state = RuleState()

    def reset(self) -> None:
        self.state = RuleState()

    def act(self, obs, zone: ZoneState):
        return rule_based_step(self.state, zone, self.grid, self.target_f, self.gain_f).indices


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, grid: ActionGrid, seed: int = 0):
        self.grid = grid
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self) -> None:
        pass

    def draw(self) -> ActionTuple:
        return decode_action(self.grid, [int(self.rng.integers(n)) for n in self.grid.sizes])

    def act(self, obs, zone=None):
        return self.draw().indices


def random_policy(grid: ActionGrid, seed: int):
    """Endless seeded stream of uniformly random actions."""
    policy = RandomPolicy(grid, seed)
    while True:
        yield policy.draw()


def ddqn_hvac_agent(grid: ActionGrid, obs_dim: int, hyper: AgentHyper, seed: int = 0) -> BDQAgent:
    """Single-branch dueling double-Q agent over the HVAC setpoints only."""
    agent = BDQAgent(grid, obs_dim, hyper, seed=seed, enabled=("hvac",))
    agent.name = "ddqn_hvac"
    return agent
