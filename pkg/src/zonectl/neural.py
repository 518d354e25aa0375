"""Branching dueling Q-network in plain numpy.

Layout (batch dimension first everywhere)::

    state -> [dense+ReLU]*trunk -> h
    h -> dense+ReLU -> dense(1)          = V(s)
    h -> dense+ReLU -> dense(n_d)        = A_d(s, .)   for each branch d
    Q_d(s, a) = V(s) + A_d(s, a) - mean_a' A_d(s, a')

Parameters live in a flat ``dict[str, ndarray]`` (float64) so the optimiser
and checkpoint code can treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NetworkError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    actions_per_branch: tuple[int, ...] = (66, 33, 33, 33)
    trunk_sizes: tuple[int, ...] = (512, 256)
    branch_hidden: int = 128

    def __post_init__(self):
        object.__setattr__(self, "actions_per_branch", tuple(int(n) for n in self.actions_per_branch))
        object.__setattr__(self, "trunk_sizes", tuple(int(n) for n in self.trunk_sizes))
        if self.input_dim < 1 or self.branch_hidden < 1:
            raise ValueError("layer sizes must be >= 1")
        if not self.actions_per_branch or min(self.actions_per_branch) < 1:
            raise ValueError("every branch needs at least one action")
        if any(n < 1 for n in self.trunk_sizes):
            raise ValueError("trunk sizes must be >= 1")

    @property
    def n_branches(self) -> int:
        return len(self.actions_per_branch)

    @property
    def latent_dim(self) -> int:
        return self.trunk_sizes[-1] if self.trunk_sizes else self.input_dim

    def layer_shapes(self) -> dict[str, tuple[int, int]]:
        """Weight shapes (fan_in, fan_out) by layer name, in a fixed order."""
        shapes = {}
        prev = self.input_dim
        for i, width in enumerate(self.trunk_sizes):
            shapes[f"trunk{i}"] = (prev, width)
            prev = width
        shapes["value_hidden"] = (prev, self.branch_hidden)
        shapes["value_out"] = (self.branch_hidden, 1)
        for d, n in enumerate(self.actions_per_branch):
            shapes[f"adv{d}_hidden"] = (prev, self.branch_hidden)
            shapes[f"adv{d}_out"] = (self.branch_hidden, n)
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "actions_per_branch": list(self.actions_per_branch),
            "trunk_sizes": list(self.trunk_sizes),
            "branch_hidden": self.branch_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            actions_per_branch=tuple(d["actions_per_branch"]),
            trunk_sizes=tuple(d["trunk_sizes"]),
            branch_hidden=int(d["branch_hidden"]),
        )


Params = dict[str, np.ndarray]


def init_xavier(config: NetConfig, seed: int) -> Params:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, (fan_in, fan_out) in config.layer_shapes().items():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)
    return params


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


@dataclass
class ForwardOutput:
    value: np.ndarray  # (B,)
    advantages: list[np.ndarray]  # per branch (B, n_d)
    q_values: list[np.ndarray]  # per branch (B, n_d)
    cache: dict = field(default_factory=dict, repr=False)


def _dense(x, params, name):
    return x @ params[f"{name}.W"] + params[f"{name}.b"]


def forward(config: NetConfig, params: Params, states: np.ndarray) -> ForwardOutput:
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != config.input_dim:
        raise ValueError(f"state width {x.shape[1]} != input_dim {config.input_dim}")
    cache = {"x": x}
    h = x
    for i in range(len(config.trunk_sizes)):
        h = np.maximum(_dense(h, params, f"trunk{i}"), 0.0)
        cache[f"trunk{i}"] = h
    vh = np.maximum(_dense(h, params, "value_hidden"), 0.0)
    cache["value_hidden"] = vh
    value = _dense(vh, params, "value_out")[:, 0]
    advantages, q_values = [], []
    for d in range(config.n_branches):
        ah = np.maximum(_dense(h, params, f"adv{d}_hidden"), 0.0)
        cache[f"adv{d}_hidden"] = ah
        adv = _dense(ah, params, f"adv{d}_out")
        advantages.append(adv)
        q_values.append(aggregate(value, adv))
    if not np.isfinite(value).all() or not all(np.isfinite(a).all() for a in advantages):
        raise NetworkError("non-finite activations in forward pass")
    return ForwardOutput(value, advantages, q_values, cache)


def aggregate(value: np.ndarray, advantages: np.ndarray) -> np.ndarray:
    """Dueling aggregation for one branch: V + (A - mean A)."""
    return value[:, None] + (advantages - advantages.mean(axis=1, keepdims=True))


def backward(
    config: NetConfig, params: Params, out: ForwardOutput, grad_q: list[np.ndarray]
) -> Params:
    """Gradients of a scalar loss given dLoss/dQ_d for every branch."""
    if len(grad_q) != config.n_branches:
        raise ValueError(f"expected {config.n_branches} branch gradients, got {len(grad_q)}")
    cache = out.cache
    x = cache["x"]
    batch = x.shape[0]
    for d, g in enumerate(grad_q):
        if g.shape != (batch, config.actions_per_branch[d]):
            raise ValueError(f"branch {d} gradient shape {g.shape} mismatches Q shape")
    grads: Params = {}
    h = cache[f"trunk{len(config.trunk_sizes) - 1}"] if config.trunk_sizes else x

    # dQ_d/dV = 1 for every action of every branch
    g_value = sum(g.sum(axis=1) for g in grad_q)[:, None]  # (B, 1)
    dh = _dense_back(g_value, cache["value_hidden"], params, "value_out", grads)
    dh = dh * (cache["value_hidden"] > 0)
    g_latent = _dense_back(dh, h, params, "value_hidden", grads)

    for d, g in enumerate(grad_q):
        g_adv = g - g.mean(axis=1, keepdims=True)
        ah = cache[f"adv{d}_hidden"]
        dah = _dense_back(g_adv, ah, params, f"adv{d}_out", grads) * (ah > 0)
        g_latent = g_latent + _dense_back(dah, h, params, f"adv{d}_hidden", grads)

    g_cur = g_latent
    for i in reversed(range(len(config.trunk_sizes))):
        g_cur = g_cur * (cache[f"trunk{i}"] > 0)
        below = cache[f"trunk{i - 1}"] if i > 0 else x
        g_cur = _dense_back(g_cur, below, params, f"trunk{i}", grads, need_input=i > 0)
    return grads


def _dense_back(g_out, inp, params, name, grads, need_input=True):
    grads[f"{name}.W"] = inp.T @ g_out
    grads[f"{name}.b"] = g_out.sum(axis=0)
    if need_input:
        return g_out @ params[f"{name}.W"].T
    return None


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Params, **kw) -> "AdamState":
        return cls(m=zeros_like(params), v=zeros_like(params), **kw)


def adam_step(params: Params, grads: Params, state: AdamState) -> Params:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise NetworkError(f"non-finite gradient for {k}")
        if k not in params or params[k].shape != g.shape:
            raise ValueError(f"gradient {k} does not match parameters")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, g in grads.items():
        m = state.m.setdefault(k, np.zeros_like(g))
        v = state.v.setdefault(k, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def greedy(out: ForwardOutput) -> np.ndarray:
    """Per-branch argmax indices, shape (B, n_branches)."""
    return np.stack([q.argmax(axis=1) for q in out.q_values], axis=1)
