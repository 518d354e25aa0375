import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import numeric_grad, q_values_oracle
from zonectl import neural
from zonectl.neural import AdamState, NetConfig, NetworkError, adam_step, aggregate, backward, forward

SMALL = NetConfig(input_dim=4, actions_per_branch=(3, 3), trunk_sizes=(6, 5), branch_hidden=4)


def test_xavier_init():
    cfg = NetConfig(input_dim=60)
    a, b = neural.init_xavier(cfg, 3), neural.init_xavier(cfg, 3)
    for name, (fan_in, fan_out) in cfg.layer_shapes().items():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        assert a[f"{name}.W"].shape == (fan_in, fan_out)
        assert np.abs(a[f"{name}.W"]).max() <= limit
        assert not a[f"{name}.b"].any()
        assert np.array_equal(a[f"{name}.W"], b[f"{name}.W"])
    assert cfg.layer_shapes()["trunk0"] == (60, 512) and cfg.layer_shapes()["adv0_out"] == (128, 66)


def test_aggregate_example():
    q = aggregate(np.array([5.0]), np.array([[1.0, 3.0]]))
    assert q.tolist() == [[4.0, 6.0]]
    shifted = aggregate(np.array([5.0]), np.array([[8.0, 10.0]]))
    assert np.array_equal(q, shifted)


def test_zero_network():
    params = neural.zeros_like(neural.init_xavier(SMALL, 0))
    out = forward(SMALL, params, np.ones((3, 4)))
    assert not out.value.any() and all(not q.any() for q in out.q_values)


def test_forward_matches_loop_oracle_and_rows():
    params = neural.init_xavier(SMALL, 1)
    for k in params:
        if k.endswith(".b"):
            params[k] = np.random.default_rng(2).normal(size=params[k].shape)
    x = np.random.default_rng(3).normal(size=(5, 4))
    out = forward(SMALL, params, x)
    for i in range(5):
        ref = q_values_oracle(SMALL, params, x[i])
        row = forward(SMALL, params, x[i])
        for d in range(2):
            assert np.allclose(out.q_values[d][i], ref[d], atol=1e-12)
            assert np.allclose(row.q_values[d][0], out.q_values[d][i], rtol=0, atol=1e-12)


def test_forward_rejects_bad_width():
    with pytest.raises(ValueError):
        forward(SMALL, neural.init_xavier(SMALL, 0), np.zeros((1, 5)))


def test_forward_non_finite():
    params = neural.init_xavier(SMALL, 0)
    params["value_out.b"][:] = np.inf
    with pytest.raises(NetworkError):
        forward(SMALL, params, np.zeros(4))


def _random_params(cfg, seed):
    p = neural.init_xavier(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    for k in p:
        if k.endswith(".b"):
            p[k] = rng.normal(0, 0.3, size=p[k].shape)
    return p


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = _random_params(SMALL, seed)
    x = rng.normal(size=(3, 4))
    coef = [rng.normal(size=(3, 3)) for _ in range(2)]

    def scalar():
        out = forward(SMALL, params, x)
        return sum(float((c * q).sum()) for c, q in zip(coef, out.q_values))

    analytic = backward(SMALL, params, forward(SMALL, params, x), coef)
    numeric = numeric_grad(scalar, params)
    for k in params:
        a, n = analytic[k], numeric[k]
        assert np.linalg.norm(a - n) <= 1e-4 * max(np.linalg.norm(a), np.linalg.norm(n), 1e-8), k


def test_backward_zero_gradient():
    params = _random_params(SMALL, 0)
    out = forward(SMALL, params, np.ones((2, 4)))
    grads = backward(SMALL, params, out, [np.zeros((2, 3)), np.zeros((2, 3))])
    assert all(not g.any() for g in grads.values())


def test_value_bias_gradient_sums_upstream():
    cfg = NetConfig(input_dim=2, actions_per_branch=(3, 2), trunk_sizes=(), branch_hidden=2)
    params = _random_params(cfg, 4)
    x = np.random.default_rng(0).normal(size=(4, 2))
    g = [np.random.default_rng(1).normal(size=(4, 3)), np.random.default_rng(2).normal(size=(4, 2))]
    grads = backward(cfg, params, forward(cfg, params, x), g)
    assert grads["value_out.b"][0] == pytest.approx(sum(gi.sum() for gi in g), rel=1e-12)


def test_backward_shape_mismatch():
    params = _random_params(SMALL, 0)
    out = forward(SMALL, params, np.ones((2, 4)))
    with pytest.raises(ValueError):
        backward(SMALL, params, out, [np.zeros((2, 3))])
    with pytest.raises(ValueError):
        backward(SMALL, params, out, [np.zeros((2, 3)), np.zeros((2, 2))])


def test_adam_zero_gradient_fixed_point():
    params = _random_params(SMALL, 0)
    before = neural.copy_params(params)
    st_ = AdamState.for_params(params)
    adam_step(params, neural.zeros_like(params), st_)
    assert all(np.array_equal(before[k], params[k]) for k in params)


def test_adam_first_step_magnitude():
    params = {"w": np.array([1.0, -2.0, 0.5])}
    grads = {"w": np.array([3.0, -0.01, 100.0])}
    st_ = AdamState.for_params(params, lr=1e-3)
    adam_step(params, grads, st_)
    # bias-corrected first step: lr * g / (|g| + eps)
    expected = np.array([1.0, -2.0, 0.5]) - 1e-3 * grads["w"] / (np.abs(grads["w"]) + 1e-8)
    assert np.allclose(params["w"], expected, rtol=0, atol=1e-12)


def test_adam_deterministic_and_rejects_nan():
    def run():
        p = _random_params(SMALL, 5)
        s = AdamState.for_params(p)
        for i in range(5):
            g = {k: np.full_like(v, 0.1 * (i + 1)) for k, v in p.items()}
            adam_step(p, g, s)
        return p

    a, b = run(), run()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    p = _random_params(SMALL, 5)
    bad = {k: np.full_like(v, np.nan) for k, v in p.items()}
    with pytest.raises(NetworkError):
        adam_step(p, bad, AdamState.for_params(p))


def test_config_round_trip():
    cfg = NetConfig(input_dim=60, actions_per_branch=(6, 5, 5, 5), trunk_sizes=(128, 64), branch_hidden=64)
    assert NetConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        NetConfig(input_dim=0)
