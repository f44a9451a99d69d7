import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svx.errors import NumericError, ShapeError
from svx.network import (AdamState, ConvLayer, GatedBlock, ModelConfig,
                         adam_step, conv1d_forward, gated_block_forward, init_params,
                         l1_loss, load_checkpoint, model_backward, model_forward,
                         named_tensors, save_checkpoint, zero_like_params)


def _layer(kw, cin, cout, dilation=1, w=None, b=None):
    weights = np.zeros((kw, cin, cout)) if w is None else w
    bias = np.zeros(cout) if b is None else b
    return ConvLayer(weights, bias, dilation)


# ---------------------------------------------------------------------------
# conv1d

def test_conv_identity():
    layer = _layer(1, 3, 3, w=np.eye(3)[None])
    x = np.random.default_rng(0).normal(0, 1, (7, 3))
    assert np.allclose(conv1d_forward(x, layer), x)


def test_conv_impulse_response_dilated():
    w = np.zeros((2, 1, 1))
    w[0, 0, 0] = 2.0  # tap on x[t - d]
    w[1, 0, 0] = 3.0  # tap on x[t]
    layer = _layer(2, 1, 1, dilation=4, w=w)
    x = np.zeros((10, 1))
    x[0, 0] = 1.0
    y = conv1d_forward(x, layer)
    expected = np.zeros((10, 1))
    expected[0, 0] = 3.0
    expected[4, 0] = 2.0
    assert np.allclose(y, expected)


def test_conv_zero_input_broadcasts_bias():
    layer = _layer(1, 2, 3, b=np.array([1.0, -1.0, 0.5]))
    y = conv1d_forward(np.zeros((5, 2)), layer)
    assert np.allclose(y, np.tile([1.0, -1.0, 0.5], (5, 1)))


def test_conv_channel_mismatch():
    layer = _layer(1, 3, 3)
    with pytest.raises(ShapeError):
        conv1d_forward(np.zeros((4, 2)), layer)


def test_conv_layer_invariants():
    with pytest.raises(ShapeError):
        ConvLayer(np.zeros((1, 2, 2)), np.zeros(2), dilation=2)
    with pytest.raises(ShapeError):
        ConvLayer(np.zeros((3, 2, 2)), np.zeros(2))


# ---------------------------------------------------------------------------
# gated block

def _zero_block(c=4):
    return GatedBlock(_layer(2, c, c), _layer(2, c, c), _layer(1, c, c), _layer(1, c, c))


def test_gated_block_zero_init_is_identity():
    x = np.random.default_rng(1).normal(0, 1, (6, 4))
    res, skip = gated_block_forward(x, _zero_block())
    assert np.array_equal(res, x)
    assert np.all(skip == 0.0)


def test_gated_block_gate_saturation():
    rng = np.random.default_rng(2)
    c = 4
    block = GatedBlock(
        _layer(2, c, c, w=rng.normal(0, 0.5, (2, c, c))),
        _layer(2, c, c, b=np.full(c, 20.0)),  # sigmoid ~ 1
        _layer(1, c, c, w=np.eye(c)[None]),
        _layer(1, c, c, w=np.eye(c)[None]))
    x = rng.normal(0, 1, (6, c))
    res, _ = gated_block_forward(x, block)
    f = conv1d_forward(x, block.filter_conv)
    assert np.max(np.abs(res - (x + np.tanh(f)))) < 1e-8


def test_gated_activation_bounded():
    rng = np.random.default_rng(3)
    c = 8
    block = GatedBlock(
        _layer(2, c, c, w=rng.normal(0, 3, (2, c, c)), b=rng.normal(0, 3, c)),
        _layer(2, c, c, w=rng.normal(0, 3, (2, c, c)), b=rng.normal(0, 3, c)),
        _layer(1, c, c, w=np.eye(c)[None]), _layer(1, c, c))
    x = rng.normal(0, 10, (20, c))
    res, _ = gated_block_forward(x, block)
    assert np.max(np.abs(res - x)) <= 1.0 + 1e-12  # |z| <= 1


# ---------------------------------------------------------------------------
# model forward

def test_zero_init_model_outputs_post2_bias():
    cfg = ModelConfig(6, 4, 2, 3)
    params = zero_like_params(init_params(cfg, seed=0))
    params.post2.bias[:] = [0.5, -0.25, 0.0]
    y = model_forward(np.random.default_rng(4).uniform(0, 1, (9, 6)), params)
    assert np.allclose(y, np.tile([0.5, -0.25, 0.0], (9, 1)))


def test_receptive_field():
    cfg = ModelConfig(6, 4, 5, 3)
    assert cfg.receptive_field == 32
    params = init_params(cfg, seed=5)
    rng = np.random.default_rng(6)
    x = rng.uniform(0, 1, (80, 6))
    y0 = model_forward(x, params)
    x2 = x.copy()
    t = 25
    x2[t] += 0.37
    y1 = model_forward(x2, params)
    changed = np.any(y0 != y1, axis=1)
    assert not np.any(changed[:t])
    assert not np.any(changed[t + 32:])
    assert changed[t]


def test_batch_consistency():
    cfg = ModelConfig(6, 4, 2, 3)
    params = init_params(cfg, seed=7)
    rng = np.random.default_rng(8)
    a = rng.uniform(0, 1, (12, 6))
    b = rng.uniform(0, 1, (12, 6))
    stacked = model_forward(np.stack([a, b]), params)
    assert np.array_equal(stacked[0], model_forward(a, params))
    assert np.array_equal(stacked[1], model_forward(b, params))


def test_forward_clamp():
    cfg = ModelConfig(4, 3, 1, 2)
    params = zero_like_params(init_params(cfg, seed=0))
    params.post2.bias[:] = [2.0, -2.0]
    y = model_forward(np.zeros((3, 4)), params, clamp=True)
    assert np.array_equal(y, np.tile([1.0, 0.0], (3, 1)))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 10), st.integers(1, 6), st.integers(1, 4),
       st.integers(1, 8), st.integers(1, 40))
def test_shape_chain_property(in_dim, channels, blocks, out_dim, n):
    cfg = ModelConfig(in_dim, channels, blocks, out_dim)
    params = init_params(cfg, seed=0)
    y = model_forward(np.zeros((n, in_dim)), params)
    assert y.shape == (n, out_dim)
    assert np.all(np.isfinite(y))


def test_init_determinism():
    a = init_params(ModelConfig(6, 4, 2, 3), seed=9)
    b = init_params(ModelConfig(6, 4, 2, 3), seed=9)
    for (_, ta), (_, tb) in zip(named_tensors(a), named_tensors(b)):
        assert np.array_equal(ta, tb)


# ---------------------------------------------------------------------------
# loss and gradients

def test_l1_examples():
    x = np.ones((4, 3))
    assert l1_loss(x, x) == 0.0
    assert l1_loss(x + 0.5, x) == pytest.approx(0.5)
    with pytest.raises(ShapeError):
        l1_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_l1_permutation_invariance():
    rng = np.random.default_rng(10)
    p = rng.normal(0, 1, (6, 4))
    t = rng.normal(0, 1, (6, 4))
    perm = rng.permutation(24)
    assert l1_loss(p, t) == pytest.approx(
        l1_loss(p.ravel()[perm].reshape(6, 4), t.ravel()[perm].reshape(6, 4)))


def test_backward_zero_at_exact_fit():
    cfg = ModelConfig(5, 3, 2, 4)
    params = init_params(cfg, seed=11)
    x = np.random.default_rng(12).uniform(0, 1, (10, 5))
    target = model_forward(x, params)
    loss, grads = model_backward(x, target, params)
    assert loss == 0.0
    for _, g in named_tensors(grads):
        assert np.all(g == 0.0)


def _randomized_params(cfg, seed):
    params = init_params(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for name, p in named_tensors(params):
        if name.endswith(".b"):
            p[...] = rng.uniform(-0.3, 0.3, p.shape)  # keep relu/abs kinks away
    return params


def finite_difference_check(cfg, seed, n=8, h=1e-4):
    rng = np.random.default_rng(seed)
    params = _randomized_params(cfg, seed)
    x = rng.uniform(0, 1, (n, cfg.in_dim))
    target = rng.uniform(0, 1, (n, cfg.out_dim)) + 2.0  # residuals away from zero
    _, grads = model_backward(x, target, params)
    max_rel = 0.0
    for (_, p), (_, g) in zip(named_tensors(params), named_tensors(grads)):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lp, _ = model_backward(x, target, params)
            p[idx] = orig - h
            lm, _ = model_backward(x, target, params)
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            max_rel = max(max_rel, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    return max_rel


def test_gradients_match_finite_differences():
    assert finite_difference_check(ModelConfig(5, 3, 2, 4), seed=13) < 1e-4


def test_post2_bias_gradient_closed_form():
    cfg = ModelConfig(5, 3, 2, 4)
    params = _randomized_params(cfg, 14)
    rng = np.random.default_rng(15)
    x = rng.uniform(0, 1, (10, 5))
    target = rng.uniform(0, 1, (10, 4)) + 2.0
    pred = model_forward(x, params)
    _, grads = model_backward(x, target, params)
    expected = np.sign(pred - target).sum(axis=0) / pred.size
    assert np.allclose(grads.post2.bias, expected, atol=1e-12)


# ---------------------------------------------------------------------------
# Adam

def test_adam_zero_gradient_no_change():
    params = init_params(ModelConfig(4, 3, 1, 2), seed=16)
    before = [t.copy() for _, t in named_tensors(params)]
    adam_step(params, zero_like_params(params), AdamState.for_params(params))
    for (_, after), prev in zip(named_tensors(params), before):
        assert np.array_equal(after, prev)


def test_adam_one_step_hand_value():
    params = zero_like_params(init_params(ModelConfig(4, 3, 1, 2), seed=0))
    grads = zero_like_params(params)
    grads.post2.bias[:] = 1.0
    state = AdamState.for_params(params, lr=0.001)
    adam_step(params, grads, state)
    # mhat = 1, vhat = 1: update = -lr / (1 + eps)
    assert np.allclose(params.post2.bias, -0.001 / (1 + 1e-8), rtol=1e-12)
    assert state.t == 1


def test_adam_first_step_sign_property():
    params = init_params(ModelConfig(4, 3, 1, 2), seed=17)
    before = [t.copy() for _, t in named_tensors(params)]
    grads = zero_like_params(params)
    rng = np.random.default_rng(18)
    for _, g in named_tensors(grads):
        g[...] = rng.normal(0, 1, g.shape)
    adam_step(params, grads, AdamState.for_params(params))
    for (_, after), prev, (_, g) in zip(named_tensors(params), before, named_tensors(grads)):
        delta = after - prev
        nz = np.abs(g) > 1e-12
        assert np.all(np.sign(delta[nz]) == -np.sign(g[nz]))


def test_adam_rejects_nonfinite():
    params = init_params(ModelConfig(4, 3, 1, 2), seed=19)
    grads = zero_like_params(params)
    grads.post2.bias[0] = np.nan
    with pytest.raises(NumericError):
        adam_step(params, grads, AdamState.for_params(params))


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_roundtrip_bitexact_forward(tmp_path):
    cfg = ModelConfig(6, 4, 3, 5)
    params = init_params(cfg, seed=20, dtype=np.float32)
    adam = AdamState.for_params(params, lr=0.002)
    adam.t = 7
    path = tmp_path / "m.sscp"
    save_checkpoint(path, params, adam)
    loaded, adam2 = load_checkpoint(path, dtype=np.float32)
    assert adam2.t == 7
    assert adam2.lr == 0.002
    x = np.random.default_rng(21).uniform(0, 1, (15, 6)).astype(np.float32)
    assert np.array_equal(model_forward(x, params), model_forward(x, loaded))


def test_checkpoint_without_adam(tmp_path):
    params = init_params(ModelConfig(4, 3, 1, 2), seed=22, dtype=np.float32)
    path = tmp_path / "m.sscp"
    save_checkpoint(path, params)
    loaded, adam = load_checkpoint(path, dtype=np.float32)
    assert adam is None
    for (_, a), (_, b) in zip(named_tensors(params), named_tensors(loaded)):
        assert np.array_equal(a, b)
