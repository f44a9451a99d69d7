"""Non-autoregressive dilated gated convolutional estimator.

Two 1x1 input layers, a stack of gated width-2 dilated convolution blocks
with residual and skip connections, and a two-layer 1x1 post-network over
the skip sum. Forward, reverse-mode gradients and the Adam update are all
implemented here directly on numpy arrays; no autodiff framework.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, NumericError, ShapeError


@dataclass
class ConvLayer:
    """1-d convolution along time. weights: (kernel_width, in_ch, out_ch).

    For kernel width 2 with dilation d, out[t] = W0 @ x[t-d] + W1 @ x[t] + b,
    with x[t-d] taken as zero for t < d (left zero-padding keeps the frame
    count unchanged).
    """

    weights: np.ndarray
    bias: np.ndarray
    dilation: int = 1

    def __post_init__(self):
        if self.weights.ndim != 3 or self.weights.shape[0] not in (1, 2):
            raise ShapeError(f"conv weights must be (1|2, in, out), got {self.weights.shape}")
        if self.weights.shape[0] == 1 and self.dilation != 1:
            raise ShapeError("1x1 convolutions must have dilation 1")
        if self.dilation < 1:
            raise ShapeError("dilation must be positive")


@dataclass
class GatedBlock:
    filter_conv: ConvLayer   # tanh path
    gate_conv: ConvLayer     # sigmoid path
    residual_proj: ConvLayer
    skip_proj: ConvLayer


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = 513
    channels: int = 128
    n_blocks: int = 5
    out_dim: int = 66

    @property
    def receptive_field(self) -> int:
        # left-padded width-2 kernels with dilations 1, 2, ..., 2^(k-1)
        return 1 + (2 ** self.n_blocks - 1)


@dataclass
class ModelParams:
    input1: ConvLayer
    input2: ConvLayer
    blocks: list
    post1: ConvLayer
    post2: ConvLayer
    config: ModelConfig


def _glorot(rng, kw, cin, cout, dtype):
    limit = np.sqrt(6.0 / (kw * cin + cout))
    return rng.uniform(-limit, limit, size=(kw, cin, cout)).astype(dtype)


def init_params(cfg: ModelConfig = ModelConfig(), seed: int = 0,
                dtype=np.float64) -> ModelParams:
    """Seeded uniform Glorot weights, zero biases."""
    rng = np.random.default_rng(seed)
    c = cfg.channels

    def layer(kw, cin, cout, dilation=1):
        return ConvLayer(_glorot(rng, kw, cin, cout, dtype),
                         np.zeros(cout, dtype=dtype), dilation)

    blocks = [GatedBlock(layer(2, c, c, 2 ** j), layer(2, c, c, 2 ** j),
                         layer(1, c, c), layer(1, c, c))
              for j in range(cfg.n_blocks)]
    return ModelParams(layer(1, cfg.in_dim, c), layer(1, c, c), blocks,
                       layer(1, c, c), layer(1, c, cfg.out_dim), cfg)


def zero_like_params(params: ModelParams) -> ModelParams:
    def zl(l):
        return ConvLayer(np.zeros_like(l.weights), np.zeros_like(l.bias), l.dilation)

    return ModelParams(zl(params.input1), zl(params.input2),
                       [GatedBlock(zl(b.filter_conv), zl(b.gate_conv),
                                   zl(b.residual_proj), zl(b.skip_proj))
                        for b in params.blocks],
                       zl(params.post1), zl(params.post2), params.config)


def named_tensors(params: ModelParams):
    """Fixed-order (name, array) walk over every parameter tensor."""
    out = [("input1.w", params.input1.weights), ("input1.b", params.input1.bias),
           ("input2.w", params.input2.weights), ("input2.b", params.input2.bias)]
    for j, b in enumerate(params.blocks):
        for part, layer in (("filter", b.filter_conv), ("gate", b.gate_conv),
                            ("res", b.residual_proj), ("skip", b.skip_proj)):
            out.append((f"block{j}.{part}.w", layer.weights))
            out.append((f"block{j}.{part}.b", layer.bias))
    out += [("post1.w", params.post1.weights), ("post1.b", params.post1.bias),
            ("post2.w", params.post2.weights), ("post2.b", params.post2.bias)]
    return out


# ---------------------------------------------------------------------------
# Forward / backward primitives. x is (batch, frames, channels).

def _as_batched(x):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected (frames, ch) or (batch, frames, ch), got {x.shape}")


def _shifted(x, d):
    """x delayed by d frames along time, left-padded with zeros."""
    out = np.zeros_like(x)
    if x.shape[1] > d:
        out[:, d:] = x[:, :-d]
    return out


def _conv_fwd(x, layer: ConvLayer, x_shifted=None):
    kw, cin, cout = layer.weights.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"conv expects {cin} input channels, got {x.shape[-1]}")
    b, t, _ = x.shape
    # single large GEMMs over the flattened (batch * time) axis
    y = x.reshape(b * t, cin) @ layer.weights[0 if kw == 1 else 1]
    if kw == 2:
        if x_shifted is None:
            x_shifted = _shifted(x, layer.dilation)
        y += x_shifted.reshape(b * t, cin) @ layer.weights[0]
    y += layer.bias
    return y.reshape(b, t, cout)


def _conv_bwd(x, dy, layer: ConvLayer, grad: ConvLayer, need_dx: bool = True,
              x_shifted=None):
    """Accumulates weight/bias grads into `grad`; returns dx (or None)."""
    kw = layer.weights.shape[0]
    b, t, cin = x.shape
    cout = dy.shape[-1]
    xf = x.reshape(b * t, cin)
    dyf = dy.reshape(b * t, cout)
    grad.bias += dyf.sum(axis=0)
    if kw == 1:
        grad.weights[0] += xf.T @ dyf
        return (dyf @ layer.weights[0].T).reshape(b, t, cin) if need_dx else None
    d = layer.dilation
    grad.weights[1] += xf.T @ dyf
    if x_shifted is None:
        x_shifted = _shifted(x, d)
    grad.weights[0] += x_shifted.reshape(b * t, cin).T @ dyf
    if not need_dx:
        return None
    dx = (dyf @ layer.weights[1].T).reshape(b, t, cin)
    if t > d:
        back = (dyf @ layer.weights[0].T).reshape(b, t, cin)
        dx[:, :-d] += back[:, d:]
    return dx


def conv1d_forward(x, layer: ConvLayer):
    xb, squeeze = _as_batched(x)
    y = _conv_fwd(xb, layer)
    return y[0] if squeeze else y


def gated_block_forward(x, block: GatedBlock):
    """Returns (residual_out, skip_out): z = tanh(f(x)) * sigmoid(g(x))."""
    xb, squeeze = _as_batched(x)
    zf = np.tanh(_conv_fwd(xb, block.filter_conv))
    zg = _sigmoid(_conv_fwd(xb, block.gate_conv))
    z = zf * zg
    res = xb + _conv_fwd(z, block.residual_proj)
    skip = _conv_fwd(z, block.skip_proj)
    if squeeze:
        return res[0], skip[0]
    return res, skip


def _sigmoid(x):
    # tanh form avoids exp overflow for large negative inputs
    return 0.5 * np.tanh(0.5 * x) + 0.5


def model_forward(x, params: ModelParams, clamp: bool = False):
    """Map normalized spectrogram frames to feature-space outputs.

    clamp=True bounds outputs to [0, 1]; use at inference only.
    """
    xb, squeeze = _as_batched(np.asarray(x, dtype=params.input1.weights.dtype))
    if xb.shape[-1] != params.config.in_dim:
        raise ShapeError(f"expected input dim {params.config.in_dim}, got {xb.shape[-1]}")
    h = _conv_fwd(_conv_fwd(xb, params.input1), params.input2)
    skip_sum = None
    for b in params.blocks:
        zf = np.tanh(_conv_fwd(h, b.filter_conv))
        zg = _sigmoid(_conv_fwd(h, b.gate_conv))
        z = zf * zg
        h = h + _conv_fwd(z, b.residual_proj)
        s = _conv_fwd(z, b.skip_proj)
        skip_sum = s if skip_sum is None else skip_sum + s
    r1 = np.maximum(skip_sum, 0.0)
    r2 = np.maximum(_conv_fwd(r1, params.post1), 0.0)
    y = _conv_fwd(r2, params.post2)
    if clamp:
        y = np.clip(y, 0.0, 1.0)
    return y[0] if squeeze else y


def l1_loss(pred, target) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def model_backward(x, target, params: ModelParams):
    """Loss and exact reverse-mode gradients of l1_loss(model_forward(x), target).

    The subgradient of |r| at r = 0 is taken as 0.
    """
    dtype = params.input1.weights.dtype
    xb, _ = _as_batched(np.asarray(x, dtype=dtype))
    tb, _ = _as_batched(np.asarray(target, dtype=dtype))

    # forward with caches
    h0 = _conv_fwd(xb, params.input1)
    h1 = _conv_fwd(h0, params.input2)
    h = h1
    caches = []
    skip_sum = None
    for j, b in enumerate(params.blocks):
        hs = _shifted(h, b.filter_conv.dilation)  # shared by filter and gate
        zf = np.tanh(_conv_fwd(h, b.filter_conv, hs))
        zg = _sigmoid(_conv_fwd(h, b.gate_conv, hs))
        z = zf * zg
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite activation in block {j}")
        res = h + _conv_fwd(z, b.residual_proj)
        s = _conv_fwd(z, b.skip_proj)
        caches.append((h, hs, zf, zg, z))
        skip_sum = s if skip_sum is None else skip_sum + s
        h = res
    r1 = np.maximum(skip_sum, 0.0)
    p1 = _conv_fwd(r1, params.post1)
    r2 = np.maximum(p1, 0.0)
    y = _conv_fwd(r2, params.post2)

    resid = y - tb
    loss = float(np.mean(np.abs(resid)))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss at the output layer")

    grads = zero_like_params(params)
    dy = (np.sign(resid) / resid.size).astype(dtype)

    dr2 = _conv_bwd(r2, dy, params.post2, grads.post2)
    dp1 = dr2 * (p1 > 0)
    dr1 = _conv_bwd(r1, dp1, params.post1, grads.post1)
    dskip = dr1 * (skip_sum > 0)

    dh = np.zeros_like(h)
    for j in range(len(params.blocks) - 1, -1, -1):
        b = params.blocks[j]
        g = grads.blocks[j]
        h_in, hs, zf, zg, z = caches[j]
        dz = _conv_bwd(z, dskip, b.skip_proj, g.skip_proj)
        dz += _conv_bwd(z, dh, b.residual_proj, g.residual_proj)
        df = np.multiply(dz, zg)
        df *= 1.0 - zf * zf
        dg = np.multiply(dz, zf)
        dg *= zg
        dg *= 1.0 - zg
        dh = dh + _conv_bwd(h_in, df, b.filter_conv, g.filter_conv, x_shifted=hs)
        dh += _conv_bwd(h_in, dg, b.gate_conv, g.gate_conv, x_shifted=hs)
    dh0 = _conv_bwd(h0, dh, params.input2, grads.input2)
    _conv_bwd(xb, dh0, params.input1, grads.input1, need_dx=False)
    return loss, grads


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, lr=1e-3, beta1=0.9, beta2=0.999,
                   epsilon=1e-8):
        tensors = [a for _, a in named_tensors(params)]
        return cls([np.zeros_like(a) for a in tensors],
                   [np.zeros_like(a) for a in tensors], 0, lr, beta1, beta2, epsilon)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState):
    """One Adam update, in place on the parameter arrays. Returns (params, state)."""
    p_tensors = [a for _, a in named_tensors(params)]
    g_tensors = [a for _, a in named_tensors(grads)]
    for g in g_tensors:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(p_tensors, g_tensors, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


# ---------------------------------------------------------------------------
# Checkpoint file (SSCP)

_MAGIC = b"SSCP"
_VERSION = 1


def _write_tensor(f, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    f.write(struct.pack("<I", len(nb)) + nb)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_tensor(f, dtype):
    (nlen,) = struct.unpack("<I", f.read(4))
    name = f.read(nlen).decode("utf-8")
    (rank,) = struct.unpack("<I", f.read(4))
    dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
    count = int(np.prod(dims)) if rank else 1
    arr = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(dims).astype(dtype)
    return name, arr


def save_checkpoint(path, params: ModelParams, adam: AdamState | None = None) -> None:
    cfg = params.config
    tensors = named_tensors(params)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<7I", _VERSION, cfg.in_dim, cfg.channels, cfg.n_blocks,
                            cfg.out_dim, 1, 2))  # kernel widths: 1x1 layers, block convs
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            _write_tensor(f, name, arr)
        if adam is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            f.write(struct.pack("<I", adam.t))
            f.write(struct.pack("<4d", adam.lr, adam.beta1, adam.beta2, adam.epsilon))
            for arr in adam.m:
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
            for arr in adam.v:
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float64):
    """Returns (params, adam_state_or_None)."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        version, in_dim, channels, n_blocks, out_dim, _, _ = struct.unpack("<7I", f.read(28))
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        cfg = ModelConfig(in_dim, channels, n_blocks, out_dim)
        params = init_params(cfg, seed=0, dtype=dtype)
        expected = named_tensors(params)
        (n_tensors,) = struct.unpack("<I", f.read(4))
        if n_tensors != len(expected):
            raise FormatError(f"{path}: expected {len(expected)} tensors, found {n_tensors}")
        for name, arr in expected:
            got_name, got = _read_tensor(f, dtype)
            if got_name != name or got.shape != arr.shape:
                raise FormatError(f"{path}: tensor mismatch at {got_name!r}")
            arr[...] = got
        (has_adam,) = struct.unpack("<B", f.read(1))
        adam = None
        if has_adam:
            (t,) = struct.unpack("<I", f.read(4))
            lr, b1, b2, eps = struct.unpack("<4d", f.read(32))
            adam = AdamState.for_params(params, lr, b1, b2, eps)
            adam.t = t
            for dest in (adam.m, adam.v):
                for arr in dest:
                    raw = np.frombuffer(f.read(4 * arr.size), dtype="<f4")
                    arr[...] = raw.reshape(arr.shape).astype(dtype)
    return params, adam
