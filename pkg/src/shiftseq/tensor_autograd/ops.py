"""Network operations built on the autograd engine.

Each op either fuses its forward/backward pair for efficiency (linear,
convolutions, norms, pooling, losses) or composes engine primitives
(attention, the bidirectional LSTM). All ops preserve the input dtype;
run them at float64 for gradient checking and float32 for training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from .engine import (
    Tensor,
    accumulate_grad,
    add,
    concat,
    matmul,
    mul,
    reshape,
    scale,
    select_time,
    sigmoid,
    slice_channels,
    slice_rows,
    stack_time,
    tanh,
    track,
    transpose,
)


def _lead_axes(x: Tensor) -> tuple[int, ...]:
    return tuple(range(x.ndim - 1))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b over the trailing channel axis; x may be (N, Cin) or (B, T, Cin)."""
    if x.ndim not in (2, 3):
        raise DimensionError(f"linear expects rank-2 or rank-3 input, got {x.shape}")
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear weight {w.shape} does not fit input {x.shape}")
    if b.ndim != 1 or b.shape[0] != w.shape[1]:
        raise DimensionError(f"linear bias {b.shape} does not fit weight {w.shape}")
    out = np.matmul(x.data, w.data) + b.data

    def bwd(g):
        accumulate_grad(x, np.matmul(g, w.data.T))
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        accumulate_grad(w, x2.T @ g2)
        accumulate_grad(b, g2.sum(axis=0))

    return track(out, (x, w, b), bwd)


def _same_pad(x: np.ndarray, halo: int) -> np.ndarray:
    b, t, c = x.shape
    padded = np.zeros((b, t + 2 * halo, c), dtype=x.dtype)
    padded[:, halo:halo + t, :] = x
    return padded


def depthwise_conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Per-channel temporal convolution with zero same-padding.

    out[b,t,c] = sum_k x[b, t+k-(K-1)/2, c] * kernel[k,c] + bias[c]
    """
    if x.ndim != 3:
        raise DimensionError(f"depthwise_conv1d expects rank-3 input, got {x.shape}")
    if kernel.ndim != 2 or kernel.shape[1] != x.shape[2]:
        raise DimensionError(f"depthwise kernel {kernel.shape} does not fit input {x.shape}")
    if bias.ndim != 1 or bias.shape[0] != x.shape[2]:
        raise DimensionError(f"depthwise bias {bias.shape} does not fit input {x.shape}")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ConfigError(f"depthwise_conv1d kernel size must be odd, got {k}")
    t = x.shape[1]
    halo = (k - 1) // 2
    xp = _same_pad(x.data, halo)
    out = np.zeros_like(x.data)
    for j in range(k):
        out += xp[:, j:j + t, :] * kernel.data[j]
    out += bias.data

    def bwd(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for j in range(k):
            gxp[:, j:j + t, :] += g * kernel.data[j]
            gk[j] = (xp[:, j:j + t, :] * g).sum(axis=(0, 1))
        accumulate_grad(x, gxp[:, halo:halo + t, :])
        accumulate_grad(kernel, gk)
        accumulate_grad(bias, g.sum(axis=(0, 1)))

    return track(out, (x, kernel, bias), bwd)


def conv1d_full(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Channel-mixing temporal convolution with zero same-padding.

    out[b,t,o] = sum_{k,i} x[b, t+k-(K-1)/2, i] * kernel[k,i,o] + bias[o]
    """
    if x.ndim != 3:
        raise DimensionError(f"conv1d_full expects rank-3 input, got {x.shape}")
    if kernel.ndim != 3 or kernel.shape[1] != x.shape[2]:
        raise DimensionError(f"conv kernel {kernel.shape} does not fit input {x.shape}")
    if bias.ndim != 1 or bias.shape[0] != kernel.shape[2]:
        raise DimensionError(f"conv bias {bias.shape} does not fit kernel {kernel.shape}")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ConfigError(f"conv1d_full kernel size must be odd, got {k}")
    t = x.shape[1]
    halo = (k - 1) // 2
    xp = _same_pad(x.data, halo)
    out = np.zeros(x.shape[:2] + (kernel.shape[2],), dtype=x.data.dtype)
    for j in range(k):
        out += np.matmul(xp[:, j:j + t, :], kernel.data[j])
    out += bias.data

    def bwd(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        for j in range(k):
            gxp[:, j:j + t, :] += np.matmul(g, kernel.data[j].T)
            gk[j] = np.einsum("bti,bto->io", xp[:, j:j + t, :], g)
        accumulate_grad(x, gxp[:, halo:halo + t, :])
        accumulate_grad(kernel, gk)
        accumulate_grad(bias, g.sum(axis=(0, 1)))

    return track(out, (x, kernel, bias), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (batch, time) slice over channels, then scale and shift."""
    if x.shape[-1] != gamma.shape[-1] or gamma.shape != beta.shape or gamma.ndim != 1:
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not fit {x.shape}")
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = centered * inv
    out = gamma.data * xhat + beta.data

    def bwd(g):
        lead = _lead_axes(x)
        accumulate_grad(gamma, (g * xhat).sum(axis=lead))
        accumulate_grad(beta, g.sum(axis=lead))
        gx = g * gamma.data
        gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        accumulate_grad(x, gx)

    return track(out, (x, gamma, beta), bwd)


def batch_norm1d(x: Tensor, gamma: Tensor, beta: Tensor,
                 running_mean: np.ndarray, running_var: np.ndarray,
                 eps: float = 1e-5, momentum: float = 0.1,
                 training: bool = False) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Normalize per channel over the (batch, time) axes.

    Training mode normalizes by batch statistics and returns running stats
    blended with momentum (variance stored unbiased, as is conventional);
    eval mode normalizes by the running stats and returns them unchanged.
    """
    if x.ndim != 3:
        raise DimensionError(f"batch_norm1d expects rank-3 input, got {x.shape}")
    c = x.shape[2]
    for name, arr in (("gamma", gamma.data), ("beta", beta.data),
                      ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (c,):
            raise DimensionError(f"batch_norm1d {name} shape {arr.shape} does not fit input {x.shape}")
    eps = np.asarray(eps, dtype=x.data.dtype)
    if training:
        n = x.shape[0] * x.shape[1]
        if n < 2:
            raise DimensionError("batch_norm1d training mode needs more than one (batch, time) sample")
        mu = x.data.mean(axis=(0, 1))
        centered = x.data - mu
        var = (centered * centered).mean(axis=(0, 1))
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv
        new_mean = (1.0 - momentum) * running_mean + momentum * mu
        new_var = (1.0 - momentum) * running_var + momentum * var * (n / (n - 1))
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean) * inv
        new_mean, new_var = running_mean, running_var
    out = gamma.data * xhat + beta.data

    def bwd(g):
        accumulate_grad(gamma, (g * xhat).sum(axis=(0, 1)))
        accumulate_grad(beta, g.sum(axis=(0, 1)))
        gx = g * gamma.data
        if training:
            gx = inv * (gx - gx.mean(axis=(0, 1))
                        - xhat * (gx * xhat).mean(axis=(0, 1)))
        else:
            gx = gx * inv
        accumulate_grad(x, gx)

    return track(out, (x, gamma, beta), bwd), new_mean, new_var


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    c = np.asarray(_GELU_C, dtype=x.data.dtype)
    a = np.asarray(_GELU_A, dtype=x.data.dtype)
    # x*x instead of x**2: float32 integer-power takes a slow generic path
    sq = x.data * x.data
    u = c * (x.data + a * (sq * x.data))
    th = np.tanh(u)
    out = 0.5 * x.data * (1.0 + th)

    def bwd(g):
        du = c * (1.0 + 3.0 * a * sq)
        accumulate_grad(x, g * (0.5 * (1.0 + th) + 0.5 * x.data * (1.0 - th * th) * du))

    return track(out, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along `axis` (max-subtracted before exponentiation)."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        accumulate_grad(x, out * (g - dot))

    return track(out, (x,), bwd)


def rel_position_bias(table: Tensor, t: int) -> Tensor:
    """Expand a per-head table indexed by clipped signed distance to (H, T, T).

    table has shape (heads, 2*D+1); entry [h, clip(q-k, -D, D) + D] is added
    to the attention logit for query frame q and key frame k.
    """
    if table.ndim != 2 or table.shape[1] % 2 == 0:
        raise DimensionError(f"relative bias table must be (heads, 2*D+1), got {table.shape}")
    d = (table.shape[1] - 1) // 2
    offs = np.arange(t)
    idx = np.clip(offs[:, None] - offs[None, :], -d, d) + d
    out = table.data[:, idx]

    def bwd(g):
        gt = np.zeros_like(table.data)
        heads = table.shape[0]
        hidx = np.arange(heads)[:, None, None]
        np.add.at(gt, (hidx, idx[None, :, :]), g)
        accumulate_grad(table, gt)

    return track(out, (table,), bwd)


@dataclass
class AttentionParams:
    """Projection weights for multi-head self-attention.

    `rel_table` (heads, 2*D+1) serves relative position mode; `abs_table`
    (max_len, C) serves absolute mode; both None for position mode "none".
    """

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    rel_table: Tensor | None = None
    abs_table: Tensor | None = None


def mhsa(x: Tensor, params: AttentionParams, heads: int, pos_mode: str = "relative") -> Tensor:
    """Multi-head scaled dot-product self-attention with optional position bias."""
    if x.ndim != 3:
        raise DimensionError(f"mhsa expects rank-3 input, got {x.shape}")
    b, t, c = x.shape
    if heads < 1 or c % heads != 0:
        raise ConfigError(f"channel count {c} is not divisible by heads {heads}")
    if pos_mode not in ("relative", "absolute", "none"):
        raise ConfigError(f"unknown position mode {pos_mode!r}")
    if pos_mode == "relative" and params.rel_table is None:
        raise ConfigError("relative position mode needs a rel_table")
    if pos_mode == "absolute":
        if params.abs_table is None:
            raise ConfigError("absolute position mode needs an abs_table")
        if params.abs_table.shape[0] < t:
            raise DimensionError(
                f"sequence length {t} exceeds the absolute position table ({params.abs_table.shape[0]})")
        x = add(x, slice_rows(params.abs_table, t))
    head_dim = c // heads

    def split(p: Tensor) -> Tensor:
        return transpose(reshape(p, (b, t, heads, head_dim)), (0, 2, 1, 3))

    q = split(linear(x, params.wq, params.bq))
    k = split(linear(x, params.wk, params.bk))
    v = split(linear(x, params.wv, params.bv))
    logits = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
    if pos_mode == "relative":
        logits = add(logits, rel_position_bias(params.rel_table, t))
    attn = softmax(logits, axis=-1)
    mixed = matmul(attn, v)
    merged = reshape(transpose(mixed, (0, 2, 1, 3)), (b, t, c))
    return linear(merged, params.wo, params.bo)


def avg_pool_mixer(x: Tensor, window: int = 3) -> Tensor:
    """Temporal average pooling minus identity.

    Each frame is replaced by the mean of the frames inside its window
    (boundary windows average over the valid frames only), and the input is
    subtracted so a residual branch carries only the mixing delta.
    """
    if x.ndim != 3:
        raise DimensionError(f"avg_pool_mixer expects rank-3 input, got {x.shape}")
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"pooling window must be odd and positive, got {window}")
    t = x.shape[1]
    r = window // 2
    positions = np.arange(t)
    counts = (np.minimum(positions + r, t - 1) - np.maximum(positions - r, 0) + 1)
    counts = counts.astype(x.data.dtype)[None, :, None]
    sums = np.zeros_like(x.data)
    for off in range(-r, r + 1):
        if off >= 0:
            sums[:, :t - off, :] += x.data[:, off:, :]
        else:
            sums[:, -off:, :] += x.data[:, :t + off, :]
    out = sums / counts - x.data

    def bwd(g):
        gavg = g / counts
        gx = np.zeros_like(x.data)
        for off in range(-r, r + 1):
            if off >= 0:
                gx[:, off:, :] += gavg[:, :t - off, :]
            else:
                gx[:, :t + off, :] += gavg[:, -off:, :]
        accumulate_grad(x, gx - g)

    return track(out, (x,), bwd)


@dataclass
class LstmDirection:
    """One direction's LSTM parameters, gate order (input, forget, cell, output).

    w_ih: (C, 4H); w_hh: (H, 4H); b: (4H,). One shared bias per gate.
    """

    w_ih: Tensor
    w_hh: Tensor
    b: Tensor


def _lstm_pass(x: Tensor, p: LstmDirection, reverse: bool) -> list[Tensor]:
    b, t, c = x.shape
    hidden = p.w_hh.shape[0]
    if p.w_ih.shape != (c, 4 * hidden) or p.w_hh.shape != (hidden, 4 * hidden) or p.b.shape != (4 * hidden,):
        raise DimensionError(
            f"lstm parameter shapes {p.w_ih.shape}/{p.w_hh.shape}/{p.b.shape} do not fit input {x.shape}")
    h = Tensor(np.zeros((b, hidden), dtype=x.data.dtype))
    cell = Tensor(np.zeros((b, hidden), dtype=x.data.dtype))
    order = range(t - 1, -1, -1) if reverse else range(t)
    outputs: list[Tensor | None] = [None] * t
    for step in order:
        xt = select_time(x, step)
        pre = add(add(matmul(xt, p.w_ih), matmul(h, p.w_hh)), p.b)
        gi = sigmoid(slice_channels(pre, 0, hidden))
        gf = sigmoid(slice_channels(pre, hidden, 2 * hidden))
        gc = tanh(slice_channels(pre, 2 * hidden, 3 * hidden))
        go = sigmoid(slice_channels(pre, 3 * hidden, 4 * hidden))
        cell = add(mul(gf, cell), mul(gi, gc))
        h = mul(go, tanh(cell))
        outputs[step] = h
    return outputs  # type: ignore[return-value]


def bilstm(x: Tensor, forward: LstmDirection, backward: LstmDirection) -> Tensor:
    """Bidirectional LSTM over time; per-direction outputs concatenated on channels.

    Standard gates (sigmoid input/forget/output, tanh cell) with zero initial
    states; output shape (B, T, 2H).
    """
    if x.ndim != 3:
        raise DimensionError(f"bilstm expects rank-3 input, got {x.shape}")
    fwd = _lstm_pass(x, forward, reverse=False)
    bwd = _lstm_pass(x, backward, reverse=True)
    return concat([stack_time(fwd), stack_time(bwd)], axis=2)


def mean_pool_time(x: Tensor, lengths) -> Tensor:
    """Average over the first `lengths[b]` frames of each sequence."""
    if x.ndim != 3:
        raise DimensionError(f"mean_pool_time expects rank-3 input, got {x.shape}")
    b, t, _ = x.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (b,):
        raise DimensionError(f"lengths shape {lengths.shape} does not match batch {b}")
    if lengths.min(initial=1) < 1 or lengths.max(initial=1) > t:
        raise DimensionError(f"lengths must lie in [1, {t}], got {lengths.tolist()}")
    mask = (np.arange(t)[None, :] < lengths[:, None]).astype(x.data.dtype)
    denom = lengths.astype(x.data.dtype)[:, None]
    out = (x.data * mask[:, :, None]).sum(axis=1) / denom

    def bwd(g):
        accumulate_grad(x, mask[:, :, None] * (g / denom)[:, None, :])

    return track(out, (x,), bwd)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects rank-2 logits, got {logits.shape}")
    b, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise DimensionError(f"labels must lie in [0, {k}), got {labels.tolist()}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    nll = np.log(e.sum(axis=1)) - shifted[rows, labels]
    out = np.asarray(nll.mean(), dtype=logits.data.dtype)

    def bwd(g):
        glogits = probs.copy()
        glogits[rows, labels] -= 1.0
        accumulate_grad(logits, glogits * (g / b))

    return track(out, (logits,), bwd)
