"""Dense tensors with reverse-mode automatic differentiation.

Tensors wrap numpy arrays of rank <= 4 in float32 or float64. Differentiable
operations record their parents and a backward closure on the tensor they
produce; :func:`backward` replays that record once in reverse topological
order (the tape), accumulating gradients into every tensor that requires
them, then severs the graph so intermediate buffers can be collected.

This module holds the primitive ops plus the finite-difference checker;
fused network operations (convolutions, normalizations, attention, ...)
live in :mod:`shiftseq.tensor_autograd.ops`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, UsageError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_MAX_RANK = 4


def _as_array(data, dtype) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    if arr.ndim > _MAX_RANK:
        raise DimensionError(f"rank-{arr.ndim} array exceeds the supported maximum rank {_MAX_RANK}")
    return arr


class Tensor:
    """A dense float array plus optional gradient bookkeeping.

    `data` is the raw numpy payload; `grad` (same shape) is populated by
    :func:`backward` when `requires_grad` is set. Activation tensors carry
    (batch, time, channel) axis semantics by convention.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on a tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add `g` into `t.grad`, allocating on first use. No-op without requires_grad."""
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def track(out_data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap `out_data` as the result of an op over `parents`.

    This is the extension point for fused ops: `backward_fn(g)` receives the
    output gradient and must call :func:`accumulate_grad` on each parent.
    The closure is only recorded when some parent participates in
    differentiation, so inference runs build no graph.
    """
    out = Tensor(out_data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _check_same_dtype(*tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise DimensionError(f"mixed dtypes in one op: {sorted(d.name for d in dtypes)}")


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss, then drop the tape.

    Gradients sum over every use of a tensor. The walk is iterative so deep
    recurrent graphs do not hit the interpreter recursion limit. After the
    walk the recorded graph is severed; a second call on the same loss does
    nothing beyond reseeding `loss.grad`.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward expects a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in topo:
        node._parents = ()
        node._backward = None


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data + b.data

    def bwd(g):
        accumulate_grad(a, unbroadcast(g, a.shape))
        accumulate_grad(b, unbroadcast(g, b.shape))

    return track(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data * b.data

    def bwd(g):
        accumulate_grad(a, unbroadcast(g * b.data, a.shape))
        accumulate_grad(b, unbroadcast(g * a.data, b.shape))

    return track(out, (a, b), bwd)


def scale(t: Tensor, s: float) -> Tensor:
    s = np.asarray(float(s), dtype=t.data.dtype)
    out = t.data * s

    def bwd(g):
        accumulate_grad(t, g * s)

    return track(out, (t,), bwd)


def sum_all(t: Tensor) -> Tensor:
    out = t.data.sum()

    def bwd(g):
        accumulate_grad(t, np.broadcast_to(g, t.shape))

    return track(out, (t,), bwd)


def mean_all(t: Tensor) -> Tensor:
    n = t.data.size
    out = t.data.mean()

    def bwd(g):
        accumulate_grad(t, np.broadcast_to(g / n, t.shape))

    return track(out, (t,), bwd)


def reduce_sum(t: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = t.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        accumulate_grad(t, np.broadcast_to(g, t.shape))

    return track(out, (t,), bwd)


def sigmoid(t: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-t.data))

    def bwd(g):
        accumulate_grad(t, g * out * (1.0 - out))

    return track(out, (t,), bwd)


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)

    def bwd(g):
        accumulate_grad(t, g * (1.0 - out * out))

    return track(out, (t,), bwd)


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = t.data.reshape(shape)
    if out.ndim > _MAX_RANK:
        raise DimensionError(f"reshape to rank {out.ndim} exceeds maximum rank {_MAX_RANK}")

    def bwd(g):
        accumulate_grad(t, g.reshape(t.shape))

    return track(out, (t,), bwd)


def transpose(t: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = np.argsort(axes)
    out = t.data.transpose(axes)

    def bwd(g):
        accumulate_grad(t, g.transpose(inv))

    return track(out, (t,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the two trailing axes.

    Either both operands share identical leading (batch) axes, or `b` is a
    plain 2-D matrix applied to every batch element of `a`.
    """
    _check_same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch axes differ: {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        if b.ndim == 2 and gb.ndim > 2:
            gb = gb.sum(axis=tuple(range(gb.ndim - 2)))
        accumulate_grad(a, ga)
        accumulate_grad(b, gb)

    return track(out, (a, b), bwd)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    _check_same_dtype(*tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def bwd(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + n)
            accumulate_grad(t, g[tuple(index)])
            offset += n

    return track(out, tuple(tensors), bwd)


def select_time(x: Tensor, t: int) -> Tensor:
    """x[:, t, :] for a (batch, time, channel) tensor."""
    if x.ndim != 3:
        raise DimensionError(f"select_time expects rank-3 input, got {x.shape}")
    out = x.data[:, t, :]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[:, t, :] = g
        accumulate_grad(x, full)

    return track(out, (x,), bwd)


def stack_time(frames: list[Tensor]) -> Tensor:
    """Stack per-frame (batch, channel) tensors into (batch, time, channel)."""
    _check_same_dtype(*frames)
    out = np.stack([f.data for f in frames], axis=1)

    def bwd(g):
        for t, f in enumerate(frames):
            accumulate_grad(f, g[:, t, :])

    return track(out, tuple(frames), bwd)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """x[..., start:stop] along the last axis."""
    out = x.data[..., start:stop]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        accumulate_grad(x, full)

    return track(out, (x,), bwd)


def slice_rows(x: Tensor, n: int) -> Tensor:
    """x[:n] along the first axis."""
    out = x.data[:n]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[:n] = g
        accumulate_grad(x, full)

    return track(out, (x,), bwd)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of one analytic-vs-finite-difference comparison."""

    tol: float
    step: float
    per_input: list[float] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_input) if self.per_input else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        per = ", ".join(f"{e:.3e}" for e in self.per_input)
        return f"grad_check {verdict}: max rel err {self.max_rel_err:.3e} (tol {self.tol:.1e}) [{per}]"


def grad_check(f, inputs: list[Tensor], tol: float = 1e-5, step: float = 1e-3,
               seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of `f` against central finite differences.

    `f` maps the given tensors to a tensor of any shape; the output is
    reduced to a scalar through a fixed random linear functional so every
    output coordinate participates. The check passes iff the max relative
    error, with denominator max(|analytic|, |numeric|, 1e-8), stays below
    `tol` for every input. `f` must be a pure function of its tensor
    arguments; run it at float64 for meaningful tolerances.
    """
    probes = [Tensor(inp.data.copy(), requires_grad=True, dtype=inp.data.dtype) for inp in inputs]
    out = f(*probes)
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(out.shape).astype(out.data.dtype)
    loss = sum_all(mul(out, Tensor(r)))
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad for p in probes]

    fd_inputs = [Tensor(inp.data.copy(), dtype=inp.data.dtype) for inp in inputs]

    def objective() -> float:
        return float(np.sum(f(*fd_inputs).data * r))

    report = GradCheckReport(tol=tol, step=step)
    for i, probe in enumerate(fd_inputs):
        flat = probe.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = objective()
            flat[j] = orig - step
            lo = objective()
            flat[j] = orig
            numeric[j] = (hi - lo) / (2.0 * step)
        a = analytic[i].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = np.abs(a - numeric) / denom
        report.per_input.append(float(rel.max()) if rel.size else 0.0)
    return report
