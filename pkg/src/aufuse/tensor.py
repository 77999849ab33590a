"""Minimal dense-tensor reverse-mode autodiff engine on numpy.

Every learnable stage of the pipeline (encoders, attention, fusion
weights, TCN, MLP head) runs on this. Values are float32 by default;
the finite-difference gradient checker builds float64 graphs.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_FLOAT_TYPES = (np.float32, np.float64)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense n-d array with an optional gradient and a backward rule.

    Graph recording is implicit: each op output keeps references to its
    inputs and a closure computing the local input gradients, so a
    backward pass is a reverse-topological replay that accumulates
    gradients exactly once per input use.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_prev", "_backward")

    def __init__(self, data, requires_grad=False, _prev=(), op="leaf"):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad and op == "leaf" else None
        self.op = op
        self._prev = _prev
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad_(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    # -- graph walk ----------------------------------------------------

    def backward(self):
        """Populate grads of everything this scalar depends on."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        order = trace(self)
        for node in order:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
        self.grad += 1.0
        for node in reversed(order):
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._prev, grads):
                if g is None:
                    continue
                # in-place keeps 0-d grads as arrays (numpy would collapse
                # `0-d + 0-d` to a scalar)
                parent.grad += np.asarray(g, dtype=parent.data.dtype)


def trace(root: Tensor) -> list[Tensor]:
    """Topologically ordered list of graph nodes ending at ``root``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


# -- construction -------------------------------------------------------


def tensor(data, requires_grad=False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def zeros(shape, requires_grad=False, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def make_op(data, parents, backward, op) -> Tensor:
    """Record one operation: output data, parent tensors, local backward rule.

    ``backward`` maps the output gradient to a tuple of per-parent
    gradients (None for non-differentiable parents). This is the
    extension point other modules use for their own ops.
    """
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    out = Tensor(data, requires_grad=True, _prev=tuple(parents), op=op)
    out._backward = backward
    return out





def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise / arithmetic -------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_op(a.data + b.data, (a, b), backward, "add")


def mul(a: Tensor, b) -> Tensor:
    b = _lift(b, a)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return make_op(a.data * b.data, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return make_op(np.where(mask, a.data, 0.0), (a,), backward, "relu")


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU; the backward rule differentiates the approximation."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)

    def backward(g):
        sech2 = 1.0 - t * t
        local = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        return (g * local,)

    return make_op(0.5 * x * (1.0 + t), (a,), backward, "gelu")


def where_const(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Keep ``a`` where mask is true, a constant elsewhere (no grad there)."""
    mask = np.asarray(mask, dtype=bool)

    def backward(g):
        return (np.where(mask, g, 0.0),)

    return make_op(np.where(mask, a.data, a.data.dtype.type(value)), (a,), backward, "where_const")


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; randomness comes from the caller's generator."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate).astype(a.data.dtype)
    scale = 1.0 / (1.0 - rate)

    def backward(g):
        return (g * keep * scale,)

    return make_op(a.data * keep * scale, (a,), backward, "dropout")


# -- shape ops -----------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def backward(g):
        return (g.reshape(old),)

    return make_op(a.data.reshape(shape), (a,), backward, "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inverse = np.argsort(axes)

    def backward(g):
        return (g.transpose(inverse),)

    return make_op(a.data.transpose(axes), (a,), backward, "transpose")


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""

    def backward(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return make_op(a.data.sum(), (a,), backward, "sum")


def mean_over(a: Tensor, axes) -> Tensor:
    """Arithmetic mean over the given axes (dims dropped)."""
    axes = tuple(axes)
    count = int(np.prod([a.data.shape[ax] for ax in axes]))
    kept = a.data.mean(axis=axes)

    def backward(g):
        expanded = np.expand_dims(g, axes)
        return (np.broadcast_to(expanded / count, a.data.shape).copy(),)

    return make_op(kept, (a,), backward, "mean_over")


# -- linear algebra -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return make_op(a.data @ b.data, (a, b), backward, "matmul")


# -- normalization / activations over the channel axis --------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    norm = centered * inv

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * norm).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gy = g * gamma.data
        dx = inv * (
            gy
            - gy.mean(axis=-1, keepdims=True)
            - norm * (gy * norm).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return make_op(norm * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


def softmax(z: Tensor) -> Tensor:
    """Stable softmax over the last axis."""
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_op(y, (z,), backward, "softmax")


_PROB_FLOOR = 1e-12


def cross_entropy(prob: Tensor, target) -> Tensor:
    """Mean negative log-likelihood of the target class.

    ``target`` is an integer class-index array shaped like ``prob`` minus
    its last axis, or a one-hot array shaped like ``prob``. Composed with
    ``softmax`` the two backward rules reduce to the fused (p - t)/n rule.
    """
    k = prob.data.shape[-1]
    flat = prob.data.reshape(-1, k)
    target = np.asarray(target)
    if target.shape == prob.data.shape and target.dtype in _FLOAT_TYPES:
        onehot = target.reshape(-1, k)
        idx = onehot.argmax(axis=1)
    else:
        if not np.issubdtype(target.dtype, np.integer):
            target = target.astype(np.int64)
        if target.shape != prob.data.shape[:-1]:
            raise ValueError(
                f"target shape {target.shape} does not index prob {prob.data.shape}"
            )
        idx = target.reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= k):
            raise ValueError(f"target class out of range for {k} classes")
    n = flat.shape[0]
    picked = np.maximum(flat[np.arange(n), idx], _PROB_FLOOR)
    loss = -np.log(picked).mean()

    def backward(g):
        dflat = np.zeros_like(flat)
        dflat[np.arange(n), idx] = -g / (picked * n)
        return (dflat.reshape(prob.data.shape),)

    return make_op(np.asarray(loss, dtype=prob.data.dtype), (prob,), backward, "cross_entropy")


# -- convolutions ----------------------------------------------------------


def conv1d_causal(x: Tensor, w: Tensor, dilation: int = 1) -> Tensor:
    """Causal dilated 1-d convolution.

    ``x`` is (T, C_in), ``w`` is (k, C_in, C_out); output t sees only
    x[t - j*dilation] for j in 0..k-1, with zeros left of the sequence.
    """
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ValueError(f"conv1d_causal got shapes {x.data.shape}, {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"channel mismatch: input {x.data.shape} vs kernel {w.data.shape}"
        )
    t_len = x.data.shape[0]
    k = w.data.shape[0]
    out = np.zeros((t_len, w.data.shape[2]), dtype=x.data.dtype)
    for j in range(k):
        s = j * dilation
        if s >= t_len:
            break
        out[s:] += x.data[: t_len - s] @ w.data[j]

    def backward(g):
        dx = np.zeros_like(x.data)
        dw = np.zeros_like(w.data)
        for j in range(k):
            s = j * dilation
            if s >= t_len:
                break
            dx[: t_len - s] += g[s:] @ w.data[j].T
            dw[j] = x.data[: t_len - s].T @ g[s:]
        return dx, dw

    return make_op(out, (x, w), backward, "conv1d_causal")


def _shift2d(a: np.ndarray, di: int, dj: int) -> np.ndarray:
    """out[..., i, j, :] = a[..., i+di, j+dj, :], zero outside."""
    out = np.zeros_like(a)
    h, w = a.shape[-3], a.shape[-2]
    i0, i1 = max(0, -di), min(h, h - di)
    j0, j1 = max(0, -dj), min(w, w - dj)
    if i0 < i1 and j0 < j1:
        out[..., i0:i1, j0:j1, :] = a[..., i0 + di : i1 + di, j0 + dj : j1 + dj, :]
    return out


def depthwise_conv2d(x: Tensor, w: Tensor) -> Tensor:
    """Per-channel k x k convolution with same padding.

    ``x`` is (..., H, W, C), ``w`` is (k, k, C); k must be odd so that
    same padding is centered.
    """
    if w.data.ndim != 3 or w.data.shape[0] != w.data.shape[1]:
        raise ValueError(f"kernel must be (k, k, C), got {w.data.shape}")
    k = w.data.shape[0]
    if k % 2 == 0:
        raise ValueError(f"depthwise kernel size must be odd, got {k}")
    if x.data.shape[-1] != w.data.shape[2]:
        raise ValueError(
            f"channel mismatch: input {x.data.shape} vs kernel {w.data.shape}"
        )
    r = k // 2
    out = np.zeros_like(x.data)
    for p in range(k):
        for q in range(k):
            out += _shift2d(x.data, p - r, q - r) * w.data[p, q]

    def backward(g):
        dx = np.zeros_like(x.data)
        dw = np.zeros_like(w.data)
        reduce_axes = tuple(range(g.ndim - 1))
        for p in range(k):
            for q in range(k):
                dx += _shift2d(g, r - p, r - q) * w.data[p, q]
                dw[p, q] = (_shift2d(x.data, p - r, q - r) * g).sum(axis=reduce_axes)
        return dx, dw

    return make_op(out, (x, w), backward, "depthwise_conv2d")


def patch_conv2d(x: Tensor, w: Tensor, patch: int) -> Tensor:
    """Non-overlapping patch convolution (kernel size == stride).

    ``x`` is (..., H, W, C_in) with H and W divisible by ``patch``; ``w``
    is (patch*patch*C_in, C_out). This is the patchify stem and the 2x
    downsampling layer of the visual encoder.
    """
    *lead, h, w_dim, c_in = x.data.shape
    if h % patch or w_dim % patch:
        raise ValueError(
            f"spatial dims {h}x{w_dim} not divisible by patch size {patch}"
        )
    if w.data.shape[0] != patch * patch * c_in:
        raise ValueError(
            f"kernel rows {w.data.shape[0]} != patch*patch*C_in = {patch * patch * c_in}"
        )
    gh, gw = h // patch, w_dim // patch
    grid = x.data.reshape(*lead, gh, patch, gw, patch, c_in)
    grid = np.moveaxis(grid, -4, -3)  # (..., gh, gw, patch, patch, C)
    patches = np.ascontiguousarray(grid).reshape(-1, patch * patch * c_in)
    out2 = patches @ w.data
    c_out = w.data.shape[1]
    out = out2.reshape(*lead, gh, gw, c_out)

    def backward(g):
        g2 = g.reshape(-1, c_out)
        dw = patches.T @ g2
        dp = g2 @ w.data.T
        dgrid = dp.reshape(*lead, gh, gw, patch, patch, c_in)
        dgrid = np.moveaxis(dgrid, -3, -4)
        dx = dgrid.reshape(*lead, h, w_dim, c_in)
        return dx, dw

    return make_op(out, (x, w), backward, "patch_conv2d")


# -- time-axis pooling / upsampling ---------------------------------------


def group_mean(x: Tensor, group: int) -> Tensor:
    """Mean-pool non-overlapping groups along axis 0; ragged tail allowed."""
    if group < 1:
        raise ValueError(f"group size must be >= 1, got {group}")
    t_len = x.data.shape[0]
    starts = np.arange(0, t_len, group)
    counts = np.minimum(starts + group, t_len) - starts
    shape = (-1,) + (1,) * (x.data.ndim - 1)
    pooled = np.add.reduceat(x.data, starts, axis=0) / counts.reshape(shape)

    def backward(g):
        return (np.repeat(g / counts.reshape(shape), counts, axis=0),)

    return make_op(pooled, (x,), backward, "group_mean")


def repeat_upsample(x: Tensor, factor: int, length: int) -> Tensor:
    """Nearest-neighbor upsample along axis 0 by repetition, cut to ``length``."""
    n_src = x.data.shape[0]
    if length > n_src * factor or length <= (n_src - 1) * factor:
        raise ValueError(
            f"length {length} incompatible with {n_src} sources at factor {factor}"
        )
    out = np.repeat(x.data, factor, axis=0)[:length]
    starts = np.arange(n_src) * factor

    def backward(g):
        return (np.add.reduceat(g, starts, axis=0),)

    return make_op(out, (x,), backward, "repeat_upsample")


# -- operator sugar --------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(self, other)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(self, other)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__sub__ = lambda self, other: add(self, neg(_lift(other, self)))
Tensor.__matmul__ = lambda self, other: matmul(self, other)


# -- gradient checking ------------------------------------------------------


def numeric_gradient(f, tensors, h: float = 1e-5):
    """Central finite-difference gradients of scalar f(*tensors).

    Perturbs each entry of each tensor's data in place; callers pass
    float64 tensors so the h=1e-5 stencil is meaningful.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f(*tensors).item()
            flat[i] = orig - h
            lo = f(*tensors).item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(f, tensors, h: float = 1e-5) -> float:
    """Max elementwise relative error between autodiff and finite differences.

    Relative error is |a - n| / max(|a| + |n|, 1e-3), so near-zero
    gradients are compared at an absolute 1e-7 scale.
    """
    for t in tensors:
        t.zero_grad_()
    out = f(*tensors)
    out.backward()
    numeric = numeric_gradient(f, tensors, h=h)
    worst = 0.0
    for t, n in zip(tensors, numeric):
        if not t.requires_grad:
            continue
        a = t.grad
        err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-3)
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst
