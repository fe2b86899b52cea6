"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array together with an optional gradient. Operations
build a tape: each result remembers its parent tensors and a closure that
propagates the upstream gradient to them. `Tensor.backward()` topologically
sorts the tape (iteratively, so deep graphs do not hit the recursion limit)
and runs the closures in reverse order, accumulating into `.grad`.

Every forward op validates that its output is finite; NaN or Inf anywhere is
treated as an error state, not a value. The check can be disabled for tight
loops via `set_finite_checks(False)`.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(ArithmeticError):
    """A forward operation produced NaN or Inf."""


_grad_enabled = True
_finite_checks = True


def set_finite_checks(enabled: bool) -> None:
    global _finite_checks
    _finite_checks = bool(enabled)


class no_grad:
    """Context manager that disables tape construction inside its block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward() without an explicit gradient requires a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"seed gradient shape {grad.shape} does not match tensor shape {self.shape}"
                )

        topo = _toposort(self)
        _accumulate(self, grad)
        for node in topo:
            if node._backward is not None and node.grad is not None:
                node._backward()

    # Operator sugar; the module-level functions are the primary API.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable tensor with a hierarchical name assigned by its owning module."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order (root first), iterative to handle deep tapes."""
    order: list[Tensor] = []
    visited: set[int] = set()
    emitted: set[int] = set()
    stack = [root]
    while stack:
        node = stack[-1]
        nid = id(node)
        if nid not in visited:
            visited.add(nid)
            stack.extend(p for p in node._parents if id(p) not in visited)
        else:
            stack.pop()
            if nid not in emitted:
                emitted.add(nid)
                order.append(node)
    order.reverse()
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str) -> Tensor:
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


# ---------------------------------------------------------------------------
# Elementwise and arithmetic ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _bw():
            _accumulate(a, _unbroadcast(out.grad, a.shape))
            _accumulate(b, _unbroadcast(out.grad, b.shape))
        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        def _bw():
            _accumulate(a, _unbroadcast(out.grad, a.shape))
            _accumulate(b, _unbroadcast(-out.grad, b.shape))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _bw():
            _accumulate(a, _unbroadcast(out.grad * b.data, a.shape))
            _accumulate(b, _unbroadcast(out.grad * a.data, b.shape))
        out._backward = _bw
    return out


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)
    out = _result(a.data * s, (a,), "scale")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * s)
        out._backward = _bw
    return out


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = _result(np.sqrt(a.data), (a,), "sqrt")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * 0.5 / np.sqrt(a.data))
        out._backward = _bw
    return out


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = _result(np.maximum(a.data, 0.0), (a,), "relu")
    if out.requires_grad:
        mask = a.data > 0.0
        def _bw():
            _accumulate(a, out.grad * mask)
        out._backward = _bw
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    # Branch on sign to keep exp() from overflowing for large |x|.
    pos = x >= 0
    s = np.empty_like(x)
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = _result(s, (a,), "sigmoid")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * s * (1.0 - s))
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------

def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}: {e}") from None
    out = _result(data, (a,), "reshape")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad.reshape(a.shape))
        out._backward = _bw
    return out


def permute(a, axes: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"axes {axes} are not a permutation for shape {a.shape}")
    out = _result(np.transpose(a.data, axes), (a,), "permute")
    if out.requires_grad:
        inverse = tuple(np.argsort(axes))
        def _bw():
            _accumulate(a, np.transpose(out.grad, inverse))
        out._backward = _bw
    return out


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis`, starting at `start`."""
    a = _as_tensor(a)
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ShapeError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} of shape {a.shape}"
        )
    index = tuple(
        slice(start, start + length) if i == axis else slice(None) for i in range(a.ndim)
    )
    out = _result(a.data[index], (a,), "narrow")
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(a.data)
            g[index] = out.grad
            _accumulate(a, g)
        out._backward = _bw
    return out


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    out = _result(np.concatenate([t.data for t in ts], axis=axis), ts, "concat")
    if out.requires_grad:
        sizes = [t.shape[axis] for t in ts]
        def _bw():
            offset = 0
            for t, n in zip(ts, sizes):
                index = tuple(
                    slice(offset, offset + n) if i == axis else slice(None)
                    for i in range(out.ndim)
                )
                _accumulate(t, out.grad[index])
                offset += n
        out._backward = _bw
    return out


def gather_rows(table, indices) -> Tensor:
    """Select rows of a 2-D table by integer index; duplicates sum in backward."""
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"gather_rows expects a 2-D table and 1-D indices, got {table.shape} and {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"gather_rows index out of range for table with {table.shape[0]} rows")
    out = _result(table.data[idx], (table,), "gather_rows")
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(table.data)
            np.add.at(g, idx, out.grad)
            _accumulate(table, g)
        out._backward = _bw
    return out


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum")
    if out.requires_grad:
        def _bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
        out._backward = _bw
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        n = a.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[i] for i in axis]))
    else:
        n = a.shape[axis]
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul requires 2-D operands with matching inner size, got {a.shape} @ {b.shape}")
    out = _result(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                _accumulate(a, out.grad @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ out.grad)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Normalization and attention building blocks
# ---------------------------------------------------------------------------

def softmax_rows(a) -> Tensor:
    """Row-wise softmax over the last axis, max-shifted for stability."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = _result(s, (a,), "softmax_rows")
    if out.requires_grad:
        def _bw():
            g = out.grad
            dot = (g * s).sum(axis=-1, keepdims=True)
            _accumulate(a, s * (g - dot))
        out._backward = _bw
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance; then scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm scale/shift must have shape ({d},), got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _result(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm")
    if out.requires_grad:
        def _bw():
            g = out.grad
            lead = tuple(range(g.ndim - 1))
            if gamma.requires_grad:
                _accumulate(gamma, (g * xhat).sum(axis=lead))
            if beta.requires_grad:
                _accumulate(beta, g.sum(axis=lead))
            if x.requires_grad:
                gh = g * gamma.data
                term = gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
                _accumulate(x, inv * term)
        out._backward = _bw
    return out


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Column-wise batch normalization over axis 0 of an (N, D) input.

    In training mode the batch statistics (biased variance) normalize the
    input and the running buffers are updated in place with the unbiased
    variance. In eval mode the running buffers are used and never touched.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 2:
        raise ShapeError(f"batch_norm expects an (N, D) input, got {x.shape}")
    n, d = x.shape
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"batch_norm scale/shift must have shape ({d},), got {gamma.shape} and {beta.shape}")

    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        unbiased = var * n / (n - 1) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean) * inv

    out = _result(xhat * gamma.data + beta.data, (x, gamma, beta), "batch_norm")
    if out.requires_grad:
        def _bw():
            g = out.grad
            if gamma.requires_grad:
                _accumulate(gamma, (g * xhat).sum(axis=0))
            if beta.requires_grad:
                _accumulate(beta, g.sum(axis=0))
            if x.requires_grad:
                gh = g * gamma.data
                if training:
                    term = gh - gh.mean(axis=0) - xhat * (gh * xhat).mean(axis=0)
                    _accumulate(x, inv * term)
                else:
                    _accumulate(x, gh * inv)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Convolutions and pooling
# ---------------------------------------------------------------------------

def depthwise_conv2d(x, w, dilation: int = 1) -> Tensor:
    """Per-channel 3x3 convolution with same padding and a dilation factor.

    `x` is (C, H, W); `w` is (C, 3, 3); channel c of the output only sees
    channel c of the input.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    if x.ndim != 3:
        raise ShapeError(f"depthwise_conv2d expects a (C, H, W) input, got {x.shape}")
    c, h, wd = x.shape
    if w.shape != (c, 3, 3):
        raise ShapeError(f"depthwise kernel must have shape ({c}, 3, 3), got {w.shape}")
    p = dilation
    xp = np.zeros((c, h + 2 * p, wd + 2 * p), dtype=np.float64)
    xp[:, p : p + h, p : p + wd] = x.data
    data = np.zeros((c, h, wd), dtype=np.float64)
    for i in range(3):
        for j in range(3):
            data += w.data[:, i, j][:, None, None] * xp[:, i * p : i * p + h, j * p : j * p + wd]
    out = _result(data, (x, w), "depthwise_conv2d")
    if out.requires_grad:
        def _bw():
            g = out.grad
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for i in range(3):
                    for j in range(3):
                        gxp[:, i * p : i * p + h, j * p : j * p + wd] += (
                            w.data[:, i, j][:, None, None] * g
                        )
                _accumulate(x, gxp[:, p : p + h, p : p + wd])
            if w.requires_grad:
                gw = np.zeros_like(w.data)
                for i in range(3):
                    for j in range(3):
                        gw[:, i, j] = (g * xp[:, i * p : i * p + h, j * p : j * p + wd]).sum(axis=(1, 2))
                _accumulate(w, gw)
        out._backward = _bw
    return out


def depthwise_conv1d(x, w) -> Tensor:
    """Per-channel 1-D convolution along the position axis with same padding.

    `x` is (S, D) with positions as rows; `w` is (D, k) with odd k.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"depthwise_conv1d expects (S, D) input and (D, k) kernel, got {x.shape} and {w.shape}")
    s, d = x.shape
    dk, k = w.shape
    if dk != d or k % 2 == 0:
        raise ShapeError(f"kernel must be ({d}, odd_k), got {w.shape}")
    p = k // 2
    xp = np.zeros((s + 2 * p, d), dtype=np.float64)
    xp[p : p + s] = x.data
    data = np.zeros((s, d), dtype=np.float64)
    for t in range(k):
        data += xp[t : t + s] * w.data[:, t]
    out = _result(data, (x, w), "depthwise_conv1d")
    if out.requires_grad:
        def _bw():
            g = out.grad
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for t in range(k):
                    gxp[t : t + s] += g * w.data[:, t]
                _accumulate(x, gxp[p : p + s])
            if w.requires_grad:
                gw = np.zeros_like(w.data)
                for t in range(k):
                    gw[:, t] = (g * xp[t : t + s]).sum(axis=0)
                _accumulate(w, gw)
        out._backward = _bw
    return out


def dsconv2d(x, dw, pw, bias, dilation: int = 1) -> Tensor:
    """Depthwise separable conv: per-channel 3x3 stage, then a 1x1 channel mix.

    `pw` has shape (C_out, C_in) and `bias` (C_out,). Composed from primitive
    ops, so the backward pass comes for free.
    """
    x = _as_tensor(x)
    c, h, wd = x.shape
    y = depthwise_conv2d(x, dw, dilation=dilation)
    flat = reshape(y, (c, h * wd))
    mixed = add(matmul(pw, flat), reshape(bias, (-1, 1)))
    return reshape(mixed, (pw.shape[0], h, wd))


def adaptive_avg_pool2d(x, k: int) -> Tensor:
    """Average-pool a (C, H, W) map onto a k x k grid.

    Window i covers rows [floor(i*H/k), floor((i+1)*H/k)), and likewise for
    columns, so windows tile the input exactly and are never empty as long as
    k does not exceed either spatial size.
    """
    x = _as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"adaptive_avg_pool2d expects a (C, H, W) input, got {x.shape}")
    c, h, w = x.shape
    if k < 1 or k > h or k > w:
        raise ShapeError(f"pool size {k} invalid for spatial shape ({h}, {w})")
    hb = [(i * h) // k for i in range(k + 1)]
    wb = [(j * w) // k for j in range(k + 1)]
    data = np.zeros((c, k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            data[:, i, j] = x.data[:, hb[i] : hb[i + 1], wb[j] : wb[j + 1]].mean(axis=(1, 2))
    out = _result(data, (x,), "adaptive_avg_pool2d")
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(x.data)
            for i in range(k):
                for j in range(k):
                    area = (hb[i + 1] - hb[i]) * (wb[j + 1] - wb[j])
                    g[:, hb[i] : hb[i + 1], wb[j] : wb[j + 1]] += (
                        out.grad[:, i, j][:, None, None] / area
                    )
            _accumulate(x, g)
        out._backward = _bw
    return out


def segment_mean(x, ranges: Sequence[tuple[int, int]]) -> Tensor:
    """Mean-pool contiguous row ranges of an (N, D) matrix into one row each."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"segment_mean expects an (N, D) input, got {x.shape}")
    # Snapshot: the backward closure must not see later caller-side mutation.
    ranges = [(int(s), int(e)) for s, e in ranges]
    n = x.shape[0]
    for s, e in ranges:
        if not (0 <= s < e <= n):
            raise ShapeError(f"segment [{s}:{e}] invalid for {n} rows")
    data = np.stack([x.data[s:e].mean(axis=0) for s, e in ranges])
    out = _result(data, (x,), "segment_mean")
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(x.data)
            for row, (s, e) in enumerate(ranges):
                g[s:e] += out.grad[row] / (e - s)
            _accumulate(x, g)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Regularization and loss
# ---------------------------------------------------------------------------

def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scales kept activations by 1/(1-rate) during training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = _result(x.data * mask, (x,), "dropout")
    if out.requires_grad:
        def _bw():
            _accumulate(x, out.grad * mask)
        out._backward = _bw
    return out


def cross_entropy_logits(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets under row-wise softmax.

    Fused with the softmax so the backward pass is the numerically stable
    (probs - onehot) / N form.
    """
    logits = _as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or t.ndim != 1 or t.shape[0] != logits.shape[0]:
        raise ShapeError(f"cross_entropy_logits expects (N, C) logits and (N,) targets, got {logits.shape} and {t.shape}")
    n, c = logits.shape
    if t.size and (t.min() < 0 or t.max() >= c):
        raise ShapeError(f"target class out of range for {c} classes")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    nll = -(z[np.arange(n), t] - np.log(e.sum(axis=1)))
    out = _result(np.array(nll.mean()), (logits,), "cross_entropy_logits")
    if out.requires_grad:
        def _bw():
            g = probs.copy()
            g[np.arange(n), t] -= 1.0
            _accumulate(logits, g * (out.grad / n))
        out._backward = _bw
    return out
