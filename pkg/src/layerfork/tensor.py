"""Dense float32 tensors with reverse-mode automatic differentiation.

All values are row-major 32-bit floats.  Primitives record themselves on the
active :class:`GradTape`; backward replays the tape in exact reverse
application order, which makes gradients deterministic for a fixed program.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonFiniteError, ShapeError, TapeError

GELU_C0 = 0.7978845608  # sqrt(2/pi), fixed for reproducibility
GELU_C1 = 0.044715
LAYERNORM_EPS = 1e-12

# float32 in production; tests switch to float64 for finite-difference oracles
_dtype = np.float32

_active_tape = None


def default_dtype():
    return _dtype


class precision:
    """Context manager switching the working dtype (float32/float64)."""

    def __init__(self, dtype):
        self.dtype = np.dtype(dtype).type
        self.prev = None

    def __enter__(self):
        global _dtype
        self.prev = _dtype
        _dtype = self.dtype
        return self

    def __exit__(self, exc_type, exc, tb):
        global _dtype
        _dtype = self.prev
        return False


class Tensor:
    """A float32 array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, op=None, parents=(), name=None):
        arr = np.asarray(data, dtype=_dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = parents
        self._backward = None
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


class GradTape:
    """Ordered record of primitive applications for one traced program."""

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __enter__(self):
        global _active_tape
        if _active_tape is not None:
            raise TapeError("nested tapes are not supported")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = None
        return False


def _record(out: Tensor, backward_fn):
    out._backward = backward_fn
    if _active_tape is not None and out.requires_grad:
        _active_tape.nodes.append(out)


def _check_finite(kind: str, arr: np.ndarray):
    if not np.isfinite(arr).all():
        raise NonFiniteError(kind)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.astype(_dtype, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data
    _check_finite("add", data)
    out = Tensor(data, a.requires_grad or b.requires_grad, op="add", parents=(a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    _record(out, backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data
    _check_finite("sub", data)
    out = Tensor(data, a.requires_grad or b.requires_grad, op="sub", parents=(a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    _record(out, backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data
    _check_finite("mul", data)
    out = Tensor(data, a.requires_grad or b.requires_grad, op="mul", parents=(a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    _record(out, backward)
    return out


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = _dtype(s)
    data = a.data * s
    _check_finite("scale", data)
    out = Tensor(data, a.requires_grad, op="scale", parents=(a,))

    def backward():
        if a.requires_grad:
            _accum(a, out.grad * s)

    _record(out, backward)
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 1:
        raise ShapeError("matmul needs at least 1-d operands")
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    data = np.matmul(a.data, b.data)
    _check_finite("matmul", data)
    out = Tensor(data, a.requires_grad or b.requires_grad, op="matmul", parents=(a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _unbroadcast(gb, b.data.shape))

    _record(out, backward)
    return out


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)
    out = Tensor(data, a.requires_grad, op="reshape", parents=(a,))

    def backward():
        if a.requires_grad:
            _accum(a, out.grad.reshape(a.data.shape))

    _record(out, backward)
    return out


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    out = Tensor(data, a.requires_grad, op="transpose", parents=(a,))
    inverse = tuple(np.argsort(axes))

    def backward():
        if a.requires_grad:
            _accum(a, np.transpose(out.grad, inverse))

    _record(out, backward)
    return out


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)
    out = Tensor(data, a.requires_grad, op="tanh", parents=(a,))

    def backward():
        if a.requires_grad:
            _accum(a, out.grad * (1.0 - out.data * out.data))

    _record(out, backward)
    return out


def gelu(a) -> Tensor:
    """Tanh-approximate GELU with fixed constants."""
    a = _as_tensor(a)
    x = a.data
    inner = GELU_C0 * (x + GELU_C1 * x * x * x)
    t = np.tanh(inner)
    data = (0.5 * x * (1.0 + t)).astype(_dtype)
    _check_finite("gelu", data)
    out = Tensor(data, a.requires_grad, op="gelu", parents=(a,))

    def backward():
        if a.requires_grad:
            dinner = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x * x)
            dgelu = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            _accum(a, out.grad * dgelu.astype(_dtype))

    _record(out, backward)
    return out


def softmax(a) -> Tensor:
    """Softmax over the last axis, numerically stabilised."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = (e / e.sum(axis=-1, keepdims=True)).astype(_dtype)
    _check_finite("softmax", data)
    out = Tensor(data, a.requires_grad, op="softmax", parents=(a,))

    def backward():
        if a.requires_grad:
            g = out.grad
            s = out.data
            dot = (g * s).sum(axis=-1, keepdims=True)
            _accum(a, s * (g - dot))

    _record(out, backward)
    return out


def log_softmax(a) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = (shifted - lse).astype(_dtype)
    _check_finite("log_softmax", data)
    out = Tensor(data, a.requires_grad, op="log_softmax", parents=(a,))

    def backward():
        if a.requires_grad:
            g = out.grad
            p = np.exp(out.data)
            _accum(a, g - p * g.sum(axis=-1, keepdims=True))

    _record(out, backward)
    return out


def layernorm(x, gamma, beta) -> Tensor:
    """Normalise over the last axis.  Zero-variance rows map to beta."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if gamma.data.shape != x.data.shape[-1:] or beta.data.shape != x.data.shape[-1:]:
        raise ShapeError("layernorm gamma/beta must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    norm = xc * inv
    data = (norm * gamma.data + beta.data).astype(_dtype)
    _check_finite("layernorm", data)
    rg = x.requires_grad or gamma.requires_grad or beta.requires_grad
    out = Tensor(data, rg, op="layernorm", parents=(x, gamma, beta))

    def backward():
        g = out.grad
        if gamma.requires_grad:
            _accum(gamma, (g * norm).reshape(-1, norm.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            _accum(beta, g.reshape(-1, norm.shape[-1]).sum(axis=0))
        if x.requires_grad:
            d = x.data.shape[-1]
            gx = g * gamma.data
            term1 = gx
            term2 = gx.mean(axis=-1, keepdims=True)
            term3 = norm * (gx * norm).mean(axis=-1, keepdims=True)
            _accum(x, ((term1 - term2 - term3) * inv).astype(_dtype))

    _record(out, backward)
    return out


def embed_lookup(table, ids) -> Tensor:
    """Gather rows of `table` by integer ids (ids are constants)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if (ids < 0).any() or (ids >= table.data.shape[0]).any():
        raise ShapeError("embed_lookup id out of range")
    data = table.data[ids]
    out = Tensor(data, table.requires_grad, op="embed_lookup", parents=(table,))

    def backward():
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, ids.reshape(-1), out.grad.reshape(-1, table.data.shape[1]))
            _accum(table, g)

    _record(out, backward)
    return out


def take_token(a, index: int) -> Tensor:
    """Select one sequence position from (batch, seq, dim) activations."""
    a = _as_tensor(a)
    if a.data.ndim != 3:
        raise ShapeError("take_token expects (batch, seq, dim)")
    data = a.data[:, index, :]
    out = Tensor(data, a.requires_grad, op="take_token", parents=(a,))

    def backward():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[:, index, :] = out.grad
            _accum(a, g)

    _record(out, backward)
    return out


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under the logits."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ShapeError("cross_entropy expects (batch, k) logits and (batch,) labels")
    if (labels < 0).any() or (labels >= logits.data.shape[1]).any():
        raise ShapeError("cross_entropy label out of range")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    n = logits.data.shape[0]
    data = _dtype(-logp[np.arange(n), labels].mean())
    _check_finite("cross_entropy", data)
    out = Tensor(data, logits.requires_grad, op="cross_entropy", parents=(logits,))

    def backward():
        if logits.requires_grad:
            p = np.exp(logp)
            p[np.arange(n), labels] -= 1.0
            _accum(logits, (out.grad * p / n).astype(_dtype))

    _record(out, backward)
    return out


def mse(pred, target) -> Tensor:
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError("mse operands must share a shape")
    diff = pred.data - target.data
    data = _dtype((diff * diff).mean())
    _check_finite("mse", data)
    out = Tensor(data, pred.requires_grad or target.requires_grad, op="mse",
                 parents=(pred, target))

    def backward():
        g = out.grad * 2.0 * diff / diff.size
        if pred.requires_grad:
            _accum(pred, g.astype(_dtype))
        if target.requires_grad:
            _accum(target, (-g).astype(_dtype))

    _record(out, backward)
    return out


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    data = _dtype(a.data.sum())
    _check_finite("sum", data)
    out = Tensor(data, a.requires_grad, op="sum", parents=(a,))

    def backward():
        if a.requires_grad:
            _accum(a, np.full_like(a.data, out.grad))

    _record(out, backward)
    return out


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "layernorm": layernorm,
    "softmax": softmax,
    "gelu": gelu,
    "embed_lookup": embed_lookup,
    "cross_entropy": cross_entropy,
    "mse": mse,
}


def apply_primitive(kind: str, *inputs) -> Tensor:
    """Dispatch one named kernel; the uniform entry point for oracles."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ShapeError(f"unknown primitive kind '{kind}'") from None
    return fn(*inputs)


def backward(tape: GradTape, loss: Tensor) -> dict:
    """Run reverse-mode over `tape` from scalar `loss`.

    Returns gradients keyed by parameter name for every named leaf tensor
    with `requires_grad` reached from the loss.
    """
    if tape.consumed:
        raise TapeError("tape already consumed")
    if loss.data.shape != ():
        raise TapeError("loss must be scalar")
    tape.consumed = True
    loss.grad = _dtype(1.0)
    for node in reversed(tape.nodes):
        if node.grad is None or node._backward is None:
            continue
        node._backward()
    grads = {}
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t.name is not None and t.requires_grad and t.grad is not None:
            grads[t.name] = np.asarray(t.grad, dtype=_dtype)
        stack.extend(t._parents)
    # release grads so the same parameters can be traced again
    for node in tape.nodes:
        node.grad = None
        for p in node._parents:
            p.grad = None
    loss.grad = None
    return grads


def parameter(data, name: str, trainable: bool = True) -> Tensor:
    """A named leaf tensor (model weight)."""
    t = Tensor(np.asarray(data, dtype=_dtype), requires_grad=trainable, name=name)
    return t


def clear_grads(tensors):
    for t in tensors:
        t.grad = None
