"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad`` records its
parents and a closure mapping the output gradient to parent gradients.
:func:`backward` walks that tape in reverse topological order.

Implicit broadcasting is deliberately narrow: an operand may be a scalar or
may match a strict suffix of the other operand's shape. Anything else must go
through :meth:`Tensor.broadcast_to`.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "matmul",
    "concat",
    "stack",
    "where",
    "conv2d",
    "causal_depthwise_conv1d",
    "log_softmax",
    "softmax",
    "cross_entropy",
    "backward",
    "finite_difference_check",
]

_node_ids = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _as_array(value) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


def _lift(value) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_implicit_broadcast(a: tuple, b: tuple, op: str) -> tuple:
    if a == b:
        return a
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    if len(small) == 0 or small == big[len(big) - len(small):]:
        return big
    raise ShapeError(f"{op}: cannot combine shapes {a} and {b} "
                     "(only scalar or trailing-dimension expansion is allowed)")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An n-dimensional float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_parents",
                 "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Callable | None = None, op: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id = next(_node_ids)
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @classmethod
    def from_op(cls, data, parents: Sequence["Tensor"], backward_fn: Callable,
                op: str = "") -> "Tensor":
        """Build an op output; ``backward_fn(g)`` returns one gradient per parent
        (``None`` for parents that need none)."""
        if _grad_enabled and any(p.requires_grad for p in parents):
            return cls(data, True, tuple(parents), backward_fn, op)
        return cls(data)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=4)}{flag})"

    # -- elementwise arithmetic ---------------------------------------------
    def _binary(self, other, fwd, grad_a, grad_b, op):
        other = _lift(other)
        _check_implicit_broadcast(self.shape, other.shape, op)
        a, b = self.data, other.data
        out = fwd(a, b)

        def _bw(g):
            ga = _unbroadcast(grad_a(g, a, b, out), a.shape) if self.requires_grad else None
            gb = _unbroadcast(grad_b(g, a, b, out), b.shape) if other.requires_grad else None
            return ga, gb

        return Tensor.from_op(out, (self, other), _bw, op)

    def __add__(self, other):
        return self._binary(other, np.add, lambda g, a, b, o: g,
                            lambda g, a, b, o: g, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract, lambda g, a, b, o: g,
                            lambda g, a, b, o: -g, "sub")

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        return self._binary(other, np.multiply, lambda g, a, b, o: g * b,
                            lambda g, a, b, o: g * a, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide, lambda g, a, b, o: g / b,
                            lambda g, a, b, o: -g * a / (b * b), "div")

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __neg__(self):
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        x = self.data
        out = x ** exponent
        return Tensor.from_op(out, (self,),
                              lambda g: (g * exponent * x ** (exponent - 1),), "pow")

    def __matmul__(self, other):
        return matmul(self, other)

    # -- unary functions ----------------------------------------------------
    def exp(self):
        out = np.exp(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        x = self.data
        return Tensor.from_op(np.log(x), (self,), lambda g: (g / x,), "log")

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self):
        out = _sigmoid(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def softplus(self):
        x = self.data
        out = np.logaddexp(0.0, x)
        return Tensor.from_op(out, (self,), lambda g: (g * _sigmoid(x),), "softplus")

    def silu(self):
        x = self.data
        sig = _sigmoid(x)
        out = x * sig
        return Tensor.from_op(out, (self,),
                              lambda g: (g * (sig + out * (1.0 - sig)),), "silu")

    def relu(self):
        x = self.data
        return Tensor.from_op(np.maximum(x, 0.0), (self,), lambda g: (g * (x > 0),), "relu")

    def abs(self):
        x = self.data
        return Tensor.from_op(np.abs(x), (self,), lambda g: (g * np.sign(x),), "abs")

    # -- reductions ------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def _bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), _bw, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis: int, keepdims: bool = False):
        """Max along one axis; the gradient goes to the first maximal entry."""
        x = self.data
        idx = np.argmax(x, axis=axis)
        out = np.take_along_axis(x, np.expand_dims(idx, axis), axis)
        if not keepdims:
            out = np.squeeze(out, axis)

        def _bw(g):
            gx = np.zeros_like(x)
            gg = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(gx, np.expand_dims(idx, axis), gg, axis)
            return (gx,)

        return Tensor.from_op(out, (self,), _bw, "max")

    # -- shape manipulation -----------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor.from_op(self.data.reshape(shape), (self,),
                              lambda g: (g.reshape(src),), "reshape")

    def transpose(self, *axes):
        if not axes:
            axes = tuple(range(self.ndim))[::-1]
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return Tensor.from_op(self.data.transpose(axes), (self,),
                              lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def broadcast_to(self, shape):
        src = self.shape
        out = np.broadcast_to(self.data, shape)
        return Tensor.from_op(out, (self,), lambda g: (_unbroadcast(g, src),), "broadcast")

    def __getitem__(self, index):
        src = self.shape

        parts = index if isinstance(index, tuple) else (index,)
        fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

        def _bw(g):
            gx = np.zeros(src)
            if fancy:
                np.add.at(gx, index, g)
            else:
                gx[index] += g
            return (gx,)

        return Tensor.from_op(self.data[index], (self,), _bw, "getitem")

    def pad(self, widths):
        """Zero padding, ``widths`` as for :func:`numpy.pad`."""
        slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, self.shape))
        return Tensor.from_op(np.pad(self.data, widths), (self,),
                              lambda g: (g[slices],), "pad")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b`` over the last two axes.

    ``a`` may carry leading batch axes; ``b`` is either 2-D or has the same
    batch axes as ``a``.
    """
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or (
            b.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def _bw(g):
        ga = g @ np.swapaxes(y, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = np.swapaxes(x, -1, -2) @ g
            if y.ndim == 2 and gb.ndim > 2:
                gb = gb.reshape(-1, *gb.shape[-2:]).sum(axis=0)
        return ga, gb

    return Tensor.from_op(x @ y, (a, b), _bw, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _bw(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
                     if t.requires_grad else None for i, t in enumerate(tensors))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis),
                          tensors, _bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]

    def _bw(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple(parts[i] if t.requires_grad else None for i, t in enumerate(tensors))

    return Tensor.from_op(np.stack([t.data for t in tensors], axis=axis), tensors, _bw, "stack")


def where(mask, a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    m = np.asarray(mask, dtype=bool)
    shape = np.broadcast_shapes(m.shape, a.shape, b.shape)

    def _bw(g):
        return (_unbroadcast(np.where(m, g, 0.0), a.shape) if a.requires_grad else None,
                _unbroadcast(np.where(m, 0.0, g), b.shape) if b.requires_grad else None)

    return Tensor.from_op(np.broadcast_to(np.where(m, a.data, b.data), shape), (a, b), _bw, "where")


def conv2d(x, weight, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. ``x``: [B, C_in, H, W]; ``weight``: [C_out, C_in, k, k]."""
    x, weight = _lift(x), _lift(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, kernels {weight.shape}")
    xd, wd = x.data, weight.data
    _, _, kh, kw = wd.shape
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = (xp.shape[2] - kh) // stride + 1
    w_out = (xp.shape[3] - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv2d: kernel {weight.shape} larger than padded input {xp.shape}")

    def window(i, j):
        return (slice(None), slice(None),
                slice(i, i + stride * (h_out - 1) + 1, stride),
                slice(j, j + stride * (w_out - 1) + 1, stride))

    out = np.zeros((xd.shape[0], wd.shape[0], h_out, w_out))
    for i in range(kh):
        for j in range(kw):
            out += np.einsum("bchw,oc->bohw", xp[window(i, j)], wd[:, :, i, j], optimize=True)

    def _bw(g):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[window(i, j)] += np.einsum("bohw,oc->bchw", g, wd[:, :, i, j], optimize=True)
            gx = gxp[:, :, padding:padding + xd.shape[2], padding:padding + xd.shape[3]]
        if weight.requires_grad:
            gw = np.zeros_like(wd)
            for i in range(kh):
                for j in range(kw):
                    gw[:, :, i, j] = np.einsum("bohw,bchw->oc", g, xp[window(i, j)], optimize=True)
        return gx, gw

    return Tensor.from_op(out, (x, weight), _bw, "conv2d")


def causal_depthwise_conv1d(x, kernel) -> Tensor:
    """Per-channel causal convolution along time.

    ``x`` is [..., T, D] and ``kernel`` is [K, D]; the output at step t only
    sees ``x[t-K+1 .. t]`` (earlier steps are zero).
    """
    x, kernel = _lift(x), _lift(kernel)
    if kernel.ndim != 2 or kernel.shape[0] < 1 or x.ndim < 2 or x.shape[-1] != kernel.shape[1]:
        raise ShapeError(f"causal conv shape mismatch: input {x.shape}, kernel {kernel.shape}")
    xd, kd = x.data, kernel.data
    K, T = kd.shape[0], xd.shape[-2]
    widths = [(0, 0)] * (xd.ndim - 2) + [(K - 1, 0), (0, 0)]
    xp = np.pad(xd, widths)
    out = np.zeros_like(xd)
    for k in range(K):
        out += kd[k] * xp[..., k:k + T, :]

    def _bw(g):
        gx = gk = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[..., k:k + T, :] += g * kd[k]
            gx = gxp[..., K - 1:, :]
        if kernel.requires_grad:
            gk = np.stack([(g * xp[..., k:k + T, :]).reshape(-1, kd.shape[1]).sum(axis=0)
                           for k in range(K)])
        return gx, gk

    return Tensor.from_op(out, (x, kernel), _bw, "causal_conv1d")


def log_softmax(logits, axis: int = -1) -> Tensor:
    logits = _lift(logits)
    z = logits.data - logits.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    p = np.exp(out)
    return Tensor.from_op(out, (logits,),
                          lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Class probabilities as a plain array (no gradient)."""
    z = _as_array(logits)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` [B, C]."""
    logits = _lift(logits)
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.shape[0]), labels]
    return -picked.mean()


# -- differentiation --------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack_.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.node_id not in seen:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[int, Tensor]:
    """Reverse-mode gradients of a scalar ``loss``.

    Returns a map from ``node_id`` to gradient for every leaf that requires
    grad and is reachable from ``loss``; leaves listed in ``params`` but not
    reachable get zeros. Leaf ``.grad`` buffers are overwritten, never
    accumulated, so repeated calls give identical results.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    result: dict[int, Tensor] = {}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(node.node_id, None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g
                result[node.node_id] = Tensor(g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = pg
    for p in params or ():
        if p.node_id not in result:
            p.grad = np.zeros_like(p.data)
            result[p.node_id] = Tensor(p.grad)
    return result


def finite_difference_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between :func:`backward` and central differences.

    The error per element is ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)``.
    ``f`` must be smooth; a hard spike threshold has zero derivative almost
    everywhere and is not a meaningful input here.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = _as_array(x).astype(np.float64)
    xt = Tensor(base.copy(), requires_grad=True)
    y = f(xt)
    if not np.all(np.isfinite(y.data)):
        raise FloatingPointError("f(x) is not finite")
    grads = backward(y, params=[xt])
    g_ad = grads[xt.node_id].data
    g_fd = np.zeros_like(base)
    with no_grad():
        for idx in np.ndindex(base.shape):
            xp = base.copy()
            xp[idx] += eps
            fp = f(Tensor(xp)).item()
            xm = base.copy()
            xm[idx] -= eps
            fm = f(Tensor(xm)).item()
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"f is not finite near element {idx}")
            g_fd[idx] = (fp - fm) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), 1e-8)
    return float(np.max(np.abs(g_ad - g_fd) / denom)) if base.size else 0.0
