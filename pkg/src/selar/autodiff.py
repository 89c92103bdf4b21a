"""Dense float64 tensors with a reverse-mode gradient tape.

The engine is deliberately small: a ``Tensor`` wraps a numpy array, ops
record themselves on the thread-local active ``Tape``, and the tape
supports two passes over the recorded graph:

* ``backward`` -- reverse-mode (vector-Jacobian) accumulation from one
  output, visiting each recorded node exactly once in reverse creation
  order (creation order is a topological order by construction).
* ``tangents`` -- a forward sweep propagating directional derivatives
  (Jacobian-vector products) from seeded leaves. This gives per-example
  loss sensitivities along a fixed parameter direction in one pass,
  which is what the bi-level meta step consumes.

Only first-order derivatives exist here; the meta-gradient is assembled
analytically from these pieces rather than by differentiating through a
backward pass.
"""

from __future__ import annotations

import os
import threading
from typing import Callable, Sequence

import numpy as np

from .exceptions import NumericsError

_tls = threading.local()

# Finiteness checks after every op; cheap insurance for debugging, off by
# default. Toggle via set_debug_checks or SELAR_DEBUG=1.
DEBUG_CHECKS = os.environ.get("SELAR_DEBUG", "0") not in ("", "0")


def set_debug_checks(enabled: bool) -> None:
    global DEBUG_CHECKS
    DEBUG_CHECKS = bool(enabled)


def _tape_stack() -> list:
    if not hasattr(_tls, "stack"):
        _tls.stack = []
    return _tls.stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array, optionally recorded on a tape.

    Leaves (parameters, constants) have no parents. Recorded tensors
    carry closures for their vector-Jacobian and Jacobian-vector
    products.
    """

    __slots__ = ("data", "parents", "_vjp", "_jvp", "op")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        vjp: Callable | None = None,
        jvp: Callable | None = None,
        op: str = "leaf",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = tuple(parents)
        self._vjp = vjp
        self._jvp = jvp
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A leaf view of this tensor's value (no history)."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    # Operator sugar; ops live at module level.
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


class Tape:
    """Recorded operation graph. Use as a context manager.

    One backward pass per recording; call ``reset`` to reuse the object.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._backward_done = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, t: Tensor) -> None:
        self._nodes.append(t)

    def reset(self) -> None:
        self._nodes.clear()
        self._backward_done = False

    def backward(self, output: Tensor, seed: np.ndarray | None = None) -> "GradMap":
        """Reverse-mode gradients of ``output`` w.r.t. everything on tape.

        ``output`` must be scalar unless an explicit ``seed`` gradient of
        the same shape is supplied. Tensors not reachable from the output
        (including leaves never touched) read back as zero gradients.
        """
        if self._backward_done:
            raise RuntimeError("tape already consumed by backward; call reset() first")
        if seed is None:
            if output.size != 1:
                raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
            seed = np.ones_like(output.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != output.data.shape:
                raise ValueError(f"seed shape {seed.shape} != output shape {output.data.shape}")
        self._backward_done = True

        grads: dict[int, np.ndarray] = {id(output): seed}
        for node in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node.parents, node._vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return GradMap(grads)

    def tangents(self, seeds: dict[int, np.ndarray]) -> "TangentMap":
        """Forward-mode sweep: propagate leaf tangents through the tape.

        ``seeds`` maps id(leaf tensor) -> tangent array (same shape as the
        leaf). Unseeded tensors carry zero tangent. Returns tangents for
        every recorded node.
        """
        tang: dict[int, np.ndarray] = dict(seeds)
        for node in self._nodes:
            if node._jvp is None:
                continue
            ptans = [tang.get(id(p)) for p in node.parents]
            if all(t is None for t in ptans):
                continue
            full = [
                t if t is not None else np.zeros_like(p.data)
                for t, p in zip(ptans, node.parents)
            ]
            tang[id(node)] = node._jvp(*full)
        return TangentMap(tang)


class GradMap:
    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def of(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g


class TangentMap:
    def __init__(self, tangents: dict[int, np.ndarray]):
        self._tangents = tangents

    def of(self, t: Tensor) -> np.ndarray:
        g = self._tangents.get(id(t))
        return np.zeros_like(t.data) if g is None else g


def _emit(out: np.ndarray, parents, vjp, jvp, op: str) -> Tensor:
    if DEBUG_CHECKS and not np.all(np.isfinite(out)):
        raise NumericsError(f"non-finite values produced by op '{op}'")
    t = Tensor(out, parents=parents, vjp=vjp, jvp=jvp, op=op)
    tape = active_tape()
    if tape is not None:
        tape._record(t)
    else:
        # Without a tape the result is a plain value.
        t.parents = ()
        t._vjp = None
        t._jvp = None
    return t


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes introduced or stretched by broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = a.data + b.data
    return _emit(
        out,
        (a, b),
        vjp=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        jvp=lambda ta, tb: ta + tb,
        op="add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = a.data - b.data
    return _emit(
        out,
        (a, b),
        vjp=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        jvp=lambda ta, tb: ta - tb,
        op="sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = a.data * b.data
    return _emit(
        out,
        (a, b),
        vjp=lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        jvp=lambda ta, tb: ta * b.data + a.data * tb,
        op="mul",
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    return _emit(
        out,
        (a, b),
        vjp=lambda g: (g @ b.data.T, a.data.T @ g),
        jvp=lambda ta, tb: ta @ b.data + a.data @ tb,
        op="matmul",
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    orig = a.shape
    return _emit(
        out,
        (a,),
        vjp=lambda g: (g.reshape(orig),),
        jvp=lambda ta: ta.reshape(shape),
        op="reshape",
    )


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(
        out,
        ts,
        vjp=vjp,
        jvp=lambda *tans: np.concatenate(tans, axis=axis),
        op="concat",
    )


def gather_rows(a, index) -> Tensor:
    """out[k] = a[index[k]]; rows may repeat."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    out = a.data[idx]

    def vjp(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _emit(out, (a,), vjp=vjp, jvp=lambda ta: ta[idx], op="gather_rows")


def scatter_add_rows(src, index, num_rows: int) -> Tensor:
    """out[num_rows, ...] with out[index[k]] += src[k]."""
    src = as_tensor(src)
    idx = np.asarray(index, dtype=np.intp)
    if idx.shape[0] != src.shape[0]:
        raise ValueError(f"scatter_add_rows: index length {idx.shape[0]} != src rows {src.shape[0]}")
    out = np.zeros((num_rows,) + src.shape[1:], dtype=np.float64)
    np.add.at(out, idx, src.data)

    def jvp(ts):
        acc = np.zeros((num_rows,) + src.shape[1:], dtype=np.float64)
        np.add.at(acc, idx, ts)
        return acc

    return _emit(out, (src,), vjp=lambda g: (g[idx],), jvp=jvp, op="scatter_add_rows")


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit(
        out,
        (a,),
        vjp=vjp,
        jvp=lambda ta: ta.sum(axis=axis, keepdims=keepdims),
        op="sum",
    )


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        n = a.size
    else:
        n = a.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy() / n,)

    return _emit(
        out,
        (a,),
        vjp=vjp,
        jvp=lambda ta: ta.mean(axis=axis, keepdims=keepdims),
        op="mean",
    )


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _emit(
        out,
        (a,),
        vjp=lambda g: (g * out * (1.0 - out),),
        jvp=lambda ta: ta * out * (1.0 - out),
        op="sigmoid",
    )


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = np.where(mask, a.data, 0.0)
    return _emit(
        out,
        (a,),
        vjp=lambda g: (g * mask,),
        jvp=lambda ta: ta * mask,
        op="relu",
    )


def leaky_relu(a, alpha: float = 0.2) -> Tensor:
    a = as_tensor(a)
    slope = np.where(a.data > 0, 1.0, alpha)
    out = a.data * slope
    return _emit(
        out,
        (a,),
        vjp=lambda g: (g * slope,),
        jvp=lambda ta: ta * slope,
        op="leaky_relu",
    )


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _emit(
        np.abs(a.data),
        (a,),
        vjp=lambda g: (g * sign,),
        jvp=lambda ta: ta * sign,
        op="abs",
    )


def powc(a, exponent: float) -> Tensor:
    """Elementwise a**c for a constant exponent; defined for a > 0."""
    a = as_tensor(a)
    c = float(exponent)
    out = a.data**c
    deriv = c * a.data ** (c - 1.0)
    return _emit(
        out,
        (a,),
        vjp=lambda g: (g * deriv,),
        jvp=lambda ta: ta * deriv,
        op="powc",
    )


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ez = np.exp(shifted)
    out = ez / ez.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    def jvp(ta):
        inner = (ta * out).sum(axis=axis, keepdims=True)
        return out * (ta - inner)

    return _emit(out, (a,), vjp=vjp, jvp=jvp, op="softmax")


def bce_with_logits(logits, targets) -> Tensor:
    """Per-example binary cross-entropy from logits (numerically stable).

    loss = max(x, 0) - x*y + log(1 + exp(-|x|))
    """
    x = as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError(f"bce_with_logits: targets shape {y.shape} != logits shape {x.shape}")
    out = np.maximum(x.data, 0.0) - x.data * y + np.log1p(np.exp(-np.abs(x.data)))
    p = np.empty_like(x.data)
    pos = x.data >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    p[~pos] = ez / (1.0 + ez)
    resid = p - y
    return _emit(
        out,
        (x,),
        vjp=lambda g: (g * resid,),
        jvp=lambda tx: tx * resid,
        op="bce_with_logits",
    )


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Per-example cross-entropy; logits (N, C), integer labels (N,)."""
    x = as_tensor(logits)
    lab = np.asarray(labels, dtype=np.intp)
    if x.ndim != 2 or lab.shape != (x.shape[0],):
        raise ValueError(
            f"softmax_cross_entropy: logits shape {x.shape} incompatible with labels shape {lab.shape}"
        )
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + x.data.max(axis=1)
    out = lse - x.data[np.arange(len(lab)), lab]
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    resid = probs.copy()
    resid[np.arange(len(lab)), lab] -= 1.0

    return _emit(
        out,
        (x,),
        vjp=lambda g: (g[:, None] * resid,),
        jvp=lambda tx: (tx * resid).sum(axis=1),
        op="softmax_cross_entropy",
    )
