"""Reverse-mode automatic differentiation over dense float64 tensors.

Everything is define-by-run: operations append nodes to the innermost
active :class:`Tape`, and :func:`backward` replays that tape in reverse.
Construction order is already topological, so no sorting is needed and the
backward pass is linear in the number of recorded operations.

Broadcasting is deliberately restricted to scalar-with-tensor; binary
operations on two tensors require identical shapes.  Callers that need a
broadcast (bias terms, positional tables) use the explicit helpers
(:func:`add_bias`) or tile constants themselves.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "Tape",
    "add",
    "sub",
    "mul",
    "tanh",
    "sigmoid",
    "relu",
    "matmul",
    "sum_all",
    "mean_all",
    "concat",
    "slice_axis",
    "softmax",
    "layer_norm",
    "reshape",
    "transpose",
    "add_bias",
    "detach",
    "backward",
    "finite_diff_check",
    "mse",
]

# Small enough that layer_norm's pre-affine output has unit variance to
# float64 precision, large enough to avoid 0/0 on an exactly constant row.
LAYER_NORM_EPS = 1e-30

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """Dense float64 array plus gradient slot and tape linkage.

    ``grad`` accumulates across backward passes; callers zero it between
    optimizer steps.  ``tape_node`` is set only while a tape is active and
    some input of the producing operation requires a gradient.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.tape_node: Optional[TapeNode] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return detach(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are accepted on either side.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class TapeNode:
    __slots__ = ("inputs", "output", "backward_fn", "index", "tape")

    def __init__(self, inputs, output, backward_fn, index, tape):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.index = index
        self.tape = tape


class Tape:
    """Ordered record of operations; used as a context manager.

    Operations executed inside the ``with`` block are recorded in program
    order, which is a valid topological order of the computation graph.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.nodes)


def _record(output: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Attach ``output`` to the active tape when gradients can flow to it."""
    if any(t.requires_grad for t in inputs):
        output.requires_grad = True
        if _TAPE_STACK:
            tape = _TAPE_STACK[-1]
            node = TapeNode(tuple(inputs), output, backward_fn, len(tape.nodes), tape)
            tape.nodes.append(node)
            output.tape_node = node
    return output


def _coerce_pair(a, b):
    """Return (tensor, tensor_or_None, scalar_or_None) for a binary op."""
    if isinstance(b, Tensor):
        if isinstance(a, Tensor):
            if a.shape != b.shape:
                raise DimensionError(
                    f"elementwise operands have different shapes {a.shape} vs {b.shape}"
                )
            return a, b, None
        return b, None, float(a)  # scalar + tensor, order handled by caller
    return a, None, float(b)


def add(a, b) -> Tensor:
    ta, tb, scalar = _coerce_pair(a, b)
    if tb is not None:
        out = Tensor(ta.data + tb.data)
        return _record(out, (ta, tb), lambda g: (g, g))
    out = Tensor(ta.data + scalar)
    return _record(out, (ta,), lambda g: (g,))


def sub(a, b) -> Tensor:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.shape != b.shape:
            raise DimensionError(
                f"elementwise operands have different shapes {a.shape} vs {b.shape}"
            )
        out = Tensor(a.data - b.data)
        return _record(out, (a, b), lambda g: (g, -g))
    if isinstance(a, Tensor):
        out = Tensor(a.data - float(b))
        return _record(out, (a,), lambda g: (g,))
    # scalar - tensor
    out = Tensor(float(a) - b.data)
    return _record(out, (b,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    ta, tb, scalar = _coerce_pair(a, b)
    if tb is not None:
        out = Tensor(ta.data * tb.data)
        return _record(out, (ta, tb), lambda g: (g * tb.data, g * ta.data))
    out = Tensor(ta.data * scalar)
    return _record(out, (ta,), lambda g: (g * scalar,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    return _record(out, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)
    return _record(out, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = Tensor(y)
    mask = a.data > 0.0
    return _record(out, (a,), lambda g: (g * mask,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2D x 2D, 3D x 2D (shared weights) and 3D x 3D."""
    ad, bd = a.data, b.data
    if ad.ndim not in (2, 3) or bd.ndim not in (2, 3):
        raise DimensionError(f"matmul expects 2D/3D operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise DimensionError(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")
    if ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] != bd.shape[0]:
        raise DimensionError(f"matmul batch dimensions disagree: {ad.shape} @ {bd.shape}")
    if ad.ndim == 2 and bd.ndim == 3:
        raise DimensionError(f"matmul does not support 2D @ 3D: {ad.shape} @ {bd.shape}")
    out = Tensor(ad @ bd)

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 3 and bd.ndim == 2:
            return g @ bd.T, np.einsum("bik,bij->kj", ad, g)
        return g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g

    return _record(out, (a, b), bwd)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    return _record(out, (a,), lambda g: (np.full(a.shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = Tensor(a.data.mean())
    return _record(out, (a,), lambda g: (np.full(a.shape, float(g) / n),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractError("concat requires at least one input")
    ref = tensors[0].data.shape
    ax = axis if axis >= 0 else len(ref) + axis
    if not 0 <= ax < len(ref):
        raise DimensionError(f"concat axis {axis} invalid for shape {ref}")
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise DimensionError(f"concat inputs disagree off-axis: {ref} vs {s}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=ax))
    sizes = [t.data.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record(out, tuple(tensors), bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    shape = a.data.shape
    ax = axis if axis >= 0 else len(shape) + axis
    if not 0 <= ax < len(shape):
        raise DimensionError(f"slice axis {axis} invalid for shape {shape}")
    if not (0 <= start < stop <= shape[ax]):
        raise DimensionError(f"slice range [{start}, {stop}) invalid for axis size {shape[ax]}")
    idx = tuple(slice(None) if i != ax else slice(start, stop) for i in range(len(shape)))
    out = Tensor(a.data[idx])

    def bwd(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _record(out, (a,), bwd)


def softmax(a: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is False get zero weight.

    The mask is a plain boolean array broadcastable to the input shape.  At
    least one position per row must stay unmasked.
    """
    x = a.data
    ax = axis if axis >= 0 else x.ndim + axis
    if not 0 <= ax < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    if mask is not None:
        x = np.where(mask, x, -1e300)
    shifted = x - x.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=ax, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        inner = (g * y).sum(axis=ax, keepdims=True)
        return (y * (g - inner),)

    return _record(out, (a,), bwd)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    d = a.data.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm affine params must have shape ({d},), got {gamma.shape} and {beta.shape}"
        )
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)

    def bwd(g):
        lead = tuple(range(x.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return _record(out, (a, gamma, beta), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    out = Tensor(a.data.transpose(axes))
    return _record(out, (a,), lambda g: (g.transpose(inv),))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1-D bias along the last axis (the one permitted broadcast)."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias shape {b.shape} does not match last axis of {x.shape}")
    out = Tensor(x.data + b.data)
    lead = tuple(range(x.ndim - 1))
    return _record(out, (x, b), lambda g: (g, g.sum(axis=lead)))


def detach(a: Tensor) -> Tensor:
    """Forward-only copy: identical data, no tape linkage, no gradient flow."""
    return Tensor(a.data)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    d = sub(pred, target)
    return mean_all(mul(d, d))


def backward(loss: Tensor, free_interior: bool = True) -> None:
    """Populate ``grad`` on every requires-grad ancestor of a scalar loss.

    Gradients fan-in by summation.  Interior activation gradients are
    dropped as soon as the corresponding node has been processed, which
    keeps the peak memory of long-sequence attention graphs bounded.
    """
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    node = loss.tape_node
    if node is None:
        raise ContractError("loss is not attached to an active tape")
    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for n in reversed(node.tape.nodes[: node.index + 1]):
        g = n.output.grad
        if g is None:
            continue
        grads = n.backward_fn(g)
        for inp, gi in zip(n.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            inp.grad = gi if inp.grad is None else inp.grad + gi
        if free_interior and n.output is not loss:
            n.output.grad = None


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6) -> float:
    """Compare analytic gradients of ``f()`` against central differences.

    Returns the max over all parameter entries of
    ``|analytic - cd| / max(|analytic|, |cd|, 1e-12)``.  ``f`` must be a
    deterministic scalar function of the current parameter data.
    """
    if not 0.0 < eps <= 1e-3:
        raise ContractError(f"eps must lie in (0, 1e-3], got {eps}")

    def run() -> float:
        value = f()
        if value.size != 1:
            raise ContractError("finite_diff_check requires a scalar function")
        v = float(value.data)
        if not math.isfinite(v):
            raise NumericError("finite_diff_check: function value is not finite")
        return v

    for p in params:
        p.grad = None
    with Tape():
        loss = f()
        if not np.isfinite(loss.data).all():
            raise NumericError("finite_diff_check: function value is not finite")
        backward(loss)
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    max_rel = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = run()
            flat[i] = orig - eps
            f_minus = run()
            flat[i] = orig
            cd = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(cd), 1e-12)
            max_rel = max(max_rel, abs(gflat[i] - cd) / denom)
    return max_rel
