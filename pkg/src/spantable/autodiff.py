"""Dense float64 arrays with reverse-mode automatic differentiation.

Values live in numpy ndarrays (row-major, 64-bit); every op records a
backward closure on a :class:`Tensor` node, and ``backward`` replays the
tape in reverse topological order.  ``grad_check`` compares the analytic
gradients against central finite differences, which is the correctness
oracle for everything built on top.

Masking convention: softmax takes an additive bias (0 for allowed, -1e9 for
forbidden positions) so that forbidden attention weights underflow to an
exact 0 after normalization.
"""

from __future__ import annotations

import base64
import json
import os
import tempfile
from typing import Callable, Iterable

import numpy as np

MASK_BIAS = -1e9
_LN_EPS = 1e-5
# tanh-form GELU; coefficients are the standard ones
_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


class ShapeError(ValueError):
    pass


class Tensor:
    """Graph node: float64 value, lazily materialized gradient, parents."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward: Callable[[np.ndarray], None] | None = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(p for p in parents)
    tracked = any(p.requires_grad or p._parents for p in parents)
    if not tracked:
        return Tensor(value)
    return Tensor(value, _parents=parents, _backward=backward)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    value = a.value + b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad or b._parents:
            b.accumulate(_unbroadcast(g, b.value.shape))

    return _node(value, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    value = a.value * b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad or b._parents:
            b.accumulate(_unbroadcast(g * a.value, b.value.shape))

    return _node(value, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        a.accumulate(g * c)

    return _node(a.value * c, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.value.shape} and {b.value.shape}")
    value = a.value @ b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape))
        if b.requires_grad or b._parents:
            b.accumulate(_unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape))

    return _node(value, (a, b), backward)


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum with a generic transposed backward rule.

    Each operand's subscripts must be unique within that operand and appear
    in the union of the output and the other operand (no internal traces);
    that covers every contraction this package needs.
    """
    a, b = as_tensor(a), as_tensor(b)
    lhs, out = spec.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for term in (sa, sb, out):
        if len(set(term)) != len(term):
            raise ShapeError(f"einsum {spec!r}: repeated subscript within one term")
    for term, other in ((sa, sb), (sb, sa)):
        if not set(term) <= set(out) | set(other):
            raise ShapeError(f"einsum {spec!r}: subscript traced within a single operand")
    try:
        value = np.einsum(spec, a.value, b.value)
    except ValueError as exc:
        raise ShapeError(
            f"einsum {spec!r}: incompatible shapes {a.value.shape} and {b.value.shape}"
        ) from exc

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(np.einsum(f"{out},{sb}->{sa}", g, b.value))
        if b.requires_grad or b._parents:
            b.accumulate(np.einsum(f"{sa},{out}->{sb}", a.value, g))

    return _node(value, (a, b), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    value = 1.0 / (1.0 + np.exp(-a.value))

    def backward(g):
        a.accumulate(g * value * (1.0 - value))

    return _node(value, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    value = np.tanh(a.value)

    def backward(g):
        a.accumulate(g * (1.0 - value * value))

    return _node(value, (a,), backward)


def gelu(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    value = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        a.accumulate(g * grad)

    return _node(value, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    value = np.log(a.value)

    def backward(g):
        a.accumulate(g / a.value)

    return _node(value, (a,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only through the interior."""
    a = as_tensor(a)
    value = np.clip(a.value, lo, hi)
    interior = (a.value > lo) & (a.value < hi)

    def backward(g):
        a.accumulate(g * interior)

    return _node(value, (a,), backward)


def softmax(a, axis: int = -1, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over ``axis``; ``additive_mask`` is added to the logits first
    (use ``MASK_BIAS`` entries to zero positions out exactly)."""
    a = as_tensor(a)
    z = a.value if additive_mask is None else a.value + additive_mask
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    value = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        a.accumulate(value * (g - inner))

    return _node(value, (a,), backward)


def layer_norm(a, gain, bias, eps: float = _LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.value.shape[-1]
    mu = a.value.mean(axis=-1, keepdims=True)
    xc = a.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    value = gain.value * xhat + bias.value

    def backward(g):
        if gain.requires_grad or gain._parents:
            gain.accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad or bias._parents:
            bias.accumulate(g.reshape(-1, d).sum(axis=0))
        if a.requires_grad or a._parents:
            gx = g * gain.value
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            a.accumulate(term * inv)

    return _node(value, (a, gain, bias), backward)


def gather_rows(a, indices) -> Tensor:
    """Select rows along axis 0 (embedding lookup / anchor readout)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    value = a.value[idx]

    def backward(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        a.accumulate(full)

    return _node(value, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    value = a.value.reshape(shape)

    def backward(g):
        a.accumulate(g.reshape(a.value.shape))

    return _node(value, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate(g.transpose(inverse))

    return _node(a.value.transpose(axes), (a,), backward)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.value.shape).copy())

    return _node(value, (a,), backward)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor reachable from a scalar loss."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(_topo_order(loss)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Backward pass returning a name -> gradient map (zeros when unused)."""
    backward(loss)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.value))
        for name, p in params.items()
    }


def grad_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must rebuild its graph from ``params`` on every call and be
    deterministic.  Relative error is |analytic - numeric| scaled by
    max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    zero_grads(params)
    loss = f()
    if not np.isfinite(loss.value).all():
        raise ValueError("grad_check: function value is not finite")
    analytic = gradients(loss, params)
    worst = 0.0
    for name, p in params.items():
        flat = p.value.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = float(f().value)
            flat[i] = keep - h
            down = float(f().value)
            flat[i] = keep
            if not (np.isfinite(up) and np.isfinite(down)):
                raise ValueError(f"grad_check: non-finite value while perturbing {name}")
            numeric = (up - down) / (2.0 * h)
            err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# Checkpoint format: JSON envelope, float64 little-endian bytes in base64.
# Round-trips bit-exactly by construction.
_CHECKPOINT_FORMAT = "spantable-params"
_CHECKPOINT_VERSION = 1


def params_to_dict(params: dict[str, Tensor]) -> dict:
    entries = {}
    for name, p in params.items():
        data = np.ascontiguousarray(p.value, dtype="<f8")
        entries[name] = {
            "shape": list(p.value.shape),
            "data": base64.b64encode(data.tobytes()).decode("ascii"),
        }
    return {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "dtype": "float64",
        "byte_order": "little",
        "params": entries,
    }


def params_from_dict(data: dict) -> dict[str, Tensor]:
    if data.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not a parameter checkpoint: format={data.get('format')!r}")
    if data.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    params = {}
    for name, entry in data["params"].items():
        raw = base64.b64decode(entry["data"])
        value = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(np.float64)
        params[name] = Tensor(value, requires_grad=True)
    return params


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_params(path, params: dict[str, Tensor]) -> None:
    atomic_write_text(path, json.dumps(params_to_dict(params)))


def load_params(path) -> dict[str, Tensor]:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
