"""Dense tensors with reverse-mode automatic differentiation.

Every op builds the graph implicitly: the output tensor records its parents
and a vector-Jacobian closure whenever any input requires gradients and
grad mode is on. backward() walks the recorded ops in reverse execution
order and accumulates gradients additively, so shared inputs sum their
path contributions.
"""

from __future__ import annotations

import math
import os
import threading
from contextlib import contextmanager

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording (inference fast path)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


_debug_checks = os.environ.get("FEWDEID_DEBUG", "") not in ("", "0")


def set_debug_checks(enabled: bool):
    """When on, every forward op asserts its output is finite."""
    global _debug_checks
    _debug_checks = enabled


class ShapeError(ValueError):
    """Operands with incompatible shapes."""


class Tensor:
    """A numpy array plus an optional gradient slot and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, recording the graph edge when it is differentiable."""
    if _debug_checks and not np.isfinite(data).all():
        raise FloatingPointError("non-finite values produced by a forward op")
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad or p._vjp is not None for p in parents):
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    return _make(
        data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}") from None
    return _make(
        data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    return _make(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, s: float) -> Tensor:
    return _make(a.data * s, (a,), lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(data, (a, b), vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(data, (a,), vjp)


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable row softmax (max subtraction before exp)."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _make(y, (a,), vjp)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
        return (g * dx,)

    return _make(data, (a,), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ShapeError(
            f"layer_norm: gamma/beta {gamma.shape}/{beta.shape} must match last dim of {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv
    data = y * gamma.data + beta.data

    def vjp(g):
        gy = g * gamma.data
        gx = inv * (gy - gy.mean(axis=-1, keepdims=True) - y * (gy * y).mean(axis=-1, keepdims=True))
        batch_axes = tuple(range(g.ndim - 1))
        ggamma = (g * y).sum(axis=batch_axes)
        gbeta = g.sum(axis=batch_axes)
        return gx, ggamma, gbeta

    return _make(data, (x, gamma, beta), vjp)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; gradient scatter-adds into the table."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: id out of range [0, {table.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    data = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(data, (table,), vjp)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted-scaling dropout: training scales kept units by 1/(1-p), so
    evaluation is the identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1): {p}")
    if p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def cross_entropy_with_ignore(logits: Tensor, targets: np.ndarray, ignore_id: int) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_id.

    logits: (N, C); targets: (N,) int. All-ignored input yields loss 0 with
    zero gradient.
    """
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} vs targets {targets.shape}"
        )
    keep = targets != ignore_id
    count = int(keep.sum())
    if count == 0:
        return _make(
            np.zeros((), dtype=logits.dtype), (logits,), lambda g: (np.zeros_like(logits.data),)
        )
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    rows = np.nonzero(keep)[0]
    nll = lse[rows] - z[rows, targets[rows]]
    data = np.asarray(nll.sum() / count, dtype=logits.dtype)

    def vjp(g):
        probs = np.exp(z - zmax)
        probs /= probs.sum(axis=1, keepdims=True)
        gl = np.zeros_like(z)
        gl[rows] = probs[rows]
        gl[rows, targets[rows]] -= 1.0
        return (gl * (float(g) / count),)

    return _make(data, (logits,), vjp)


def backward(loss: Tensor):
    """Fill .grad for every reachable tensor with requires_grad.

    Visits ops in exact reverse execution order (reverse topological order
    of the recorded graph) and clears the graph afterwards.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not (parent.requires_grad or parent._vjp is not None):
                continue
            if parent.grad is None:
                parent.grad = g.astype(parent.data.dtype, copy=True)
            else:
                parent.grad = parent.grad + g

    # clear the graph; keep only leaf gradients
    for node in topo:
        if node._vjp is not None:
            node._parents = ()
            node._vjp = None
            if not node.requires_grad:
                node.grad = None


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def grad_check(f, params: dict[str, Tensor], eps: float = 1e-4,
               samples_per_tensor: int | None = None, seed: int = 0) -> float:
    """Compare autodiff gradients of f() against central differences.

    f is a zero-argument closure returning a scalar Tensor; it must be
    deterministic (dropout off) and params should be float64. With
    samples_per_tensor set, a seeded subset of coordinates per tensor is
    checked, keeping large models tractable. Returns the max relative error
    with denominator max(|a|, |b|, 1e-8).
    """
    zero_grads(params.values())
    loss = f()
    backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for name, p in params.items():
        size = p.data.size
        if samples_per_tensor is None or samples_per_tensor >= size:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_tensor, replace=False)
        ga = analytic[name].reshape(-1)
        for c in coords:
            idx = np.unravel_index(int(c), p.data.shape)
            orig = p.data[idx]
            p.data[idx] = orig + eps
            with no_grad():
                f_plus = float(f().data)
            p.data[idx] = orig - eps
            with no_grad():
                f_minus = float(f().data)
            p.data[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            ad = float(ga[int(c)])
            err = abs(ad - fd) / max(abs(ad), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
