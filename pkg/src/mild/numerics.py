"""Minimal reverse-mode differentiation over dense 2-D float64 arrays, plus Adam.

The design is a classic explicit tape: while a :class:`Tape` is active (as a
context manager), every primitive records the node it produced; ``backward``
walks the recorded nodes in reverse execution order, which is a valid
topological order by construction.  With no tape active the same primitives
run as plain numpy, giving a zero-overhead inference path through identical
arithmetic.

Only what the models in this package need is implemented; shapes are checked
on every op and all tensors are strictly 2-D.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping

import numpy as np

from .types import rng_for

#: Probabilities are clamped to [LOG_CLAMP, 1 - LOG_CLAMP] before logs.
LOG_CLAMP = 1e-12

_ACTIVE_TAPE: "Tape | None" = None


class Tensor2:
    """A 2-D float64 array with an optional gradient of the same shape."""

    __slots__ = ("value", "grad", "_backward")

    def __init__(self, value, check: bool = True):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        if v.ndim != 2:
            raise ValueError(f"Tensor2 must be 2-D, got ndim={v.ndim}")
        if check and not np.all(np.isfinite(v)):
            raise ValueError("Tensor2 holds non-finite entries")
        self.value = v
        self.grad: np.ndarray | None = None
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ValueError(f"item() needs a (1, 1) tensor, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        return f"Tensor2(shape={self.shape})"


class Tape:
    """Records primitives in execution order; ``backward`` replays them reversed.

    The graph is single-use: after ``backward`` the node list is cleared and
    another call raises.  One tape may be active per process at a time, which
    matches the one-worker-per-training confinement assumed throughout.
    """

    def __init__(self) -> None:
        self._nodes: list[Tensor2] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor2) -> None:
        """Seed d(loss)/d(loss) = 1 and accumulate gradients into every parent."""
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward")
        if not self._nodes:
            raise RuntimeError("backward called before any recorded forward op")
        if loss.shape != (1, 1):
            raise ValueError("loss must be a (1, 1) tensor")
        loss.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        self._nodes.clear()
        self._consumed = True


def _emit(value: np.ndarray, backward: Callable[[np.ndarray], None]) -> Tensor2:
    out = Tensor2(value, check=False)
    if _ACTIVE_TAPE is not None:
        out._backward = backward
        _ACTIVE_TAPE._nodes.append(out)
    return out


def _accum(t: Tensor2, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for axis in (0, 1):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def const(value) -> Tensor2:
    """Wrap raw data as a tensor (gradients may flow into it but go unused)."""
    return Tensor2(value)


def _check_broadcast(a: Tensor2, b: Tensor2, op: str) -> None:
    for axis in (0, 1):
        da, db = a.shape[axis], b.shape[axis]
        if da != db and 1 not in (da, db):
            raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor2, b: Tensor2) -> Tensor2:
    _check_broadcast(a, b, "add")

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _emit(a.value + b.value, backward)


def mul(a: Tensor2, b: Tensor2) -> Tensor2:
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g * bv, a.shape))
        _accum(b, _unbroadcast(g * av, b.shape))

    return _emit(av * bv, backward)


def smul(a: Tensor2, c: float) -> Tensor2:
    def backward(g: np.ndarray) -> None:
        _accum(a, g * c)

    return _emit(a.value * c, backward)


def sadd(a: Tensor2, c: float) -> Tensor2:
    def backward(g: np.ndarray) -> None:
        _accum(a, g)

    return _emit(a.value + c, backward)


def neg(a: Tensor2) -> Tensor2:
    return smul(a, -1.0)


def sub(a: Tensor2, b: Tensor2) -> Tensor2:
    return add(a, neg(b))


def rsub_const(c: float, a: Tensor2) -> Tensor2:
    """c - a."""
    return sadd(neg(a), c)


def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def backward(g: np.ndarray) -> None:
        _accum(a, g @ bv.T)
        _accum(b, av.T @ g)

    return _emit(av @ bv, backward)


def affine(x: Tensor2, W: Tensor2, b: Tensor2) -> Tensor2:
    """x @ W + b with b broadcast across rows."""
    if b.shape != (1, W.shape[1]):
        raise ValueError(f"affine: bias must be (1, {W.shape[1]}), got {b.shape}")
    return add(matmul(x, W), b)


def relu(a: Tensor2) -> Tensor2:
    mask = a.value > 0

    def backward(g: np.ndarray) -> None:
        _accum(a, g * mask)

    return _emit(np.where(mask, a.value, 0.0), backward)


def sigmoid(a: Tensor2) -> Tensor2:
    # Split by sign for numerical stability at large |z|.
    z = a.value
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g: np.ndarray) -> None:
        _accum(a, g * out * (1.0 - out))

    return _emit(out, backward)


def softmax(a: Tensor2) -> Tensor2:
    """Row-wise softmax (stabilized by the row max)."""
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        inner = (g * s).sum(axis=1, keepdims=True)
        _accum(a, s * (g - inner))

    return _emit(s, backward)


def log(a: Tensor2) -> Tensor2:
    """log(max(a, LOG_CLAMP)); below the clamp the function is flat, so grad 0."""
    safe = np.maximum(a.value, LOG_CLAMP)
    live = a.value >= LOG_CLAMP

    def backward(g: np.ndarray) -> None:
        _accum(a, np.where(live, g / safe, 0.0))

    return _emit(np.log(safe), backward)


def pow_const(a: Tensor2, p: float) -> Tensor2:
    if p == 0.0:
        def backward_zero(g: np.ndarray) -> None:
            _accum(a, np.zeros_like(a.value))

        return _emit(np.ones_like(a.value), backward_zero)
    av = a.value

    def backward(g: np.ndarray) -> None:
        _accum(a, g * p * av ** (p - 1.0))

    return _emit(av ** p, backward)


def clip(a: Tensor2, lo: float, hi: float) -> Tensor2:
    """Clamp values; gradient passes only through the un-clamped interior."""
    inside = (a.value > lo) & (a.value < hi)

    def backward(g: np.ndarray) -> None:
        _accum(a, np.where(inside, g, 0.0))

    return _emit(np.clip(a.value, lo, hi), backward)


def concat_cols(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    na = a.shape[1]

    def backward(g: np.ndarray) -> None:
        _accum(a, g[:, :na])
        _accum(b, g[:, na:])

    return _emit(np.concatenate([a.value, b.value], axis=1), backward)


def col(a: Tensor2, j: int) -> Tensor2:
    if not (0 <= j < a.shape[1]):
        raise ValueError(f"col: index {j} outside {a.shape}")

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.value)
        full[:, j:j + 1] = g
        _accum(a, full)

    return _emit(a.value[:, j:j + 1].copy(), backward)


def rowsum(a: Tensor2) -> Tensor2:
    def backward(g: np.ndarray) -> None:
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _emit(a.value.sum(axis=1, keepdims=True), backward)


def sum_all(a: Tensor2) -> Tensor2:
    def backward(g: np.ndarray) -> None:
        _accum(a, np.full(a.shape, g[0, 0]))

    return _emit(np.array([[a.value.sum()]]), backward)


def mean_all(a: Tensor2) -> Tensor2:
    n = a.value.size

    def backward(g: np.ndarray) -> None:
        _accum(a, np.full(a.shape, g[0, 0] / n))

    return _emit(np.array([[a.value.mean()]]), backward)


def transpose(a: Tensor2) -> Tensor2:
    def backward(g: np.ndarray) -> None:
        _accum(a, g.T)

    return _emit(a.value.T.copy(), backward)


def center_cols(a: Tensor2) -> Tensor2:
    """Subtract the column means (gradient is the same centering projector)."""

    def backward(g: np.ndarray) -> None:
        _accum(a, g - g.mean(axis=0, keepdims=True))

    return _emit(a.value - a.value.mean(axis=0, keepdims=True), backward)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ParamStore:
    """Named trainable tensors plus Adam state.

    Initialization draws from per-name seeded streams, so adding or removing a
    parameter never changes how the others start.  The store is confined to a
    single training worker; it is not thread-safe.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.params: dict[str, Tensor2] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, shape: tuple[int, int], init: str = "glorot") -> Tensor2:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        if init == "glorot":
            value = glorot_uniform(rng_for(self.seed, f"init/{name}"), shape[0], shape[1])
        elif init == "zeros":
            value = np.zeros(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor2(value)
        self.params[name] = t
        self._m[name] = np.zeros(shape)
        self._v[name] = np.zeros(shape)
        return t

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grad_global_norm(self) -> float:
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float(np.sum(p.grad * p.grad))
        return math.sqrt(total)

    def clip_global_norm(self, max_norm: float) -> float:
        """Rescale all gradients if their joint L2 norm exceeds ``max_norm``."""
        norm = self.grad_global_norm()
        if norm > max_norm and norm > 0.0:
            scale = max_norm / norm
            for p in self.params.values():
                if p.grad is not None:
                    p.grad = p.grad * scale
        return norm

    def adam_step(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> None:
        """One bias-corrected Adam update; a missing gradient counts as zero."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros(p.shape)
            m = self._m[name] = beta1 * self._m[name] + (1.0 - beta1) * g
            v = self._v[name] = beta2 * self._v[name] + (1.0 - beta2) * (g * g)
            p.value = p.value - lr * (m / c1) / (np.sqrt(v / c2) + eps)

    def values_dict(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        if set(values) != set(self.params):
            raise ValueError("parameter names do not match the store")
        for k, v in values.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k!r}")
            self.params[k].value = arr.copy()


def numeric_gradient(f: Callable[[], float], param: Tensor2, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar-returning closure w.r.t. one tensor."""
    g = np.zeros(param.shape)
    it = np.nditer(param.value, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = param.value[idx]
        param.value[idx] = orig + eps
        hi = f()
        param.value[idx] = orig - eps
        lo = f()
        param.value[idx] = orig
        g[idx] = (hi - lo) / (2.0 * eps)
        it.iternext()
    return g
