"""Dense float64 tensors with reverse-mode automatic differentiation.

All tensor data is stored C-contiguous float64. Ops normalize their inputs
to contiguous buffers before calling into numpy, so results depend only on
values and shapes, never on how an operand was produced (view vs. copy).
Together with serial accumulation inside BLAS this gives bit-identical
outputs across runs for identical inputs.

Gradient accumulation happens on a single logical thread; tensors are
immutable once produced by an op (leaf parameters are mutated only by the
optimizer, between steps).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class NumericError(ArithmeticError):
    """An op produced NaN or Inf."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (evaluation / frozen teacher)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64, order="C")


def _contig(a: np.ndarray) -> np.ndarray:
    """C-contiguous view-or-copy; unlike ascontiguousarray it preserves 0-d shapes."""
    return np.asarray(a, order="C")


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")


class Tensor:
    """A dense row-major float64 array participating in a gradient tape.

    ``grad`` is allocated lazily and accumulates across backward calls until
    explicitly zeroed (the training loop relies on this for multi-architecture
    gradient accumulation).
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "touches", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        _check_finite(self.data, "tensor init")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.touches: list | None = None  # slice-extent log, enabled by instrumentation
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> "Tensor":
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data if data.flags["C_CONTIGUOUS"] and data.dtype == np.float64 else _as_array(data)
        out.grad = None
        out.name = None
        out.touches = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic introspection -------------------------------------------------
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
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- gradient plumbing ---------------------------------------------------
    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, order="C")
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar root, in fixed reverse-topological order."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar root")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:  # free intermediate grads, keep leaf grads
                    node.grad = None

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gdim, sdim) in enumerate(zip(g.shape, shape)):
        if sdim == 1 and gdim != 1:
            g = g.sum(axis=axis, keepdims=True)
    return _contig(g)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return Tensor._from_op(out_data, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out_data, (a, b), backward, "mul")


def relu(x: Tensor) -> Tensor:
    """max(0, x) elementwise; the subgradient at exactly 0 is 0."""
    out_data = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(g * (x.data > 0.0)))

    return Tensor._from_op(out_data, (x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(g * out_data * (1.0 - out_data)))

    return Tensor._from_op(out_data, (x,), backward, "sigmoid")


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(x.data)  # non-positive inputs surface as NumericError

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(g / x.data))

    return Tensor._from_op(out_data, (x,), backward, "log")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out_data = np.exp(x.data)  # overflow surfaces as NumericError

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(g * out_data))

    return Tensor._from_op(out_data, (x,), backward, "exp")


def clamp_min(x: Tensor, low: float) -> Tensor:
    """max(x, low); gradient passes only where x > low (0 in the clamped region)."""
    out_data = np.maximum(x.data, low)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(g * (x.data > low)))

    return Tensor._from_op(out_data, (x,), backward, "clamp_min")


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out_data = _contig(x.data.reshape(shape))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(g.reshape(x.data.shape)))

    return Tensor._from_op(out_data, (x,), backward, "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = _contig(np.transpose(x.data, axes))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_contig(np.transpose(g, inv)))

    return Tensor._from_op(out_data, (x,), backward, "permute")


def transpose_last2(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return permute(x, axes)


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out_data = _contig(np.broadcast_to(x.data, shape))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g, x.data.shape))

    return Tensor._from_op(out_data, (x,), backward, "broadcast_to")


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(_contig(g[tuple(sl)]))

    return Tensor._from_op(out_data, tuple(tensors), backward, "concat")


def shrink(x: Tensor, sizes: tuple[int, ...]) -> Tensor:
    """Leading block of ``x``: x[:sizes[0], :sizes[1], ...] as a fresh contiguous buffer.

    The backward pass scatter-adds into exactly that region of ``x.grad``; entries
    outside the block receive nothing from this op. When ``x.touches`` is a list,
    the block extents are recorded there (parameter-coverage instrumentation).
    """
    if len(sizes) != x.ndim:
        raise ShapeError(f"shrink sizes {sizes} do not match ndim {x.ndim}")
    for s, full in zip(sizes, x.data.shape):
        if not (0 < s <= full):
            raise ShapeError(f"shrink size {s} out of range for dim {full}")
    region = tuple(slice(0, s) for s in sizes)
    out_data = _contig(x.data[region])
    if x.touches is not None:
        x.touches.append(tuple(sizes))

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[region] += g

    return Tensor._from_op(out_data, (x,), backward, "shrink")


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """table[ids] for an integer index array; backward scatter-adds rows."""
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or (ids.size and ids.max() >= table.data.shape[0]):
        raise ShapeError(f"index out of range for table with {table.data.shape[0]} rows")
    out_data = _contig(table.data[ids])

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))

    return Tensor._from_op(out_data, (table,), backward, "gather_rows")


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """c = a @ b with rule dA = dC·Bᵀ, dB = Aᵀ·dC.

    Supported shapes: 2-D @ 2-D, N-D @ 2-D (shared weight), and N-D @ N-D with
    equal leading dimensions. Accumulation order inside each product is the
    fixed serial order of the underlying GEMM.
    """
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims mismatch: {ad.shape} @ {bd.shape}")
    if ad.ndim > 2 and bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul batch dims mismatch: {ad.shape} @ {bd.shape}")
    flat = ad.ndim > 2 and bd.ndim == 2  # shared weight: fold batch into one GEMM
    if flat:
        out_data = (ad.reshape(-1, ad.shape[-1]) @ bd).reshape(ad.shape[:-1] + (bd.shape[-1],))
    else:
        out_data = ad @ bd

    def backward(g):
        if a.requires_grad:
            if flat:
                ga = (_contig(g).reshape(-1, g.shape[-1]) @ bd.T).reshape(ad.shape)
            else:
                ga = g @ _contig(np.swapaxes(bd, -1, -2))
                ga = _unbroadcast(ga, ad.shape)
            a.accumulate_grad(_contig(ga))
        if b.requires_grad:
            if flat:
                gb = ad.reshape(-1, ad.shape[-1]).T @ _contig(g).reshape(-1, g.shape[-1])
            else:
                gb = _contig(np.swapaxes(ad, -1, -2)) @ g
                gb = _unbroadcast(gb, bd.shape)
            b.accumulate_grad(_contig(gb))

    return Tensor._from_op(out_data, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# reductions and normalizations
# ---------------------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    out_data = np.array(x.data.sum())

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g)))

    return Tensor._from_op(out_data, (x,), backward, "sum_all")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out_data = np.array(x.data.sum() / n)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g) / n))

    return Tensor._from_op(out_data, (x,), backward, "mean_all")


def softmax_last(x: Tensor) -> Tensor:
    """Softmax over the last axis with mandatory max-subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            x.accumulate_grad(_contig(out_data * (g - dot)))

    return Tensor._from_op(out_data, (x,), backward, "softmax_last")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor: each row exp(x − max) normalized to sum 1."""
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D tensor, got shape {x.shape}")
    return softmax_last(x)


def log_softmax_last(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        if x.requires_grad:
            soft = np.exp(out_data)
            x.accumulate_grad(_contig(g - soft * g.sum(axis=-1, keepdims=True)))

    return Tensor._from_op(out_data, (x,), backward, "log_softmax_last")


def layer_norm_last(x: Tensor, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    """y = gamma · (x − μ)/√(σ² + eps) + beta, statistics over the last axis."""
    if gamma.data.shape != (x.data.shape[-1],) or beta.data.shape != (x.data.shape[-1],):
        raise ShapeError("layer_norm gamma/beta must match the last dimension")
    d = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad(_contig((g * xhat).reshape(-1, d).sum(axis=0)))
        if beta.requires_grad:
            beta.accumulate_grad(_contig(g.reshape(-1, d).sum(axis=0)))
        if x.requires_grad:
            gg = g * gamma.data
            m1 = gg.mean(axis=-1, keepdims=True)
            m2 = (gg * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(_contig(inv_std * (gg - m1 - xhat * m2)))

    return Tensor._from_op(out_data, (x, gamma, beta), backward, "layer_norm")


# ---------------------------------------------------------------------------
# deterministic RNG
# ---------------------------------------------------------------------------

class Rng:
    """Named deterministic generator (numpy PCG64): identical seed ⇒ identical stream.

    Every use site documents its consumption order; helper streams are derived
    through ``child`` with a fixed tag so call sites cannot interleave.
    """

    algorithm = "pcg64"

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed,) + _key)))

    def child(self, *tag: int) -> "Rng":
        """Independent stream derived from (seed, tag); order-insensitive across tags."""
        return Rng(self.seed, self._key + tuple(int(t) for t in tag))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(shape) * std

    def uniform(self, shape, low: float, high: float) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=False)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(f, x: Tensor, h: float = 1e-4) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` must rebuild its graph from ``x`` on every call (so the numeric
    probe sees perturbed data). The denominator is
    max(|analytic|, |numeric|, 1e-8) per coordinate.
    """
    x.zero_grad()
    loss = f(x)
    if loss.data.size != 1:
        raise ShapeError("finite_diff_check requires a scalar-valued f")
    loss.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.zero_grad()

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f(x).item()
            flat[i] = orig - h
            f_minus = f(x).item()
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError("non-finite loss during finite differencing")
            numeric[i] = (f_plus - f_minus) / (2.0 * h)

    a = analytic.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(a - numeric) / denom))
