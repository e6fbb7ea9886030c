"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is dynamic: every operation records its inputs and a vector-
Jacobian product closure on the output tensor, and ``backward`` walks a
freshly built topological tape.  Only scalar-vs-tensor broadcasting is
allowed; everything else goes through explicit ops (``add_bias``,
``gather_rows``, ...) so shape bugs fail loudly.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class AutodiffError(Exception):
    """Base class for tensor library failures."""


class ShapeError(AutodiffError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(AutodiffError):
    """A NaN or Inf appeared in a tensor value."""


def _check_finite(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError("tensor contains NaN or Inf")


class Tensor:
    """A dense float64 array that can participate in backpropagation."""

    __slots__ = ("data", "requires_grad", "grad", "_inputs", "_vjp",
                 "_backward_done")

    def __init__(self, data, requires_grad: bool = False,
                 _inputs: tuple = (), _vjp: Optional[Callable] = None):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._inputs = _inputs
        self._vjp = _vjp
        self._backward_done = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        """A constant copy that stops gradient flow."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _result(data: np.ndarray, inputs: Sequence[Tensor],
            vjp: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    if needs:
        return Tensor(data, requires_grad=True, _inputs=tuple(inputs), _vjp=vjp)
    # prune the graph below non-differentiable results (e.g. a frozen teacher)
    return Tensor(data, requires_grad=False)


class Tape:
    """Topologically ordered record of all tensors reaching a root."""

    def __init__(self, root: Tensor):
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
            for parent in node._inputs:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``."""
    if loss.size != 1:
        raise AutodiffError(f"backward root must be scalar, got shape {loss.shape}")
    if loss._backward_done:
        raise AutodiffError("backward already ran for this tensor; rebuild the graph")
    loss._backward_done = True

    tape = Tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        input_grads = node._vjp(g)
        for parent, pg in zip(node._inputs, input_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def _as_operand(b):
    """Returns (array_or_scalar, tensor_or_None)."""
    if isinstance(b, Tensor):
        return b.data, b
    if isinstance(b, numbers.Real):
        return float(b), None
    raise AutodiffError(f"unsupported operand type {type(b).__name__}")


def elementwise(op_kind: str, a: Tensor, b) -> Tensor:
    """add/sub/mul with an equal-shape tensor or a scalar; scale is scalar-only."""
    if op_kind == "scale":
        if isinstance(b, Tensor):
            raise AutodiffError("scale expects a scalar multiplier")
        s = float(b)
        return _result(a.data * s, (a,), lambda g, s=s: (g * s,))

    b_val, b_tensor = _as_operand(b)
    if b_tensor is not None and b_tensor.shape != a.shape:
        raise ShapeError(
            f"elementwise {op_kind}: shapes {a.shape} and {b_tensor.shape} differ")

    if op_kind == "add":
        data = a.data + b_val
        vjp = lambda g: (g, g)
    elif op_kind == "sub":
        data = a.data - b_val
        vjp = lambda g: (g, -g)
    elif op_kind == "mul":
        data = a.data * b_val
        vjp = lambda g, bv=b_val, av=a.data: (g * bv, g * av)
    else:
        raise AutodiffError(f"unknown elementwise op {op_kind!r}")

    inputs = (a,) if b_tensor is None else (a, b_tensor)
    if b_tensor is None:
        inner = vjp
        vjp = lambda g: (inner(g)[0],)
    return _result(data, inputs, vjp)


def add(a: Tensor, b) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b) -> Tensor:
    return elementwise("mul", a, b)


def scale(a: Tensor, s: float) -> Tensor:
    return elementwise("scale", a, s)


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _result(a.data.reshape(shape), (a,),
                   lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _result(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                   lambda g: (g.transpose(inv),))


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient to the table."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"gather_rows expects 1-D ids, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise AutodiffError(
            f"gather_rows index out of range for table with {table.shape[0]} rows")

    def vjp(g, ids=ids, rows=table.shape[0]):
        dt = np.zeros((rows,) + g.shape[1:], dtype=np.float64)
        np.add.at(dt, ids, g)
        return (dt,)

    return _result(table.data[ids], (table,), vjp)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., d] + b[d]; the bias gradient sums over all leading axes."""
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: x {x.shape} vs bias {b.shape}")
    lead = tuple(range(x.data.ndim - 1))
    return _result(x.data + b.data, (x, b),
                   lambda g: (g, g.sum(axis=lead)))


def select_index(x: Tensor, index: int, axis: int = 1) -> Tensor:
    """Slice a single position along ``axis`` (e.g. the leading [CLS] slot)."""
    data = np.take(x.data, index, axis=axis)

    def vjp(g, shape=x.shape, index=index, axis=axis):
        dx = np.zeros(shape, dtype=np.float64)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        dx[tuple(sl)] = g
        return (dx,)

    return _result(np.ascontiguousarray(data), (x,), vjp)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product, or stacked (batched) product for equal leading dims."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    if a.data.ndim != b.data.ndim or a.shape[:-2] != b.shape[:-2]:
        if not (a.data.ndim == 2 and b.data.ndim == 2):
            raise ShapeError(f"matmul leading dims differ: {a.shape} x {b.shape}")

    def vjp(g, ad=a.data, bd=b.data):
        da = np.matmul(g, bd.swapaxes(-1, -2))
        db = np.matmul(ad.swapaxes(-1, -2), g)
        return (da, db)

    return _result(np.matmul(a.data, b.data), (a, b), vjp)


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------

def _rows_view(data: np.ndarray, axis: int) -> tuple[np.ndarray, int]:
    """Move ``axis`` last and flatten to 2-D; returns (view, moved_axis)."""
    nd = data.ndim
    axis = axis % nd
    moved = np.moveaxis(data, axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, data.shape[axis]), axis


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    rows, ax = _rows_view(x.data, axis)
    p_rows = kernels.softmax_rows(rows)
    moved_shape = np.moveaxis(x.data, ax, -1).shape
    p = np.moveaxis(p_rows.reshape(moved_shape), -1, ax)

    def vjp(g, p=p, ax=ax):
        inner = (g * p).sum(axis=ax, keepdims=True)
        return (p * (g - inner),)

    return _result(p, (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    k = x.shape[-1]
    if gain.shape != (k,) or bias.shape != (k,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} vs last axis {k}")
    if eps <= 0:
        raise AutodiffError("layer_norm eps must be positive")
    rows = x.data.reshape(-1, k)
    out_rows, mean, inv_std = kernels.layernorm_rows(
        np.ascontiguousarray(rows), gain.data, bias.data, eps)
    xhat = (rows - mean) * inv_std

    def vjp(g, xhat=xhat, inv_std=inv_std, gd=gain.data, k=k, shape=x.shape):
        g2 = g.reshape(-1, k)
        dgain = (g2 * xhat).sum(axis=0)
        dbias = g2.sum(axis=0)
        dxhat = g2 * gd
        dx = inv_std * (dxhat
                        - dxhat.mean(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return (dx.reshape(shape), dgain, dbias)

    return _result(out_rows.reshape(x.shape), (x, gain, bias), vjp)


def gelu(x: Tensor) -> Tensor:
    out = kernels.gelu_forward(np.ascontiguousarray(x.data))
    return _result(out, (x,),
                   lambda g, xd=x.data: (kernels.gelu_backward(
                       np.ascontiguousarray(xd), np.ascontiguousarray(g)),))


# ---------------------------------------------------------------------------
# losses and reductions
# ---------------------------------------------------------------------------

_LOG_CLAMP = 1e-12


def cross_entropy(probs: Tensor, targets: Tensor) -> Tensor:
    """Mean of -target . log(prob) over rows; accepts soft targets.

    Probabilities below 1e-12 are clamped inside the log so a confident
    wrong prediction yields a large finite loss instead of -inf.
    """
    if probs.shape != targets.shape:
        raise ShapeError(f"cross_entropy: probs {probs.shape} vs targets {targets.shape}")
    if probs.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D inputs, got {probs.shape}")
    t = targets.data
    if (t < -1e-6).any() or np.abs(t.sum(axis=1) - 1.0).max() > 1e-6:
        raise AutodiffError("cross_entropy targets are not on the probability simplex")
    n = probs.shape[0]
    pc = np.maximum(probs.data, _LOG_CLAMP)
    value = -(t * np.log(pc)).sum() / n

    def vjp(g, pc=pc, t=t, n=n, raw=probs.data):
        gp = np.where(raw >= _LOG_CLAMP, -(t / pc) / n, 0.0) * g
        gt = (-np.log(pc) / n) * g
        return (gp, gt)

    return _result(np.array(value), (probs, targets), vjp)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = a.size
    return _result(np.array((diff * diff).sum() / n), (a, b),
                   lambda g, diff=diff, n=n: (g * 2.0 * diff / n,
                                              g * (-2.0) * diff / n))


def tsum(x: Tensor) -> Tensor:
    return _result(np.array(x.data.sum()), (x,),
                   lambda g, shape=x.shape: (np.broadcast_to(g, shape).copy(),))


def tmean(x: Tensor) -> Tensor:
    n = x.size
    return _result(np.array(x.data.mean()), (x,),
                   lambda g, shape=x.shape, n=n: (
                       np.broadcast_to(g / n, shape).copy(),))


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, constant(keep))


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

@dataclass
class FiniteDiffReport:
    max_rel_err: float
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor,
                      h: float = 1e-4, tol: float = 1e-4,
                      max_entries: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None) -> FiniteDiffReport:
    """Compare analytic gradients of a scalar function against central differences.

    Relative error uses max(|analytic|, |numeric|, 1) as denominator so that
    near-zero gradients are judged on absolute error.
    """
    if h <= 0:
        raise AutodiffError("finite_diff_check requires h > 0")
    x.zero_grad()
    out = f(x)
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.zero_grad()

    flat_idx = np.arange(x.size)
    if max_entries is not None and max_entries < x.size:
        gen = rng if rng is not None else np.random.default_rng(0)
        flat_idx = gen.choice(x.size, size=max_entries, replace=False)

    flat = x.data.reshape(-1)
    a_flat = analytic.reshape(-1)
    max_err = 0.0
    for i in flat_idx:
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x).item()
        flat[i] = orig - h
        lo = f(x).item()
        flat[i] = orig
        numeric = (hi - lo) / (2.0 * h)
        denom = max(abs(a_flat[i]), abs(numeric), 1.0)
        max_err = max(max_err, abs(a_flat[i] - numeric) / denom)
    return FiniteDiffReport(max_rel_err=max_err, n_checked=len(flat_idx), tol=tol)
