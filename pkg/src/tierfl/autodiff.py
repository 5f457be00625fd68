"""Dense float64 tensors with reverse-mode automatic differentiation.

The op inventory is deliberately small: matrix multiply, same-shape
elementwise arithmetic, ReLU, scalar scaling, bias broadcast over rows,
reductions, and 1-D slicing/reshape for working with flattened
parameter vectors. Ops record onto an explicit :class:`Tape`; recording
happens only while a tape is active, so evaluation-only forward passes
cost nothing extra.

Tapes are per execution context, never global. Each simulated node owns
its own tape for a training step, which keeps gradient state of
co-resident nodes fully isolated. A tape may be re-entered to append
more nodes (e.g. to seed an upstream gradient received from another
node) before calling :meth:`Tape.backward`.
"""
from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray
# Maps the gradient w.r.t. an op output to gradients w.r.t. each input
# (None for inputs that do not need one).
GradFn = Callable[[Array], tuple[Optional[Array], ...]]

_LOCAL = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_LOCAL, "tapes", None)
    if stack is None:
        stack = []
        _LOCAL.tapes = stack
    return stack


def active_tape() -> Optional["Tape"]:
    """The innermost tape currently recording in this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def _ensure_finite(arr: Array, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    """Dense float64 array. Treated as immutable once created; ``grad``
    is the only field that mutates (filled by :meth:`Tape.backward`)."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _ensure_finite(arr, "tensor constructor input")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Array] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Copy with no grad requirement and no graph history."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("inputs", "output", "grad_fn")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor, grad_fn: GradFn):
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


class Tape:
    """Append-only record of primitive ops for one forward computation.

    Nodes are stored in execution order, which is a topological order of
    the data flow, so the reverse sweep in :meth:`backward` visits every
    node exactly once with its output gradient fully accumulated.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _tape_stack().pop()
        if popped is not self:
            raise ContractError("tape context exited out of order")
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, inputs: tuple[Tensor, ...], output: Tensor, grad_fn: GradFn) -> None:
        self._nodes.append(_Node(inputs, output, grad_fn))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` of every requires-grad leaf reachable from ``loss``.

        ``loss`` must be a scalar (single element). Gradients accumulate
        into existing ``grad`` buffers. The tape is cleared afterwards;
        a second backward needs a fresh forward pass.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self._nodes:
            raise ContractError("backward on an empty tape")
        produced = {id(n.output) for n in self._nodes}
        grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self._nodes):
            gout = grads.get(id(node.output))
            if gout is None:
                continue
            for tin, gin in zip(node.inputs, node.grad_fn(gout)):
                if gin is None or not tin.requires_grad:
                    continue
                _ensure_finite(gin, "backward gradient")
                key = id(tin)
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
                    holders[key] = tin
        for key, tensor in holders.items():
            if key in produced or not tensor.requires_grad:
                continue
            g = grads[key].reshape(tensor.data.shape)
            tensor.grad = g if tensor.grad is None else tensor.grad + g
        self._nodes.clear()


def record_op(inputs: Sequence[Tensor], out_data: Array, grad_fn: GradFn) -> Tensor:
    """Create the output tensor for a primitive and record it if a tape
    is active and any input participates in differentiation. Shared by
    the built-in primitives and by modules registering their own
    (e.g. fused loss kernels)."""
    _ensure_finite(out_data, "op output")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    tape = active_tape()
    if tape is not None and needs:
        tape._record(tuple(inputs), out, grad_fn)
    return out


# ---- primitives ---- #


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g: Array):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return record_op((a, b), ad @ bd, grad_fn)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return record_op((a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return record_op((a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return record_op((a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(a: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)
    if not np.isfinite(alpha):
        raise NumericError("scale factor must be finite")
    return record_op((a,), a.data * alpha, lambda g: (g * alpha,))


def relu(a: Tensor) -> Tensor:
    # Subgradient at exactly zero is zero.
    mask = a.data > 0.0
    return record_op((a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Row-broadcast add of a length-d vector onto an (n, d) matrix."""
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_bias needs (n, d) and (d,), got {x.shape} and {bias.shape}")
    return record_op((x, bias), x.data + bias.data[None, :], lambda g: (g, g.sum(axis=0)))


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return record_op((a,), np.asarray(a.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise ContractError("mean of an empty tensor")
    return scale(sum_all(a), 1.0 / a.data.size)


def slice_1d(a: Tensor, start: int, length: int) -> Tensor:
    if a.data.ndim != 1:
        raise DimensionError(f"slice_1d needs a 1-D tensor, got shape {a.shape}")
    if start < 0 or length < 0 or start + length > a.data.shape[0]:
        raise ContractError(f"slice [{start}, {start + length}) outside length {a.data.shape[0]}")
    total = a.data.shape[0]

    def grad_fn(g: Array):
        full = np.zeros(total)
        full[start:start + length] = g
        return (full,)

    return record_op((a,), a.data[start:start + length].copy(), grad_fn)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}")
    old = a.data.shape
    return record_op((a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


def gradient_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Worst-case relative error between reverse-mode and central differences.

    ``f`` must map a tensor to a scalar tensor. Returns
    max_i |autodiff_i - fd_i| / max(1, |fd_i|) over all coordinates of x.
    """
    if h <= 0:
        raise ContractError("step size h must be positive")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
        if out.data.size != 1:
            raise ContractError("gradient_check needs a scalar-valued function")
        tape.backward(out)
    auto = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
    auto = auto.ravel()
    base = x.data.ravel()
    worst = 0.0
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + h
        fp = f(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] = base[i] - h
        fm = f(Tensor(bumped.reshape(x.data.shape))).item()
        fd = (fp - fm) / (2.0 * h)
        err = abs(auto[i] - fd) / max(1.0, abs(fd))
        if err > worst:
            worst = err
    return worst
