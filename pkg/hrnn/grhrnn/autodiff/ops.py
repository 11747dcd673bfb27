"""
Primitive ops over dense tensors.

Every op checks its shape rule, records a node on the active tape and checks the output for NaN/Inf.
Shape rules (batch dimensions are leading dimensions):
- add, sub, mul: equal shapes
- matmul: [..., n] @ [n, m] -> [..., m]
- transpose: 2-D only
- concat: along the last axis, equal leading shapes
- slice: [start, stop) on the last axis
- add_bias: [..., n] + [n]
- sigmoid, tanh, relu, barrier: any shape
- sum: any shape -> scalar
- scale: any shape times a Python float
"""
from typing import Sequence

import torch
from torch import Tensor

from grhrnn.autodiff.tape import active_tape, check_finite_enabled
from grhrnn.common.errors import HrnnError, NonFiniteError, ShapeError


class GradientBarrier(torch.autograd.Function):
    """
    Identity in the forward pass, exactly zero gradient in the backward pass
    """

    @staticmethod
    def forward(ctx, x):
        return x.clone()

    @staticmethod
    def backward(ctx, grad_output):
        return torch.zeros_like(grad_output)


def _shape(x: Tensor):
    return tuple(x.shape)


def _mismatch(kind: str, a: Tensor, b: Tensor) -> ShapeError:
    return ShapeError(f"{kind}: incompatible shapes {_shape(a)} and {_shape(b)}")


def _check_shapes(kind: str, inputs: Sequence[Tensor], attrs: dict):
    if kind in ("add", "sub", "mul"):
        a, b = inputs
        if a.shape != b.shape:
            raise _mismatch(kind, a, b)
    elif kind == "matmul":
        a, b = inputs
        if a.dim() < 1 or b.dim() != 2 or a.shape[-1] != b.shape[0]:
            raise _mismatch(kind, a, b)
    elif kind == "transpose":
        if inputs[0].dim() != 2:
            raise ShapeError(f"{kind}: expected a 2-D tensor, got shape {_shape(inputs[0])}")
    elif kind == "concat":
        first = inputs[0]
        for other in inputs[1:]:
            if other.dim() != first.dim() or other.shape[:-1] != first.shape[:-1]:
                raise _mismatch(kind, first, other)
    elif kind == "slice":
        x = inputs[0]
        start, stop = attrs["start"], attrs["stop"]
        if x.dim() < 1 or not 0 <= start < stop <= x.shape[-1]:
            raise ShapeError(f"{kind}: range [{start}, {stop}) outside last axis of shape {_shape(x)}")
    elif kind == "add_bias":
        x, bias = inputs
        if bias.dim() != 1 or x.dim() < 1 or x.shape[-1] != bias.shape[0]:
            raise _mismatch(kind, x, bias)


_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "matmul": lambda a, b: torch.matmul(a, b),
    "transpose": lambda a: a.t(),
    "concat": lambda *xs: torch.cat(xs, dim=-1),
    "slice": lambda x, start, stop: x[..., start:stop],
    "sigmoid": torch.sigmoid,
    "tanh": torch.tanh,
    "relu": torch.relu,
    "add_bias": lambda x, bias: x + bias,
    "sum": lambda x: x.sum(),
    "scale": lambda x, factor: x * factor,
    "barrier": GradientBarrier.apply,
}


def finish(kind: str, inputs: Sequence[Tensor], output: Tensor) -> Tensor:
    """
    Record an op result on the active tape and check it is finite
    """
    tape = active_tape()
    node_id = tape.record(kind, inputs, output) if tape is not None else None
    if check_finite_enabled() and not bool(torch.isfinite(output).all()):
        raise NonFiniteError(f"{kind} produced non-finite values at node {node_id}")
    return output


def apply(kind: str, *inputs: Tensor, **attrs) -> Tensor:
    op = _OPS.get(kind)
    if op is None:
        raise HrnnError(f"Op kind {kind} not supported")
    _check_shapes(kind, inputs, attrs)
    return finish(kind, inputs, op(*inputs, **attrs))


def add(a: Tensor, b: Tensor) -> Tensor:
    return apply("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return apply("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return apply("mul", a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply("matmul", a, b)


def transpose(a: Tensor) -> Tensor:
    return apply("transpose", a)


def concat(*xs: Tensor) -> Tensor:
    return apply("concat", *xs)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    return apply("slice", x, start=start, stop=stop)


def sigmoid(x: Tensor) -> Tensor:
    return apply("sigmoid", x)


def tanh(x: Tensor) -> Tensor:
    return apply("tanh", x)


def relu(x: Tensor) -> Tensor:
    return apply("relu", x)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    return apply("add_bias", x, bias)


def sum_all(x: Tensor) -> Tensor:
    return apply("sum", x)


def scale(x: Tensor, factor: float) -> Tensor:
    return apply("scale", x, factor=float(factor))


def barrier(x: Tensor) -> Tensor:
    return apply("barrier", x)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    # x @ weight^T + bias, weight stored as (out, in)
    return add_bias(matmul(x, transpose(weight)), bias)
