"""
Central finite-difference oracle for tape gradients
"""
from typing import Callable, Dict, List, Optional, Sequence

import torch
from torch import Tensor

from grhrnn.autodiff.tape import Tape
from grhrnn.common.errors import HrnnError

DENOMINATOR_FLOOR = 1e-12


def relative_error(actual: Tensor, expected: Tensor) -> float:
    """
    max |a - e| / max(max |a|, max |e|, 1e-12), normwise over the whole tensor
    """
    actual = actual.detach().to(torch.float64)
    expected = expected.detach().to(torch.float64)
    if actual.shape != expected.shape:
        raise HrnnError(f"Cannot compare gradients of shapes {tuple(actual.shape)} and {tuple(expected.shape)}")
    if actual.numel() == 0:
        return 0.0
    diff = float((actual - expected).abs().max())
    scale = max(float(actual.abs().max()), float(expected.abs().max()), DENOMINATOR_FLOOR)
    return diff / scale


def max_relative_error(actual: Dict[str, Tensor], expected: Dict[str, Tensor]) -> float:
    if set(actual.keys()) != set(expected.keys()):
        raise HrnnError(f"Gradient maps differ in keys: {sorted(set(actual) ^ set(expected))}")
    return max([relative_error(actual[name], expected[name]) for name in sorted(actual.keys())], default=0.0)


def tape_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], check_finite: bool = True) -> List[Tensor]:
    tape = Tape(check_finite=check_finite)
    with tape.recording():
        for ix, param in enumerate(params):
            tape.watch(f"param_{ix}", param)
        loss = f()
    grads = tape.backward(loss)
    return [grads[f"param_{ix}"] for ix in range(len(params))]


def numerical_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-6) -> List[Tensor]:
    """
    Central differences (f(w + s) - f(w - s)) / 2s over every coordinate of every parameter
    """
    if step <= 0.0:
        raise HrnnError(f"Finite-difference step must be positive, got {step}")
    with torch.no_grad():
        reference = float(f())
        if float(f()) != reference:
            raise HrnnError("Function is not deterministic: two evaluations at the same point differ")
        grads = []
        for param in params:
            flat = param.view(-1)
            grad = torch.zeros_like(flat)
            for ix in range(flat.numel()):
                original = flat[ix].item()
                flat[ix] = original + step
                plus = float(f())
                flat[ix] = original - step
                minus = float(f())
                flat[ix] = original
                grad[ix] = (plus - minus) / (2.0 * step)
            grads.append(grad.view_as(param))
    return grads


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-6,
                      expected: Optional[Callable[[], Sequence[Tensor]]] = None) -> float:
    """
    Maximum relative error between tape gradients and central differences, over all parameters.
    Central differences see through barriers, for barriered functions pass expected, the analytic restricted
    gradients, to compare the tape gradients against them instead.
    """
    analytic = tape_gradients(f, params)
    reference = list(expected()) if expected is not None else numerical_gradients(f, params, step)
    return max([relative_error(a, n) for a, n in zip(analytic, reference)], default=0.0)
