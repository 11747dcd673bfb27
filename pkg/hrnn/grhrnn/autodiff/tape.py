"""
Recording tape over torch autograd.

The values and the saved activations live in the torch graph, the tape keeps the provenance of every op applied
while it is active (op kind, input node ids, output shape) and the named leaves gradients are requested for.
A tape owns exactly one backward pass, it is rebuilt for every training step (or every segment when streaming).
"""
import weakref
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import torch
from torch import Tensor

from grhrnn.common.errors import TapeError

_active_tapes: List["Tape"] = []

# Used when ops run outside of any tape (evaluation, tests)
_default_check_finite = True


def active_tape() -> Optional["Tape"]:
    return _active_tapes[-1] if len(_active_tapes) > 0 else None


def set_default_check_finite(enabled: bool):
    global _default_check_finite
    _default_check_finite = enabled


def check_finite_enabled() -> bool:
    tape = active_tape()
    return tape.check_finite if tape is not None else _default_check_finite


@dataclass(frozen=True)
class TapeNode:
    node_id: int
    kind: str
    inputs: Tuple[Optional[int], ...]
    shape: Tuple[int, ...]


class Tape(object):

    def __init__(self, check_finite: bool = True):
        self.check_finite = check_finite
        self.nodes: List[TapeNode] = []
        self.leaves: Dict[str, Tensor] = {}
        # id(tensor) -> (weak reference, node id), the weak reference guards against id reuse
        self._ids: Dict[int, Tuple[weakref.ref, int]] = {}
        self._backward_done = False

    def __len__(self):
        return len(self.nodes)

    def node_id(self, tensor: Tensor) -> Optional[int]:
        """
        Node id of a tensor produced or watched on this tape, None for constants
        """
        entry = self._ids.get(id(tensor))
        if entry is None or entry[0]() is not tensor:
            return None
        return entry[1]

    def record(self, kind: str, inputs: Iterable[Tensor], output: Tensor) -> int:
        node_id = len(self.nodes)
        input_ids = tuple(self.node_id(x) for x in inputs)
        self.nodes.append(TapeNode(node_id=node_id, kind=kind, inputs=input_ids, shape=tuple(output.shape)))
        self._ids[id(output)] = (weakref.ref(output), node_id)
        return node_id

    def watch(self, name: str, tensor: Tensor) -> Tensor:
        """
        Register a named leaf (parameter or injected state), backward returns its gradient under the same name
        """
        if name in self.leaves:
            raise TapeError(f"Leaf {name} is already watched by this tape")
        if not tensor.requires_grad:
            raise TapeError(f"Leaf {name} does not require gradients")
        self.leaves[name] = tensor
        self.record("leaf", (), tensor)
        return tensor

    @contextmanager
    def recording(self):
        _active_tapes.append(self)
        try:
            yield self
        finally:
            _active_tapes.pop()

    def backward(self, loss: Tensor) -> Dict[str, Tensor]:
        """
        Gradients of a scalar loss with respect to every watched leaf, zeros for leaves the loss does not reach.
        Accumulation inside torch follows the graph order, repeated runs on the same graph are bit-identical.
        """
        if self._backward_done:
            raise TapeError("backward was already run on this tape, reset it before reuse")
        if loss.dim() != 0:
            raise TapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
        names = list(self.leaves.keys())
        tensors = [self.leaves[name] for name in names]
        if loss.requires_grad and len(tensors) > 0:
            grads = torch.autograd.grad(loss, tensors, allow_unused=True)
        else:
            grads = [None] * len(tensors)
        self._backward_done = True
        return {name: torch.zeros_like(tensor) if grad is None else grad
                for name, tensor, grad in zip(names, tensors, grads)}

    def reset(self):
        self.nodes = []
        self.leaves = {}
        self._ids = {}
        self._backward_done = False
