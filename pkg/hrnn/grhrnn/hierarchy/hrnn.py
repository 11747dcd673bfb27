"""
Hierarchical RNN: a stack of LSTM levels where level j + 1 ticks on a subset of the ticks of level j.

At a tick of level j + 1 the lower level j restarts from a zero state and receives the fresh state of level j + 1
as part of its input, between two ticks it continues its recurrence with a zero vector in place of the upper state.
A ticking upper level consumes the state its lower level had at the previous step (the up-sent state).
Inside a step levels update top-down, so the lower level always sees the upper state of the same step.

How the upward and downward edges behave in the backward pass is decided by an EdgePolicy: identity for true
gradients, a gradient barrier on upward edges for restricted gradients, detach and injection for the streaming sweep.
"""
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import torch
import torch.nn as nn
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.common.errors import ShapeError
from grhrnn.hierarchy.schedule import TickSchedule
from grhrnn.model.decoder import Decoder
from grhrnn.model.init import make_generator
from grhrnn.model.lstm_cell import LstmCell
from grhrnn.model.output_head import OutputHead


@dataclass
class LevelState:
    h: Tensor
    c: Tensor

    def detached(self) -> "LevelState":
        return LevelState(self.h.detach(), self.c.detach())


class EdgePolicy(object):
    """
    Identity edges, the backward pass computes true gradients
    """

    def upward(self, level: int, t: int, h: Tensor) -> Tensor:
        # level is the receiving (upper) level
        return h

    def downward(self, level: int, t: int, h: Tensor) -> Tensor:
        # level is the receiving (lower) level
        return h

    @contextmanager
    def scope(self, level: int) -> Iterator[None]:
        yield


class BarrierEdges(EdgePolicy):
    """
    Gradient barrier on every upward edge, the backward pass computes restricted gradients
    """

    def upward(self, level: int, t: int, h: Tensor) -> Tensor:
        return ops.barrier(h)


@dataclass
class StepOutput:
    states: List[LevelState]
    logits: Tensor
    ticked: List[int]
    # Sending level j -> raw h^j_{t-1}, for every level j + 1 ticking at t
    up_sent: Dict[int, Tensor] = field(default_factory=dict)
    # Ticking level j -> input it received from below (x_t for level 0, edge-wrapped h^{j-1}_{t-1} otherwise)
    received: Dict[int, Tensor] = field(default_factory=dict)


@dataclass
class SequenceOutput:
    logits: List[Tensor]
    tick_log: List[List[int]]
    up_sent_log: List[Dict[int, Tensor]]
    states: List[LevelState]


class HierarchicalRnn(nn.Module):

    def __init__(self, input_size: int, level_sizes: Sequence[int], num_classes: int, k_max: Sequence[int],
                 decoder_units: int = 256, dtype=torch.float64):
        super(HierarchicalRnn, self).__init__()
        if len(level_sizes) < 2:
            raise ShapeError(f"A hierarchy needs at least 2 levels, got sizes {list(level_sizes)}")
        if len(k_max) != len(level_sizes) - 1:
            raise ShapeError(f"Expected {len(level_sizes) - 1} k_max values, got {list(k_max)}")
        self.input_size = input_size
        self.level_sizes = list(level_sizes)
        self.num_classes = num_classes
        self.k_max = list(k_max)
        self.dtype = dtype

        top = len(level_sizes) - 1
        cells = []
        for level, size in enumerate(level_sizes):
            below = input_size if level == 0 else level_sizes[level - 1]
            above = level_sizes[level + 1] if level < top else 0
            cells.append(LstmCell(below + above, size, dtype=dtype))
        self.cells = nn.ModuleList(cells)
        self.head = OutputHead(level_sizes[0], num_classes, dtype=dtype)
        # Decoder j reconstructs the inputs of a level j segment from the state level j sends upward
        self.decoders = nn.ModuleList([
            Decoder(state_size=level_sizes[level], max_index=k_max[level],
                    output_size=input_size if level == 0 else level_sizes[level - 1],
                    hidden_units=decoder_units, dtype=dtype)
            for level in range(top)])

    @property
    def num_levels(self) -> int:
        return len(self.level_sizes)

    def init_parameters(self, seed: int):
        generator = make_generator(seed)
        for cell in self.cells:
            cell.reset_parameters(generator)
        self.head.reset_parameters(generator)
        for decoder in self.decoders:
            decoder.reset_parameters(generator)

    def level_parameters(self, level: int) -> Dict[str, Tensor]:
        """
        Parameters whose gradient comes from the losses of a level segment: its cell, its decoder and,
        for level 0, the output head
        """
        prefixes = [f"cells.{level}."]
        if level < len(self.decoders):
            prefixes.append(f"decoders.{level}.")
        if level == 0:
            prefixes.append("head.")
        return {name: param for name, param in self.named_parameters()
                if any(name.startswith(prefix) for prefix in prefixes)}

    def zero_state(self, level: int, batch_size: int) -> LevelState:
        size = self.level_sizes[level]
        return LevelState(torch.zeros(batch_size, size, dtype=self.dtype),
                          torch.zeros(batch_size, size, dtype=self.dtype))

    def zero_states(self, batch_size: int) -> List[LevelState]:
        return [self.zero_state(level, batch_size) for level in range(self.num_levels)]

    def step(self, states: List[LevelState], x_t: Tensor, t: int, schedule: TickSchedule,
             edges: Optional[EdgePolicy] = None) -> StepOutput:
        if edges is None:
            edges = EdgePolicy()
        if schedule.num_levels != self.num_levels:
            raise ShapeError(f"Schedule has {schedule.num_levels} levels, model has {self.num_levels}")
        if x_t.dim() != 2 or x_t.shape[1] != self.input_size:
            raise ShapeError(f"hrnn_step: input shape {tuple(x_t.shape)} does not fit input size {self.input_size}")
        batch_size = x_t.shape[0]
        top = self.num_levels - 1
        new_states = list(states)
        output = StepOutput(states=new_states, logits=x_t, ticked=[])

        for level in reversed(range(self.num_levels)):
            if not schedule.is_tick(level, t):
                continue
            output.ticked.insert(0, level)
            if level == 0:
                below = x_t
            else:
                output.up_sent[level - 1] = states[level - 1].h
                below = edges.upward(level, t, states[level - 1].h)
            output.received[level] = below

            if level == top:
                previous = states[level]
                with edges.scope(level):
                    h, c = self.cells[level](previous.h, previous.c, below)
            else:
                if schedule.is_tick(level + 1, t):
                    previous = self.zero_state(level, batch_size)
                    above = edges.downward(level, t, new_states[level + 1].h)
                else:
                    previous = states[level]
                    above = torch.zeros(batch_size, self.level_sizes[level + 1], dtype=self.dtype)
                with edges.scope(level):
                    h, c = self.cells[level](previous.h, previous.c, ops.concat(below, above))
            new_states[level] = LevelState(h, c)

        with edges.scope(0):
            output.logits = self.head(new_states[0].h)
        return output

    def forward_sequence(self, inputs: Tensor, schedule: TickSchedule, states: Optional[List[LevelState]] = None,
                         edges: Optional[EdgePolicy] = None) -> SequenceOutput:
        """
        Iterate the step over inputs [T, B, D] from zero (or carried) states
        """
        if inputs.dim() != 3 or inputs.shape[0] != schedule.length:
            raise ShapeError(f"forward_sequence: inputs {tuple(inputs.shape)} do not fit a schedule of "
                             f"length {schedule.length}")
        if states is None:
            states = self.zero_states(inputs.shape[1])
        result = SequenceOutput(logits=[], tick_log=[], up_sent_log=[], states=states)
        for t in range(schedule.length):
            out = self.step(result.states, inputs[t], t, schedule, edges)
            result.states = out.states
            result.logits.append(out.logits)
            result.tick_log.append(out.ticked)
            result.up_sent_log.append(out.up_sent)
        return result

    def forward(self, inputs: Tensor, schedule: TickSchedule) -> Tensor:
        """
        Logits [T, B, C] of a sequence, no gradient bookkeeping beyond torch's own
        """
        return torch.stack(self.forward_sequence(inputs, schedule).logits)
