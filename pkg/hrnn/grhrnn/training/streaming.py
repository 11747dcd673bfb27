"""
Streaming restricted-gradient TBPTT.

A single forward sweep over each window. Right before level j + 1 ticks, the level j segment that just finished is
backpropagated over its own losses (task losses of its steps for level 0, the auxiliary loss of the closing tick,
and for j >= 1 the stored gradients received from level j - 1). This yields the level j parameter gradients and one
stored gradient for the level j + 1 state injected at the start of the segment, then the segment is released.
At the end of a window every open segment is finished bottom-up and the top level is backpropagated over its
stored gradients. Upward edges are cut, so the result equals the full-graph step with gradient barriers.
"""
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.autodiff.tape import Tape
from grhrnn.common.errors import HrnnError
from grhrnn.hierarchy.hrnn import EdgePolicy, HierarchicalRnn, LevelState, StepOutput
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.training.ledger import GRAD, STATE, MemoryLedger
from grhrnn.training.objective import (AuxTick, LossAccumulator, LossReport, StepSettings, WindowPlan, plan_losses,
                                       sum_terms, zero_gradients)

INJECTED = "injected"


@dataclass
class StoredGrad:
    # Superior state injected at the start of a finished segment, still part of the superior segment's graph
    source: Tensor
    grad: Tensor
    key: Tuple


@dataclass
class SegmentBuffer:
    level: int
    start: int
    tape: Tape
    injected_source: Optional[Tensor] = None
    injected_leaf: Optional[Tensor] = None
    state_keys: List[Tuple] = field(default_factory=list)
    # step -> decoder target received at that step
    received: Dict[int, Tensor] = field(default_factory=dict)
    terms: List[Tensor] = field(default_factory=list)
    stored_grads: List[StoredGrad] = field(default_factory=list)


class StreamingSweep(EdgePolicy):
    """
    Edge policy driving one window of the streaming sweep: upward edges are detached, every injection of an upper
    state opens a new segment of the lower level whose tape watches the injected copy
    """

    def __init__(self, model: HierarchicalRnn, window: SequenceBatch, window_plan: WindowPlan,
                 accumulator: LossAccumulator, weights: Tensor, ledger: MemoryLedger, grads: Dict[str, Tensor],
                 check_finite: bool = True, tag: Tuple = ()):
        self.model = model
        self.window = window
        self.window_plan = window_plan
        self.accumulator = accumulator
        self.weights = weights
        self.ledger = ledger
        self.grads = grads
        self.check_finite = check_finite
        self.tag = tag
        self.buffers: Dict[int, SegmentBuffer] = {}
        self.t = 0

    def _open(self, level: int) -> SegmentBuffer:
        assert level not in self.buffers, f"Level {level} already has a live segment"
        tape = Tape(check_finite=self.check_finite)
        with tape.recording():
            for name, param in self.model.level_parameters(level).items():
                tape.watch(name, param)
        buffer = SegmentBuffer(level=level, start=self.t, tape=tape)
        self.buffers[level] = buffer
        return buffer

    def upward(self, level: int, t: int, h: Tensor) -> Tensor:
        return h.detach()

    def downward(self, level: int, t: int, h: Tensor) -> Tensor:
        buffer = self._open(level)
        leaf = h.detach().requires_grad_(True)
        buffer.injected_source = h
        buffer.injected_leaf = leaf
        with buffer.tape.recording():
            buffer.tape.watch(INJECTED, leaf)
        return leaf

    @contextmanager
    def scope(self, level: int) -> Iterator[None]:
        buffer = self.buffers.get(level)
        if buffer is None:
            buffer = self._open(level)
        with buffer.tape.recording():
            yield

    def run(self, states: List[LevelState]) -> List[LevelState]:
        schedule = self.window.schedule
        num_levels = self.model.num_levels
        for t in range(self.window.length):
            self.t = t
            if t > 0:
                for level in range(num_levels - 1):
                    if schedule.is_tick(level + 1, t):
                        self._finish_segment(level, states, self.window_plan.aux_ticks.get((level, t)))
            out = self.model.step(states, self.window.inputs[t], t, schedule, self)
            self._after_step(out, t)
            states = out.states
        for level in range(num_levels):
            self._finish_segment(level, states, None)
        return states

    def _after_step(self, out: StepOutput, t: int):
        for level in out.ticked:
            buffer = self.buffers[level]
            key = self.tag + (STATE, level, t)
            self.ledger.retain(level, STATE, key, 2 * self.model.level_sizes[level])
            buffer.state_keys.append(key)
            if level == 0:
                buffer.received[t] = self.window.decoder_target(t)
            else:
                buffer.received[t] = out.received[level]
        with self.scope(0):
            task = self.accumulator.task_term(out.logits, self.window, self.weights, t)
        if task is not None:
            self.buffers[0].terms.append(task)

    def _finish_segment(self, level: int, states: List[LevelState], aux_tick: Optional[AuxTick]):
        buffer = self.buffers.pop(level, None)
        if buffer is None:
            return
        with buffer.tape.recording():
            terms = list(buffer.terms)
            if aux_tick is not None:
                targets = [buffer.received[step] for step in aux_tick.segment]
                terms.append(self.accumulator.aux_term(self.model.decoders[level], states[level].h, targets,
                                                       aux_tick, discrete=self.window.discrete and level == 0))
            for stored in buffer.stored_grads:
                terms.append(ops.sum_all(ops.mul(stored.source, stored.grad)))
            loss = sum_terms(terms, self.model.dtype)
        grads = buffer.tape.backward(loss)
        with torch.no_grad():
            for name, grad in grads.items():
                if name != INJECTED:
                    self.grads[name] += grad

        if buffer.injected_leaf is not None:
            upper = self.buffers.get(level + 1)
            if upper is None:
                raise HrnnError(f"Segment of level {level} finished without a live level {level + 1} segment")
            key = self.tag + (GRAD, level + 1, buffer.start)
            self.ledger.retain(level + 1, GRAD, key, self.model.level_sizes[level + 1])
            upper.stored_grads.append(StoredGrad(source=buffer.injected_source, grad=grads[INJECTED], key=key))
        for key in buffer.state_keys:
            self.ledger.release(key)
        for stored in buffer.stored_grads:
            self.ledger.release(stored.key)


def train_step_streaming(model: HierarchicalRnn, batch: Sequence[SequenceBatch], settings: StepSettings,
                         rng: np.random.Generator) -> Tuple[Dict[str, Tensor], LossReport, MemoryLedger]:
    if not settings.restricted:
        raise HrnnError(f"Streaming backward computes restricted gradients only, mode {settings.mode} needs the "
                        f"full-graph step")
    plan = plan_losses(batch, settings, rng)
    accumulator = LossAccumulator(plan)
    ledger = MemoryLedger(model.num_levels)
    grads = zero_gradients(model)
    for group_ix, (group, group_plan) in enumerate(zip(batch, plan.groups)):
        states = model.zero_states(group.batch_size)
        for window_ix, window_plan in enumerate(group_plan.windows):
            sweep = StreamingSweep(model, group.window(window_plan.start, window_plan.stop), window_plan,
                                   accumulator, group_plan.task_weights[window_plan.start:window_plan.stop],
                                   ledger, grads, check_finite=settings.check_finite, tag=(group_ix, window_ix))
            states = [state.detached() for state in sweep.run(states)]
    return grads, accumulator.report(), ledger
