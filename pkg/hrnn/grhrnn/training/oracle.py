"""
Full-graph training step: every unroll window is kept in memory and differentiated with a single backward pass.
Restricted modes place a gradient barrier on every upward edge, the other modes compute true gradients.
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import Tensor

from grhrnn.autodiff.tape import Tape
from grhrnn.hierarchy.hrnn import BarrierEdges, EdgePolicy, HierarchicalRnn, LevelState
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.training.objective import (GroupPlan, LossAccumulator, LossPlan, LossReport, StepSettings, WindowPlan,
                                       plan_losses, sum_terms, zero_gradients)


def edges_for(settings: StepSettings) -> EdgePolicy:
    return BarrierEdges() if settings.restricted else EdgePolicy()


def window_loss(model: HierarchicalRnn, window: SequenceBatch, states: List[LevelState], weights: Tensor,
                window_plan: WindowPlan, accumulator: LossAccumulator,
                edges: EdgePolicy) -> Tuple[Tensor, List[LevelState]]:
    """
    Combined loss of one window from the given states, the terms are recorded on the active tape
    """
    terms = []
    # level -> step -> input received from below, the decoder targets of level >= 1
    received: Dict[int, Dict[int, Tensor]] = {level: {} for level in range(model.num_levels)}
    for t in range(window.length):
        out = model.step(states, window.inputs[t], t, window.schedule, edges)
        for level, h_up in out.up_sent.items():
            aux_tick = window_plan.aux_ticks.get((level, t))
            if aux_tick is None:
                continue
            if level == 0:
                targets = [window.decoder_target(step) for step in aux_tick.segment]
            else:
                targets = [received[level][step] for step in aux_tick.segment]
            terms.append(accumulator.aux_term(model.decoders[level], h_up, targets, aux_tick,
                                              discrete=window.discrete and level == 0))
        for level, value in out.received.items():
            received[level][t] = value
        task = accumulator.task_term(out.logits, window, weights, t)
        if task is not None:
            terms.append(task)
        states = out.states
    return sum_terms(terms, model.dtype), states


def combined_loss(model: HierarchicalRnn, batch: Sequence[SequenceBatch], plan: LossPlan,
                  edges: Optional[EdgePolicy] = None) -> Tensor:
    """
    Combined loss of a whole batch as one scalar, states carried across windows are detached
    """
    edges = edges if edges is not None else EdgePolicy()
    accumulator = LossAccumulator(plan)
    total = []
    for group, group_plan in zip(batch, plan.groups):
        states = model.zero_states(group.batch_size)
        for window_plan in group_plan.windows:
            weights = group_plan.task_weights[window_plan.start:window_plan.stop]
            window = group.window(window_plan.start, window_plan.stop)
            loss, states = window_loss(model, window, states, weights, window_plan, accumulator, edges)
            total.append(loss)
            states = [state.detached() for state in states]
    return sum_terms(total, model.dtype)


def train_step_oracle(model: HierarchicalRnn, batch: Sequence[SequenceBatch], settings: StepSettings,
                      rng: np.random.Generator) -> Tuple[Dict[str, Tensor], LossReport]:
    plan = plan_losses(batch, settings, rng)
    edges = edges_for(settings)
    accumulator = LossAccumulator(plan)
    grads = zero_gradients(model)
    for group, group_plan in zip(batch, plan.groups):
        _oracle_group(model, group, group_plan, accumulator, edges, settings, grads)
    return grads, accumulator.report()


def _oracle_group(model: HierarchicalRnn, group: SequenceBatch, group_plan: GroupPlan, accumulator: LossAccumulator,
                  edges: EdgePolicy, settings: StepSettings, grads: Dict[str, Tensor]):
    states = model.zero_states(group.batch_size)
    for window_plan in group_plan.windows:
        tape = Tape(check_finite=settings.check_finite)
        with tape.recording():
            for name, param in model.named_parameters():
                tape.watch(name, param)
            weights = group_plan.task_weights[window_plan.start:window_plan.stop]
            window = group.window(window_plan.start, window_plan.stop)
            loss, states = window_loss(model, window, states, weights, window_plan, accumulator, edges)
        with torch.no_grad():
            for name, grad in tape.backward(loss).items():
                grads[name] += grad
        states = [state.detached() for state in states]
