"""
Combined objective of a training step: the task loss plus, for every level sending its state upward,
beta_j times the auxiliary decoder loss.

Both backward implementations draw on the same LossPlan, built before the forward pass, so they weight and place
every loss term identically:
- task = sum over (step, element) of mask * cross-entropy, divided by the sum of the mask over the whole batch
- aux_j = sum over (tick, element) of decoder losses, divided by the number of (tick, element) pairs
- a decoder index i in {1..s} is drawn per tick per element, s being the length of the segment the tick closes
- an aux loss is placed at a tick of level j + 1 only when the level j segment it closes started inside the
  current unroll window, the last segment of a window gets none
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.autodiff.losses import nats_to_bits, softmax_cross_entropy
from grhrnn.common.errors import HrnnError, NonFiniteError
from grhrnn.model.decoder import Decoder
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.training.aux_loss import aux_loss_at_tick

HRNN = "hrnn"
GR_HRNN = "gr-hrnn"
OURS = "ours"
MR_HRNN = "mr-hrnn"
MODES = (HRNN, GR_HRNN, OURS, MR_HRNN)
RESTRICTED_MODES = (GR_HRNN, OURS)


@dataclass(frozen=True)
class StepSettings:
    mode: str
    betas: Tuple[float, ...]
    unroll: int
    check_finite: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise HrnnError(f"Mode {self.mode} not supported, expected one of {MODES}")
        if self.unroll < 1:
            raise HrnnError(f"Unroll length must be positive, got {self.unroll}")
        if any(beta < 0.0 for beta in self.betas):
            raise HrnnError(f"Auxiliary loss weights must be non-negative, got {self.betas}")

    @property
    def restricted(self) -> bool:
        return self.mode in RESTRICTED_MODES


@dataclass(frozen=True)
class AuxTick:
    level: int
    # Window-local step of the tick of level + 1 closing the segment
    t: int
    # Window-local ticks of the level inside the closed segment, oldest first
    segment: Tuple[int, ...]
    # 1-based decoder index per batch element
    index: Tensor


@dataclass
class WindowPlan:
    start: int
    stop: int
    aux_ticks: Dict[Tuple[int, int], AuxTick] = field(default_factory=dict)


@dataclass
class GroupPlan:
    # mask / task_norm, [T, B]
    task_weights: Tensor
    windows: List[WindowPlan]


@dataclass
class LossPlan:
    betas: Tuple[float, ...]
    task_norm: float
    aux_norm: List[float]
    groups: List[GroupPlan]

    def aux_weight(self, level: int, batch_size: int) -> float:
        """
        Factor turning a batch-mean decoder loss into its share of aux_j
        """
        return batch_size / self.aux_norm[level] if self.aux_norm[level] > 0 else 0.0


def windows(length: int, unroll: int) -> List[Tuple[int, int]]:
    return [(start, min(start + unroll, length)) for start in range(0, length, unroll)]


def plan_losses(batch: Sequence[SequenceBatch], settings: StepSettings, rng: np.random.Generator) -> LossPlan:
    num_levels = batch[0].schedule.num_levels
    if len(settings.betas) != num_levels - 1:
        raise HrnnError(f"Expected {num_levels - 1} auxiliary loss weights, got {settings.betas}")
    task_norm = float(sum(float(group.loss_mask.sum()) for group in batch))
    aux_norm = [0.0] * (num_levels - 1)
    groups = []
    for group in batch:
        schedule = group.schedule
        batch_size = group.batch_size
        weights = group.loss_mask / task_norm if task_norm > 0 else torch.zeros_like(group.loss_mask)
        window_plans = []
        for start, stop in windows(group.length, settings.unroll):
            window_plan = WindowPlan(start, stop)
            for level in range(num_levels - 1):
                upper_ticks = schedule.ticks_between(level + 1, start, stop)
                for previous, tick in zip(upper_ticks[:-1], upper_ticks[1:]):
                    segment = schedule.ticks_between(level, previous, tick)
                    index = torch.as_tensor(rng.integers(1, len(segment) + 1, size=batch_size), dtype=torch.long)
                    window_plan.aux_ticks[(level, tick - start)] = AuxTick(
                        level=level, t=tick - start, segment=tuple(s - start for s in segment), index=index)
                    aux_norm[level] += batch_size
            window_plans.append(window_plan)
        groups.append(GroupPlan(task_weights=weights, windows=window_plans))
    return LossPlan(betas=tuple(settings.betas), task_norm=task_norm, aux_norm=aux_norm, groups=groups)


@dataclass
class LossReport:
    task_nats: float
    aux: List[float]
    betas: List[float]
    combined: float

    @property
    def task_bits(self) -> float:
        return nats_to_bits(self.task_nats)

    def as_dict(self) -> Dict[str, float]:
        record = {"task_loss_nats": self.task_nats, "task_loss_bits": self.task_bits}
        for level, (aux, beta) in enumerate(zip(self.aux, self.betas)):
            record[f"aux_loss_{level}"] = aux
            record[f"beta_{level}"] = beta
        record["combined_loss"] = self.combined
        return record


class LossAccumulator(object):
    """
    Builds the loss terms on the active tape and sums their values for the report
    """

    def __init__(self, plan: LossPlan):
        self.plan = plan
        self.task_nats = 0.0
        self.aux = [0.0] * len(plan.betas)

    def task_term(self, logits: Tensor, group: SequenceBatch, weights: Tensor, t: int) -> Optional[Tensor]:
        """
        Share of the task loss of step t, None when no element of the step is scored
        """
        if not bool((weights[t] != 0).any()):
            return None
        term = softmax_cross_entropy(logits, group.targets[t], weights=weights[t].to(logits.dtype))
        self.task_nats += term.detach().item()
        return term

    def aux_term(self, decoder: Decoder, h_up: Tensor, segment_targets: Sequence[Tensor], aux_tick: AuxTick,
                 discrete: bool) -> Tensor:
        """
        beta_j times the share of aux_j of one tick
        """
        level = aux_tick.level
        share = self.plan.aux_weight(level, aux_tick.index.shape[0])
        weighted = aux_loss_at_tick(decoder, h_up, segment_targets, aux_tick.index, share, discrete=discrete)
        self.aux[level] += weighted.detach().item()
        return ops.scale(weighted, self.plan.betas[level])

    def report(self) -> LossReport:
        betas = list(self.plan.betas)
        combined = self.task_nats + sum(beta * aux for beta, aux in zip(betas, self.aux))
        report = LossReport(task_nats=self.task_nats, aux=list(self.aux), betas=betas, combined=combined)
        if not np.isfinite(combined):
            raise NonFiniteError(f"Non-finite loss: {report.as_dict()}")
        return report


def sum_terms(terms: Sequence[Tensor], dtype) -> Tensor:
    total = None
    for term in terms:
        total = term if total is None else ops.add(total, term)
    return torch.zeros((), dtype=dtype) if total is None else total


def zero_gradients(model: torch.nn.Module) -> Dict[str, Tensor]:
    return {name: torch.zeros_like(param) for name, param in model.named_parameters()}
