from dataclasses import dataclass
from typing import List, Optional

import torch
from torch import Tensor

from grhrnn.common.errors import ShapeError
from grhrnn.hierarchy.schedule import TickSchedule


@dataclass
class SequenceBatch:
    """
    Sequences sharing one tick schedule.
    inputs [T, B, D] (one-hot rows for discrete inputs), targets [T, B] class ids, loss_mask [T, B] in {0, 1},
    input_ids [T, B] symbol ids of discrete inputs (None for continuous inputs)
    """
    inputs: Tensor
    targets: Tensor
    loss_mask: Tensor
    schedule: TickSchedule
    input_ids: Optional[Tensor] = None

    def __post_init__(self):
        if self.inputs.dim() != 3:
            raise ShapeError(f"Batch inputs must be [T, B, D], got {tuple(self.inputs.shape)}")
        length, batch_size = self.inputs.shape[:2]
        if self.targets.shape != (length, batch_size) or self.loss_mask.shape != (length, batch_size):
            raise ShapeError(f"Batch targets {tuple(self.targets.shape)} and mask {tuple(self.loss_mask.shape)} "
                             f"do not fit inputs {tuple(self.inputs.shape)}")
        if self.input_ids is not None and self.input_ids.shape != (length, batch_size):
            raise ShapeError(f"Batch input ids {tuple(self.input_ids.shape)} do not fit inputs "
                             f"{tuple(self.inputs.shape)}")
        if self.schedule.length != length:
            raise ShapeError(f"Schedule length {self.schedule.length} differs from the sequence length {length}")

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[1]

    @property
    def discrete(self) -> bool:
        return self.input_ids is not None

    def decoder_target(self, t: int) -> Tensor:
        """
        What a level 0 decoder reconstructs for step t: the symbol ids or the raw input vectors
        """
        return self.input_ids[t] if self.discrete else self.inputs[t]

    def window(self, start: int, stop: int) -> "SequenceBatch":
        return SequenceBatch(inputs=self.inputs[start:stop], targets=self.targets[start:stop],
                             loss_mask=self.loss_mask[start:stop], schedule=self.schedule.window(start, stop),
                             input_ids=None if self.input_ids is None else self.input_ids[start:stop])


def stack_groups(groups: List[SequenceBatch]) -> SequenceBatch:
    """
    Merge groups that share a schedule into one group, element order follows the list order
    """
    schedule = groups[0].schedule
    if any(group.schedule.signature() != schedule.signature() for group in groups):
        raise ShapeError("Only groups sharing one schedule can be merged")
    input_ids = None if groups[0].input_ids is None else torch.cat([group.input_ids for group in groups], dim=1)
    return SequenceBatch(inputs=torch.cat([group.inputs for group in groups], dim=1),
                         targets=torch.cat([group.targets for group in groups], dim=1),
                         loss_mask=torch.cat([group.loss_mask for group in groups], dim=1),
                         schedule=schedule, input_ids=input_ids)
