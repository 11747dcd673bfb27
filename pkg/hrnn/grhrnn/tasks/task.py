from typing import Dict, List

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from grhrnn.common.config import ConfigParams
from grhrnn.hierarchy import schedule as schedules
from grhrnn.hierarchy.schedule import TickSchedule
from grhrnn.tasks.batch import SequenceBatch


def one_hot_inputs(ids: Tensor, width: int, dtype=torch.float64) -> Tensor:
    return F.one_hot(torch.as_tensor(ids, dtype=torch.long), num_classes=width).to(dtype)


class Task(object):
    """
    What the trainer needs from an experiment: input and output widths, batches and an evaluation metric
    """
    name = "task"
    # Metric name and whether lower values are better
    metric = "eval_metric"
    lower_is_better = True

    def __init__(self, config: ConfigParams):
        self.config = config
        self.input_size = 1
        self.num_classes = 1
        self.discrete = True

    def k_max(self) -> List[int]:
        """
        Decoder one-hot width per sending level
        """
        return list(self.config.ticks)

    def schedule(self, length: int) -> TickSchedule:
        return schedules.fixed(self.config.levels, self.config.ticks, length)

    def sample_batch(self, rng: np.random.Generator, dtype=torch.float64) -> List[SequenceBatch]:
        raise NotImplementedError

    def evaluate(self, model) -> Dict[str, float]:
        raise NotImplementedError
