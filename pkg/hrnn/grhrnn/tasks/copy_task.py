"""
Copy task: a random binary string of length n followed by n blanks, the network must output blanks while reading
and then recall the string, e.g. input 01101***** with target *****01101
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
import torch
from torch import Tensor

from grhrnn.autodiff.losses import LN2
from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import HrnnError, ShapeError
from grhrnn.hierarchy.schedule import TickSchedule
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.tasks.task import Task, one_hot_inputs

SYMBOLS = "01*"
BLANK = 2
NUM_SYMBOLS = len(SYMBOLS)


@dataclass
class CopySample:
    input: np.ndarray
    target: np.ndarray
    recall_mask: np.ndarray

    @property
    def n(self) -> int:
        return len(self.input) // 2

    def as_text(self) -> Tuple[str, str]:
        return "".join(SYMBOLS[s] for s in self.input), "".join(SYMBOLS[s] for s in self.target)


def gen_copy(n: int, rng: np.random.Generator) -> CopySample:
    if n < 1:
        raise HrnnError(f"Copy length must be at least 1, got {n}")
    prefix = rng.integers(0, 2, size=n)
    blanks = np.full(n, BLANK)
    return CopySample(input=np.concatenate([prefix, blanks]), target=np.concatenate([blanks, prefix]),
                      recall_mask=np.concatenate([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)]))


def make_copy_batch(n: int, batch_size: int, rng: np.random.Generator, schedule: TickSchedule,
                    dtype=torch.float64) -> SequenceBatch:
    """
    batch_size samples of length 2n, scored on the recall positions only
    """
    samples = [gen_copy(n, rng) for _ in range(batch_size)]
    input_ids = torch.as_tensor(np.stack([s.input for s in samples], axis=1), dtype=torch.long)
    targets = torch.as_tensor(np.stack([s.target for s in samples], axis=1), dtype=torch.long)
    mask = torch.as_tensor(np.stack([s.recall_mask for s in samples], axis=1), dtype=dtype)
    return SequenceBatch(inputs=one_hot_inputs(input_ids, NUM_SYMBOLS, dtype), targets=targets, loss_mask=mask,
                         schedule=schedule, input_ids=input_ids)


def bits_per_char(logits: Tensor, targets, mask) -> float:
    """
    Mean base-2 cross-entropy over the masked positions, logits [T, C] or [T, B, C]
    """
    logits = logits.detach().to(torch.float64)
    targets = torch.as_tensor(targets, dtype=torch.long)
    mask = torch.as_tensor(mask).to(torch.bool)
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise ShapeError(f"bits_per_char: logits {tuple(logits.shape)}, targets {tuple(targets.shape)} and "
                         f"mask {tuple(mask.shape)} do not match")
    if not bool(mask.any()):
        return 0.0
    log_probs = torch.log_softmax(logits, dim=-1).gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return float(-log_probs[mask].mean()) / LN2


def l_max_search(predict: Callable[[SequenceBatch], Tensor], make_batch: Callable[[int, np.random.Generator],
                 SequenceBatch], threshold: float = 0.15, trial_batches: int = 4, max_length: int = 200,
                 seed: int = 0) -> int:
    """
    Largest n such that every length 1..n is recalled below the threshold (mean bits/char over trial_batches fresh
    batches per length), 0 when length 1 already fails
    """
    l_max = 0
    for n in range(1, max_length + 1):
        rng = np.random.default_rng([seed, n])
        losses = []
        for _ in range(trial_batches):
            batch = make_batch(n, rng)
            with torch.no_grad():
                logits = predict(batch)
            losses.append(bits_per_char(logits, batch.targets, batch.loss_mask))
        if float(np.mean(losses)) >= threshold:
            break
        l_max = n
    return l_max


class CopyTask(Task):
    name = "copy"
    metric = "eval_bits_per_char"
    lower_is_better = True

    def __init__(self, config: ConfigParams):
        super(CopyTask, self).__init__(config)
        self.input_size = NUM_SYMBOLS
        self.num_classes = NUM_SYMBOLS
        self.discrete = True
        self.copy_length = config.copy_length

    def make_batch(self, n: int, rng: np.random.Generator, dtype=torch.float64) -> SequenceBatch:
        return make_copy_batch(n, self.config.batch_size, rng, self.schedule(2 * n), dtype)

    def sample_batch(self, rng: np.random.Generator, dtype=torch.float64) -> List[SequenceBatch]:
        return [self.make_batch(self.copy_length, rng, dtype)]

    def evaluate(self, model) -> Dict[str, float]:
        rng = np.random.default_rng(self.config.seed_eval)
        losses = []
        for _ in range(self.config.eval_batches):
            batch = self.make_batch(self.copy_length, rng, model.dtype)
            with torch.no_grad():
                logits = model(batch.inputs, batch.schedule)
            losses.append(bits_per_char(logits, batch.targets, batch.loss_mask))
        return {self.metric: float(np.mean(losses))}

    def l_max(self, model) -> int:
        return l_max_search(predict=lambda batch: model(batch.inputs, batch.schedule),
                            make_batch=lambda n, rng: self.make_batch(n, rng, model.dtype),
                            threshold=self.config.lmax_threshold, trial_batches=self.config.eval_batches,
                            max_length=self.config.lmax_max_length, seed=self.config.seed_eval)
