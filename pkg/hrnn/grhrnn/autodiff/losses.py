import math
from typing import Optional, Union

import torch
from torch import Tensor

from grhrnn.autodiff.ops import finish
from grhrnn.common.errors import ShapeError, TargetError

LN2 = math.log(2.0)


def nats_to_bits(value: float) -> float:
    return value / LN2


def softmax_cross_entropy(logits: Tensor, target: Union[int, Tensor], weights: Optional[Tensor] = None) -> Tensor:
    """
    -log softmax(logits)[target] in nats.
    logits [C] with an integer target gives the single value, logits [B, C] with targets [B] gives the batch mean,
    or the weighted sum over the batch when per-row weights are given.
    """
    if logits.dim() == 1:
        logits_2d = logits.unsqueeze(0)
        target_1d = torch.as_tensor([int(target)], dtype=torch.long)
    elif logits.dim() == 2:
        logits_2d = logits
        target_1d = torch.as_tensor(target, dtype=torch.long).reshape(-1)
    else:
        raise ShapeError(f"softmax_cross_entropy: logits must be 1-D or 2-D, got shape {tuple(logits.shape)}")
    num_classes = logits_2d.shape[1]
    if target_1d.shape[0] != logits_2d.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: incompatible shapes {tuple(logits.shape)} and {tuple(target_1d.shape)}")
    if int(target_1d.min()) < 0 or int(target_1d.max()) >= num_classes:
        raise TargetError(f"softmax_cross_entropy: target out of range [0, {num_classes})")

    # Max-subtraction, the log-softmax gradient does not depend on the shift
    shifted = logits_2d - logits_2d.max(dim=1, keepdim=True).values.detach()
    log_norm = torch.log(torch.exp(shifted).sum(dim=1))
    nll = log_norm - shifted.gather(1, target_1d.unsqueeze(1)).squeeze(1)

    if logits.dim() == 1:
        loss = nll[0]
    elif weights is None:
        loss = nll.mean()
    else:
        if weights.shape != nll.shape:
            raise ShapeError(f"softmax_cross_entropy: weights shape {tuple(weights.shape)} "
                             f"does not match batch {tuple(nll.shape)}")
        loss = (nll * weights).sum()
    return finish("softmax_cross_entropy", (logits,), loss)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """
    Mean over all elements of the squared difference
    """
    if pred.shape != target.shape:
        raise ShapeError(f"mse: incompatible shapes {tuple(pred.shape)} and {tuple(target.shape)}")
    loss = ((pred - target) ** 2).mean()
    return finish("mse", (pred, target), loss)
