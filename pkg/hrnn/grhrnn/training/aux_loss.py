"""
Auxiliary decoder loss: at a tick of level j + 1 the state level j sends upward must allow a small decoder to
reconstruct the i-th previous input of the level j segment it closes (i = 1 is the most recent one).
"""
from typing import Sequence

import torch
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.autodiff.losses import mse, softmax_cross_entropy
from grhrnn.common.errors import TargetError
from grhrnn.model.decoder import Decoder, one_hot_index


def select_previous(segment_targets: Sequence[Tensor], index: Tensor) -> Tensor:
    """
    Row b of the result is segment_targets[s - index[b]][b]
    """
    length = len(segment_targets)
    index = torch.as_tensor(index, dtype=torch.long)
    if length == 0 or int(index.min()) < 1 or int(index.max()) > length:
        raise TargetError(f"Decoder index {index.tolist()} outside a segment of length {length}")
    stacked = torch.stack(list(segment_targets))
    return stacked[length - index, torch.arange(index.shape[0])]


def decoder_loss(decoder: Decoder, h_up: Tensor, segment_targets: Sequence[Tensor], index: Tensor,
                 discrete: bool) -> Tensor:
    """
    Batch mean of the reconstruction loss, cross-entropy against symbol ids when discrete, MSE otherwise.
    Targets that are states of a lower level never receive gradient from this loss.
    """
    prediction = decoder(h_up, one_hot_index(index, decoder.max_index, dtype=h_up.dtype))
    target = select_previous(segment_targets, index)
    if discrete:
        return softmax_cross_entropy(prediction, target)
    if target.requires_grad:
        target = ops.barrier(target)
    return mse(prediction, target.to(prediction.dtype))


def aux_loss_at_tick(decoder: Decoder, h_up: Tensor, segment_targets: Sequence[Tensor], index: Tensor, beta: float,
                     discrete: bool) -> Tensor:
    return ops.scale(decoder_loss(decoder, h_up, segment_targets, index, discrete), beta)
