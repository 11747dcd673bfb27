import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.common.errors import ShapeError, TargetError
from grhrnn.model.init import glorot_uniform_


def one_hot_index(index: Tensor, width: int, dtype=torch.float64) -> Tensor:
    """
    One-hot rows for 1-based indices i in {1..width}
    """
    index = torch.as_tensor(index, dtype=torch.long)
    if index.numel() == 0 or int(index.min()) < 1 or int(index.max()) > width:
        raise TargetError(f"Decoder index outside [1, {width}]: {index.tolist()}")
    return F.one_hot(index - 1, num_classes=width).to(dtype)


class Decoder(nn.Module):
    """
    Two layer network (ReLU in between) that, given an up-sent state and a one-hot index i,
    outputs the i-th previous input of the segment that state summarises
    """
    def __init__(self, state_size: int, max_index: int, output_size: int, hidden_units: int = 256,
                 dtype=torch.float64):
        super(Decoder, self).__init__()
        self.state_size = state_size
        self.max_index = max_index
        self.output_size = output_size

        self.w1 = nn.Parameter(torch.zeros(hidden_units, state_size + max_index, dtype=dtype))
        self.b1 = nn.Parameter(torch.zeros(hidden_units, dtype=dtype))
        self.w2 = nn.Parameter(torch.zeros(output_size, hidden_units, dtype=dtype))
        self.b2 = nn.Parameter(torch.zeros(output_size, dtype=dtype))

    def reset_parameters(self, generator: torch.Generator):
        glorot_uniform_(self.w1, generator)
        glorot_uniform_(self.w2, generator)
        with torch.no_grad():
            self.b1.zero_()
            self.b2.zero_()

    def forward(self, h_up: Tensor, index_onehot: Tensor) -> Tensor:
        if index_onehot.shape[-1] != self.max_index or index_onehot.shape[:-1] != h_up.shape[:-1]:
            raise ShapeError(f"decoder_predict: one-hot shape {tuple(index_onehot.shape)} does not fit "
                             f"state {tuple(h_up.shape)} and {self.max_index} indices")
        is_binary = bool(((index_onehot == 0) | (index_onehot == 1)).all())
        if not is_binary or not bool((index_onehot.sum(dim=-1) == 1).all()):
            raise TargetError("decoder_predict: index must be one-hot with exactly one 1 per row")
        hidden = ops.relu(ops.linear(ops.concat(h_up, index_onehot), self.w1, self.b1))
        return ops.linear(hidden, self.w2, self.b2)
