import torch
import torch.nn as nn
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.model.init import glorot_uniform_


class OutputHead(nn.Module):
    """
    Linear head producing the output logits y_t from the lowest level state
    """
    def __init__(self, hidden_size: int, num_classes: int, dtype=torch.float64):
        super(OutputHead, self).__init__()
        self.weight = nn.Parameter(torch.zeros(num_classes, hidden_size, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(num_classes, dtype=dtype))

    def reset_parameters(self, generator: torch.Generator):
        glorot_uniform_(self.weight, generator)
        with torch.no_grad():
            self.bias.zero_()

    def forward(self, h: Tensor) -> Tensor:
        return ops.linear(h, self.weight, self.bias)
