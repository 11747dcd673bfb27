from typing import Tuple

import torch
import torch.nn as nn
from torch import Tensor

from grhrnn.autodiff import ops
from grhrnn.common.errors import ShapeError
from grhrnn.model.init import glorot_uniform_


class LstmCell(nn.Module):
    """
    LSTM cell, gate rows ordered as (input, forget, cell candidate, output)
    """
    def __init__(self, input_size: int, hidden_size: int, dtype=torch.float64):
        super(LstmCell, self).__init__()
        assert input_size > 0 and hidden_size > 0, f"Invalid LSTM sizes {input_size}, {hidden_size}"
        self.input_size = input_size
        self.hidden_size = hidden_size

        self.w_x = nn.Parameter(torch.zeros(4 * hidden_size, input_size, dtype=dtype))
        self.w_h = nn.Parameter(torch.zeros(4 * hidden_size, hidden_size, dtype=dtype))
        self.b = nn.Parameter(torch.zeros(4 * hidden_size, dtype=dtype))

    def reset_parameters(self, generator: torch.Generator):
        glorot_uniform_(self.w_x, generator)
        glorot_uniform_(self.w_h, generator)
        with torch.no_grad():
            self.b.zero_()
            # Forget gate bias
            self.b[self.hidden_size:2 * self.hidden_size] = 1.0

    def forward(self, h: Tensor, c: Tensor, x: Tensor) -> Tuple[Tensor, Tensor]:
        if x.shape[-1] != self.input_size or h.shape[-1] != self.hidden_size or c.shape != h.shape:
            raise ShapeError(f"lstm_step: input {tuple(x.shape)}, h {tuple(h.shape)}, c {tuple(c.shape)} "
                             f"do not fit a cell with input {self.input_size} and hidden {self.hidden_size}")
        size = self.hidden_size
        gates = ops.add_bias(ops.add(ops.matmul(x, ops.transpose(self.w_x)),
                                     ops.matmul(h, ops.transpose(self.w_h))), self.b)
        input_gate = ops.sigmoid(ops.slice_last(gates, 0, size))
        forget_gate = ops.sigmoid(ops.slice_last(gates, size, 2 * size))
        candidate = ops.tanh(ops.slice_last(gates, 2 * size, 3 * size))
        output_gate = ops.sigmoid(ops.slice_last(gates, 3 * size, 4 * size))

        c_new = ops.add(ops.mul(forget_gate, c), ops.mul(input_gate, candidate))
        h_new = ops.mul(output_gate, ops.tanh(c_new))
        return h_new, c_new
