from typing import Dict

import torch
import torch.nn as nn
import torch.optim as optim
from torch import Tensor

from grhrnn.common.errors import ShapeError


def create_optimizer(model: nn.Module, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                     eps: float = 1e-8) -> optim.Adam:
    return optim.Adam(model.parameters(), lr=lr, betas=(beta1, beta2), eps=eps)


def adam_step(optimizer: optim.Adam, model: nn.Module, grads: Dict[str, Tensor]):
    """
    One bias-corrected Adam update of every model parameter from an explicit gradient map
    (named as in model.named_parameters())
    """
    params = dict(model.named_parameters())
    missing = sorted(set(params.keys()) - set(grads.keys()))
    if len(missing) > 0:
        raise ShapeError(f"adam_step: no gradient for parameters {missing}")
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(f"adam_step: gradient of {name} has shape {tuple(grad.shape)}, "
                             f"parameter has {tuple(param.shape)}")
        param.grad = grad.detach().to(param.dtype).clone()
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
