import math

import torch
from torch import Tensor


def glorot_uniform_(weight: Tensor, generator: torch.Generator) -> Tensor:
    """
    Uniform in +-sqrt(6 / (fan_in + fan_out)), weight stored as (fan_out, fan_in)
    """
    fan_out, fan_in = weight.shape
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=generator)
    return weight


def make_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed & 0xFFFF_FFFF_FFFF_FFFF)
    return generator
