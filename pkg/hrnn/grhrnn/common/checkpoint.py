"""
Checkpoints are torch.save archives of {"model": state dict, "optimizer": Adam state dict,
"config": resolved configuration, "step": optimizer steps done}, see README for the container layout
"""
import os
from typing import Dict, Optional, Tuple

import torch
import torch.nn as nn
import torch.optim as optim

from grhrnn.common.errors import HrnnError


def save_checkpoint(path: str, model: nn.Module, optimizer: Optional[optim.Optimizer], config: Dict[str, object],
                    step: int):
    torch.save({
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "config": config,
        "step": step,
    }, path)


def read_checkpoint(path: str) -> Dict[str, object]:
    if not os.path.isfile(path):
        raise HrnnError(f"Checkpoint {path} not found")
    return torch.load(path, map_location="cpu", weights_only=False)


def load_checkpoint(path: str, model: nn.Module, optimizer: Optional[optim.Optimizer] = None) -> Tuple[int, Dict]:
    """
    Restore model (and optimizer) state, returns the step count and the stored configuration
    """
    checkpoint = read_checkpoint(path)
    model.load_state_dict(checkpoint["model"])
    if optimizer is not None and checkpoint["optimizer"] is not None:
        optimizer.load_state_dict(checkpoint["optimizer"])
    return checkpoint["step"], checkpoint["config"]
