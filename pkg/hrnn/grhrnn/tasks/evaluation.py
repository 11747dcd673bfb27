import numpy as np
import torch

from grhrnn.hierarchy.schedule import TickSchedule


def evaluate_classification(model, dataset, schedule: TickSchedule, batch_size: int = 100) -> float:
    """
    Fraction of sequences whose label is the argmax of the logits at the final step.
    model maps (inputs [T, B, D], schedule) to logits [T, B, C]
    """
    if len(dataset) == 0:
        return 0.0
    dtype = getattr(model, "dtype", torch.float64)
    correct = 0
    for start in range(0, len(dataset), batch_size):
        indices = np.arange(start, min(start + batch_size, len(dataset)))
        batch = dataset.batch(indices, schedule, dtype)
        with torch.no_grad():
            logits = model(batch.inputs, batch.schedule)
        predicted = logits[-1].argmax(dim=-1)
        correct += int((predicted == batch.targets[-1]).sum())
    return correct / len(dataset)
