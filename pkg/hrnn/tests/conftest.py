import numpy as np
import pytest
import torch

from grhrnn.autodiff.tape import set_default_check_finite
from grhrnn.hierarchy import schedule as schedules
from grhrnn.hierarchy.hrnn import HierarchicalRnn
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.tasks.copy_task import NUM_SYMBOLS, make_copy_batch


@pytest.fixture(autouse=True)
def finite_checks():
    set_default_check_finite(True)
    yield
    set_default_check_finite(True)


@pytest.fixture
def make_model():
    def _make(level_sizes=(5, 6), ks=(4,), decoder_units=7, input_size=NUM_SYMBOLS, num_classes=NUM_SYMBOLS,
              seed=0):
        model = HierarchicalRnn(input_size=input_size, level_sizes=list(level_sizes), num_classes=num_classes,
                                k_max=list(ks), decoder_units=decoder_units)
        model.init_parameters(seed)
        return model
    return _make


@pytest.fixture
def copy_batch():
    def _make(n, batch_size=3, ks=(4,), seed=0):
        schedule = schedules.fixed(len(ks) + 1, list(ks), 2 * n)
        return make_copy_batch(n, batch_size, np.random.default_rng(seed), schedule)
    return _make


@pytest.fixture
def pixel_batch():
    """
    Continuous inputs scored at the last step only, like pixel MNIST
    """
    def _make(length, batch_size=3, ks=(4,), num_classes=4, seed=0):
        generator = torch.Generator().manual_seed(seed)
        inputs = torch.rand(length, batch_size, 1, generator=generator, dtype=torch.float64)
        labels = torch.randint(0, num_classes, (batch_size,), generator=generator)
        mask = torch.zeros(length, batch_size, dtype=torch.float64)
        mask[-1] = 1.0
        return SequenceBatch(inputs=inputs, targets=labels.unsqueeze(0).repeat(length, 1), loss_mask=mask,
                             schedule=schedules.fixed(len(ks) + 1, list(ks), length))
    return _make
