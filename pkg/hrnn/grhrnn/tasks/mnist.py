"""
Pixel MNIST: the pixels of a digit are presented one per step, the label is predicted at the last step.

IDX format (big endian):
i32 | Magic (2051 images, 2049 labels)
i32 | Item count
i32 | Row count     (images only)
i32 | Column count  (images only)
u8[] | Pixels row-wise, or labels
"""
import math
import os
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import torch

from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import DataFormatError
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.tasks.evaluation import evaluate_classification
from grhrnn.tasks.task import Task

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
NUM_CLASSES = 10


def _read_be32(data: bytes, offset: int, path: str) -> int:
    if len(data) < offset + 4:
        raise DataFormatError(f"{path}: truncated header at byte offset {offset}")
    return struct.unpack_from(">i", data, offset)[0]


def parse_idx_images(data: bytes, path: str = "<bytes>") -> np.ndarray:
    magic = _read_be32(data, 0, path)
    if magic != IMAGE_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic} at byte offset 0, expected {IMAGE_MAGIC}")
    count, rows, cols = (_read_be32(data, offset, path) for offset in (4, 8, 12))
    for offset, value in ((4, count), (8, rows), (12, cols)):
        if value < 0 or (offset > 4 and value == 0):
            raise DataFormatError(f"{path}: invalid dimension {value} at byte offset {offset}")
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise DataFormatError(f"{path}: payload ends at byte offset {len(data)}, expected {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def parse_idx_labels(data: bytes, path: str = "<bytes>") -> np.ndarray:
    magic = _read_be32(data, 0, path)
    if magic != LABEL_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic} at byte offset 0, expected {LABEL_MAGIC}")
    count = _read_be32(data, 4, path)
    if count < 0:
        raise DataFormatError(f"{path}: invalid dimension {count} at byte offset 4")
    if len(data) != 8 + count:
        raise DataFormatError(f"{path}: payload ends at byte offset {len(data)}, expected {8 + count}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if count > 0 and int(labels.max()) >= NUM_CLASSES:
        offset = 8 + int(np.argmax(labels >= NUM_CLASSES))
        raise DataFormatError(f"{path}: label {labels[offset - 8]} outside 0..9 at byte offset {offset}")
    return labels


def write_idx_images(images: np.ndarray) -> bytes:
    count, rows, cols = images.shape
    return struct.pack(">iiii", IMAGE_MAGIC, count, rows, cols) + images.astype(np.uint8).tobytes()


def write_idx_labels(labels: np.ndarray) -> bytes:
    return struct.pack(">ii", LABEL_MAGIC, len(labels)) + labels.astype(np.uint8).tobytes()


def read_file(path: str) -> bytes:
    if not os.path.isfile(path):
        raise DataFormatError(f"Data file {path} not found")
    with open(path, "rb") as in_fp:
        return in_fp.read()


def downsample(images: np.ndarray, side: int) -> np.ndarray:
    """
    Mean pooling to side x side, the images are zero padded (evenly on both sides) to a multiple of side first,
    e.g. 28 -> 32 then 4 x 4 pooling for side 8
    """
    count, rows, cols = images.shape
    factor = math.ceil(max(rows, cols) / side)
    padded = side * factor
    top, left = (padded - rows) // 2, (padded - cols) // 2
    canvas = np.zeros((count, padded, padded), dtype=np.float64)
    canvas[:, top:top + rows, left:left + cols] = images
    return canvas.reshape(count, side, factor, side, factor).mean(axis=(2, 4))


def permutation(length: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(length)


@dataclass
class MnistDataset:
    # [N, P] in presentation order
    pixels: np.ndarray
    labels: np.ndarray
    permutation: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.labels)

    @property
    def sequence_length(self) -> int:
        return self.pixels.shape[1]

    def batch(self, indices, schedule, dtype=torch.float64) -> SequenceBatch:
        indices = np.asarray(indices)
        length = self.sequence_length
        inputs = torch.as_tensor(self.pixels[indices].T[:, :, None], dtype=dtype)
        labels = torch.as_tensor(self.labels[indices], dtype=torch.long)
        mask = torch.zeros(length, len(indices), dtype=dtype)
        mask[-1] = 1.0
        return SequenceBatch(inputs=inputs, targets=labels.unsqueeze(0).repeat(length, 1), loss_mask=mask,
                             schedule=schedule)


def load_mnist(images_path: str, labels_path: str, permute: bool = False, perm_seed: int = 0,
               downsample_side: Optional[int] = None, limit: Optional[int] = None) -> MnistDataset:
    images = parse_idx_images(read_file(images_path), images_path)
    labels = parse_idx_labels(read_file(labels_path), labels_path)
    if len(images) != len(labels):
        raise DataFormatError(f"{images_path} holds {len(images)} images, {labels_path} holds {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    pixels = images.astype(np.float64) / 255.0
    if downsample_side is not None:
        pixels = downsample(pixels, downsample_side)
    pixels = pixels.reshape(len(pixels), -1)
    order = None
    if permute:
        order = permutation(pixels.shape[1], perm_seed)
        pixels = pixels[:, order]
    return MnistDataset(pixels=pixels, labels=labels.astype(np.int64), permutation=order)


class MnistTask(Task):
    name = "mnist"
    metric = "eval_accuracy"
    lower_is_better = False

    def __init__(self, config: ConfigParams, permute: bool = False):
        super(MnistTask, self).__init__(config)
        self.input_size = 1
        self.num_classes = NUM_CLASSES
        self.discrete = False
        side = config.mnist_side if config.mnist_side > 0 else None
        self.train_set = load_mnist(config.data_path(config.mnist_train_images),
                                    config.data_path(config.mnist_train_labels), permute=permute,
                                    perm_seed=config.perm_seed, downsample_side=side,
                                    limit=config.mnist_train_limit or None)
        self.eval_set = load_mnist(config.data_path(config.mnist_test_images),
                                   config.data_path(config.mnist_test_labels), permute=permute,
                                   perm_seed=config.perm_seed, downsample_side=side,
                                   limit=config.mnist_eval_limit or None)

    def sample_batch(self, rng: np.random.Generator, dtype=torch.float64) -> List[SequenceBatch]:
        indices = rng.integers(0, len(self.train_set), size=self.config.batch_size)
        return [self.train_set.batch(indices, self.schedule(self.train_set.sequence_length), dtype)]

    def evaluate(self, model) -> Dict[str, float]:
        schedule = self.schedule(self.eval_set.sequence_length)
        return {self.metric: evaluate_classification(model, self.eval_set, schedule,
                                                     batch_size=self.config.batch_size)}
