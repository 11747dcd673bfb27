import configparser
import os
from typing import Dict, List, Optional

import torch

from grhrnn.common.errors import ConfigError
from grhrnn.training.ledger import memory_formula

TASKS = ("copy", "mnist", "mnist-permuted", "ptb-char")
MODES = ("hrnn", "gr-hrnn", "ours", "mr-hrnn")
BACKWARDS = ("oracle", "streaming")
PRECISIONS = ("float64", "float32")
BOUNDARY = "boundary"

DATA_ROOT_ENV = "HRNN_DATA_ROOT"

# section -> key -> (type, default), keys are unique across sections
SCHEMA = {
    "MODEL": {
        "task": (str, "copy"),
        "mode": (str, "ours"),
        "backward": (str, "oracle"),
        "levels": (int, 2),
        "level_sizes": (List[int], [64, 128]),
        # Tick ratio per level boundary, or "boundary" for word-driven ticks
        "ticks": (str, "6"),
        "decoder_units": (int, 256),
        "precision": (str, "float64"),
        "check_finite": (bool, True),
    },
    "TRAIN": {
        "unroll": (int, 60),
        "betas": (List[float], [1.0]),
        "learning_rate": (float, 0.001),
        "adam_beta1": (float, 0.9),
        "adam_beta2": (float, 0.999),
        "adam_eps": (float, 1e-8),
        "batch_size": (int, 50),
        "num_steps": (int, 1000),
        "seed_init": (int, 0),
        "seed_data": (int, 1),
        "seed_eval": (int, 2),
        "log_frequency": (int, 10),
        "eval_frequency": (int, 100),
        "eval_batches": (int, 4),
        "save_model_frequency": (int, 1000),
        "copy_length": (int, 24),
        "lmax_threshold": (float, 0.15),
        "lmax_max_length": (int, 200),
    },
    "DATA": {
        "mnist_train_images": (str, "mnist/train-images-idx3-ubyte"),
        "mnist_train_labels": (str, "mnist/train-labels-idx1-ubyte"),
        "mnist_test_images": (str, "mnist/t10k-images-idx3-ubyte"),
        "mnist_test_labels": (str, "mnist/t10k-labels-idx1-ubyte"),
        # 0 keeps the 28 x 28 images
        "mnist_side": (int, 0),
        "mnist_train_limit": (int, 0),
        "mnist_eval_limit": (int, 0),
        "perm_seed": (int, 0),
        "ptb_train": (str, "ptb/ptb.char.train.txt"),
        "ptb_valid": (str, "ptb/ptb.char.valid.txt"),
        "ptb_test": (str, "ptb/ptb.char.test.txt"),
        "ptb_prefix_bytes": (int, 0),
        "ptb_eval_chars": (int, 10000),
    },
}

KEY_SECTIONS = {key: section for section, keys in SCHEMA.items() for key in keys}


def _convert(key: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(raw)
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]
        if kind is List[int]:
            return [int(value) for value in raw.split(",") if value.strip() != ""]
        if kind is List[float]:
            return [float(value) for value in raw.split(",") if value.strip() != ""]
        return kind(raw)
    except ValueError:
        raise ConfigError(f"Invalid value {raw!r} for key {key}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ConfigParams(object):

    def __init__(self, file: Optional[str] = None, overrides: Optional[Dict[str, str]] = None):

        config = configparser.ConfigParser()
        if file is not None:
            if not os.path.isfile(file):
                raise ConfigError(f"Config file {file} not found")
            with open(file) as in_fp:
                config.read_file(in_fp)

        values = {}
        for section in config.sections():
            if section not in SCHEMA:
                raise ConfigError(f"Unknown config section [{section}] in {file}")
            for key, raw in config.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"Unknown config key {key} in section [{section}]")
                values[key] = raw
        for key, raw in (overrides or {}).items():
            if key not in KEY_SECTIONS:
                raise ConfigError(f"Unknown config key {key}")
            values[key] = str(raw)

        for section, keys in SCHEMA.items():
            for key, (kind, default) in keys.items():
                value = _convert(key, kind, values[key]) if key in values else default
                setattr(self, key, list(value) if isinstance(value, list) else value)

        self.ticks = self._parse_ticks(self.ticks)
        self._validate()

    @staticmethod
    def _parse_ticks(raw):
        if isinstance(raw, list):
            return raw
        if raw.strip() == BOUNDARY:
            return BOUNDARY
        return _convert("ticks", List[int], raw)

    def _validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"Invalid task {self.task}, expected one of {TASKS}")
        if self.mode not in MODES:
            raise ConfigError(f"Invalid mode {self.mode}, expected one of {MODES}")
        if self.backward not in BACKWARDS:
            raise ConfigError(f"Invalid backward {self.backward}, expected one of {BACKWARDS}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"Invalid precision {self.precision}, expected one of {PRECISIONS}")
        if self.backward == "streaming" and self.mode not in ("gr-hrnn", "ours"):
            raise ConfigError(f"backward streaming computes restricted gradients, mode {self.mode} needs oracle")
        if self.levels < 2:
            raise ConfigError(f"levels must be at least 2, got {self.levels}")
        if len(self.level_sizes) != self.levels or any(size < 1 for size in self.level_sizes):
            raise ConfigError(f"level_sizes {self.level_sizes} must hold {self.levels} positive sizes")
        if self.ticks == BOUNDARY:
            if self.task != "ptb-char" or self.levels != 2:
                raise ConfigError("ticks boundary needs task ptb-char with 2 levels")
            if self.mode == "mr-hrnn":
                raise ConfigError("mode mr-hrnn needs fixed ticks to size its unroll")
        elif len(self.ticks) != self.levels - 1 or any(k < 1 for k in self.ticks):
            raise ConfigError(f"ticks {self.ticks} must hold {self.levels - 1} positive ratios")
        if self.task == "ptb-char" and self.ticks != BOUNDARY:
            raise ConfigError("task ptb-char ticks once per word, set ticks = boundary")
        if len(self.betas) != self.levels - 1 or any(beta < 0 for beta in self.betas):
            raise ConfigError(f"betas {self.betas} must hold {self.levels - 1} non-negative weights")
        for key in ("unroll", "batch_size", "num_steps", "decoder_units", "copy_length", "eval_batches",
                    "log_frequency"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        for key in ("eval_frequency", "save_model_frequency", "mnist_side", "mnist_train_limit", "mnist_eval_limit",
                    "ptb_prefix_bytes", "ptb_eval_chars"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must not be negative, got {getattr(self, key)}")

    @property
    def effective_unroll(self) -> int:
        """
        mr-hrnn gets the memory budget of the streaming schedule: 2T/k + k steps for two levels
        """
        if self.mode != "mr-hrnn":
            return self.unroll
        k = self.ticks[0]
        unroll = memory_formula(self.levels, k, self.unroll) if self.unroll >= k else self.unroll
        return min(unroll, self.unroll)

    @property
    def effective_betas(self) -> List[float]:
        if self.mode == "gr-hrnn":
            return [0.0] * (self.levels - 1)
        return list(self.betas)

    @property
    def torch_dtype(self):
        return torch.float64 if self.precision == "float64" else torch.float32

    @staticmethod
    def data_path(path: str) -> str:
        if os.path.isabs(path):
            return path
        return os.path.join(os.environ.get(DATA_ROOT_ENV, "."), path)

    def as_dict(self) -> Dict[str, object]:
        return {key: getattr(self, key) for key in KEY_SECTIONS}

    def write(self, path: str):
        config = configparser.ConfigParser()
        for section, keys in SCHEMA.items():
            config[section] = {key: _format(getattr(self, key)) for key in keys}
        with open(path, "w") as out_fp:
            config.write(out_fp)

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "ConfigParams":
        return cls(overrides={key: _format(value) for key, value in values.items()})


def split_overrides(argv: List[str]) -> Dict[str, str]:
    """
    --key value pairs left over by argparse
    """
    overrides = {}
    ix = 0
    while ix < len(argv):
        flag = argv[ix]
        if not flag.startswith("--") or ix + 1 >= len(argv):
            raise ConfigError(f"Expected --key value overrides, got {argv[ix:]}")
        overrides[flag[2:]] = argv[ix + 1]
        ix += 2
    return overrides
