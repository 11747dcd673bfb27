"""
Character-level Penn TreeBank.

The text is presented one character per step and the network predicts the next character. The upper level ticks
once per word: a whitespace character ends a segment and belongs to the segment it ends, so "ab cd" splits into
"ab " and "cd". The vocabulary is the set of characters of the train split sorted by codepoint, id 0 is reserved
for characters of the valid/test splits never seen in train. Files in the character layout of the corpus
("a b _ c d", "_" between words) are read back to plain text first.
"""
import os
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import torch

from grhrnn.autodiff.losses import LN2
from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import DataFormatError
from grhrnn.hierarchy.schedule import TickSchedule, make_boundary_schedule
from grhrnn.tasks.batch import SequenceBatch, stack_groups
from grhrnn.tasks.task import Task, one_hot_inputs

UNKNOWN = "<unk>"
UNKNOWN_ID = 0
WORD_SEPARATOR = "_"


def read_text(path: str, prefix_bytes: Optional[int] = None) -> str:
    if not os.path.isfile(path):
        raise DataFormatError(f"Data file {path} not found")
    with open(path, "rb") as in_fp:
        data = in_fp.read(prefix_bytes) if prefix_bytes else in_fp.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        # A prefix may cut the last multi-byte character, nothing else is dropped
        if len(data) == prefix_bytes and e.end == len(data) and e.reason == "unexpected end of data":
            text = data[:e.start].decode("utf-8")
        else:
            raise DataFormatError(f"{path} is not valid UTF-8 at byte offset {e.start}")
    if len(text) == 0:
        raise DataFormatError(f"{path} is empty")
    return from_char_layout(text) if is_char_layout(text) else text


def is_char_layout(text: str) -> bool:
    """
    True for the character files of the corpus, which put a space between characters and "_" between words
    """
    lines = [line.strip().split(" ") for line in text.splitlines() if line.strip()]
    tokens = [token for line in lines for token in line]
    return any(len(line) > 1 for line in lines) and WORD_SEPARATOR in tokens \
        and all(len(token) == 1 for token in tokens)


def from_char_layout(text: str) -> str:
    """
    "a b _ c d" -> "ab cd\n", one line of text per line of the file
    """
    lines = [line.strip().split(" ") for line in text.splitlines() if line.strip()]
    return "".join("".join(" " if token == WORD_SEPARATOR else token for token in line) + "\n" for line in lines)


def build_vocabulary(text: str) -> List[str]:
    return [UNKNOWN] + sorted(set(text))


def encode(vocabulary: List[str], text: str) -> np.ndarray:
    index = {c: ix for ix, c in enumerate(vocabulary)}
    return np.array([index.get(c, UNKNOWN_ID) for c in text], dtype=np.int64)


def boundary_flags(text: str) -> np.ndarray:
    return np.array([c.isspace() for c in text], dtype=bool)


def cap_segments(flags: np.ndarray, k_max: int) -> np.ndarray:
    """
    Force a segment end after k_max characters without a boundary, words longer than k_max are split
    """
    capped = flags.copy()
    run = 0
    for ix in range(len(capped)):
        run += 1
        if capped[ix] or run == k_max:
            capped[ix] = True
            run = 0
    return capped


def segment_lengths(flags: np.ndarray) -> List[int]:
    lengths = []
    run = 0
    for flag in flags:
        run += 1
        if flag:
            lengths.append(run)
            run = 0
    if run > 0:
        lengths.append(run)
    return lengths


@dataclass
class CharSplit:
    ids: np.ndarray
    flags: np.ndarray

    def __len__(self):
        return len(self.ids)


@dataclass
class CharCorpus:
    vocabulary: List[str]
    train: CharSplit
    valid: CharSplit
    test: CharSplit
    # Longest segment of the train split
    k_max: int

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def encode(self, text: str) -> np.ndarray:
        return encode(self.vocabulary, text)


def load_ptb(train_path: str, valid_path: str, test_path: str, prefix_bytes: Optional[int] = None) -> CharCorpus:
    """
    prefix_bytes limits the train split only
    """
    train_text = read_text(train_path, prefix_bytes)
    valid_text = read_text(valid_path)
    test_text = read_text(test_path)
    vocabulary = build_vocabulary(train_text)
    train_flags = boundary_flags(train_text)
    return CharCorpus(vocabulary=vocabulary, train=CharSplit(encode(vocabulary, train_text), train_flags),
                      valid=CharSplit(encode(vocabulary, valid_text), boundary_flags(valid_text)),
                      test=CharSplit(encode(vocabulary, test_text), boundary_flags(test_text)),
                      k_max=max(segment_lengths(train_flags)))


def unigram_bits_per_char(corpus: CharCorpus, split: str = "valid") -> float:
    """
    Cross-entropy of a split under the add-one smoothed character frequencies of the train split
    """
    counts = Counter(corpus.train.ids.tolist())
    total = len(corpus.train) + corpus.vocab_size
    probs = np.array([(counts.get(ix, 0) + 1) / total for ix in range(corpus.vocab_size)])
    ids = getattr(corpus, split).ids
    return float(-np.mean(np.log(probs[ids]))) / LN2


def char_batch(corpus: CharCorpus, split: CharSplit, start: int, length: int, dtype=torch.float64) -> SequenceBatch:
    """
    One sequence of length characters from start, each predicting the next one
    """
    ids = torch.as_tensor(split.ids[start:start + length + 1], dtype=torch.long)
    if len(ids) != length + 1:
        raise DataFormatError(f"Split of {len(split)} characters cannot hold {length} steps from {start}")
    flags = cap_segments(split.flags[start:start + length], corpus.k_max)
    schedule = make_boundary_schedule(flags, k_max=corpus.k_max)
    input_ids = ids[:-1].unsqueeze(1)
    return SequenceBatch(inputs=one_hot_inputs(input_ids, corpus.vocab_size, dtype), targets=ids[1:].unsqueeze(1),
                         loss_mask=torch.ones(length, 1, dtype=dtype), schedule=schedule, input_ids=input_ids)


def group_by_schedule(sequences: List[SequenceBatch]) -> List[SequenceBatch]:
    """
    Merge sequences with identical boundaries, groups ordered by first appearance
    """
    groups: Dict[tuple, List[SequenceBatch]] = {}
    for sequence in sequences:
        groups.setdefault(sequence.schedule.signature(), []).append(sequence)
    return [stack_groups(members) for members in groups.values()]


class PtbTask(Task):
    name = "ptb-char"
    metric = "eval_bits_per_char"
    lower_is_better = True

    def __init__(self, config: ConfigParams):
        super(PtbTask, self).__init__(config)
        self.corpus = load_ptb(config.data_path(config.ptb_train), config.data_path(config.ptb_valid),
                               config.data_path(config.ptb_test), prefix_bytes=config.ptb_prefix_bytes or None)
        self.input_size = self.corpus.vocab_size
        self.num_classes = self.corpus.vocab_size
        self.discrete = True

    def k_max(self) -> List[int]:
        return [self.corpus.k_max]

    def schedule(self, length: int) -> TickSchedule:
        raise NotImplementedError("PTB schedules follow word boundaries, see char_batch")

    def sample_batch(self, rng: np.random.Generator, dtype=torch.float64) -> List[SequenceBatch]:
        length = self.config.unroll
        starts = rng.integers(0, len(self.corpus.train) - length, size=self.config.batch_size)
        return group_by_schedule([char_batch(self.corpus, self.corpus.train, int(start), length, dtype)
                                  for start in starts])

    def evaluate(self, model, split: str = "valid") -> Dict[str, float]:
        data = getattr(self.corpus, split)
        length = min(self.config.ptb_eval_chars, len(data) - 1)
        batch = char_batch(self.corpus, data, 0, length, model.dtype)
        with torch.no_grad():
            logits = model(batch.inputs, batch.schedule)
        log_probs = torch.log_softmax(logits.to(torch.float64), dim=-1)
        nll = -log_probs.gather(-1, batch.targets.unsqueeze(-1)).mean()
        return {self.metric: float(nll) / LN2, "unigram_bits_per_char": unigram_bits_per_char(self.corpus, split)}
