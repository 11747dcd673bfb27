import math

import numpy as np
import pytest
import torch

from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import DataFormatError, HrnnError, ShapeError
from grhrnn.hierarchy import schedule as schedules
from grhrnn.tasks.copy_task import (BLANK, NUM_SYMBOLS, bits_per_char, gen_copy, l_max_search, make_copy_batch)
from grhrnn.tasks.evaluation import evaluate_classification
from grhrnn.tasks.mnist import (MnistDataset, downsample, load_mnist, parse_idx_images, parse_idx_labels,
                                write_idx_images, write_idx_labels)
from grhrnn.tasks.ptb import (UNKNOWN, UNKNOWN_ID, boundary_flags, build_vocabulary, cap_segments, char_batch,
                              encode, from_char_layout, group_by_schedule, is_char_layout, load_ptb, segment_lengths,
                              unigram_bits_per_char)
from grhrnn.tasks.task_factory import TaskFactory


def test_gen_copy():
    sample = gen_copy(5, np.random.default_rng(0))
    source, target = sample.as_text()
    assert sample.n == 5
    assert set(source[:5]) <= {"0", "1"}
    assert source[5:] == "*****"
    assert target == "*****" + source[:5]
    assert sample.recall_mask.tolist() == [False] * 5 + [True] * 5
    with pytest.raises(HrnnError):
        gen_copy(0, np.random.default_rng(0))


def test_copy_batch():
    batch = make_copy_batch(4, 3, np.random.default_rng(0), schedules.fixed(2, [2], 8))
    assert batch.inputs.shape == (8, 3, NUM_SYMBOLS)
    assert torch.equal(batch.inputs.sum(dim=-1), torch.ones(8, 3, dtype=torch.float64))
    assert torch.equal(batch.inputs.argmax(dim=-1), batch.input_ids)
    assert bool((batch.input_ids[4:] == BLANK).all())
    assert torch.equal(batch.targets[4:], batch.input_ids[:4])
    assert float(batch.loss_mask.sum()) == 12.0
    assert batch.discrete
    window = batch.window(2, 6)
    assert window.length == 4 and window.schedule.ticks[1] == [0, 2]


def test_bits_per_char():
    targets = torch.tensor([0, 1, 2, 0])
    mask = torch.tensor([0.0, 1.0, 1.0, 1.0])
    assert bits_per_char(torch.zeros(4, 3), targets, mask) == pytest.approx(math.log2(3.0))
    assert bits_per_char(torch.zeros(4, 3), targets, torch.zeros(4)) == 0.0
    perfect = 50.0 * torch.nn.functional.one_hot(targets, 3).to(torch.float64)
    assert bits_per_char(perfect, targets, mask) < 1e-6
    with pytest.raises(ShapeError):
        bits_per_char(torch.zeros(4, 3), targets, torch.ones(3))


def _copy_batch(n, rng):
    return make_copy_batch(n, 2, rng, schedules.fixed(2, [2], 2 * n))


def _echo(batch):
    return 50.0 * torch.nn.functional.one_hot(batch.targets, NUM_SYMBOLS).to(torch.float64)


def test_l_max_search_with_stub_models():
    assert l_max_search(_echo, _copy_batch, max_length=12) == 12
    assert l_max_search(lambda batch: torch.zeros(batch.length, 2, NUM_SYMBOLS), _copy_batch, max_length=12) == 0

    def forgetful(batch):
        return _echo(batch) if batch.length // 2 <= 7 else torch.zeros(batch.length, 2, NUM_SYMBOLS)

    assert l_max_search(forgetful, _copy_batch, max_length=12) == 7
    assert l_max_search(forgetful, _copy_batch, max_length=12) == l_max_search(forgetful, _copy_batch,
                                                                                max_length=12)


def _images(count=3, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=(count, 28, 28)).astype(np.uint8)


def test_idx_bytes():
    images = _images()
    labels = np.array([3, 0, 9], dtype=np.uint8)
    image_bytes = write_idx_images(images)
    assert image_bytes[:4] == b"\x00\x00\x08\x03"
    assert len(image_bytes) == 16 + 3 * 28 * 28
    assert np.array_equal(parse_idx_images(image_bytes), images)
    assert np.array_equal(parse_idx_labels(write_idx_labels(labels)), labels)


def test_idx_errors_name_the_offset():
    image_bytes = write_idx_images(_images())
    with pytest.raises(DataFormatError, match="byte offset 0"):
        parse_idx_images(b"\x00\x00\x08\x01" + image_bytes[4:])
    with pytest.raises(DataFormatError, match="byte offset"):
        parse_idx_images(image_bytes[:-1])
    with pytest.raises(DataFormatError, match="byte offset 8"):
        parse_idx_images(image_bytes[:10])
    with pytest.raises(DataFormatError, match="byte offset 9"):
        parse_idx_labels(write_idx_labels(np.array([1, 12, 3], dtype=np.uint8)))
    with pytest.raises(DataFormatError, match="byte offset 0"):
        parse_idx_labels(image_bytes)


def test_downsample_pads_evenly():
    pooled = downsample(np.ones((1, 28, 28)), 8)
    assert pooled.shape == (1, 8, 8)
    # 28 -> 32 with 2 zero rows and columns on each side, 4 x 4 pooling
    assert pooled[0, 0, 0] == pytest.approx(0.25)
    assert pooled[0, 0, 3] == pytest.approx(0.5)
    assert pooled[0, 3, 3] == pytest.approx(1.0)


@pytest.fixture
def mnist_files(tmp_path):
    images = _images(count=6)
    labels = np.array([0, 1, 2, 3, 4, 5], dtype=np.uint8)
    (tmp_path / "images").write_bytes(write_idx_images(images))
    (tmp_path / "labels").write_bytes(write_idx_labels(labels))
    return str(tmp_path / "images"), str(tmp_path / "labels"), images, labels


def test_load_mnist(mnist_files):
    images_path, labels_path, images, labels = mnist_files
    dataset = load_mnist(images_path, labels_path, limit=4)
    assert len(dataset) == 4
    assert dataset.sequence_length == 784
    assert np.allclose(dataset.pixels[1], images[1].reshape(-1) / 255.0)
    assert dataset.labels[1] == 1

    small = load_mnist(images_path, labels_path, downsample_side=8)
    assert small.sequence_length == 64

    permuted = load_mnist(images_path, labels_path, permute=True, perm_seed=3)
    assert np.array_equal(permuted.pixels, load_mnist(images_path, labels_path).pixels[:, permuted.permutation])
    assert sorted(permuted.permutation.tolist()) == list(range(784))

    with pytest.raises(DataFormatError):
        load_mnist(images_path, images_path)
    with pytest.raises(DataFormatError):
        load_mnist(images_path + ".missing", labels_path)


def test_pixel_batches_score_the_last_step():
    dataset = MnistDataset(pixels=np.random.default_rng(0).random((5, 16)), labels=np.arange(5))
    batch = dataset.batch([4, 1], schedules.fixed(2, [4], 16))
    assert batch.inputs.shape == (16, 2, 1)
    assert batch.loss_mask[:-1].sum() == 0.0 and batch.loss_mask[-1].tolist() == [1.0, 1.0]
    assert batch.targets[0].tolist() == [4, 1] and batch.targets[-1].tolist() == [4, 1]
    assert not batch.discrete
    assert torch.equal(batch.decoder_target(3), batch.inputs[3])


def test_evaluate_classification():
    dataset = MnistDataset(pixels=np.zeros((5, 4)), labels=np.array([2, 2, 1, 2, 0]))

    def always_two(inputs, schedule):
        logits = torch.zeros(inputs.shape[0], inputs.shape[1], 10, dtype=torch.float64)
        logits[..., 2] = 1.0
        return logits

    assert evaluate_classification(always_two, dataset, schedules.fixed(2, [2], 4), batch_size=2) \
        == pytest.approx(0.6)


def test_vocabulary_and_flags():
    vocabulary = build_vocabulary("ba a")
    assert vocabulary == [UNKNOWN, " ", "a", "b"]
    assert encode(vocabulary, "ab z").tolist() == [2, 3, 1, 0]
    assert boundary_flags("a b\n").tolist() == [False, True, False, True]
    assert segment_lengths(boundary_flags("a bc d ")) == [2, 3, 2]
    assert segment_lengths(boundary_flags("ab cd")) == [3, 2]


def test_cap_segments_splits_long_words():
    capped = cap_segments(np.zeros(7, dtype=bool), 3)
    assert capped.tolist() == [False, False, True, False, False, True, False]
    assert segment_lengths(cap_segments(boundary_flags("abcdefg hi "), 4)) == [4, 4, 3]


@pytest.fixture
def ptb_files(tmp_path):
    (tmp_path / "train.txt").write_text("aab aab ab a aab ab aa b ")
    (tmp_path / "valid.txt").write_text("ab ba c ")
    (tmp_path / "test.txt").write_text("ba ab ")
    return str(tmp_path / "train.txt"), str(tmp_path / "valid.txt"), str(tmp_path / "test.txt")


def test_load_ptb(ptb_files):
    corpus = load_ptb(*ptb_files)
    assert corpus.vocabulary == [UNKNOWN, " ", "a", "b"]
    assert corpus.k_max == 4
    assert corpus.valid.ids.tolist() == [2, 3, 1, 3, 2, 1, UNKNOWN_ID, 1]
    assert load_ptb(*ptb_files, prefix_bytes=4).train.ids.tolist() == [2, 2, 3, 1]
    with pytest.raises(DataFormatError):
        load_ptb(ptb_files[0] + ".missing", ptb_files[1], ptb_files[2])


def test_char_layout_files_read_back_to_text(tmp_path):
    assert is_char_layout("a e r _ b a n k\nn o t e _ b\n")
    assert not is_char_layout("ab ba c ")
    assert not is_char_layout("a b c\n")
    assert from_char_layout(" a b _ c\n\nd _ e\n") == "ab c\nd e\n"

    (tmp_path / "train").write_text("a e r _ b a n k n o t e _ b e r l i t z\n")
    (tmp_path / "valid").write_text("aer banknote\n")
    (tmp_path / "test").write_text("berlitz ")
    corpus = load_ptb(str(tmp_path / "train"), str(tmp_path / "valid"), str(tmp_path / "test"))
    assert segment_lengths(corpus.train.flags) == [4, 9, 8]
    assert corpus.k_max == 9
    assert " " in corpus.vocabulary and "\n" in corpus.vocabulary
    assert "_" not in corpus.vocabulary
    assert corpus.valid.ids.tolist() == corpus.encode("aer banknote\n").tolist()


def test_read_is_strict_utf8(tmp_path):
    (tmp_path / "train").write_bytes("ab é ".encode("utf-8"))
    (tmp_path / "valid").write_text("ab ")
    (tmp_path / "bad").write_bytes(b"ab \xff cd ")
    paths = str(tmp_path / "train"), str(tmp_path / "valid"), str(tmp_path / "valid")

    assert "é" in load_ptb(*paths).vocabulary
    # The fourth byte starts a two byte character
    assert load_ptb(*paths, prefix_bytes=4).train.ids.tolist() == [2, 3, 1]
    with pytest.raises(DataFormatError):
        load_ptb(str(tmp_path / "bad"), paths[1], paths[2])
    with pytest.raises(DataFormatError):
        load_ptb(paths[0], str(tmp_path / "bad"), paths[2])


def test_unigram_bits_per_char(tmp_path):
    for name, text in (("train", "aab"), ("valid", "ab"), ("test", "b")):
        (tmp_path / name).write_text(text)
    corpus = load_ptb(str(tmp_path / "train"), str(tmp_path / "valid"), str(tmp_path / "test"))
    # Add-one counts over <unk>, a, b: 1, 3, 2 out of 6
    expected = -(math.log2(3.0 / 6.0) + math.log2(2.0 / 6.0)) / 2.0
    assert unigram_bits_per_char(corpus, "valid") == pytest.approx(expected)


def test_char_batches(ptb_files):
    corpus = load_ptb(*ptb_files)
    batch = char_batch(corpus, corpus.train, 0, 8)
    assert batch.input_ids[:, 0].tolist() == corpus.encode("aab aab ").tolist()
    assert batch.targets[:, 0].tolist() == corpus.encode("ab aab a").tolist()
    assert batch.schedule.ticks[1] == [0, 4]
    with pytest.raises(DataFormatError):
        char_batch(corpus, corpus.train, len(corpus.train) - 3, 8)

    sequences = [char_batch(corpus, corpus.train, start, 4) for start in (0, 4, 8)]
    groups = group_by_schedule(sequences)
    assert [group.batch_size for group in groups] == [2, 1]
    assert groups[0].schedule.signature() == sequences[0].schedule.signature()


def test_ptb_task(ptb_files, make_model):
    train, valid, test = ptb_files
    config = ConfigParams(overrides={"task": "ptb-char", "ticks": "boundary", "ptb_train": train,
                                     "ptb_valid": valid, "ptb_test": test, "unroll": "6", "batch_size": "5",
                                     "level_sizes": "4, 5"})
    task = TaskFactory.create_task(config)
    assert task.k_max() == [4]
    groups = task.sample_batch(np.random.default_rng(0))
    assert sum(group.batch_size for group in groups) == 5
    assert all(group.length == 6 for group in groups)

    model = make_model(level_sizes=(4, 5), ks=task.k_max(), input_size=task.input_size,
                       num_classes=task.num_classes)
    metrics = task.evaluate(model)
    assert set(metrics.keys()) == {"eval_bits_per_char", "unigram_bits_per_char"}
    assert metrics["eval_bits_per_char"] > 0.0
