import warnings
from dataclasses import replace

import numpy as np
import pytest
import torch

from grhrnn.autodiff import ops
from grhrnn.autodiff.gradcheck import max_relative_error, numerical_gradients, relative_error
from grhrnn.autodiff.tape import Tape
from grhrnn.common.checkpoint import load_checkpoint, save_checkpoint
from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import HrnnError, NonFiniteError, TargetError, TrainingDivergedError
from grhrnn.gradcheck import finite_difference_settings
from grhrnn.hierarchy import schedule as schedules
from grhrnn.hierarchy.hrnn import EdgePolicy
from grhrnn.model.decoder import Decoder
from grhrnn.model.init import make_generator
from grhrnn.model.model_factory import ModelFactory
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.tasks.copy_task import NUM_SYMBOLS
from grhrnn.tasks.task import one_hot_inputs
from grhrnn.tasks.task_factory import TaskFactory
from grhrnn.training import streaming, trainer
from grhrnn.training.aux_loss import aux_loss_at_tick, decoder_loss, select_previous
from grhrnn.training.objective import GR_HRNN, HRNN, OURS, StepSettings, plan_losses, windows
from grhrnn.training.oracle import combined_loss, train_step_oracle
from grhrnn.training.streaming import train_step_streaming
from grhrnn.training.trainer import NON_DETERMINISTIC_METRICS, run_training


def test_windows():
    assert windows(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert windows(10, 60) == [(0, 10)]


def test_step_settings_validation():
    assert StepSettings(OURS, (1.0,), 10).restricted
    assert not StepSettings(HRNN, (1.0,), 10).restricted
    with pytest.raises(HrnnError):
        StepSettings("lstm", (1.0,), 10)
    with pytest.raises(HrnnError):
        StepSettings(OURS, (-1.0,), 10)
    with pytest.raises(HrnnError):
        StepSettings(OURS, (1.0,), 0)


def test_plan_single_window(copy_batch):
    batch = copy_batch(6, batch_size=3, ks=(3,))
    plan = plan_losses([batch], StepSettings(OURS, (0.5,), 60), np.random.default_rng(0))
    assert plan.task_norm == 18.0
    # Level 1 ticks at 0, 3, 6, 9: the segments closed at 3, 6 and 9 are decoded
    assert plan.aux_norm == [9.0]
    window = plan.groups[0].windows[0]
    assert sorted(window.aux_ticks.keys()) == [(0, 3), (0, 6), (0, 9)]
    aux_tick = window.aux_ticks[(0, 6)]
    assert aux_tick.segment == (3, 4, 5)
    assert aux_tick.index.shape == (3,)
    assert int(aux_tick.index.min()) >= 1 and int(aux_tick.index.max()) <= 3
    assert float(plan.groups[0].task_weights.sum()) == pytest.approx(1.0)
    assert plan.aux_weight(0, 3) == pytest.approx(1.0 / 3.0)


def test_plan_skips_segments_crossing_windows(copy_batch):
    batch = copy_batch(6, batch_size=3, ks=(3,))
    plan = plan_losses([batch], StepSettings(OURS, (0.5,), 5), np.random.default_rng(0))
    assert [(w.start, w.stop) for w in plan.groups[0].windows] == [(0, 5), (5, 10), (10, 12)]
    assert plan.aux_norm == [6.0]
    assert list(plan.groups[0].windows[1].aux_ticks.keys()) == [(0, 4)]
    assert plan.groups[0].windows[1].aux_ticks[(0, 4)].segment == (1, 2, 3)
    assert plan.groups[0].windows[2].aux_ticks == {}
    with pytest.raises(HrnnError):
        plan_losses([batch], StepSettings(OURS, (0.5, 0.5), 5), np.random.default_rng(0))


def test_select_previous():
    targets = [torch.tensor([10, 11]), torch.tensor([20, 21]), torch.tensor([30, 31])]
    assert select_previous(targets, torch.tensor([1, 3])).tolist() == [30, 11]
    with pytest.raises(TargetError):
        select_previous(targets, torch.tensor([4, 1]))
    with pytest.raises(TargetError):
        select_previous([], torch.tensor([1]))


def test_continuous_decoder_targets_get_no_gradient():
    decoder = Decoder(state_size=3, max_index=2, output_size=4, hidden_units=5)
    decoder.reset_parameters(make_generator(0))
    h_up = torch.ones(2, 3, dtype=torch.float64, requires_grad=True)
    segment = [torch.rand(2, 4, dtype=torch.float64, requires_grad=True) for _ in range(2)]
    tape = Tape()
    with tape.recording():
        tape.watch("h_up", h_up)
        for ix, target in enumerate(segment):
            tape.watch(f"target_{ix}", target)
        loss = decoder_loss(decoder, h_up, segment, torch.tensor([1, 2]), discrete=False)
    grads = tape.backward(loss)
    assert float(grads["target_0"].abs().sum()) == 0.0
    assert float(grads["target_1"].abs().sum()) == 0.0


def _decoder_case(seed=0):
    decoder = Decoder(state_size=3, max_index=3, output_size=4, hidden_units=5)
    decoder.reset_parameters(make_generator(seed))
    generator = torch.Generator().manual_seed(seed)
    h_up = torch.rand(2, 3, generator=generator, dtype=torch.float64, requires_grad=True)
    segment = [torch.randint(0, 4, (2,), generator=generator) for _ in range(3)]
    return decoder, h_up, segment


def test_aux_loss_at_tick_weights_the_decoder_loss():
    decoder, h_up, segment = _decoder_case()
    index = torch.tensor([1, 3])
    plain = decoder_loss(decoder, h_up, segment, index, discrete=True)
    assert float(aux_loss_at_tick(decoder, h_up, segment, index, 0.0, discrete=True)) == 0.0
    assert float(aux_loss_at_tick(decoder, h_up, segment, index, 2.0, discrete=True)) == pytest.approx(
        2.0 * float(plain), rel=1e-15)
    with pytest.raises(TargetError):
        aux_loss_at_tick(decoder, h_up, segment[:2], index, 1.0, discrete=True)


def test_barriered_decoder_input_gets_zero_gradient():
    decoder, h_up, segment = _decoder_case(seed=1)
    tape = Tape()
    with tape.recording():
        tape.watch("h_up", h_up)
        loss = decoder_loss(decoder, ops.barrier(h_up), segment, torch.tensor([2, 1]), discrete=True)
    grads = tape.backward(loss)
    assert float(loss) > 0.0
    assert torch.equal(grads["h_up"], torch.zeros_like(h_up))


def test_loss_report_holds_plain_floats(make_model, copy_batch):
    model = make_model(ks=(3,))
    batch = [copy_batch(6, batch_size=3, ks=(3,))]
    with warnings.catch_warnings():
        warnings.filterwarnings("error", message=".*requires_grad.*")
        _, report = train_step_oracle(model, batch, StepSettings(OURS, (0.5,), 60), np.random.default_rng(0))
    assert type(report.task_nats) is float
    assert all(type(aux) is float for aux in report.aux)
    assert report.aux[0] > 0.0


STREAMING_CASES = [
    ((4, 5), (2,), 6, 60),
    ((4, 5), (4,), 10, 60),
    ((4, 5), (5,), 10, 60),
    ((4, 5), (4,), 10, 7),
    ((3, 4, 5), (2, 2), 8, 60),
    ((3, 4, 5), (4, 2), 10, 60),
    ((3, 4, 5), (5, 2), 10, 60),
    ((3, 4, 5), (2, 2), 8, 5),
]


@pytest.mark.parametrize("level_sizes, ks, n, unroll", STREAMING_CASES)
def test_streaming_matches_oracle_on_copy(make_model, copy_batch, level_sizes, ks, n, unroll):
    model = make_model(level_sizes=level_sizes, ks=ks, decoder_units=6)
    batch = [copy_batch(n, batch_size=3, ks=ks)]
    betas = tuple([0.5, 2.0][:len(ks)])
    settings = StepSettings(OURS, betas, unroll)

    oracle_grads, oracle_report = train_step_oracle(model, batch, settings, np.random.default_rng(7))
    stream_grads, stream_report, ledger = train_step_streaming(model, batch, settings, np.random.default_rng(7))

    assert max_relative_error(stream_grads, oracle_grads) <= 1e-9
    assert stream_report.combined == pytest.approx(oracle_report.combined, abs=1e-12)
    assert stream_report.task_nats == pytest.approx(oracle_report.task_nats, abs=1e-12)
    assert ledger.total == 0
    for name in ("cells.0.w_x", "head.weight", "decoders.0.w2"):
        assert float(oracle_grads[name].abs().max()) > 0.0


@pytest.mark.parametrize("unroll", [60, 5])
def test_streaming_matches_oracle_on_continuous_inputs(make_model, pixel_batch, unroll):
    model = make_model(level_sizes=(4, 5), ks=(4,), input_size=1, num_classes=4)
    batch = [pixel_batch(12, batch_size=3, ks=(4,)), pixel_batch(12, batch_size=2, ks=(4,), seed=1)]
    settings = StepSettings(OURS, (1.0,), unroll)
    oracle_grads, oracle_report = train_step_oracle(model, batch, settings, np.random.default_rng(3))
    stream_grads, stream_report, _ = train_step_streaming(model, batch, settings, np.random.default_rng(3))
    assert max_relative_error(stream_grads, oracle_grads) <= 1e-9
    assert stream_report.combined == pytest.approx(oracle_report.combined, abs=1e-12)
    assert oracle_report.aux[0] > 0.0


def test_restriction_only_changes_gradients(make_model, copy_batch):
    model = make_model(ks=(3,))
    batch = [copy_batch(6, batch_size=3, ks=(3,))]
    true_grads, true_report = train_step_oracle(model, batch, StepSettings(HRNN, (0.0,), 60),
                                                np.random.default_rng(0))
    restricted_grads, restricted_report = train_step_oracle(model, batch, StepSettings(OURS, (0.0,), 60),
                                                            np.random.default_rng(0))
    assert restricted_report.combined == pytest.approx(true_report.combined, abs=1e-12)
    assert restricted_report.combined == pytest.approx(restricted_report.task_nats, abs=1e-12)
    assert torch.allclose(restricted_grads["head.weight"], true_grads["head.weight"], rtol=1e-10, atol=1e-14)
    assert not torch.allclose(restricted_grads["cells.0.w_x"], true_grads["cells.0.w_x"])
    assert float(restricted_grads["decoders.0.w1"].abs().sum()) == 0.0


@pytest.mark.parametrize("level_sizes, ks, betas", [
    ((5, 6), (3,), (0.5,)),
    ((4, 5, 6), (2, 2), (0.5, 1.0)),
])
def test_true_gradients_match_finite_differences(make_model, copy_batch, level_sizes, ks, betas):
    model = make_model(level_sizes=level_sizes, ks=ks)
    batch = [copy_batch(4, batch_size=2, ks=ks)]
    settings = finite_difference_settings(StepSettings(OURS, betas, 60))
    assert settings.mode == HRNN and settings.betas == (0.5,) + (0.0,) * (len(ks) - 1)
    grads, report = train_step_oracle(model, batch, settings, np.random.default_rng(0))
    plan = plan_losses(batch, settings, np.random.default_rng(0))
    assert float(combined_loss(model, batch, plan, EdgePolicy())) == pytest.approx(report.combined, abs=1e-12)

    names = ["head.bias", "cells.1.b", "decoders.0.b2"]
    params = dict(model.named_parameters())
    numeric = numerical_gradients(lambda: combined_loss(model, batch, plan, EdgePolicy()),
                                  [params[name] for name in names])
    for name, expected in zip(names, numeric):
        assert relative_error(grads[name], expected) < 1e-6


def test_loss_report(make_model, copy_batch):
    model = make_model(ks=(3,))
    batch = [copy_batch(6, batch_size=3, ks=(3,))]
    _, report = train_step_oracle(model, batch, StepSettings(OURS, (0.5,), 60), np.random.default_rng(0))
    assert report.combined == pytest.approx(report.task_nats + 0.5 * report.aux[0])
    assert report.task_bits == pytest.approx(report.task_nats / np.log(2.0))
    assert list(report.as_dict().keys()) == ["task_loss_nats", "task_loss_bits", "aux_loss_0", "beta_0",
                                             "combined_loss"]


def test_streaming_needs_a_restricted_mode(make_model, copy_batch):
    model = make_model(ks=(3,))
    batch = [copy_batch(3, batch_size=1, ks=(3,))]
    with pytest.raises(HrnnError):
        train_step_streaming(model, batch, StepSettings(HRNN, (1.0,), 60), np.random.default_rng(0))
    grads, report, _ = train_step_streaming(model, batch, StepSettings(GR_HRNN, (0.0,), 60),
                                            np.random.default_rng(0))
    assert report.combined == pytest.approx(report.task_nats)


def _tiny_config(**overrides):
    values = {"task": "copy", "mode": "ours", "backward": "streaming", "level_sizes": "4, 5", "ticks": "3",
              "decoder_units": "4", "betas": "0.5", "batch_size": "2", "copy_length": "3", "num_steps": "2",
              "eval_batches": "1", "log_frequency": "1", "eval_frequency": "1", "lmax_max_length": "3"}
    values.update(overrides)
    return ConfigParams(overrides=values)


def test_training_is_deterministic():
    config = _tiny_config()
    _, first = run_training(config, TaskFactory.create_task(config))
    _, second = run_training(config, TaskFactory.create_task(config))
    assert len(first) == 2
    for a, b in zip(first, second):
        for key in NON_DETERMINISTIC_METRICS:
            a.pop(key)
            b.pop(key)
        assert a == b
    assert "eval_bits_per_char" in first[-1]
    assert first[0]["ledger_peak"] > 0


def test_streaming_and_oracle_training_agree():
    streaming = _tiny_config()
    oracle = _tiny_config(backward="oracle")
    _, streaming_records = run_training(streaming, TaskFactory.create_task(streaming))
    _, oracle_records = run_training(oracle, TaskFactory.create_task(oracle))
    for a, b in zip(streaming_records, oracle_records):
        assert a["combined_loss"] == pytest.approx(b["combined_loss"], rel=1e-9)


def test_non_finite_loss_stops_training(monkeypatch):
    def diverging(*args, **kwargs):
        raise NonFiniteError("combined loss is nan")

    monkeypatch.setattr(trainer, "train_step_streaming", diverging)
    config = _tiny_config()
    with pytest.raises(TrainingDivergedError):
        run_training(config, TaskFactory.create_task(config))


def test_training_writes_outputs(tmp_path):
    config = _tiny_config(save_model_frequency="1")
    run_training(config, TaskFactory.create_task(config), str(tmp_path))
    assert len((tmp_path / "metrics.jsonl").read_text().splitlines()) == 2
    for name in ("model_1.pt", "model_2.pt", "model_final.pt"):
        assert (tmp_path / name).is_file()
    assert any(path.name.startswith("events.out.tfevents") for path in tmp_path.iterdir())


class _PassThrough(torch.autograd.Function):
    """
    Barrier forward pass with an identity backward pass
    """

    @staticmethod
    def forward(ctx, x):
        return x.clone()

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output


class PassThroughEdges(EdgePolicy):

    def upward(self, level, t, h):
        return _PassThrough.apply(h)


def test_barrier_only_changes_the_backward_pass(make_model, copy_batch):
    model = make_model(level_sizes=(4, 5, 6), ks=(2, 2))
    batch = [copy_batch(4, batch_size=2, ks=(2, 2))]
    settings = StepSettings(HRNN, (0.5, 1.0), 60)
    true_grads, true_report = train_step_oracle(model, batch, settings, np.random.default_rng(0))

    plan = plan_losses(batch, settings, np.random.default_rng(0))
    tape = Tape()
    with tape.recording():
        for name, param in model.named_parameters():
            tape.watch(name, param)
        loss = combined_loss(model, batch, plan, PassThroughEdges())
    grads = tape.backward(loss)
    for name, grad in true_grads.items():
        assert torch.equal(grads[name], grad), name

    _, restricted_report = train_step_oracle(model, batch, replace(settings, mode=OURS), np.random.default_rng(0))
    assert restricted_report.combined == true_report.combined
    assert restricted_report.aux == true_report.aux


def _discrete_batch(ids, levels, ks):
    ids = torch.as_tensor(ids, dtype=torch.long)
    length = ids.shape[0]
    return SequenceBatch(inputs=one_hot_inputs(ids, NUM_SYMBOLS), targets=ids,
                         loss_mask=torch.ones(length, ids.shape[1], dtype=torch.float64),
                         schedule=schedules.fixed(levels, list(ks), length), input_ids=ids)


def test_finished_segments_ignore_later_inputs(make_model, monkeypatch):
    runs = []

    class RecordingSweep(streaming.StreamingSweep):

        def _finish_segment(self, level, states, aux_tick):
            closing = level == 0 and level in self.buffers
            super(RecordingSweep, self)._finish_segment(level, states, aux_tick)
            if closing:
                runs[-1].append(({name: grad.clone() for name, grad in self.grads.items()
                                  if name.startswith(("cells.0.", "decoders.0.", "head."))},
                                 self.accumulator.aux[0]))

    monkeypatch.setattr(streaming, "StreamingSweep", RecordingSweep)
    model = make_model(level_sizes=(4, 5), ks=(4,), decoder_units=5)
    ids = np.random.default_rng(5).integers(0, NUM_SYMBOLS, size=(16, 2))
    perturbed = ids.copy()
    perturbed[8:] = (perturbed[8:] + 1) % NUM_SYMBOLS
    for sequence in (ids, perturbed):
        runs.append([])
        train_step_streaming(model, [_discrete_batch(sequence, 2, (4,))], StepSettings(OURS, (1.0,), 60),
                             np.random.default_rng(0))

    original, changed = runs
    assert len(original) == len(changed) == 4
    # Segments over steps 0-3 and 4-7 close before step 8 is read
    for segment in (0, 1):
        (grads, aux), (changed_grads, changed_aux) = original[segment], changed[segment]
        assert aux == changed_aux
        for name, grad in grads.items():
            assert torch.equal(grad, changed_grads[name]), name
    assert not torch.equal(original[2][0]["cells.0.w_x"], changed[2][0]["cells.0.w_x"])


def _random_configs(count, seed):
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(count):
        levels = int(rng.choice([2, 3]))
        ks = tuple(int(rng.choice([2, 4, 5])) for _ in range(levels - 1))
        length = int(rng.integers(12, 61))
        unroll = length if rng.random() < 0.5 else int(rng.integers(5, length + 1))
        betas = tuple(float(rng.choice([0.0, 0.1, 1.0])) for _ in range(levels - 1))
        configs.append((levels, ks, length, unroll, betas))
    return configs


@pytest.mark.parametrize("levels, ks, length, unroll, betas", _random_configs(50, seed=11))
def test_streaming_matches_oracle_on_random_configs(make_model, levels, ks, length, unroll, betas):
    model = make_model(level_sizes=(3, 4, 5)[:levels], ks=ks, decoder_units=4)
    ids = np.random.default_rng(length).integers(0, NUM_SYMBOLS, size=(length, 2))
    batch = _discrete_batch(ids, levels, ks)
    settings = StepSettings(OURS, betas, unroll)

    oracle_grads, oracle_report = train_step_oracle(model, [batch], settings, np.random.default_rng(0))
    stream_grads, stream_report, ledger = train_step_streaming(model, [batch], settings, np.random.default_rng(0))
    assert max_relative_error(stream_grads, oracle_grads) <= 1e-9
    assert stream_report.combined == pytest.approx(oracle_report.combined, abs=1e-12)
    assert ledger.total == 0


def test_checkpoint_round_trip_evaluates_identically(tmp_path):
    config = _tiny_config()
    task = TaskFactory.create_task(config)
    model, _ = run_training(config, task)
    path = str(tmp_path / "model.pt")
    save_checkpoint(path, model, None, config.as_dict(), step=2)

    restored = ModelFactory.create_model(config, task)
    step, stored_config = load_checkpoint(path, restored)
    assert step == 2 and stored_config == config.as_dict()
    for name, param in restored.state_dict().items():
        assert torch.equal(param, model.state_dict()[name])
    assert task.evaluate(restored) == task.evaluate(model)
