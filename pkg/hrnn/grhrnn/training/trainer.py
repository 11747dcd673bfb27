"""
Training loop: sample a batch, compute the (restricted or true) gradients with the configured backward,
one Adam step per batch. Evaluation, console progress, TensorBoard scalars, metrics stream and checkpoints
are driven by the configured frequencies.
"""
import os
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from tensorboardX import SummaryWriter

from grhrnn.autodiff.tape import set_default_check_finite
from grhrnn.common.checkpoint import save_checkpoint
from grhrnn.common.config import ConfigParams
from grhrnn.common.errors import NonFiniteError, TrainingDivergedError
from grhrnn.common.metrics import MetricsLog
from grhrnn.hierarchy.hrnn import HierarchicalRnn
from grhrnn.model.model_factory import ModelFactory
from grhrnn.model.optimizer import adam_step, create_optimizer
from grhrnn.tasks.task import Task
from grhrnn.training.ledger import full_tbptt_count
from grhrnn.training.objective import StepSettings, windows
from grhrnn.training.oracle import train_step_oracle
from grhrnn.training.streaming import train_step_streaming

BETA_GRID = (1e-3, 1e-2, 1e-1, 0.0, 1.0, 10.0, 100.0)

# Excluded when two metric streams are compared for determinism
NON_DETERMINISTIC_METRICS = ("wall_time",)


def step_settings(config: ConfigParams) -> StepSettings:
    return StepSettings(mode=config.mode, betas=tuple(config.effective_betas), unroll=config.effective_unroll,
                        check_finite=config.check_finite)


def oracle_peak(batch, unroll: int) -> int:
    """
    Vectors kept by the full-graph step: every tick of the longest window
    """
    return max(full_tbptt_count(group.schedule.window(start, stop))
               for group in batch for start, stop in windows(group.length, unroll))


def run_training(config: ConfigParams, task: Task, output_dir: Optional[str] = None,
                 num_steps: Optional[int] = None) -> Tuple[HierarchicalRnn, List[Dict[str, object]]]:
    """
    Train a fresh model, returns it with the metric records. Nothing is written when output_dir is None.
    """
    num_steps = num_steps if num_steps is not None else config.num_steps
    set_default_check_finite(config.check_finite)
    settings = step_settings(config)
    dtype = config.torch_dtype

    model = ModelFactory.create_model(config, task)
    optimizer = create_optimizer(model, lr=config.learning_rate, beta1=config.adam_beta1, beta2=config.adam_beta2,
                                 eps=config.adam_eps)
    data_rng = np.random.default_rng(config.seed_data)
    # Decoder indices get their own stream, the batches do not depend on the mode
    aux_rng = np.random.default_rng([config.seed_data, 1])

    writer = None
    metrics_log = None
    if output_dir is not None:
        writer = SummaryWriter(output_dir, comment=f"{config.task}_{config.mode}")
        metrics_log = MetricsLog(os.path.join(output_dir, "metrics.jsonl"))

    print(f"Training {config.mode} on {config.task}: levels {config.level_sizes}, ticks {config.ticks}, "
          f"unroll {settings.unroll}, betas {list(settings.betas)}, backward {config.backward}")
    records = []
    start_time = time.time()
    try:
        for step in range(1, num_steps + 1):
            batch = task.sample_batch(data_rng, dtype)
            try:
                if config.backward == "streaming":
                    grads, report, ledger = train_step_streaming(model, batch, settings, aux_rng)
                    peak = ledger.peak_total
                else:
                    grads, report = train_step_oracle(model, batch, settings, aux_rng)
                    peak = oracle_peak(batch, settings.unroll)
            except NonFiniteError as e:
                raise TrainingDivergedError(f"Training diverged at step {step}: {e}")
            adam_step(optimizer, model, grads)

            record = {"step": step}
            record.update(report.as_dict())
            record["ledger_peak"] = peak
            record["wall_time"] = time.time() - start_time
            if (config.eval_frequency > 0 and step % config.eval_frequency == 0) or step == num_steps:
                record.update(task.evaluate(model))
            records.append(record)

            if metrics_log is not None:
                metrics_log.write(record)
            if writer is not None:
                writer.add_scalar("Train/task_loss_bits", report.task_bits, step)
                writer.add_scalar("Train/combined_loss", report.combined, step)
                for level, aux in enumerate(report.aux):
                    writer.add_scalar(f"Train/aux_loss_{level}", aux, step)
                writer.add_scalar("Train/ledger_peak", peak, step)
                if task.metric in record:
                    writer.add_scalar(f"Validation/{task.metric}", record[task.metric], step)

            if step % config.log_frequency == 0 or step == num_steps:
                message = f"Step {step}: task {report.task_bits:.4f} bits, " \
                          f"aux {[round(aux, 4) for aux in report.aux]}, combined {report.combined:.4f}"
                if task.metric in record:
                    message += f", {task.metric} {record[task.metric]:.4f}"
                print(message)

            if output_dir is not None and config.save_model_frequency > 0 and step % config.save_model_frequency == 0:
                save_checkpoint(os.path.join(output_dir, f"model_{step}.pt"), model, optimizer, config.as_dict(), step)
    finally:
        if writer is not None:
            writer.close()

    if output_dir is not None:
        save_checkpoint(os.path.join(output_dir, "model_final.pt"), model, optimizer, config.as_dict(), num_steps)
    return model, records
