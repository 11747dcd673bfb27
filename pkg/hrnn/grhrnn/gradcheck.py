"""
Gradient checks on a small configuration:
- restricted gradients of the streaming sweep against the full-graph step with gradient barriers
- true gradients of the combined loss against central finite differences (float64, single window)
"""
import argparse
import sys
from dataclasses import replace
from typing import Dict

import numpy as np

from grhrnn.autodiff.gradcheck import finite_diff_check, max_relative_error
from grhrnn.autodiff.tape import set_default_check_finite
from grhrnn.common.config import ConfigParams, split_overrides
from grhrnn.common.errors import ConfigError, HrnnError
from grhrnn.hierarchy.hrnn import EdgePolicy
from grhrnn.model.model_factory import ModelFactory
from grhrnn.tasks.task_factory import TaskFactory
from grhrnn.training.objective import HRNN, StepSettings, plan_losses
from grhrnn.training.oracle import combined_loss, train_step_oracle
from grhrnn.training.streaming import train_step_streaming
from grhrnn.training.trainer import step_settings

MAX_LENGTH = 60
TOLERANCES = {"float64": 1e-9, "float32": 1e-4}
FD_TOLERANCE = 1e-5


def run_gradcheck(config: ConfigParams) -> Dict[str, float]:
    if config.mode not in ("gr-hrnn", "ours"):
        raise ConfigError(f"Mode {config.mode} computes true gradients, there is no streaming counterpart to check")
    set_default_check_finite(config.check_finite)
    settings = step_settings(config)
    task = TaskFactory.create_task(config)
    model = ModelFactory.create_model(config, task)
    batch = task.sample_batch(np.random.default_rng(config.seed_data), config.torch_dtype)
    longest = max(group.length for group in batch)
    if longest > MAX_LENGTH:
        raise ConfigError(f"gradcheck runs on sequences of at most {MAX_LENGTH} steps, the batch has {longest}")

    oracle_grads, oracle_report = train_step_oracle(model, batch, settings, np.random.default_rng(config.seed_eval))
    stream_grads, stream_report, ledger = train_step_streaming(model, batch, settings,
                                                               np.random.default_rng(config.seed_eval))
    results = {
        "streaming_vs_oracle": max_relative_error(stream_grads, oracle_grads),
        "combined_loss_difference": abs(stream_report.combined - oracle_report.combined),
        "ledger_peak": ledger.peak_total,
    }

    if config.precision == "float64" and all(group.length <= settings.unroll for group in batch):
        plan = plan_losses(batch, finite_difference_settings(settings), np.random.default_rng(config.seed_eval))
        # Biases only, every coordinate costs two full forward passes
        params = [param for name, param in model.named_parameters() if name.split(".")[-1] in ("b", "b1", "b2", "bias")]
        results["finite_difference"] = finite_diff_check(lambda: combined_loss(model, batch, plan, EdgePolicy()),
                                                         params)
    return results


def finite_difference_settings(settings: StepSettings) -> StepSettings:
    """
    True-gradient settings central differences can check: decoder targets of levels >= 1 are states behind a
    gradient barrier, which differences see through, so only the lowest auxiliary loss keeps its weight
    """
    betas = tuple(beta if level == 0 else 0.0 for level, beta in enumerate(settings.betas))
    return replace(settings, mode=HRNN, betas=betas)


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Streaming vs full-graph and finite-difference gradient checks")
    parser.add_argument("--config_file", required=True, type=str, help="Small experiment configuration file")
    return parser.parse_known_args(argv)


def main(argv=None) -> int:
    args, rest = do_parsing(argv)

    try:
        config = ConfigParams(args.config_file, split_overrides(rest))
        results = run_gradcheck(config)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    tolerance = TOLERANCES[config.precision]
    print(f"Precision {config.precision}, streaming vs oracle tolerance {tolerance}")
    failed = False
    for name, value in results.items():
        print(f"{name}: {value}")
    if results["streaming_vs_oracle"] > tolerance:
        print(f"FAILED: streaming gradients differ from the full-graph ones by {results['streaming_vs_oracle']}")
        failed = True
    if "finite_difference" in results and results["finite_difference"] > FD_TOLERANCE:
        print(f"FAILED: finite differences differ from tape gradients by {results['finite_difference']}")
        failed = True
    elif "finite_difference" not in results:
        print("Finite-difference check skipped (float32 or more than one unroll window)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
