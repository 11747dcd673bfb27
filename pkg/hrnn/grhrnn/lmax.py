"""
L_max of a copy-task checkpoint: the longest copy length recalled below the threshold, all shorter ones included
"""
import argparse
import sys

from grhrnn.common.checkpoint import load_checkpoint
from grhrnn.common.config import ConfigParams, split_overrides
from grhrnn.common.errors import ConfigError, HrnnError
from grhrnn.common.metrics import MetricsLog
from grhrnn.model.model_factory import ModelFactory
from grhrnn.tasks.task_factory import TaskFactory


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Copy task L_max search")
    parser.add_argument("--config_file", required=True, type=str, help="Experiment configuration file")
    parser.add_argument("--model_path", required=True, type=str, help="Checkpoint to evaluate")
    parser.add_argument("--output_file", type=str, default=None,
                        help="Optional line-delimited JSON file receiving the L_max record")
    return parser.parse_known_args(argv)


def main(argv=None) -> int:
    args, rest = do_parsing(argv)

    try:
        config = ConfigParams(args.config_file, split_overrides(rest))
        if config.task != "copy":
            raise ConfigError(f"L_max is defined for the copy task, config task is {config.task}")
        task = TaskFactory.create_task(config)
        model = ModelFactory.create_model(config, task)
        step, trained_config = load_checkpoint(args.model_path, model)
        if trained_config.get("task") != "copy":
            raise ConfigError(f"Checkpoint {args.model_path} was trained on {trained_config.get('task')}, not copy")
        model.eval()
        l_max = task.l_max(model)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    if args.output_file is not None:
        MetricsLog(args.output_file).write({"step": step, "l_max": l_max, "lmax_threshold": config.lmax_threshold})
    print(f"Checkpoint {args.model_path} (step {step}): L_max {l_max} at threshold {config.lmax_threshold} bits/char")
    return 0


if __name__ == "__main__":
    sys.exit(main())
