"""
Task metric of a checkpoint: bits/char for copy and PTB, accuracy for MNIST
"""
import argparse
import sys

from grhrnn.common.checkpoint import load_checkpoint
from grhrnn.common.config import ConfigParams, split_overrides
from grhrnn.common.errors import ConfigError, HrnnError
from grhrnn.model.model_factory import ModelFactory
from grhrnn.tasks.task_factory import TaskFactory


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Checkpoint evaluation script")
    parser.add_argument("--config_file", required=True, type=str, help="Experiment configuration file")
    parser.add_argument("--model_path", required=True, type=str, help="Checkpoint to evaluate")
    return parser.parse_known_args(argv)


def main(argv=None) -> int:
    args, rest = do_parsing(argv)

    try:
        config = ConfigParams(args.config_file, split_overrides(rest))
        task = TaskFactory.create_task(config)
        model = ModelFactory.create_model(config, task)
        step, trained_config = load_checkpoint(args.model_path, model)
        if trained_config.get("task") != config.task:
            raise ConfigError(f"Checkpoint {args.model_path} was trained on {trained_config.get('task')}, "
                              f"config task is {config.task}")
        model.eval()
        metrics = task.evaluate(model)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    print(f"Checkpoint {args.model_path} (step {step})")
    for name, value in metrics.items():
        print(f"{name}: {value:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
