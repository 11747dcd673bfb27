"""
Train script of the hierarchical RNN experiments.
Any config key can be overridden from the command line, e.g. --mode gr-hrnn --betas 0
"""
import argparse
import os
import sys

from grhrnn.common.config import ConfigParams, split_overrides
from grhrnn.common.errors import HrnnError
from grhrnn.common.output_lock import output_lock
from grhrnn.tasks.task_factory import TaskFactory
from grhrnn.training.trainer import run_training


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Hierarchical RNN training script")
    parser.add_argument("--config_file", required=True, type=str, help="Experiment configuration file")
    parser.add_argument("--output_dir", required=True, type=str,
                        help="Output directory for metrics, TensorBoard events, checkpoints and config snapshot")
    return parser.parse_known_args(argv)


def main(argv=None) -> int:
    args, rest = do_parsing(argv)
    print(args)

    try:
        config = ConfigParams(args.config_file, split_overrides(rest))
        with output_lock(args.output_dir):
            config.write(os.path.join(args.output_dir, "config.cfg"))
            task = TaskFactory.create_task(config)
            _, records = run_training(config, task, args.output_dir)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    print(f"Final record: {records[-1]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
