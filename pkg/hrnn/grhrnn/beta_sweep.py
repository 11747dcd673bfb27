"""
One training run per auxiliary loss weight of the grid (the same weight on every level),
the best run is picked by the task evaluation metric. gr-hrnn only has the beta = 0 run.
"""
import argparse
import os
import sys

from grhrnn.common.config import ConfigParams, split_overrides
from grhrnn.common.errors import HrnnError
from grhrnn.common.metrics import MetricsLog
from grhrnn.common.output_lock import output_lock
from grhrnn.tasks.task_factory import TaskFactory
from grhrnn.training.trainer import BETA_GRID, run_training


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Auxiliary loss weight sweep")
    parser.add_argument("--config_file", required=True, type=str, help="Experiment configuration file")
    parser.add_argument("--output_dir", required=True, type=str, help="One sub-directory per weight is created here")
    return parser.parse_known_args(argv)


def main(argv=None) -> int:
    args, rest = do_parsing(argv)

    try:
        overrides = split_overrides(rest)
        base = ConfigParams(args.config_file, overrides)
        grid = (0.0,) if base.mode == "gr-hrnn" else BETA_GRID
        task = TaskFactory.create_task(base)
        results = []
        with output_lock(args.output_dir):
            summary = MetricsLog(os.path.join(args.output_dir, "beta_sweep.jsonl"))
            for beta in grid:
                overrides["betas"] = ", ".join([repr(beta)] * (base.levels - 1))
                config = ConfigParams(args.config_file, overrides)
                run_dir = os.path.join(args.output_dir, f"beta_{beta:g}")
                print(f"\nBeta {beta:g}, output in {run_dir}")
                with output_lock(run_dir):
                    config.write(os.path.join(run_dir, "config.cfg"))
                    _, records = run_training(config, task, run_dir)
                metric = records[-1][task.metric]
                results.append((beta, metric))
                summary.write({"beta": beta, task.metric: metric})
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    pick = min if task.lower_is_better else max
    best_beta, best_metric = pick(results, key=lambda result: result[1])
    for beta, metric in results:
        print(f"beta {beta:g}: {task.metric} {metric:.4f}")
    print(f"Best beta {best_beta:g} with {task.metric} {best_metric:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
