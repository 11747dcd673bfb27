"""
Checks the outcome of a multi-seed experiment driver against its decision thresholds.

Runs are read from <runs_dir>/<variant>/seed_<n>/, the final evaluation record of every metrics.jsonl (and for the
copy task the lmax.jsonl record) is averaged over seeds before the comparison.
"""
import argparse
import glob
import os
import sys
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from grhrnn.common.errors import HrnnError
from grhrnn.common.metrics import read_metrics

# Copy task, bits/char on the training copy length
COPY_SOLVED_BITS = 0.15
COPY_UNSOLVED_BITS = 0.5
# Largest L_max gap between ours and hrnn, as a fraction of the hrnn L_max
COPY_LMAX_MATCH = 0.25
DEEP_SOLVED_BITS = 0.15
DEEP_CHANCE_BITS = 0.8
MNIST_MIN_ACCURACY = 0.85
MNIST_MIN_MARGIN = 0.03
MIN_SEEDS = 3


@dataclass
class SeedMean:
    values: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    def __str__(self):
        return f"{self.mean:.4f} +- {self.std:.4f} over {len(self.values)} seeds"


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def final_value(path: str, key: str) -> float:
    """
    key of the last record holding it
    """
    for record in reversed(read_metrics(path)):
        if key in record:
            return float(record[key])
    raise HrnnError(f"{path} has no record with {key}")


def seed_mean(runs_dir: str, variant: str, key: str, file_name: str = "metrics.jsonl",
              min_seeds: int = MIN_SEEDS) -> SeedMean:
    seed_dirs = sorted(glob.glob(os.path.join(runs_dir, variant, "seed_*")))
    if len(seed_dirs) < min_seeds:
        raise HrnnError(f"{os.path.join(runs_dir, variant)} holds {len(seed_dirs)} seed runs, expected at least "
                        f"{min_seeds}")
    return SeedMean([final_value(os.path.join(seed_dir, file_name), key) for seed_dir in seed_dirs])


def check_copy(runs_dir: str, min_seeds: int) -> List[Check]:
    bits = {variant: seed_mean(runs_dir, variant, "eval_bits_per_char", min_seeds=min_seeds)
            for variant in ("hrnn", "gr_hrnn", "ours", "mr_hrnn")}
    l_max = {variant: seed_mean(runs_dir, variant, "l_max", "lmax.jsonl", min_seeds)
             for variant in ("hrnn", "gr_hrnn", "ours", "mr_hrnn")}
    gap = abs(l_max["ours"].mean - l_max["hrnn"].mean)
    return [
        Check("ours solves the training length", bits["ours"].mean < COPY_SOLVED_BITS,
              f"bits/char {bits['ours']} < {COPY_SOLVED_BITS}"),
        Check("gr-hrnn does not", bits["gr_hrnn"].mean > COPY_UNSOLVED_BITS,
              f"bits/char {bits['gr_hrnn']} > {COPY_UNSOLVED_BITS}"),
        Check("L_max of ours matches hrnn", gap <= COPY_LMAX_MATCH * l_max["hrnn"].mean,
              f"ours {l_max['ours']}, hrnn {l_max['hrnn']}"),
        Check("L_max ours and hrnn > mr-hrnn > gr-hrnn",
              min(l_max["ours"].mean, l_max["hrnn"].mean) > l_max["mr_hrnn"].mean > l_max["gr_hrnn"].mean,
              f"mr-hrnn {l_max['mr_hrnn']}, gr-hrnn {l_max['gr_hrnn']}"),
    ]


def check_deep(runs_dir: str, min_seeds: int) -> List[Check]:
    all_levels = seed_mean(runs_dir, "aux_all_levels", "eval_bits_per_char", min_seeds=min_seeds)
    lowest = seed_mean(runs_dir, "aux_lowest_level", "eval_bits_per_char", min_seeds=min_seeds)
    return [
        Check("auxiliary losses on both lower levels solve the task", all_levels.mean < DEEP_SOLVED_BITS,
              f"bits/char {all_levels} < {DEEP_SOLVED_BITS}"),
        Check("auxiliary loss on the lowest level only stays near chance", lowest.mean > DEEP_CHANCE_BITS,
              f"bits/char {lowest} > {DEEP_CHANCE_BITS}"),
    ]


def check_mnist(runs_dir: str, min_seeds: int) -> List[Check]:
    ours = seed_mean(runs_dir, "ours", "eval_accuracy", min_seeds=min_seeds)
    gr_hrnn = seed_mean(runs_dir, "gr_hrnn", "eval_accuracy", min_seeds=min_seeds)
    return [
        Check("ours accuracy", ours.mean > MNIST_MIN_ACCURACY, f"{ours} > {MNIST_MIN_ACCURACY}"),
        Check("ours beats gr-hrnn", ours.mean - gr_hrnn.mean >= MNIST_MIN_MARGIN,
              f"ours {ours.mean:.4f} - gr-hrnn {gr_hrnn} >= {MNIST_MIN_MARGIN}"),
    ]


def check_ptb(runs_dir: str, min_seeds: int) -> List[Check]:
    variants = ("hrnn", "ours", "gr_hrnn")
    bits = {variant: seed_mean(runs_dir, variant, "eval_bits_per_char", min_seeds=min_seeds) for variant in variants}
    unigram = seed_mean(runs_dir, "hrnn", "unigram_bits_per_char", min_seeds=min_seeds).mean
    checks = [Check(f"{variant} beats the unigram baseline", bits[variant].mean < unigram,
                    f"bits/char {bits[variant]} < {unigram:.4f}") for variant in variants]
    noise = max(bits[variant].std for variant in variants)
    checks.append(Check("hrnn <= ours <= gr-hrnn within seed noise",
                        bits["hrnn"].mean <= bits["ours"].mean + noise
                        and bits["ours"].mean <= bits["gr_hrnn"].mean + noise,
                        f"hrnn {bits['hrnn'].mean:.4f}, ours {bits['ours'].mean:.4f}, "
                        f"gr-hrnn {bits['gr_hrnn'].mean:.4f}, noise {noise:.4f}"))
    return checks


EXPERIMENTS: Dict[str, Callable[[str, int], List[Check]]] = {
    "copy": check_copy,
    "deep": check_deep,
    "mnist": check_mnist,
    "ptb": check_ptb,
}


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Acceptance checks of a multi-seed experiment")
    parser.add_argument("--experiment", required=True, choices=list(EXPERIMENTS), help="Experiment driver")
    parser.add_argument("--runs_dir", required=True, type=str, help="Output directory of the driver")
    parser.add_argument("--min_seeds", type=int, default=MIN_SEEDS, help="Seed runs required per variant")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = do_parsing(argv)

    try:
        checks = EXPERIMENTS[args.experiment](args.runs_dir, args.min_seeds)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    for check in checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    return 0 if all(check.passed for check in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
