"""
Memory check: one streaming step over random data with homogeneous levels,
the ledger peak is compared with the memory formula and with plain TBPTT
"""
import argparse
import sys
from typing import Dict

import numpy as np
import torch

from grhrnn.common.errors import HrnnError
from grhrnn.hierarchy import schedule as schedules
from grhrnn.hierarchy.hrnn import HierarchicalRnn
from grhrnn.tasks.batch import SequenceBatch
from grhrnn.tasks.task import one_hot_inputs
from grhrnn.training.ledger import full_tbptt_count, memory_formula, predicted_peak
from grhrnn.training.objective import OURS, StepSettings
from grhrnn.training.streaming import train_step_streaming

NUM_SYMBOLS = 3


def run_memcheck(levels: int, k: int, length: int, size: int = 8, batch_size: int = 1,
                 seed: int = 0) -> Dict[str, int]:
    schedule = schedules.fixed(levels, [k] * (levels - 1), length)
    model = HierarchicalRnn(input_size=NUM_SYMBOLS, level_sizes=[size] * levels, num_classes=NUM_SYMBOLS,
                            k_max=[k] * (levels - 1), decoder_units=size)
    model.init_parameters(seed)
    rng = np.random.default_rng(seed)
    ids = torch.as_tensor(rng.integers(0, NUM_SYMBOLS, size=(length, batch_size)), dtype=torch.long)
    batch = SequenceBatch(inputs=one_hot_inputs(ids, NUM_SYMBOLS), targets=ids,
                          loss_mask=torch.ones(length, batch_size, dtype=torch.float64), schedule=schedule,
                          input_ids=ids)
    settings = StepSettings(mode=OURS, betas=(1.0,) * (levels - 1), unroll=length)
    _, _, ledger = train_step_streaming(model, [batch], settings, rng)
    results = {
        "ledger_peak": ledger.peak_total,
        "memory_formula": memory_formula(levels, k, length),
        "predicted_peak": predicted_peak(schedule),
        "full_tbptt": full_tbptt_count(schedule),
        "ledger_peak_scalars": ledger.peak_scalars,
    }
    for level, peak in enumerate(ledger.peak):
        results[f"ledger_peak_{level}"] = peak
    return results


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Streaming memory ledger against the memory formula")
    parser.add_argument("--levels", type=int, default=2, help="Number of levels")
    parser.add_argument("--k", type=int, default=10, help="Tick ratio between consecutive levels")
    parser.add_argument("--length", type=int, default=200, help="Unroll length T")
    parser.add_argument("--size", type=int, default=8, help="Hidden size of every level")
    parser.add_argument("--batch_size", type=int, default=1, help="Batch size")
    parser.add_argument("--seed", type=int, default=0, help="Seed of parameters and data")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = do_parsing(argv)

    try:
        results = run_memcheck(args.levels, args.k, args.length, args.size, args.batch_size, args.seed)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    print(f"Levels {args.levels}, k {args.k}, T {args.length}")
    for name, value in results.items():
        print(f"{name}: {value}")
    print(f"Streaming keeps {results['ledger_peak']} hidden-size vectors, plain TBPTT {results['full_tbptt']}")
    if results["ledger_peak"] > results["memory_formula"]:
        print("FAILED: ledger peak above the memory formula")
        return 1
    if results["ledger_peak"] != results["predicted_peak"]:
        print("FAILED: ledger peak differs from the predicted peak")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
