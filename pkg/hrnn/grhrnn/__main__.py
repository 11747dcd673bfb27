"""
python -m grhrnn <subcommand> [arguments]
"""
import sys

from grhrnn import acceptance, beta_sweep, evaluate, export_csv, gradcheck, lmax, memcheck, train

SUBCOMMANDS = {
    "train": train.main,
    "gradcheck": gradcheck.main,
    "memcheck": memcheck.main,
    "lmax": lmax.main,
    "eval": evaluate.main,
    "export-csv": export_csv.main,
    "beta-sweep": beta_sweep.main,
    "acceptance": acceptance.main,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) == 0 or argv[0] not in SUBCOMMANDS:
        print(f"Usage: python -m grhrnn {{{','.join(SUBCOMMANDS)}}} [arguments]")
        return 2
    return SUBCOMMANDS[argv[0]](argv[1:])


if __name__ == "__main__":
    sys.exit(main())
