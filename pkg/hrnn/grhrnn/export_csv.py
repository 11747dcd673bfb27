"""
Metrics stream to CSV, one row per record, columns in first-seen order
"""
import argparse
import sys

from grhrnn.common.errors import HrnnError
from grhrnn.common.metrics import export_csv, read_metrics


def do_parsing(argv=None):
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description="Export a metrics.jsonl file to CSV")
    parser.add_argument("--metrics_file", required=True, type=str, help="Line-delimited JSON metrics")
    parser.add_argument("--output_file", required=True, type=str, help="CSV file to write")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = do_parsing(argv)

    try:
        records = read_metrics(args.metrics_file)
        export_csv(records, args.output_file)
    except HrnnError as e:
        print(f"Error: {e}")
        return 1

    print(f"Wrote {len(records)} rows to {args.output_file}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
