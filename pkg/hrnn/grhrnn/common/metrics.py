"""
Metrics stream: one JSON object per line, one line per optimizer step
"""
import csv
import json
import os
from typing import Dict, List

from grhrnn.common.errors import HrnnError


class MetricsLog(object):

    def __init__(self, path: str):
        self.path = path
        # Truncated so that a rerun in the same directory starts a fresh stream
        open(self.path, "w").close()

    def write(self, record: Dict[str, object]):
        with open(self.path, "a") as out_fp:
            out_fp.write(json.dumps(record) + "\n")


def read_metrics(path: str) -> List[Dict[str, object]]:
    if not os.path.isfile(path):
        raise HrnnError(f"Metrics file {path} not found")
    records = []
    with open(path) as in_fp:
        for line_number, line in enumerate(in_fp, start=1):
            if line.strip() == "":
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise HrnnError(f"{path}: malformed record at line {line_number}: {e.msg}")
            if not isinstance(record, dict):
                raise HrnnError(f"{path}: malformed record at line {line_number}: not an object")
            records.append(record)
    return records


def metric_columns(records: List[Dict[str, object]]) -> List[str]:
    """
    Metric names in first-seen order
    """
    columns = []
    for record in records:
        for key in record:
            if key not in columns:
                columns.append(key)
    return columns


def export_csv(records: List[Dict[str, object]], output_file: str):
    columns = metric_columns(records)
    with open(output_file, "w", newline="") as out_fp:
        writer = csv.DictWriter(out_fp, fieldnames=columns, restval="")
        writer.writeheader()
        for record in records:
            writer.writerow(record)
