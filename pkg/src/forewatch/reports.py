"""Report rows and their CSV/JSON writers.

Reports carry no timestamps; two runs from the same config and seed write
byte-identical files. The config fingerprint and seed ride along in every
document so a report can be traced back to the run that made it.
"""

import csv
import json
import os
from dataclasses import dataclass
from typing import Sequence

from .errors import UsageError

REPORT_KINDS = ("rmse_table", "ranking_table", "selection_curve", "sentinel_log")


@dataclass(frozen=True)
class Report:
    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    fingerprint: str
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in REPORT_KINDS:
            raise UsageError(f"unknown report kind {self.kind!r}")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise UsageError(
                    f"report row has {len(row)} cells, expected {len(self.columns)}"
                )

    def row_dicts(self) -> list[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(report: Report, path) -> None:
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("fingerprint", report.fingerprint, "seed", report.seed))
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow([_cell(v) for v in row])


def write_report_json(report: Report, path, extra: dict | None = None) -> None:
    path = os.fspath(path)
    document = {
        "kind": report.kind,
        "fingerprint": report.fingerprint,
        "seed": report.seed,
        "columns": list(report.columns),
        "rows": report.row_dicts(),
    }
    if extra:
        document.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(document, sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")


def read_report_json(path) -> dict:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def curve_report(
    kind: str,
    per_strategy: dict,
    fingerprint: str,
    seed: int,
) -> Report:
    """Aggregate per-period sMAPE samples into a plot-ready table.

    per_strategy maps strategy name to a list of per-period sample lists
    (one inner list per period index, one sample per series).
    """
    rows = []
    for strategy in sorted(per_strategy):
        periods = per_strategy[strategy]
        for idx, samples in enumerate(periods):
            if not samples:
                raise UsageError(
                    f"strategy {strategy!r} has no samples for period {idx}"
                )
            n = len(samples)
            mean = sum(samples) / n
            var = sum((s - mean) ** 2 for s in samples) / n
            rows.append((idx, strategy, mean, var**0.5, n))
    return Report(
        kind=kind,
        columns=("period", "strategy", "mean", "std", "n"),
        rows=tuple(rows),
        fingerprint=fingerprint,
        seed=seed,
    )
