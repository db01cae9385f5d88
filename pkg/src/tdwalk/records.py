"""Run records: metric time series keyed by fresh-sample count, with CSV I/O.

The CSV layout is one row per logging event, a `samples` column first, and
`# config: {json}` header comments echoing the full configuration. Float
formatting uses repr (shortest round-trip), so files are byte-stable under
rerun with the same seed.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field


@dataclass
class RunRecord:
    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def append(self, row: list[float]) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, expected {len(self.columns)}")
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError("samples column must be strictly increasing")
        self.rows.append([float(v) for v in row])

    def column(self, name: str) -> list[float]:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def final(self, name: str) -> float:
        if not self.rows:
            raise ValueError("record is empty")
        return self.rows[-1][self.columns.index(name)]

    def to_csv(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# seed: {self.seed}\n")
            fh.write(f"# config: {json.dumps(self.config, sort_keys=True)}\n")
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(v) for v in row])
        os.replace(tmp, path)

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        seed = 0
        config: dict = {}
        with open(path, newline="", encoding="utf-8") as fh:
            lines = []
            for line in fh:
                if line.startswith("# seed:"):
                    seed = int(line.split(":", 1)[1])
                elif line.startswith("# config:"):
                    config = json.loads(line.split(":", 1)[1])
                else:
                    lines.append(line)
        reader = csv.reader(lines)
        columns = next(reader)
        record = cls(columns=columns, config=config, seed=seed)
        for row in reader:
            record.rows.append([float(v) for v in row])
        return record


def aggregate_records(records: list[RunRecord]) -> RunRecord:
    """Per-sample-count mean and sample standard deviation across seeds.

    Records are aligned on the samples column; a record that stopped early
    is padded with its final row (the trained predictor is frozen after the
    stop, so its test metrics remain valid at later sample counts).
    """
    import numpy as np

    if not records:
        raise ValueError("no records to aggregate")
    columns = records[0].columns
    for r in records:
        if r.columns != columns:
            raise ValueError("records have mismatched columns")
    grids = sorted({row[0] for r in records for row in r.rows})
    metrics = columns[1:]
    out_cols = ["samples"]
    for m in metrics:
        out_cols += [f"{m}_mean", f"{m}_std"]
    agg = RunRecord(columns=out_cols, config={"seeds": [r.seed for r in records]})
    per_record = []
    for r in records:
        samples = [row[0] for row in r.rows]
        per_record.append((samples, r.rows))
    for s in grids:
        values = []
        for samples, rows in per_record:
            # last row at or before s; records start at their first logged count
            idx = np.searchsorted(samples, s, side="right") - 1
            if idx < 0:
                idx = 0
            values.append(rows[idx][1:])
        arr = np.asarray(values)
        row = [s]
        for j in range(arr.shape[1]):
            row.append(float(np.mean(arr[:, j])))
            row.append(float(np.std(arr[:, j], ddof=1)) if len(records) > 1 else 0.0)
        agg.rows.append(row)
    return agg
