"""Per-iteration diagnostics and their CSV serialization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

from .exceptions import ParseError

TRACE_HEADER = ("iter", "time_s", "objective", "fp_residual", "consensus_residual", "active_set")


@dataclass
class TraceRecord:
    iter: int
    time_s: float
    objective: float = math.nan
    fp_residual: Optional[float] = None
    consensus_residual: Optional[float] = None
    active_set: Optional[tuple] = None

    def as_row(self):
        return [
            str(self.iter),
            f"{self.time_s:.6f}",
            _fmt(self.objective),
            _fmt(self.fp_residual),
            _fmt(self.consensus_residual),
            "" if self.active_set is None else ",".join(str(i) for i in self.active_set),
        ]


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _parse(value):
    return None if value == "" else float(value)


@dataclass
class IterationTrace:
    """Records of one run plus its termination status."""

    records: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def append(self, record: TraceRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    @property
    def last(self):
        return self.records[-1] if self.records else None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for rec in self.records:
                writer.writerow(rec.as_row())

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError("empty trace file", line=1) from None
            if tuple(header) != TRACE_HEADER:
                raise ParseError(f"bad trace header {header!r}", line=1)
            trace = cls()
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(TRACE_HEADER):
                    raise ParseError(f"expected {len(TRACE_HEADER)} fields, got {len(row)}", line=lineno)
                try:
                    rec = TraceRecord(
                        iter=int(row[0]),
                        time_s=float(row[1]),
                        objective=math.nan if row[2] == "" else float(row[2]),
                        fp_residual=_parse(row[3]),
                        consensus_residual=_parse(row[4]),
                        active_set=tuple(int(t) for t in row[5].split(",")) if row[5] else None,
                    )
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno) from None
                trace.append(rec)
        trace.iterations = trace.records[-1].iter if trace.records else 0
        return trace
