"""Convergence traces and their CSV / JSON serialization.

Column schema (stable order)::

    iteration         outer iteration (QNing) or solver iteration (baselines)
    passes            cumulative component-gradient evaluations / n
    objective         f(z_k) for QNing methods, f(x_t) for baselines
    envelope          approximate envelope value F_k (NaN for baselines)
    grad_norm         ||g_k|| (NaN for baselines)
    stepsize          line-search parameter accepted at this iteration (NaN if none)
    attempts          line-search candidates evaluated at this iteration
    inner_iterations  inner-solver iterations spent at this iteration
    fallback          1 if no candidate passed the descent test
    certified         1 if the accepted inner solve met the adaptive rule
    wall_time         seconds since start (NaN unless timing was requested)

Floats are written with 17 significant digits so every value round-trips.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import astuple, dataclass, field, fields

COLUMNS = ("iteration", "passes", "objective", "envelope", "grad_norm", "stepsize",
           "attempts", "inner_iterations", "fallback", "certified", "wall_time")

_INT_COLUMNS = {"iteration", "attempts", "inner_iterations", "fallback", "certified"}

NAN = float("nan")


@dataclass
class TraceRecord:
    iteration: int
    passes: float
    objective: float
    envelope: float = NAN
    grad_norm: float = NAN
    stepsize: float = NAN
    attempts: int = 0
    inner_iterations: int = 0
    fallback: int = 0
    certified: int = 0
    wall_time: float = NAN

    def __eq__(self, other):
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return all(_same(a, b) for a, b in zip(astuple(self), astuple(other)))


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


assert tuple(f.name for f in fields(TraceRecord)) == COLUMNS


@dataclass
class SolverTrace:
    method: str
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, record):
        self.records.append(record)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def __len__(self):
        return len(self.records)


def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, ".17g")


def _parse(name, text):
    return int(text) if name in _INT_COLUMNS else float(text)


def emit_csv(trace, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for rec in trace.records:
                writer.writerow([_fmt(v) for v in astuple(rec)])
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc


def read_csv(path, method=""):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise ValueError(f"{path}: unexpected trace columns {header}")
            records = [TraceRecord(*(_parse(n, v) for n, v in zip(COLUMNS, row)))
                       for row in reader]
    except OSError as exc:
        raise OSError(f"cannot read trace {path}: {exc}") from exc
    return SolverTrace(method, records)


def _json_value(value):
    if isinstance(value, float):
        return _fmt(value)
    return json.dumps(value, sort_keys=True)


def _json_object(mapping):
    return "{" + ", ".join(f"{json.dumps(k)}: {_json_value(v)}" for k, v in mapping.items()) + "}"


def emit_json(trace, path):
    """JSON with ``method``, ``meta`` and ``records`` (one object per line)."""
    lines = ["{", f'  "method": {json.dumps(trace.method)},',
             f'  "meta": {_json_object(dict(sorted(trace.meta.items())))},',
             '  "records": [']
    body = [f"    {_json_object(dict(zip(COLUMNS, astuple(r))))}" for r in trace.records]
    lines.append(",\n".join(body))
    lines.append("  ]")
    lines.append("}")
    text = "\n".join(line for line in lines if line) + "\n"
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc


def read_json(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read trace {path}: {exc}") from exc
    records = [TraceRecord(*(_parse(n, r[n]) for n in COLUMNS)) for r in doc["records"]]
    return SolverTrace(doc["method"], records, doc.get("meta", {}))
