"""Result tables and their CSV/JSON serialisation."""

import csv
import io
import json
import math
import os
import subprocess
import time
from typing import NamedTuple

FIELDS = ("scheme", "sweep_value", "metric", "value", "stderr", "n")


class TableFileError(OSError):
    """Table could not be written or read."""


class Row(NamedTuple):
    scheme: str
    sweep_value: float
    metric: str
    value: float
    stderr: float
    n: int


class ExperimentTable:
    """Rows keyed by ``(scheme, sweep_value, metric)``; keys are unique."""

    def __init__(self, rows=()):
        self._rows = {}
        for r in rows:
            self.add(*r)

    def add(self, scheme, sweep_value, metric, value, stderr=math.nan, n=0):
        row = Row(str(scheme), float(sweep_value), str(metric), float(value),
                  float(stderr), int(n))
        key = row[:3]
        if key in self._rows:
            raise KeyError(f"duplicate row {key!r}")
        self._rows[key] = row
        return row

    def extend(self, other):
        for r in other:
            self.add(*r)

    def rows(self):
        """Rows in a deterministic order (scheme, sweep value, metric)."""
        return [self._rows[k] for k in sorted(self._rows, key=_sort_key)]

    def __iter__(self):
        return iter(self.rows())

    def __len__(self):
        return len(self._rows)

    def get(self, scheme, sweep_value, metric):
        return self._rows[(scheme, float(sweep_value), metric)]

    def select(self, scheme=None, metric=None):
        return [r for r in self.rows()
                if (scheme is None or r.scheme == scheme)
                and (metric is None or r.metric == metric)]


def _sort_key(key):
    scheme, sweep, metric = key
    # nan sorts last so failure markers trail the data
    return (scheme, math.isnan(sweep), 0.0 if math.isnan(sweep) else sweep, metric)


def _fmt(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def table_to_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in table:
        w.writerow([r.scheme, _fmt(r.sweep_value), r.metric, _fmt(r.value),
                    _fmt(r.stderr), _fmt(r.n)])
    return buf.getvalue()


def _json_float(v):
    # JSON has no nan/inf; keep them as strings that float() reads back
    return v if math.isfinite(v) else repr(v)


def table_to_json(table):
    rows = [{"scheme": r.scheme, "sweep_value": _json_float(r.sweep_value),
             "metric": r.metric, "value": _json_float(r.value),
             "stderr": _json_float(r.stderr), "n": r.n} for r in table]
    return json.dumps(rows, indent=1) + "\n"


def emit_table(table, path, format="csv"):
    """Write ``table`` as CSV or JSON (UTF-8, LF line endings)."""
    if format == "csv":
        text = table_to_csv(table)
    elif format == "json":
        text = table_to_json(table)
    else:
        raise ValueError(f"unknown format {format!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise TableFileError(f"cannot write table to {path}: {exc}") from exc


def read_table(path, format=None):
    """Inverse of :func:`emit_table`."""
    if format is None:
        format = "json" if str(path).endswith(".json") else "csv"
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise TableFileError(f"cannot read table from {path}: {exc}") from exc
    table = ExperimentTable()
    if format == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"unexpected header {reader.fieldnames!r}")
        for d in reader:
            table.add(d["scheme"], float(d["sweep_value"]), d["metric"],
                      float(d["value"]), float(d["stderr"]), int(d["n"]))
    else:
        for d in json.loads(text):
            table.add(d["scheme"], float(d["sweep_value"]), d["metric"],
                      float(d["value"]), float(d["stderr"]), int(d["n"]))
    return table


def commit_id(cwd=None):
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=cwd, capture_output=True,
                             text=True, timeout=5, check=True)
        return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(path, spec, seed, wall_time, extra=None):
    """Run manifest next to a table: spec echo, seed, commit id and wall time."""
    data = {
        "spec": spec.echo(),
        "seed": seed,
        "commit": commit_id(os.path.dirname(os.path.abspath(__file__))),
        "wall_time_s": wall_time,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        data.update(extra)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(data, fh, indent=1, default=repr)
            fh.write("\n")
    except OSError as exc:
        raise TableFileError(f"cannot write manifest to {path}: {exc}") from exc
