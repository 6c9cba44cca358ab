"""Report assembly: checks, summaries, per-point tables and stable JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

REPORT_VERSION = 1


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str = "<="          # value <= tolerance, or value >= tolerance

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.tolerance
        return self.value >= self.tolerance

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "relation": self.relation, "passed": self.passed}


@dataclass
class Table:
    x: np.ndarray
    columns: dict   # name -> 1-d array

    def csv(self) -> str:
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        names = [f"x_{i}" for i in range(x.shape[1])] + list(self.columns)
        cols = [np.asarray(v, dtype=float).reshape(-1) for v in self.columns.values()]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in range(x.shape[0]):
            w.writerow([repr(float(v)) for v in x[r]] + [repr(float(c[r])) for c in cols])
        return buf.getvalue()


@dataclass
class Report:
    task: str
    scenario: dict
    seed: int
    mode: str = "analytic"
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timing: float | None = None

    def check(self, name: str, value, tolerance: float, relation: str = "<=") -> Check:
        c = Check(name, float(value), float(tolerance), relation)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self, table_files: dict | None = None) -> dict:
        out = {
            "version": REPORT_VERSION,
            "task": self.task,
            "mode": self.mode,
            "seed": self.seed,
            "scenario": self.scenario,
            "summary": self.summary,
            "checks": [c.to_json() for c in self.checks],
            "passed": self.passed,
            "warnings": list(self.warnings),
            "tables": table_files if table_files is not None else sorted(self.tables),
        }
        if self.timing is not None:
            out["timing"] = {"seconds": self.timing}
        return clean(out)


def clean(obj):
    """JSON-safe copy: numpy scalars/arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write(reports: list[Report], out_dir: str) -> str:
    """Write report.json and the CSV tables; returns the report path."""
    os.makedirs(out_dir, exist_ok=True)
    docs = []
    single = len(reports) == 1
    for i, rep in enumerate(reports):
        files = {}
        for name in sorted(rep.tables):
            fname = f"{name}.csv" if single else f"{i:02d}-{rep.task}-{name}.csv"
            with open(os.path.join(out_dir, fname), "w", newline="") as fh:
                fh.write(rep.tables[name].csv())
            files[name] = fname
        docs.append(rep.to_json(files))
    doc = docs[0] if single else {"version": REPORT_VERSION, "reports": docs,
                                  "passed": all(d["passed"] for d in docs)}
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        fh.write(dumps(doc))
    return path


def render_text(rep: Report) -> str:
    lines = [f"task {rep.task} ({rep.mode}), seed {rep.seed}: {'PASS' if rep.passed else 'FAIL'}"]
    for c in rep.checks:
        lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.value:.3e} "
                     f"{c.relation} {c.tolerance:.1e}")
    for w in rep.warnings:
        lines.append(f"  warning: {w}")
    return "\n".join(lines)
