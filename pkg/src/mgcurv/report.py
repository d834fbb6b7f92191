"""JSON reports and CSV series with deterministic formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .curvature import VerificationReport

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12g"

SUMMARY_COLUMNS = (
    "suite", "condition", "passed", "cases", "violations",
    "worst_residual", "tolerance", "space", "time", "solver",
)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FORMAT % v
    return str(v)


def jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else format_value(v)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def report_record(rep: VerificationReport) -> dict:
    return {
        "condition": rep.condition,
        "passed": rep.passed,
        "cases": len(rep.cases),
        "violations": rep.violations,
        "worst_residual": rep.worst_residual,
        "tolerance": rep.tolerance,
        "tolerance_terms": dict(rep.tolerance_terms),
        "witness": rep.witness,
        "notes": dict(rep.notes),
    }


def summary_rows(suites: Mapping[str, Sequence[VerificationReport]]) -> list[dict]:
    rows = []
    for name, reps in suites.items():
        for rep in reps:
            terms = rep.tolerance_terms
            rows.append({
                "suite": name,
                "condition": rep.condition,
                "passed": rep.passed,
                "cases": len(rep.cases),
                "violations": rep.violations,
                "worst_residual": rep.worst_residual,
                "tolerance": rep.tolerance,
                "space": terms.get("space", 0.0),
                "time": terms.get("time", 0.0),
                "solver": terms.get("solver", 0.0),
            })
    return rows


def csv_text(rows: Iterable[Mapping], columns: Sequence[str] | None = None) -> str:
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r[c]) if c in r else "" for c in columns])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Iterable[Mapping], columns: Sequence[str] | None = None) -> None:
    Path(path).write_text(csv_text(rows, columns), encoding="utf-8")


def write_json(path: str | Path, payload: Mapping) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **jsonable(payload)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
