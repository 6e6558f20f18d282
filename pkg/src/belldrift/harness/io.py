"""Counts, calibration and run-record files.

Counts files hold one record per (context, bin)::

    experiment_id,context,bin,n00,n01,n10,n11,shots
    run,xy,1,250,262,249,263,1024

The JSON form is ``{"records": [{"experiment_id", "context", "bin",
"counts": [n00, n01, n10, n11], "shots"}], "calibration": {...}}`` where the
optional ``calibration`` maps a label to a 4x4 row-major matrix.

Calibration files are a bare 4x4 row-major numeric CSV table; lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..contexts import OUTCOMES, normalize_context
from ..errors import SchemaError, ValidationError
from ..mitigation import AssignmentMatrix
from ..stats import BinnedCounts

COUNT_FIELDS = ["experiment_id", "context", "bin"] + [f"n{o}" for o in OUTCOMES] + ["shots"]


@dataclass
class IngestedCounts:
    counts: BinnedCounts
    experiment_id: str
    calibration: dict[str, AssignmentMatrix] = field(default_factory=dict)


def counts_to_csv(binned: BinnedCounts, experiment_id: str = "run") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNT_FIELDS)
    for r in binned.to_records(experiment_id):
        w.writerow([r["experiment_id"], r["context"], r["bin"], *r["counts"], r["shots"]])
    return buf.getvalue()


def write_counts(binned: BinnedCounts, path, experiment_id: str = "run", calibration=None) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".json":
        doc = {"records": binned.to_records(experiment_id)}
        if calibration:
            doc["calibration"] = {k: np.asarray(getattr(m, "matrix", m)).tolist() for k, m in calibration.items()}
        path.write_text(json.dumps(doc, indent=1) + "\n")
    else:
        path.write_text(counts_to_csv(binned, experiment_id))
    return path


def _as_int(value, what: str, line: int) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{what} is not a number: {value!r}", line=line) from None
    if not f.is_integer() or f < 0:
        raise SchemaError(f"{what} must be a non-negative integer, got {value!r}", line=line)
    return int(f)


def _assemble(records: list[tuple[int, dict]], experiment_id: str | None) -> tuple[BinnedCounts, str]:
    if not records:
        raise SchemaError("counts file contains no records")
    ids = {r.get("experiment_id", "") for _, r in records}
    if experiment_id is None:
        if len(ids) > 1:
            raise SchemaError(f"file holds several experiments {sorted(ids)}; pick one with experiment_id")
        experiment_id = next(iter(ids))
    cells: dict[str, dict[int, list[int]]] = {}
    shots_seen = None
    for line, rec in records:
        if rec.get("experiment_id", "") != experiment_id:
            continue
        try:
            ctx = normalize_context(rec.get("context", ""))
        except ValidationError as exc:
            raise SchemaError(str(exc), line=line) from None
        b = _as_int(rec.get("bin"), "bin", line)
        if b < 1:
            raise SchemaError("bin labels are 1-based", line=line)
        raw = rec.get("counts")
        if not isinstance(raw, (list, tuple)) or len(raw) != 4:
            raise SchemaError("counts must be four integers in the order 00, 01, 10, 11", line=line)
        counts = [_as_int(v, f"count n{o}", line) for v, o in zip(raw, OUTCOMES)]
        shots = _as_int(rec.get("shots"), "shots", line)
        if sum(counts) != shots:
            raise SchemaError(
                f"({ctx}, bin {b}) counts sum to {sum(counts)} but shots = {shots}", line=line, record=(ctx, b)
            )
        if shots_seen is None:
            shots_seen = shots
        elif shots != shots_seen:
            raise SchemaError(
                f"({ctx}, bin {b}) has {shots} shots; all bins must share {shots_seen}", line=line, record=(ctx, b)
            )
        if b in cells.setdefault(ctx, {}):
            raise SchemaError(f"duplicate record for ({ctx}, bin {b})", line=line, record=(ctx, b))
        cells[ctx][b] = counts
    if not cells:
        raise SchemaError(f"no records for experiment {experiment_id!r}")
    return BinnedCounts.from_cells(cells, shots_seen), experiment_id


def read_counts(path, experiment_id: str | None = None) -> IngestedCounts:
    """Load and validate a counts file (``.csv`` or ``.json``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None
    calibration = {}
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        recs = doc.get("records") if isinstance(doc, dict) else doc
        if not isinstance(recs, list):
            raise SchemaError("JSON counts file needs a 'records' list")
        records = []
        for i, r in enumerate(recs):
            if not isinstance(r, dict):
                raise SchemaError("each record must be an object", record=i)
            records.append((i, r))
        for label, m in (doc.get("calibration") or {}).items() if isinstance(doc, dict) else ():
            calibration[label] = _matrix_from_rows(m, f"calibration {label!r}")
        # JSON diagnostics use the record index in place of a line number
        try:
            binned, eid = _assemble(records, experiment_id)
        except SchemaError as exc:
            raise SchemaError(str(exc).replace("(line", "(record index"), record=exc.record) from None
        return IngestedCounts(binned, eid, calibration)

    reader = csv.DictReader(io.StringIO(text))
    missing = [f for f in COUNT_FIELDS if f not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"counts CSV is missing column(s) {missing}", line=1)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if None in row or any(row.get(f) in (None, "") for f in COUNT_FIELDS):
            raise SchemaError("malformed row (wrong number of fields)", line=lineno)
        records.append(
            (
                lineno,
                {
                    "experiment_id": row["experiment_id"],
                    "context": row["context"],
                    "bin": row["bin"],
                    "counts": [row[f"n{o}"] for o in OUTCOMES],
                    "shots": row["shots"],
                },
            )
        )
    binned, eid = _assemble(records, experiment_id)
    return IngestedCounts(binned, eid, calibration)


def _matrix_from_rows(rows, what: str, label: str = "") -> AssignmentMatrix:
    try:
        m = np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{what}: entries must be numeric") from None
    if m.shape != (4, 4):
        raise SchemaError(f"{what}: expected a 4x4 table, got shape {m.shape}")
    try:
        return AssignmentMatrix(m, label=label)
    except ValidationError as exc:
        raise SchemaError(f"{what}: {exc}") from None


def read_calibration(path) -> AssignmentMatrix:
    """Load a 4x4 row-major assignment matrix and check column-stochasticity."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = [p for p in next(csv.reader([s])) if p.strip() != ""]
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise SchemaError(f"non-numeric entry in {path.name}", line=lineno) from None
        if len(parts) != 4:
            raise SchemaError(f"expected 4 columns, got {len(parts)}", line=lineno)
    return _matrix_from_rows(rows, str(path.name), label=path.stem)


def calibration_to_csv(m: AssignmentMatrix) -> str:
    lines = ["# M[x][y] = P(meas = x | prep = y); rows x, columns y in order 00,01,10,11"]
    for row in m.matrix:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_calibration(m: AssignmentMatrix, path) -> Path:
    path = Path(path)
    path.write_text(calibration_to_csv(m))
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from None


def counts_from_record(record: dict) -> BinnedCounts:
    """Rebuild the raw counts stored in a run-record dictionary."""
    recs = [(i, r) for i, r in enumerate(record["counts"])]
    return _assemble(recs, None)[0]
