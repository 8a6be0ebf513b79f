"""Result-table serialisation: CSV, JSON and per-series plot data.

Output is a pure function of the table, so identical runs give
byte-identical files.  Wall-clock columns are written only when asked for.
"""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Dict, List

from .errors import ConfigError, IOFailure, ParseFailure
from .harness import ResultRow, ResultTable

REPORT_FORMAT = "driftwatch-results"
REPORT_VERSION = 1
COLUMNS = ("approach", "scenario", "zeta", "param", "rate_kind", "rate", "trials")
TIMING_COLUMN = "mean_wall_time"

REPORT_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "notes", "rows"],
    "properties": {
        "format": {"const": REPORT_FORMAT},
        "version": {"const": REPORT_VERSION},
        "notes": {"type": "array", "items": {"type": "string"}},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(COLUMNS),
                "properties": {
                    "approach": {"type": "string"},
                    "scenario": {"type": "string"},
                    "zeta": {"type": "number"},
                    "param": {"type": "string"},
                    "rate_kind": {"enum": ["FPR", "FNR", "ACC"]},
                    "rate": {"type": "number", "minimum": 0, "maximum": 1},
                    "trials": {"type": "integer", "minimum": 0},
                    "mean_wall_time": {"type": "number", "minimum": 0},
                },
            },
        },
    },
}


def _row_dict(row: ResultRow, timing: bool) -> dict:
    d = {c: getattr(row, c) for c in COLUMNS}
    if timing:
        d[TIMING_COLUMN] = row.mean_wall_time
    return d


def table_to_json(table: ResultTable, include_timing: bool = False) -> str:
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "notes": list(table.notes),
        "rows": [_row_dict(r, include_timing) for r in table.rows],
    }
    return json.dumps(doc, indent=2) + "\n"


def table_to_csv(table: ResultTable, include_timing: bool = False) -> str:
    buf = io.StringIO()
    for note in table.notes:
        buf.write(f"# {note}\n")
    cols = list(COLUMNS) + ([TIMING_COLUMN] if include_timing else [])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in table.rows:
        d = _row_dict(r, include_timing)
        w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in cols])
    return buf.getvalue()


def plot_series(table: ResultTable) -> Dict[str, str]:
    """One ``zeta,rate`` CSV per (approach, drift scenario), keyed by file name."""
    series: Dict[tuple, List[ResultRow]] = {}
    for r in table.rows:
        if r.scenario in ("nodrift", "overall"):
            continue
        series.setdefault((r.approach, r.scenario, r.param), []).append(r)
    out = {}
    for (approach, scenario, param), rows in series.items():
        stem = "_".join(s for s in (approach, scenario, param) if s)
        stem = "".join(ch if ch.isalnum() or ch in "-_" else "-" for ch in stem)
        lines = [f"zeta,{rows[0].rate_kind}"]
        lines += [f"{r.zeta!r},{r.rate!r}" for r in sorted(rows, key=lambda r: r.zeta)]
        out[f"{stem}.csv"] = "\n".join(lines) + "\n"
    return out


def emit_report(table: ResultTable, out_dir, formats=("csv", "json", "plotdata"), stem: str = "results",
                include_timing: bool = False) -> List[Path]:
    """Write ``table`` into ``out_dir`` in each requested format; returns written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {out}: {exc}") from exc
    written = []

    def put(path: Path, text: str):
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IOFailure(f"cannot write {path}: {exc}") from exc
        written.append(path)

    for fmt in formats:
        if fmt == "csv":
            put(out / f"{stem}.csv", table_to_csv(table, include_timing))
        elif fmt == "json":
            put(out / f"{stem}.json", table_to_json(table, include_timing))
        elif fmt == "plotdata":
            plot_dir = out / f"{stem}_plotdata"
            plot_dir.mkdir(exist_ok=True)
            for name, text in sorted(plot_series(table).items()):
                put(plot_dir / name, text)
        else:
            raise ConfigError(f"unknown output format {fmt!r}")
    return written


def _row_from(d: dict) -> ResultRow:
    return ResultRow(
        approach=str(d["approach"]), scenario=str(d["scenario"]), zeta=float(d["zeta"]),
        rate_kind=str(d["rate_kind"]), rate=float(d["rate"]), trials=int(d["trials"]),
        mean_wall_time=float(d.get(TIMING_COLUMN, 0.0) or 0.0), param=str(d.get("param", "")),
    )


def load_report(path) -> ResultTable:
    """Read a table written by :func:`emit_report` (CSV or JSON, by extension)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".json":
        doc = json.loads(text)
        if doc.get("format") != REPORT_FORMAT:
            raise ParseFailure(0, 0, "not a driftwatch results file")
        return ResultTable([_row_from(r) for r in doc["rows"]], list(doc["notes"]))
    notes, body = [], []
    for line in text.splitlines():
        (notes.append(line[2:]) if line.startswith("# ") else body.append(line))
    rows = [_row_from(d) for d in csv.DictReader(body)]
    return ResultTable(rows, notes)


def validate_report_json(doc: dict) -> None:
    """Validate a parsed JSON report against :data:`REPORT_SCHEMA` (needs jsonschema)."""
    import jsonschema

    jsonschema.validate(doc, REPORT_SCHEMA)
