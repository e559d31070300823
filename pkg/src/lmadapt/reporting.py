"""Protocol reports and their on-disk formats.

Every experiment run produces a `ProtocolReport`: a summary block, one row
per scored sentence, and the full per-token record stream. Reports
serialize to JSON (records to a flat TSV side file) against the schemas
below; non-finite numbers become nulls with a `diverged` flag so the JSON
stays standard. All writers are deterministic given identical inputs, which
is what makes byte-identical re-runs possible.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import jsonschema

from .analysis import RECORD_COLUMNS, SurprisalRecord
from .validation import DataInvariantError


@dataclass
class ProtocolReport:
    """Outcome of one protocol run: summary numbers plus full provenance."""

    protocol: str
    config: dict
    seed: int | None
    summary: dict
    sentences: list[dict] = field(default_factory=list)
    records: list[SurprisalRecord] = field(default_factory=list, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "config": json_safe(self.config),
            "seed": self.seed,
            "summary": json_safe(self.summary),
            "sentences": json_safe(self.sentences),
            "n_records": len(self.records),
        }


def json_safe(value):
    """Recursively replace non-finite floats with None for strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


REPORT_SCHEMA = {
    "type": "object",
    "required": ["protocol", "config", "seed", "summary", "sentences", "n_records"],
    "properties": {
        "protocol": {"type": "string"},
        "config": {"type": "object"},
        "seed": {"type": ["integer", "null"]},
        "summary": {"type": "object"},
        "sentences": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["phase", "text_id", "sentence_index", "n_targets", "loss", "diverged"],
                "properties": {
                    "phase": {"type": "string"},
                    "text_id": {"type": "string"},
                    "sentence_index": {"type": "integer"},
                    "n_targets": {"type": "integer"},
                    "loss": {"type": ["number", "null"]},
                    "diverged": {"type": "boolean"},
                },
            },
        },
        "n_records": {"type": "integer"},
    },
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["command", "tool_version", "seed", "config", "input_fingerprints"],
    "properties": {
        "command": {"type": "string"},
        "tool_version": {"type": "string"},
        "seed": {"type": "integer"},
        "config": {"type": "object"},
        "input_fingerprints": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}


def validate_report_dict(data: dict) -> None:
    jsonschema.validate(data, REPORT_SCHEMA)


def validate_run_config_dict(data: dict) -> None:
    jsonschema.validate(data, RUN_CONFIG_SCHEMA)


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_report(report: ProtocolReport, directory, stem: str) -> tuple[Path, Path]:
    """Write `<stem>.json` and `<stem>_records.tsv` into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / f"{stem}.json"
    data = report.to_json_dict()
    validate_report_dict(data)
    write_json(data, json_path)
    tsv_path = directory / f"{stem}_records.tsv"
    write_records_tsv(report.records, tsv_path)
    return json_path, tsv_path


# ---------------------------------------------------------------------------
# Record TSV format
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_tsv(records: Sequence[SurprisalRecord], path) -> None:
    lines = ["\t".join(RECORD_COLUMNS)]
    for rec in records:
        lines.append("\t".join(_format_cell(getattr(rec, col)) for col in RECORD_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_INT_FIELDS = {"sentence_index", "token_index", "word_length", "sentence_position"}
_OPT_INT_FIELDS = {"pair_id", "region_index", "list_id", "trial_index"}
_BOOL_FIELDS = {"is_unk", "is_eos", "diverged"}
_FLOAT_FIELDS = {"surprisal"}
_OPT_STR_FIELDS = {"condition"}


def read_records_tsv(path) -> list[SurprisalRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t") != RECORD_COLUMNS:
        raise DataInvariantError(f"{path}: missing or wrong records TSV header")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(RECORD_COLUMNS):
            raise DataInvariantError(f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} fields, got {len(cells)}")
        kwargs = {}
        for col, cell in zip(RECORD_COLUMNS, cells):
            if col in _INT_FIELDS:
                kwargs[col] = int(cell)
            elif col in _OPT_INT_FIELDS:
                kwargs[col] = int(cell) if cell else None
            elif col in _BOOL_FIELDS:
                kwargs[col] = cell == "1"
            elif col in _FLOAT_FIELDS:
                kwargs[col] = float(cell)
            elif col in _OPT_STR_FIELDS:
                kwargs[col] = cell if cell else None
            else:
                kwargs[col] = cell
        records.append(SurprisalRecord(**kwargs))
    return records


# ---------------------------------------------------------------------------
# Generic tables and fingerprints
# ---------------------------------------------------------------------------


def write_table(rows: Sequence[dict], columns: Sequence[str], path, sep: str = "\t") -> None:
    """Write dict rows as a delimited table with a fixed header order."""
    lines = [sep.join(columns)]
    for row in rows:
        lines.append(sep.join(_format_cell(row.get(col)) for col in columns))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def file_fingerprint(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()
