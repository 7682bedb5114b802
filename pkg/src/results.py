"""
Result persistence: config hashing and report emission.
"""

import csv
import hashlib
import io
import json
import logging
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from pathlib import Path
from typing import Any, Protocol

import numpy as np
from tenacity import (
    RetryError,
    retry,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from src import __version__
from src.errors import ConfigError, OutputError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


class Report(Protocol):
    def to_dict(self) -> dict[str, Any]: ...


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(obj: Any) -> str:
    """Compact JSON with sorted keys; equal mappings give equal strings."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def config_hash(config: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON of a configuration mapping."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


@dataclass
class Provenance:
    """Metadata embedded in every emitted file."""

    config_hash: str
    seeds: list[int] = dataclass_field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict[str, Any]:
        return {"config_hash": self.config_hash, "seeds": list(self.seeds), "version": self.version}


@retry(
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.1, min=0.1, max=1.0),
    retry=retry_if_exception_type(OSError),
    reraise=True,
)
def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = path.with_name(path.name + ".tmp")
    with open(temp_file, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(temp_file, path)


def _write(path: Path, text: str) -> Path:
    try:
        _write_atomic(path, text)
    except (OSError, RetryError) as exc:
        raise OutputError(f"Could not write {path}: {exc}", stage="output", path=str(path)) from exc
    logger.debug(f"Result file written: {path}")
    return path


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_csv(
    columns: Sequence[str], rows: Sequence[Sequence[Any]], provenance: Provenance
) -> str:
    """CSV text: a ``# config_hash=`` comment line, the header, then the rows."""
    buffer = io.StringIO()
    buffer.write(f"# config_hash={provenance.config_hash}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ConfigError(f"Row of length {len(row)} for {len(columns)} columns")
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def render_json(report: Report, provenance: Provenance) -> str:
    payload = {"provenance": provenance.to_dict(), "report": report.to_dict()}
    return json.dumps(payload, sort_keys=True, indent=2, default=_plain) + "\n"


def emit_results(
    report: Report,
    out_dir: str | Path,
    fmt: str,
    provenance: Provenance,
    name: str = "report",
) -> list[Path]:
    """
    Write a report as JSON or as CSV plus a ``<name>.columns.txt`` sidecar.

    Tabular reports expose ``columns()`` and ``rows()``. Emitting the same
    report twice produces byte-identical files.

    Raises:
        ConfigError: Unknown format or CSV requested for a non-tabular report
        OutputError: Path not writable after retries
    """
    if fmt not in FORMATS:
        raise ConfigError(f"Unknown output format '{fmt}', expected one of {FORMATS}")
    out = Path(out_dir)
    if fmt == "json":
        return [_write(out / f"{name}.json", render_json(report, provenance))]

    columns_fn = getattr(report, "columns", None)
    rows_fn = getattr(report, "rows", None)
    if columns_fn is None or rows_fn is None:
        raise ConfigError(f"{type(report).__name__} has no tabular form; use json")
    columns = list(columns_fn())
    descriptions = getattr(report, "column_descriptions", lambda: {})()
    sidecar = "".join(f"{c}: {descriptions.get(c, '')}\n" for c in columns)
    return [
        _write(out / f"{name}.csv", render_csv(columns, rows_fn(), provenance)),
        _write(out / f"{name}.columns.txt", sidecar),
    ]
