"""Result files: delimited text with a commented metadata header, plus fit JSON"""

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .. import __version__
from ..config import DISPLAY_HINTS, SCHEMA_VERSION
from ..core.errors import ResultFileError
from ..core.fitting import FitResult

MAGIC = "# spincast result"
FLOAT_FORMAT = "%.17g"
_COLUMN = re.compile(r"^\s*(?P<name>[^\[\]]+?)\s*\[(?P<units>[^\[\]]*)\]\s*$")

# Header keys excluded from payload comparisons
VOLATILE_KEYS = {"timestamp", "config_source"}


@dataclass
class ResultFile:
    """Metadata plus named, unit-carrying columns"""

    metadata: Dict[str, object]
    data: pd.DataFrame
    units: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in self.data.columns if not self.units.get(c)]
        if missing:
            raise ResultFileError(f"columns without units: {missing}")

    @property
    def columns(self) -> List[str]:
        return list(self.data.columns)

    @property
    def recipe(self):
        return self.metadata.get("recipe")

    def column(self, name: str) -> np.ndarray:
        return self.data[name].to_numpy(dtype=float)

    def header_names(self) -> List[str]:
        return [f"{c} [{self.units[c]}]" for c in self.data.columns]

    def payload(self) -> str:
        """Header (minus volatile keys) and rows as written to disk"""
        lines = _metadata_lines({k: v for k, v in self.metadata.items() if k not in VOLATILE_KEYS})
        return "\n".join(lines + [_format_rows(self)])


def from_experiment(result, recipe: str, config_hash: str, config_source: str = "") -> ResultFile:
    """ResultFile from a recipe's ExperimentResult"""
    frame = result.to_frame()
    names, units = {}, {}
    for header in frame.columns:
        match = _COLUMN.match(header)
        names[header] = match.group("name")
        units[match.group("name")] = match.group("units")
    frame = frame.rename(columns=names)

    hints = {c: DISPLAY_HINTS[base] for c in frame.columns for base in DISPLAY_HINTS if c.startswith(base)}
    metadata = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "recipe": recipe,
        "config_hash": config_hash,
        "config_source": config_source,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "display": hints,
        "summary": result.summary,
        "fits": {name: fit.as_dict() for name, fit in result.fits.items()},
    }
    return ResultFile(metadata, frame.reset_index(drop=True), units)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def _encode(value) -> str:
    return json.dumps(value, sort_keys=True, default=_json_default, allow_nan=True)


def _metadata_lines(metadata) -> List[str]:
    return [MAGIC] + [f"# {key}: {_encode(value)}" for key, value in metadata.items()]


def _format_rows(result: ResultFile) -> str:
    header = ",".join(result.header_names())
    body = result.data.to_csv(index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return header + "\n" + body


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False, newline=""
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def result_text(result: ResultFile) -> str:
    """Full file content"""
    return "\n".join(_metadata_lines(result.metadata)) + "\n" + _format_rows(result)


def write_result(result: ResultFile, path) -> Path:
    """Write atomically (temp file in the target directory, then rename)"""
    path = Path(path)
    _atomic_write(path, result_text(result))
    return path


def _decode(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def read_result(path) -> ResultFile:
    """Parse a result file; malformed content raises ResultFileError with its line"""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ResultFileError(f"cannot read {path}: {exc}") from exc
    return parse_result_lines(lines)


def parse_result_lines(lines: List[str]) -> ResultFile:
    if not lines or lines[0].strip() != MAGIC:
        raise ResultFileError(f"missing '{MAGIC}' marker", line=1)

    metadata = {}
    index = 1
    while index < len(lines) and lines[index].startswith("#"):
        entry = lines[index][1:].strip()
        if ":" not in entry:
            raise ResultFileError("header entries must be 'key: value'", line=index + 1)
        key, value = entry.split(":", 1)
        metadata[key.strip()] = _decode(value.strip())
        index += 1

    if index >= len(lines):
        raise ResultFileError("missing column header", line=index + 1)
    names, units = [], {}
    for header in lines[index].split(","):
        match = _COLUMN.match(header)
        if not match:
            raise ResultFileError(f"column {header!r} must look like 'name [units]'", line=index + 1)
        names.append(match.group("name"))
        units[match.group("name")] = match.group("units")
    if len(set(names)) != len(names):
        raise ResultFileError("duplicate column names", line=index + 1)

    rows = []
    for number, line in enumerate(lines[index + 1 :], start=index + 2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(names):
            raise ResultFileError(f"expected {len(names)} values, got {len(cells)}", line=number)
        try:
            rows.append([float(cell) if cell else np.nan for cell in cells])
        except ValueError as exc:
            raise ResultFileError(f"non-numeric value: {exc}", line=number) from exc

    data = pd.DataFrame(np.array(rows, dtype=float).reshape(len(rows), len(names)), columns=names)
    return ResultFile(metadata, data, units)


def write_fit_json(fit: FitResult, path, recipe: Optional[str] = None, config_hash: Optional[str] = None) -> Path:
    """Single-object JSON form of a fit result"""
    document = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "names": list(fit.names),
        **fit.as_dict(),
    }
    if recipe:
        document["recipe"] = recipe
    if config_hash:
        document["config_hash"] = config_hash
    path = Path(path)
    _atomic_write(path, json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def read_fit_json(path) -> FitResult:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ResultFileError(f"invalid fit JSON: {exc.msg}", line=exc.lineno) from exc

    try:
        params = document["params"]
        names = tuple(document.get("names", params))
        return FitResult(
            model=document["model"],
            names=names,
            values=np.array([params[n]["value"] for n in names], dtype=float),
            errors=np.array([params[n]["error"] for n in names], dtype=float),
            covariance=np.array(document["covariance"], dtype=float),
            residual_norm=float(document["residual_norm"]),
            converged=bool(document["converged"]),
            iterations=int(document["iterations"]),
            message=document.get("message", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ResultFileError(f"fit JSON missing field {exc}") from exc
