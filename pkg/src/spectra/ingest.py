"""Loading reference logs into an ObservationSet.

A log is header-bearing delimited text (comma by default, tab or
whitespace accepted) or JSON lines, one row per (trace, step).  The
:class:`LogSchema` names the columns, the per-feature affine transform, the
lag expansion and how raw outputs map to the finite alphabet.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import ObservationSet, OutputAlphabet, ReferenceData

log = logging.getLogger(__name__)

SIGN = "sign"


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LogSchema:
    feature_columns: tuple[str, ...]
    output_column: str
    trace_column: Optional[str] = None
    step_column: Optional[str] = None
    # one reference per file (named after the file stem) unless set
    reference_column: Optional[str] = None
    history: int = 1
    history_columns: tuple[str, ...] = ()
    # column -> (scale, offset); x' = (x + offset) * scale
    transforms: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    # display names used for features, e.g. {"buffer": "BS"}
    aliases: Mapping[str, str] = field(default_factory=dict)
    output_name: Optional[str] = None
    # explicit label list, or "sign" for a continuous output
    output: object = SIGN
    sign_deadband: float = 0.0
    delimiter: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        object.__setattr__(self, "history_columns", tuple(self.history_columns))
        object.__setattr__(self, "transforms", {k: (float(v[0]), float(v[1])) for k, v in dict(self.transforms).items()})
        object.__setattr__(self, "aliases", dict(self.aliases))
        if not self.feature_columns:
            raise ValueError("schema needs at least one feature column")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            raise ValueError("duplicate feature columns")
        if int(self.history) != self.history or self.history < 1:
            raise ValueError(f"history must be a positive integer, got {self.history}")
        for col in self.history_columns:
            if col not in self.feature_columns:
                raise ValueError(f"history column {col!r} is not a feature column")
        for col, (scale, offset) in self.transforms.items():
            if col not in self.feature_columns:
                raise ValueError(f"transform for unknown feature column {col!r}")
            if scale == 0 or not math.isfinite(scale) or not math.isfinite(offset):
                raise ValueError(f"invalid transform for {col!r}: scale={scale} offset={offset}")
        if self.output != SIGN:
            object.__setattr__(self, "output", tuple(str(v) for v in self.output))
        if self.sign_deadband < 0:
            raise ValueError("sign_deadband must be non-negative")

    @property
    def alphabet(self) -> OutputAlphabet:
        return OutputAlphabet.sign() if self.output == SIGN else OutputAlphabet(self.output)

    def with_history(self, history: int) -> "LogSchema":
        return replace(self, history=history)

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Names of the windowed feature vector: lagged columns expand to ``name[-1] .. name[-h]``."""
        names = []
        for col in self.feature_columns:
            alias = self.aliases.get(col, col)
            if col in self.history_columns:
                names.extend(f"{alias}[-{j}]" for j in range(1, self.history + 1))
            else:
                names.append(alias)
        return tuple(names)

    @property
    def feature_transforms(self) -> tuple[tuple[float, float], ...]:
        out = []
        for col in self.feature_columns:
            t = self.transforms.get(col, (1.0, 0.0))
            out.extend([t] * (self.history if col in self.history_columns else 1))
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "feature_columns": list(self.feature_columns),
            "output_column": self.output_column,
            "trace_column": self.trace_column,
            "step_column": self.step_column,
            "reference_column": self.reference_column,
            "history": self.history,
            "history_columns": list(self.history_columns),
            "transforms": {k: list(v) for k, v in self.transforms.items()},
            "aliases": dict(self.aliases),
            "output_name": self.output_name,
            "output": self.output if self.output == SIGN else list(self.output),
            "sign_deadband": self.sign_deadband,
            "delimiter": self.delimiter,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LogSchema":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "LogSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def discretize_sign(value: float, deadband: float = 0.0) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot take the sign of {value!r}")
    if value > deadband:
        return "+"
    if value < -deadband:
        return "-"
    return "0"


def apply_affine(features: np.ndarray, transforms: Sequence[tuple[float, float]]) -> np.ndarray:
    """Per-column ``(x + offset) * scale``."""
    x = np.asarray(features, dtype=np.float64)
    scale = np.array([t[0] for t in transforms])
    offset = np.array([t[1] for t in transforms])
    return (x + offset) * scale


def invert_affine(features: np.ndarray, transforms: Sequence[tuple[float, float]]) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    scale = np.array([t[0] for t in transforms])
    offset = np.array([t[1] for t in transforms])
    return x / scale - offset


def window_history(rows: np.ndarray, lagged: Sequence[bool], history: int) -> np.ndarray:
    """Expand one trace's raw feature rows into lagged feature vectors.

    ``rows`` is ``(T, c)`` in step order; ``lagged[i]`` says whether column
    ``i`` expands into ``history`` lags.  Row ``t`` (for ``t >= history - 1``)
    yields a vector whose lag-``j`` entry is the column value at row
    ``t - j + 1``; other columns take their row-``t`` value.  A trace shorter
    than ``history`` yields no vectors.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("rows must be 2-D")
    T = rows.shape[0]
    n = max(0, T - history + 1)
    width = sum(history if lag else 1 for lag in lagged)
    out = np.empty((n, width))
    if n == 0:
        return out
    t = np.arange(history - 1, T)
    col = 0
    for i, lag in enumerate(lagged):
        if lag:
            for j in range(1, history + 1):
                out[:, col] = rows[t - j + 1, i]
                col += 1
        else:
            out[:, col] = rows[t, i]
            col += 1
    return out


def _read_rows(path: Path, delimiter: Optional[str]) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Return the header and (line number, cells) pairs."""
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".jsonl", ".ndjson"):
        header: list[str] = []
        records = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            for key in obj:
                if key not in header:
                    header.append(key)
            records.append((lineno, obj))
        rows = [(n, ["" if obj.get(h) is None else str(obj.get(h)) for h in header]) for n, obj in records]
        return header, rows
    lines = text.splitlines()
    if not lines:
        raise LogFormatError(f"{path}: empty file, a header row is required")
    if delimiter is None:
        first = lines[0]
        delimiter = "\t" if "\t" in first else ("," if "," in first else " ")
    if delimiter == " ":
        split = [line.split() for line in lines]
    else:
        split = list(csv.reader(lines, delimiter=delimiter))
    header = [h.strip() for h in split[0]]
    rows = [(n, [c.strip() for c in cells]) for n, cells in enumerate(split[1:], start=2) if cells]
    return header, rows


def _column(header: list[str], name: str, path: Path) -> int:
    try:
        return header.index(name)
    except ValueError:
        raise LogFormatError(f"{path}: missing column {name!r} (header: {header})") from None


def _parse_number(cell: str, path: Path, lineno: int, column: str) -> float:
    if cell == "":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise LogFormatError(f"{path}:{lineno}: column {column!r}: unparsable number {cell!r}") from None


def _label_lookup(alphabet: OutputAlphabet) -> tuple[dict, dict]:
    lookup: dict = {name: i for i, name in enumerate(alphabet.labels)}
    numeric = {}
    for i, name in enumerate(alphabet.labels):
        try:
            numeric[float(name)] = i
        except ValueError:
            pass
    return lookup, numeric


@dataclass
class LoadStats:
    rows: int = 0
    vectors: int = 0
    dropped_nonfinite: int = 0
    dropped_missing_output: int = 0
    short_traces: int = 0


def load_logs(
    paths: Iterable,
    schema: LogSchema,
    stats: Optional[LoadStats] = None,
    allow_empty: bool = False,
) -> ObservationSet:
    """Read reference logs and build the windowed, transformed ObservationSet.

    Files are processed in sorted path order.  Within a file, traces keep
    their order of first appearance and rows are sorted by the step column
    when one is configured.
    """
    stats = stats if stats is not None else LoadStats()
    paths = sorted(Path(p) for p in paths)
    alphabet = schema.alphabet
    exact, numeric = _label_lookup(alphabet)
    lagged = [c in schema.history_columns for c in schema.feature_columns]
    transforms = schema.feature_transforms
    per_ref: dict[str, dict[str, list]] = {}

    def output_label(cell: str, path: Path, lineno: int) -> int:
        if cell == "":
            return -1
        if schema.output == SIGN:
            value = _parse_number(cell, path, lineno, schema.output_column)
            if not math.isfinite(value):
                return -1
            return alphabet.index(discretize_sign(value, schema.sign_deadband))
        if cell in exact:
            return exact[cell]
        try:
            value = float(cell)
        except ValueError:
            raise LogFormatError(f"{path}:{lineno}: column {schema.output_column!r}: unknown label {cell!r}") from None
        if value not in numeric:
            raise LogFormatError(f"{path}:{lineno}: column {schema.output_column!r}: unknown label {cell!r}")
        return numeric[value]

    for path in paths:
        if not path.exists():
            raise FileNotFoundError(f"{path}: no such log file")
        header, rows = _read_rows(path, schema.delimiter)
        feat_idx = [_column(header, c, path) for c in schema.feature_columns]
        out_idx = _column(header, schema.output_column, path)
        trace_idx = _column(header, schema.trace_column, path) if schema.trace_column else None
        step_idx = _column(header, schema.step_column, path) if schema.step_column else None
        ref_idx = _column(header, schema.reference_column, path) if schema.reference_column else None
        groups: dict[tuple[str, str], list] = {}
        for lineno, cells in rows:
            if len(cells) < len(header):
                raise LogFormatError(f"{path}:{lineno}: expected {len(header)} cells, found {len(cells)}")
            stats.rows += 1
            ref = cells[ref_idx] if ref_idx is not None else path.stem
            trace = cells[trace_idx] if trace_idx is not None else path.stem
            step = _parse_number(cells[step_idx], path, lineno, schema.step_column) if step_idx is not None else len(groups.get((ref, trace), ()))
            values = [_parse_number(cells[i], path, lineno, c) for i, c in zip(feat_idx, schema.feature_columns)]
            label = output_label(cells[out_idx], path, lineno)
            groups.setdefault((ref, trace), []).append((step, values, label))
        for (ref, trace), items in groups.items():
            if step_idx is not None:
                items.sort(key=lambda item: item[0])
            raw = np.array([item[1] for item in items], dtype=np.float64).reshape(len(items), len(feat_idx))
            vectors = window_history(raw, lagged, schema.history)
            if len(vectors) == 0:
                stats.short_traces += 1
                continue
            labels = np.array([item[2] for item in items[schema.history - 1:]], dtype=np.int64)
            steps = np.array([int(item[0]) for item in items[schema.history - 1:]], dtype=np.int64)
            with np.errstate(all="ignore"):
                vectors = apply_affine(vectors, transforms)
            finite = np.isfinite(vectors).all(axis=1)
            has_label = labels >= 0
            stats.dropped_nonfinite += int((~finite).sum())
            stats.dropped_missing_output += int((finite & ~has_label).sum())
            keep = finite & has_label
            bucket = per_ref.setdefault(ref, {"features": [], "outputs": [], "traces": [], "steps": []})
            bucket["features"].append(vectors[keep])
            bucket["outputs"].append(labels[keep])
            bucket["traces"].extend([trace] * int(keep.sum()))
            bucket["steps"].append(steps[keep])

    if stats.dropped_missing_output:
        log.warning("dropped %d rows with a missing output label", stats.dropped_missing_output)
    if stats.dropped_nonfinite:
        log.info("dropped %d vectors with non-finite features", stats.dropped_nonfinite)
    d = len(schema.feature_names)
    references = []
    for name, bucket in per_ref.items():
        features = np.concatenate(bucket["features"]) if bucket["features"] else np.zeros((0, d))
        references.append(
            ReferenceData(
                name,
                features.reshape(-1, d),
                np.concatenate(bucket["outputs"]) if bucket["outputs"] else np.zeros(0, dtype=np.int64),
                tuple(bucket["traces"]),
                np.concatenate(bucket["steps"]) if bucket["steps"] else np.zeros(0, dtype=np.int64),
            )
        )
    stats.vectors = sum(len(r) for r in references)
    if stats.vectors == 0:
        if not allow_empty:
            raise LogFormatError("no usable observations in " + ", ".join(str(p) for p in paths))
        if not references:
            names = dict.fromkeys(p.stem for p in paths) or {"empty": None}
            references = [ReferenceData(name, np.zeros((0, d)), np.zeros(0, dtype=np.int64)) for name in names]
    output_name = schema.output_name or schema.aliases.get(schema.output_column, schema.output_column)
    return ObservationSet(tuple(references), alphabet, schema.feature_names, output_name, transforms)
