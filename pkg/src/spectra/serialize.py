"""Canonical JSON: sorted keys, 17-significant-digit floats, LF line endings."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .model import EvalReport, SpecificationSet


def format_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite number {value!r}")
    text = "%.17g" % value
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(int(obj))
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # scalar arrays stay on one line to keep spec files readable
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _encode(obj.item(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj: Any, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj: Any) -> None:
    Path(path).write_text(canonical_dumps(obj), encoding="utf-8", newline="\n")


def read_json(path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def dump_specification_set(spec_set: SpecificationSet, path) -> None:
    write_json(path, spec_set.to_dict())


def load_specification_set(path) -> SpecificationSet:
    return SpecificationSet.from_dict(read_json(path))


def dump_report(report: EvalReport, path) -> None:
    write_json(path, report.to_dict())


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(read_json(path))
