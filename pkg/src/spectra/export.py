"""Specification output: VNN-Lib property files, manifests and text listings.

A VNN-Lib file states the *negation* of one specification's postcondition
over its input box, so a verifier that finds a satisfying assignment has
found a counterexample.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .ingest import invert_affine
from .model import Specification, SpecificationSet
from .serialize import read_json, write_json

CLASSIFICATION = "classification"
REGRESSION_SIGN = "regression-sign"
MODES = (CLASSIFICATION, REGRESSION_SIGN)
DEFAULT_EPSILON = 1e-4


class ExportError(ValueError):
    pass


def format_number(value: float) -> str:
    """Positional decimal with 17 significant digits (trailing zeros trimmed)."""
    value = float(value)
    if not math.isfinite(value):
        raise ExportError(f"non-finite bound {value!r}")
    return np.format_float_positional(value, precision=17, unique=False, fractional=False, trim="0")


@dataclass(frozen=True)
class ModelInterfaceMap:
    """How specification features line up with a model's flat input vector."""

    input_count: int
    output_count: int
    feature_to_input: Mapping[str, tuple[int, ...]]
    fill_ranges: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        mapping = {}
        for name, idx in dict(self.feature_to_input).items():
            idx = (idx,) if isinstance(idx, int) else tuple(int(i) for i in idx)
            mapping[str(name)] = idx
        fills = {int(k): (float(v[0]), float(v[1])) for k, v in dict(self.fill_ranges).items()}
        object.__setattr__(self, "feature_to_input", mapping)
        object.__setattr__(self, "fill_ranges", fills)
        used = [i for idx in mapping.values() for i in idx]
        if len(set(used)) != len(used):
            raise ExportError("an input index is mapped to more than one feature")
        for i in used + list(fills):
            if not 0 <= i < self.input_count:
                raise ExportError(f"input index {i} outside 0..{self.input_count - 1}")
        for i, (lo, hi) in fills.items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ExportError(f"invalid fill range for input {i}: [{lo}, {hi}]")
        missing = [i for i in range(self.input_count) if i not in used and i not in fills]
        if missing:
            raise ExportError(f"inputs {missing[:8]} have neither a feature nor a fill range")
        if self.output_count < 1:
            raise ExportError("output_count must be positive")

    def check_features(self, names: Sequence[str]) -> None:
        unmapped = [n for n in names if n not in self.feature_to_input]
        if unmapped:
            raise ExportError(f"features without a model input: {unmapped}")

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "feature_to_input": {k: list(v) for k, v in self.feature_to_input.items()},
            "fill_ranges": {str(k): list(v) for k, v in sorted(self.fill_ranges.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelInterfaceMap":
        return cls(int(data["input_count"]), int(data["output_count"]), data["feature_to_input"], data.get("fill_ranges", {}))

    @classmethod
    def load(cls, path) -> "ModelInterfaceMap":
        return cls.from_dict(read_json(path))


def _input_bounds(spec: Specification, spec_set: SpecificationSet, mapping: ModelInterfaceMap) -> list[tuple[float, float]]:
    mapping.check_features(spec_set.feature_names)
    bounds: list[Optional[tuple[float, float]]] = [None] * mapping.input_count
    for i, name in enumerate(spec_set.feature_names):
        iv = spec.precondition[i]
        for j in mapping.feature_to_input[name]:
            if iv is not None:
                bounds[j] = iv
            elif j in mapping.fill_ranges:
                bounds[j] = mapping.fill_ranges[j]
            else:
                bounds[j] = (spec_set.grid.lower[i], spec_set.grid.upper[i])
    for j in range(mapping.input_count):
        if bounds[j] is None:
            bounds[j] = mapping.fill_ranges[j]
    return bounds


def _sign_regions(allowed_names: set[str], epsilon: float) -> list[tuple[Optional[float], Optional[float]]]:
    """Disallowed part of the real line as merged closed intervals (None = unbounded)."""
    pieces = [("-", None, -epsilon), ("0", -epsilon, epsilon), ("+", epsilon, None)]
    out: list[list] = []
    for name, lo, hi in pieces:
        if name in allowed_names:
            continue
        if out and out[-1][1] is not None and lo is not None and out[-1][1] == lo and out[-1][2]:
            out[-1][1] = hi
        else:
            out.append([lo, hi, True])
    return [(lo, hi) for lo, hi, _ in out]


def export_vnnlib(
    spec: Specification,
    spec_set: SpecificationSet,
    mapping: ModelInterfaceMap,
    mode: str = CLASSIFICATION,
    epsilon: float = DEFAULT_EPSILON,
    title: str = "",
) -> str:
    """VNN-Lib text whose satisfying assignments are violations of ``spec``."""
    if mode not in MODES:
        raise ExportError(f"unknown mode {mode!r}; expected one of {MODES}")
    alphabet = spec_set.alphabet
    disallowed = sorted(alphabet.full - spec.postcondition)
    if not disallowed:
        raise ExportError("specification allows every output; there is nothing to verify")
    if mode == CLASSIFICATION and mapping.output_count != len(alphabet):
        raise ExportError(f"classification needs {len(alphabet)} model outputs, map declares {mapping.output_count}")
    if mode == REGRESSION_SIGN:
        if mapping.output_count != 1:
            raise ExportError("regression-sign mode needs exactly one model output")
        if not set(alphabet.labels) <= {"+", "-", "0"}:
            raise ExportError(f"regression-sign mode needs a sign alphabet, got {alphabet.labels}")
    bounds = _input_bounds(spec, spec_set, mapping)

    lines = []
    if title:
        lines.append(f"; {title}")
    lines.append(f"; allowed {spec_set.output_name}: {{{', '.join(alphabet.names(spec.postcondition))}}}")
    lines.append("")
    lines += [f"(declare-const X_{i} Real)" for i in range(mapping.input_count)]
    lines.append("")
    lines += [f"(declare-const Y_{j} Real)" for j in range(mapping.output_count)]
    lines.append("")
    lines.append("; input box")
    for i, (lo, hi) in enumerate(bounds):
        lines.append(f"(assert (>= X_{i} {format_number(lo)}))")
        lines.append(f"(assert (<= X_{i} {format_number(hi)}))")
    lines.append("")
    lines.append("; negated postcondition")
    if mode == CLASSIFICATION:
        allowed = sorted(spec.postcondition)
        terms = []
        for c in disallowed:
            inner = " ".join(f"(>= Y_{c} Y_{a})" for a in allowed)
            terms.append(f"    (and {inner})")
        lines.append("(assert (or")
        lines += terms
        lines.append("))")
    else:
        names = set(alphabet.names(spec.postcondition))
        regions = _sign_regions(names, float(epsilon))

        def conds(lo, hi):
            out = []
            if hi is not None:
                out.append(f"(<= Y_0 {format_number(hi)})")
            if lo is not None:
                out.append(f"(>= Y_0 {format_number(lo)})")
            return out

        if len(regions) == 1:
            lines += [f"(assert {c})" for c in conds(*regions[0])]
        else:
            lines.append("(assert (or")
            lines += [f"    (and {' '.join(conds(lo, hi))})" for lo, hi in regions]
            lines.append("))")
    return "\n".join(lines) + "\n"


def export_set(
    spec_set: SpecificationSet,
    mapping: ModelInterfaceMap,
    out_dir,
    mode: str = CLASSIFICATION,
    epsilon: float = DEFAULT_EPSILON,
) -> dict:
    """Write ``spec_<n>.vnnlib`` per specification plus ``manifest.json``; return the manifest."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory ({exc.strerror})") from exc
    entries = []
    for n, spec in enumerate(spec_set.specs, start=1):
        entry = {
            "ordinal": n,
            "precondition": {
                name: (None if iv is None else list(iv))
                for name, iv in zip(spec_set.feature_names, spec.precondition)
            },
            "postcondition": spec_set.alphabet.names(spec.postcondition),
            "omega": spec_set.alphabet.names(spec.omega),
            "members": len(spec.members),
        }
        try:
            text = export_vnnlib(spec, spec_set, mapping, mode, epsilon, title=f"specification {n}")
        except ExportError as exc:
            entry["file"] = None
            entry["skipped"] = str(exc)
            entries.append(entry)
            continue
        name = f"spec_{n}.vnnlib"
        path = out / name
        try:
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise OSError(f"{path}: write failed ({exc.strerror})") from exc
        entry["file"] = name
        entries.append(entry)
    manifest = {
        "mode": mode,
        "epsilon": float(epsilon),
        "encoding": (
            "each file asserts the input box and the negated postcondition; "
            + (
                "classification: disjunction over disallowed labels c of (Y_c >= Y_a for every allowed a)"
                if mode == CLASSIFICATION
                else "regression-sign: Y_0 outside the allowed sign bands, zero band = [-epsilon, epsilon]"
            )
        ),
        "interface": mapping.to_dict(),
        "feature_names": list(spec_set.feature_names),
        "output_name": spec_set.output_name,
        "alphabet": list(spec_set.alphabet.labels),
        "config": spec_set.config.to_dict(),
        "specifications": entries,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


# --- VNN-Lib well-formedness -------------------------------------------------

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_NUMBER = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")
_VAR = re.compile(r"^[XY]_\d+$")


def _parse_sexprs(text: str) -> list:
    tokens = []
    for line in text.splitlines():
        line = line.split(";", 1)[0]
        tokens.extend(_TOKEN.findall(line))
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise ValueError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ValueError("unbalanced '('")
    return stack[0]


def check_vnnlib(text: str) -> list[str]:
    """Grammar problems in a VNN-Lib property (empty list when well formed)."""
    try:
        forms = _parse_sexprs(text)
    except ValueError as exc:
        return [str(exc)]
    problems = []
    declared: set[str] = set()

    def term(t) -> None:
        if isinstance(t, list):
            problems.append(f"unexpected compound term {t}")
        elif _VAR.match(t):
            if t not in declared:
                problems.append(f"{t} used before declaration")
        elif _NUMBER.match(t):
            if not math.isfinite(float(t)):
                problems.append(f"non-finite literal {t}")
        else:
            problems.append(f"bad term {t!r}")

    def expr(e) -> None:
        if not isinstance(e, list) or not e:
            problems.append(f"expected an expression, got {e!r}")
            return
        head = e[0]
        if head in ("and", "or"):
            if len(e) < 2:
                problems.append(f"empty ({head})")
            for sub in e[1:]:
                expr(sub)
        elif head in ("<=", ">=", "<", ">", "="):
            if len(e) != 3:
                problems.append(f"({head}) takes two arguments")
            for t in e[1:]:
                term(t)
        else:
            problems.append(f"unknown operator {head!r}")

    for form in forms:
        if not isinstance(form, list) or not form:
            problems.append(f"top-level atom {form!r}")
            continue
        if form[0] == "declare-const":
            if len(form) != 3 or not isinstance(form[1], str) or form[2] != "Real" or not _VAR.match(form[1]):
                problems.append(f"malformed declaration {form}")
            elif form[1] in declared:
                problems.append(f"{form[1]} declared twice")
            else:
                declared.add(form[1])
        elif form[0] == "assert":
            if len(form) != 2:
                problems.append("assert takes one expression")
            else:
                expr(form[1])
        else:
            problems.append(f"unknown command {form[0]!r}")
    return problems


# --- text listing ------------------------------------------------------------


@dataclass
class ListingEntry:
    number: int
    intervals: list[tuple[str, float, float]]
    output_name: str
    labels: list[str]


@dataclass
class Listing:
    entries: list[ListingEntry]


def _round(value: float, decimals: int) -> str:
    r = round(float(value), decimals)
    return repr(r + 0.0)


def to_listing(spec_set: SpecificationSet, raw_units: bool = True) -> Listing:
    """Named intervals per specification, in original feature units when transforms are known."""
    entries = []
    transforms = spec_set.transforms if raw_units else None
    for n, spec in enumerate(spec_set.specs, start=1):
        intervals = []
        for i, (name, iv) in enumerate(zip(spec_set.feature_names, spec.precondition)):
            if iv is None:
                continue
            lo, hi = iv
            if transforms is not None:
                lo, hi = invert_affine(np.array([[lo], [hi]]), [transforms[i]])[:, 0]
                lo, hi = min(lo, hi), max(lo, hi)
            intervals.append((name, float(lo), float(hi)))
        entries.append(ListingEntry(n, intervals, spec_set.output_name, spec_set.alphabet.names(spec.postcondition)))
    return Listing(entries)


def render_report(source: Union[SpecificationSet, Listing], decimals: int = 2, raw_units: bool = True) -> str:
    listing = source if isinstance(source, Listing) else to_listing(source, raw_units)
    lines = [f"Conjunctive specifications: {len(listing.entries)}"]
    if not listing.entries:
        lines.append("")
        lines.append("no specifications")
        return "\n".join(lines) + "\n"
    for entry in listing.entries:
        lines.append("")
        lines.append(f"Specification {entry.number}")
        lines.append("  Precondition")
        if not entry.intervals:
            lines.append("    any input")
        for k, (name, lo, hi) in enumerate(entry.intervals):
            sep = "," if k < len(entry.intervals) - 1 else ""
            lines.append(f"    {name} ∈ [{_round(lo, decimals)}, {_round(hi, decimals)}]{sep}")
        lines.append("  Postcondition")
        lines.append(f"    {entry.output_name} ∈ {{{', '.join(entry.labels)}}}")
    return "\n".join(lines) + "\n"


_SPEC_HEAD = re.compile(r"^Specification (\d+)$")
_INTERVAL = re.compile(r"^\s+(.+?) ∈ \[([^,\]]+), ([^\]]+)\],?$")
_POST = re.compile(r"^\s+(.+?) ∈ \{(.*)\}$")


def parse_report(text: str) -> Listing:
    """Inverse of :func:`render_report` (values come back rounded)."""
    entries: list[ListingEntry] = []
    current: Optional[ListingEntry] = None
    section = None
    for line in text.splitlines():
        head = _SPEC_HEAD.match(line)
        if head:
            current = ListingEntry(int(head.group(1)), [], "", [])
            entries.append(current)
            section = None
            continue
        if current is None:
            continue
        stripped = line.strip()
        if stripped in ("Precondition", "Postcondition"):
            section = stripped
            continue
        if section == "Precondition":
            m = _INTERVAL.match(line)
            if m:
                current.intervals.append((m.group(1), float(m.group(2)), float(m.group(3))))
        elif section == "Postcondition":
            m = _POST.match(line)
            if m:
                current.output_name = m.group(1)
                current.labels = [s.strip() for s in m.group(2).split(",") if s.strip()]
    return Listing(entries)
