"""Quality metrics for specification sets.

Relaxed representation/coverage count interesting regions whose whole cell
box lies inside a precondition.  Support and confidence are computed per
reference on observations, with closed intervals.  Undefined ratios (empty
denominators) are returned as ``None``.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    EvalReport,
    GridSpec,
    InterestingRegionTable,
    ObservationSet,
    ReferenceData,
    ReferenceMetrics,
    RegionTable,
    Specification,
    SpecificationSet,
)


def spec_volume(spec: Specification, grid: GridSpec) -> float:
    lo, hi = spec.bounds(grid)
    return float(np.prod(hi - lo))


def volume(specs: Iterable[Specification], grid: GridSpec) -> float:
    """Plain sum of box volumes; overlaps are counted once per specification."""
    return float(sum(spec_volume(s, grid) for s in specs))


class RegionBoxes:
    """Cell boxes of a region table, precomputed for repeated containment checks."""

    def __init__(self, table: RegionTable, grid: GridSpec):
        self.keys = table.keys
        idx = table.index_array(grid.d)
        faces = grid.boundaries
        dims = np.arange(grid.d)
        self.low = faces[dims, idx] if len(idx) else np.zeros((0, grid.d))
        self.high = faces[dims, idx + 1] if len(idx) else np.zeros((0, grid.d))
        self.grid = grid

    def __len__(self) -> int:
        return len(self.keys)

    def captured(self, spec: Specification) -> np.ndarray:
        """Boolean mask of regions whose cell box lies inside the precondition."""
        lo, hi = spec.bounds(self.grid)
        free = np.array([iv is None for iv in spec.precondition])
        inside = (self.low >= lo) & (self.high <= hi)
        inside[:, free] = True
        return inside.all(axis=1)


def relaxed_representation(spec: Specification, table: RegionTable, grid: GridSpec) -> Optional[float]:
    boxes = RegionBoxes(table, grid)
    if len(boxes) == 0:
        return None
    return int(boxes.captured(spec).sum()) / len(boxes)


def relaxed_coverage(specs: Iterable[Specification], table: RegionTable, grid: GridSpec) -> Optional[float]:
    boxes = RegionBoxes(table, grid)
    if len(boxes) == 0:
        return None
    hit = np.zeros(len(boxes), dtype=bool)
    for spec in specs:
        hit |= boxes.captured(spec)
    return int(hit.sum()) / len(boxes)


def precondition_mask(spec: Specification, x: np.ndarray) -> np.ndarray:
    """Closed-interval membership of each row of ``x``."""
    ok = np.ones(len(x), dtype=bool)
    for i, iv in enumerate(spec.precondition):
        if iv is not None:
            ok &= (x[:, i] >= iv[0]) & (x[:, i] <= iv[1])
    return ok


def _check(specs: Sequence[Specification], features: np.ndarray, outputs: np.ndarray) -> tuple[int, int]:
    """(covered, satisfying) counts for one dataset."""
    covered = np.zeros(len(features), dtype=bool)
    violated = np.zeros(len(features), dtype=bool)
    for spec in specs:
        inside = precondition_mask(spec, features)
        allowed = np.isin(outputs, np.fromiter(spec.postcondition, dtype=np.int64))
        covered |= inside
        violated |= inside & ~allowed
    return int(covered.sum()), int((covered & ~violated).sum())


def reference_metrics(specs: Sequence[Specification], ref: ReferenceData) -> ReferenceMetrics:
    if ref.features.shape[0] and specs and specs[0].d != ref.features.shape[1]:
        raise ValueError(f"specifications have {specs[0].d} dimensions, data has {ref.features.shape[1]}")
    covered, satisfying = _check(list(specs), ref.features, ref.outputs)
    return ReferenceMetrics(ref.name, len(ref), covered, satisfying)


def support(specs: Sequence[Specification], ref: ReferenceData) -> Optional[float]:
    """Fraction of observations accepted by at least one precondition."""
    return reference_metrics(specs, ref).support


def confidence(specs: Sequence[Specification], ref: ReferenceData) -> Optional[float]:
    """Among covered observations, the fraction meeting every applicable postcondition."""
    return reference_metrics(specs, ref).confidence


def sample_representation(spec: Specification, sample: np.ndarray) -> Optional[float]:
    """Pointwise representation against a sample of interesting inputs."""
    sample = np.asarray(sample, dtype=np.float64)
    if len(sample) == 0:
        return None
    return int(precondition_mask(spec, sample).sum()) / len(sample)


def sample_coverage(specs: Iterable[Specification], sample: np.ndarray) -> Optional[float]:
    sample = np.asarray(sample, dtype=np.float64)
    if len(sample) == 0:
        return None
    hit = np.zeros(len(sample), dtype=bool)
    for spec in specs:
        hit |= precondition_mask(spec, sample)
    return int(hit.sum()) / len(sample)


def evaluate(
    spec_set: SpecificationSet,
    obs: ObservationSet,
    table: Optional[InterestingRegionTable] = None,
    split: str = "train",
) -> EvalReport:
    if obs.d != spec_set.grid.d:
        raise ValueError(f"specification set has {spec_set.grid.d} features, observations have {obs.d}")
    if spec_set.feature_names and obs.feature_names and tuple(spec_set.feature_names) != tuple(obs.feature_names):
        raise ValueError(
            f"feature mismatch: specifications use {list(spec_set.feature_names)}, data has {list(obs.feature_names)}"
        )
    specs = list(spec_set.specs)
    refs = tuple(reference_metrics(specs, ref) for ref in obs.references)
    coverage = representation = None
    if table is not None and len(table):
        boxes = RegionBoxes(table, spec_set.grid)
        hit = np.zeros(len(boxes), dtype=bool)
        reps = []
        for spec in specs:
            mask = boxes.captured(spec)
            reps.append(int(mask.sum()) / len(boxes))
            hit |= mask
        coverage = int(hit.sum()) / len(boxes)
        representation = tuple(reps)
    return EvalReport(refs, volume(specs, spec_set.grid), coverage, representation, split)


def _fmt(value: Optional[float]) -> str:
    return "—" if value is None else f"{value:.2f}"


def format_table(reports: Sequence[EvalReport]) -> str:
    """Reference x {support, confidence} x split, one row per (reference, split)."""
    header = ("Reference", "Observation type", "Support", "Confidence", "Covered", "Total")
    rows = []
    names = []
    for report in reports:
        for r in report.references:
            if r.name not in names:
                names.append(r.name)
    for name in names:
        for report in reports:
            try:
                r = report.reference(name)
            except KeyError:
                continue
            rows.append((name, report.split, _fmt(r.support), _fmt(r.confidence), str(r.covered), str(r.total)))
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
