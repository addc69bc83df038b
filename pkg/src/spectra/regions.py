"""Partitioning the input space and finding interesting behavior regions."""

from __future__ import annotations

import csv
import logging
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import (
    GridSpec,
    InterestingRegionTable,
    MinerConfig,
    ObservationSet,
    OutputAlphabet,
    RegionEntry,
    RegionTable,
)

log = logging.getLogger(__name__)


def ceil_fraction(fraction: float, n: int) -> int:
    """``ceil(fraction * n)`` evaluated on the decimal value of ``fraction``.

    Avoids ``ceil(0.07 * 100) == 8``.
    """
    return int(-(-Fraction(str(fraction)) * n // 1))


def partition(lower: Sequence[float], upper: Sequence[float], parts: int) -> GridSpec:
    """Split the box ``[lower, upper]`` into ``parts`` equal cells per dimension."""
    return GridSpec(tuple(lower), tuple(upper), parts)


def grid_for(obs: ObservationSet, config: MinerConfig) -> GridSpec:
    """Grid from explicit config bounds, or the observed min/max of all references."""
    if config.lower is not None:
        if len(config.lower) != obs.d:
            raise ValueError(f"config bounds have {len(config.lower)} dimensions, observations have {obs.d}")
        return partition(config.lower, config.upper, config.parts)
    lo, hi = obs.observed_bounds
    for i in range(obs.d):
        if not lo[i] < hi[i]:
            raise ValueError(
                f"dimension {i} ({obs.feature_names[i]}) is degenerate: every observation has value {lo[i]}"
            )
    return partition(lo, hi, config.parts)


def tally_regions(obs: ObservationSet, grid: GridSpec) -> RegionTable:
    """Per-cell observation counts and output sets for every reference.

    Only cells holding at least one in-range observation appear.
    """
    if grid.d != obs.d:
        raise ValueError(f"grid has {grid.d} dimensions, observations have {obs.d}")
    q = obs.q
    counts: dict[tuple, list[int]] = {}
    masks: dict[tuple, list[int]] = {}
    for j, ref in enumerate(obs.references):
        if len(ref) == 0:
            continue
        idx, inside = grid.locate(ref.features)
        idx = idx[inside]
        if len(idx) == 0:
            continue
        uniq, inverse, cell_counts = np.unique(idx, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        cell_masks = np.zeros(len(uniq), dtype=np.int64)
        np.bitwise_or.at(cell_masks, inverse, np.left_shift(1, ref.outputs[inside]))
        for key, c, m in zip(map(tuple, uniq.tolist()), cell_counts.tolist(), cell_masks.tolist()):
            if key not in counts:
                counts[key] = [0] * q
                masks[key] = [0] * q
            counts[key][j] = c
            masks[key][j] = m
    entries = {
        key: RegionEntry(tuple(counts[key]), tuple(_mask_to_set(m) for m in masks[key]))
        for key in counts
    }
    return RegionTable(entries, q)


def _mask_to_set(mask: int) -> frozenset:
    out = []
    bit = 0
    while mask:
        if mask & 1:
            out.append(bit)
        mask >>= 1
        bit += 1
    return frozenset(out)


def importance_thresholds(obs: ObservationSet, fraction: float, min_count: int) -> tuple[int, ...]:
    return tuple(max(min_count, ceil_fraction(fraction, len(ref))) for ref in obs.references)


def important(table: RegionTable, obs: ObservationSet, fraction: float, min_count: int) -> RegionTable:
    """Keep regions where every reference has at least ``max(min_count, ceil(fraction * |D_j|))`` observations."""
    if not 0 <= fraction <= 1:
        raise ValueError(f"importance fraction must lie in [0, 1], got {fraction}")
    need = importance_thresholds(obs, fraction, min_count)
    kept = {
        key: entry
        for key, entry in table.entries.items()
        if all(c >= t for c, t in zip(entry.counts, need))
    }
    return RegionTable(kept, table.num_references)


def interesting(table: RegionTable, alphabet: OutputAlphabet) -> InterestingRegionTable:
    """Keep regions whose combined output set is a strict subset of the alphabet."""
    k = len(alphabet)
    kept = {key: entry for key, entry in table.entries.items() if len(entry.combined) < k}
    return InterestingRegionTable(kept, table.num_references, k)


def dump_regions_csv(table: RegionTable, alphabet: OutputAlphabet, path, reference_names: Sequence[str] = ()) -> None:
    """Debug dump: one row per region with index vector, per-reference counts and combined outputs."""
    names = list(reference_names) or [f"ref{j}" for j in range(table.num_references)]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index"] + [f"count_{n}" for n in names] + ["outputs"])
        for key, entry in table.entries.items():
            writer.writerow(
                [" ".join(map(str, key))]
                + list(entry.counts)
                + [" ".join(alphabet.names(entry.combined))]
            )
