"""Turning interesting regions into a conjunctive specification set."""

from __future__ import annotations

import logging
from itertools import combinations
from typing import Iterator

import numpy as np

from .cluster import ClusterResult, dbscan, min_samples, packing_radius
from .metrics import RegionBoxes
from .model import (
    GridSpec,
    InterestingRegionTable,
    MinerConfig,
    MiningStats,
    ObservationSet,
    OutputAlphabet,
    Specification,
    SpecificationSet,
    validate_config,
)
from .regions import grid_for, important, interesting, tally_regions

log = logging.getLogger(__name__)


def enumerate_omegas(alphabet: OutputAlphabet, tau_max: int) -> Iterator[frozenset]:
    """All label subsets of size 1..tau_max, by size then lexicographically on label index."""
    k = len(alphabet)
    if not 1 <= tau_max <= k - 1:
        raise ValueError(f"tau_max must lie in [1, {k - 1}], got {tau_max}")
    for size in range(1, tau_max + 1):
        for combo in combinations(range(k), size):
            yield frozenset(combo)


def filter_omega(table: InterestingRegionTable, omega: frozenset) -> list[tuple]:
    """Regions whose combined output set lies within ``omega``, in canonical order."""
    return [key for key, entry in table.entries.items() if entry.combined <= omega]


def cluster_to_specs(
    clusters: ClusterResult,
    table: InterestingRegionTable,
    grid: GridSpec,
    omega: frozenset,
) -> list[Specification]:
    """One specification per cluster: bounding box of member cells, union of their outputs."""
    specs = []
    for cid in range(1, clusters.n_clusters + 1):
        members = clusters.members(cid)
        if len(members) == 0:
            continue
        keys = [tuple(m) for m in members.tolist()]
        post = frozenset().union(*(table[k].combined for k in keys))
        pre = grid.index_box(members.min(axis=0), members.max(axis=0))
        specs.append(Specification(pre, post, omega, tuple(keys)))
    return specs


def mine(obs: ObservationSet, config: MinerConfig) -> SpecificationSet:
    """Mine a specification set from reference observations.

    Partition, keep important and interesting regions, then for each
    candidate output set ``omega`` cluster the compatible regions and turn
    clusters into specifications, stopping once relaxed coverage reaches
    ``tau_cov``.
    """
    validate_config(config, obs.alphabet)
    if len(obs) == 0:
        raise ValueError("cannot mine an empty observation set")
    grid = grid_for(obs, config)
    raw = tally_regions(obs, grid)
    n_out = sum(int((~grid.locate(r.features)[1]).sum()) for r in obs.references if len(r))
    if n_out:
        log.info("%d observations fall outside the grid and map to no region", n_out)
    imp = important(raw, obs, config.importance_fraction, config.importance_min_count)
    table = interesting(imp, obs.alphabet)
    stats = dict(n_regions=len(raw), n_important=len(imp), n_interesting=len(table), n_out_of_grid=n_out)

    def result(specs, **extra):
        return SpecificationSet(
            tuple(specs),
            config,
            grid,
            obs.alphabet,
            obs.feature_names,
            obs.output_name,
            obs.transforms,
            MiningStats(**stats, **extra),
        )

    if len(table) == 0:
        log.warning("no interesting behavior regions; returning an empty specification set")
        return result([])

    min_s = min_samples(config.tau_rep, len(table))
    radius = packing_radius(min_s, grid.d, config.cluster_metric, config.cluster_radius_override)
    boxes = RegionBoxes(table, grid)
    covered = np.zeros(len(boxes), dtype=bool)
    specs: list[Specification] = []
    seen: set = set()
    dropped = 0
    visited = 0
    coverage = 0.0
    early = False
    for omega in enumerate_omegas(obs.alphabet, config.tau_max):
        visited += 1
        keys = filter_omega(table, omega)
        if keys:
            clusters = dbscan(keys, radius, min_s, config.cluster_metric)
            for spec in cluster_to_specs(clusters, table, grid, omega):
                key = spec.key()
                if key in seen:
                    continue
                captured = boxes.captured(spec)
                # border sharing can leave a cluster below min_s
                if int(captured.sum()) < min_s:
                    dropped += 1
                    continue
                seen.add(key)
                specs.append(spec)
                covered |= captured
        coverage = int(covered.sum()) / len(boxes)
        if coverage >= config.tau_cov:
            early = True
            break
    return result(
        specs,
        min_samples=min_s,
        radius=radius,
        omegas_visited=visited,
        dropped_low_representation=dropped,
        coverage=coverage,
        early_exit=early,
    )


def interesting_table(obs: ObservationSet, config: MinerConfig) -> tuple[GridSpec, InterestingRegionTable]:
    """Grid and interesting region table exactly as :func:`mine` builds them."""
    grid = grid_for(obs, config)
    raw = tally_regions(obs, grid)
    imp = important(raw, obs, config.importance_fraction, config.importance_min_count)
    return grid, interesting(imp, obs.alphabet)
