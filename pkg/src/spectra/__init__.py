"""Mining conjunctive input/output specifications from reference-algorithm logs."""

from .cluster import NOISE, ClusterResult, dbscan, min_samples, packing_radius
from .export import ModelInterfaceMap, check_vnnlib, export_set, export_vnnlib, parse_report, render_report
from .ingest import LogSchema, discretize_sign, load_logs, window_history
from .metrics import confidence, evaluate, relaxed_coverage, relaxed_representation, support, volume
from .model import (
    GridSpec,
    MinerConfig,
    ObservationSet,
    OutputAlphabet,
    ReferenceData,
    Specification,
    SpecificationSet,
)
from .references import BandwidthTrace, PlantedReference, PlantedRule, buffer_based_abr, simulate_abr
from .regions import interesting, partition, tally_regions
from .synthesis import enumerate_omegas, mine

__all__ = [
    "NOISE",
    "BandwidthTrace",
    "ClusterResult",
    "GridSpec",
    "LogSchema",
    "MinerConfig",
    "ModelInterfaceMap",
    "ObservationSet",
    "OutputAlphabet",
    "PlantedReference",
    "PlantedRule",
    "ReferenceData",
    "Specification",
    "SpecificationSet",
    "buffer_based_abr",
    "check_vnnlib",
    "confidence",
    "dbscan",
    "discretize_sign",
    "enumerate_omegas",
    "evaluate",
    "export_set",
    "export_vnnlib",
    "interesting",
    "load_logs",
    "min_samples",
    "mine",
    "packing_radius",
    "parse_report",
    "partition",
    "relaxed_coverage",
    "relaxed_representation",
    "render_report",
    "simulate_abr",
    "support",
    "tally_regions",
    "volume",
    "window_history",
]
