"""Temporal clustering with evolutionary affinity propagation."""

from .dataseries import CsvSchema, DatasetSeries, build_similarity, load_csv, normalize_global, set_preferences
from .engine import EapConfig, EapEngine, run_ap_series, run_eap
from .metrics import modified_rand, rand_index, rand_series, track_stats
from .solution import ClusteringSolution, Track
from .static_ap import ApConfig, run_ap
from .synthgen import generate, normalize_synthetic

__version__ = "0.1.0"

__all__ = [
    "ApConfig",
    "ClusteringSolution",
    "CsvSchema",
    "DatasetSeries",
    "EapConfig",
    "EapEngine",
    "Track",
    "build_similarity",
    "generate",
    "load_csv",
    "modified_rand",
    "normalize_global",
    "normalize_synthetic",
    "rand_index",
    "rand_series",
    "run_ap",
    "run_ap_series",
    "run_eap",
    "set_preferences",
    "track_stats",
]
