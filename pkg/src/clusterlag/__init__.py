"""Daily cluster analysis of two related count series, their temporal offset,
and per-entity anomalies in the progression from one to the other."""

from __future__ import annotations

from .cluster import Dendrogram, Partition, ckmeans_1d, cut_dendrogram, hierarchical, lloyd_kmeans
from .config import RunConfig, load_config
from .errors import ClusterLagError, ConfigError, DataError, DomainError
from .ingest import CountPanel, LogPanel, Schema, log_transform, parse_csv, preprocess, rolling_window
from .kselect import index_scores, smooth_k
from .offsets import consistency_offset, series_evolution_offset
from .pipeline import run_dual, run_single

__version__ = "0.1.0"

__all__ = [
    "ClusterLagError",
    "ConfigError",
    "CountPanel",
    "DataError",
    "Dendrogram",
    "DomainError",
    "LogPanel",
    "Partition",
    "RunConfig",
    "Schema",
    "ckmeans_1d",
    "consistency_offset",
    "cut_dendrogram",
    "hierarchical",
    "index_scores",
    "lloyd_kmeans",
    "load_config",
    "log_transform",
    "parse_csv",
    "preprocess",
    "rolling_window",
    "run_dual",
    "run_single",
    "series_evolution_offset",
    "smooth_k",
]
