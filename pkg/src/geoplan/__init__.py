"""Geo-consistent visual planning at desk scale.

Road graphs from rasters, cross-view embedding alignment, curvature-weighted
A*, a grid-world planning policy trained with VPFT and GRPO, and the
retrieval and navigation metrics used to score them.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ._kernels import BACKEND, available_backends
from .canvas import PathMask, PrototypeSet, RasterTile, TopoGraph, extract_canvas
from .crossview import MixParams, RetrievalIndex, info_nce_loss, retrieve
from .env import EpisodeSpec, GridWorld, generate_world, sample_episodes
from .errors import GeoplanError
from .grpo import GrpoConfig
from .planner import PlanQuery, WaypointPath, astar, plan
from .policy import PolicyParams

__version__ = "0.1.0"

SCHEMAS = ("align_metrics", "checkpoint", "config", "episodes", "graph", "index", "plan", "prototypes",
           "report", "runs", "train_summary", "trajectory", "world")


def schema_path(name: str) -> Path:
    """Path of a shipped JSON schema, e.g. ``schema_path("plan")``."""
    if name not in SCHEMAS:
        raise KeyError(f"unknown schema {name!r}")
    return Path(str(resources.files(__package__).joinpath("schemas", f"{name}.json")))


__all__ = [
    "BACKEND", "EpisodeSpec", "GeoplanError", "GridWorld", "GrpoConfig", "MixParams", "PathMask",
    "PlanQuery", "PolicyParams", "PrototypeSet", "RasterTile", "RetrievalIndex", "SCHEMAS", "TopoGraph",
    "WaypointPath", "astar", "available_backends", "extract_canvas", "generate_world", "info_nce_loss",
    "plan", "retrieve", "sample_episodes", "schema_path",
]
