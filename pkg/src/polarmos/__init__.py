"""polarmos: moving-object segmentation on polar bird's-eye-view grids.

Pipeline: scans are partitioned into a polar BEV grid; height differences
over two adjacent temporal windows yield per-cell motion features; a
point-MLP encoder yields appearance features; a dual-branch co-attention
network fuses both and a per-cell classifier is decoded back to points.
"""

from .core import (
    CLASS_NAMES,
    DEFAULT_CONFIG,
    MOVING,
    STATIC,
    UNLABELED,
    GridConfig,
    Point,
    PointCloud,
    PoseSE3,
)
from . import appearance, geometry, ingest, motion, netcore, objective, synth, tensorfile

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "DEFAULT_CONFIG",
    "MOVING",
    "STATIC",
    "UNLABELED",
    "GridConfig",
    "Point",
    "PointCloud",
    "PoseSE3",
    "appearance",
    "geometry",
    "ingest",
    "motion",
    "netcore",
    "objective",
    "synth",
    "tensorfile",
]
