"""Polar BEV geometry: SE3 composition, polar conversion, grid assignment.

Bin indices are 0-based over half-open intervals [lower, upper); a value
exactly on the global upper boundary clamps into the last bin so returns at
theta = pi (the atan2 upper limit) are kept. atan2(0, 0) evaluates to 0, so
degenerate points at the origin land deterministically in bin u=0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import STATIC, GridConfig, Point, PointCloud, PoseSE3

OUT_OF_RANGE = -1


@dataclass(frozen=True)
class PolarPoint:
    """Cylindrical coordinates of a point: range rho, azimuth theta, height z."""

    rho: float
    theta: float
    z: float


@dataclass(frozen=True)
class GridIndex:
    """0-based polar cell index: u is the radial bin, v the angular bin."""

    u: int
    v: int


def compose_relative(poses: list[PoseSE3], i: int, n: int) -> PoseSE3:
    """Relative transform taking frame i-n coordinates into frame i.

    ``poses`` holds world poses W_k (sensor -> world); the result is
    W_i^-1 . W_{i-n}. n=0 yields the identity up to round-off.
    """
    if n < 0:
        raise IndexError(f"lookback n must be >= 0, got {n}")
    if not (0 <= i < len(poses)) or not (0 <= i - n < len(poses)):
        raise IndexError(f"frame indices ({i}, {i - n}) outside pose list of length {len(poses)}")
    return relative_transform(poses[i], poses[i - n])


def relative_transform(target: PoseSE3, source: PoseSE3) -> PoseSE3:
    """Transform mapping points expressed in ``source`` into ``target``."""
    return target.inverse().compose(source)


def transform_cloud(cloud: PointCloud, pose: PoseSE3) -> PointCloud:
    """Apply a rigid transform to every point; order and intensity survive."""
    return PointCloud(pose.transform(cloud.xyz), cloud.intensity, cloud.frame_index)


def cart_to_polar(p: Point) -> PolarPoint:
    """Convert one Cartesian point to polar (rho, theta, z)."""
    rho = math.sqrt(p.x * p.x + p.y * p.y)
    theta = math.atan2(p.y, p.x)
    return PolarPoint(rho, theta, p.z)


def polar_coordinates(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rho/theta for an (M, 3) array."""
    x = xyz[:, 0]
    y = xyz[:, 1]
    rho = np.sqrt(x * x + y * y)
    theta = np.arctan2(y, x)
    return rho, theta


def grid_index(pp: PolarPoint, cfg: GridConfig) -> Optional[GridIndex]:
    """Assign a polar point to its cell, or None when outside the grid."""
    if not (cfg.rho_min <= pp.rho <= cfg.rho_max):
        return None
    if not (cfg.theta_min <= pp.theta <= cfg.theta_max):
        return None
    u = math.floor((pp.rho - cfg.rho_min) / (cfg.rho_max - cfg.rho_min) * cfg.w)
    v = math.floor((pp.theta - cfg.theta_min) / (cfg.theta_max - cfg.theta_min) * cfg.h)
    return GridIndex(min(u, cfg.w - 1), min(v, cfg.h - 1))


def bin_polar(rho: np.ndarray, theta: np.ndarray, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized grid assignment; out-of-range entries are OUT_OF_RANGE (-1).

    Mirrors :func:`grid_index` exactly, including the clamp of exact
    upper-boundary values into the last bin.
    """
    in_range = (rho >= cfg.rho_min) & (rho <= cfg.rho_max)
    in_range &= (theta >= cfg.theta_min) & (theta <= cfg.theta_max)
    u = np.floor((rho - cfg.rho_min) / (cfg.rho_max - cfg.rho_min) * cfg.w).astype(np.int64)
    v = np.floor((theta - cfg.theta_min) / (cfg.theta_max - cfg.theta_min) * cfg.h).astype(np.int64)
    np.minimum(u, cfg.w - 1, out=u)
    np.minimum(v, cfg.h - 1, out=v)
    u[~in_range] = OUT_OF_RANGE
    v[~in_range] = OUT_OF_RANGE
    return u, v


@dataclass(frozen=True)
class Partition:
    """Per-point cell assignment of one cloud over an h x w polar lattice.

    ``u``/``v`` hold each point's bins (OUT_OF_RANGE for points outside the
    grid). In-range points belong to exactly one cell; together with the
    out-of-range set they cover all point indices.
    """

    u: np.ndarray
    v: np.ndarray
    cfg: GridConfig
    frame_index: int = 0

    def __post_init__(self):
        for name in ("u", "v"):
            a = np.ascontiguousarray(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return self.u.shape[0]

    @property
    def in_range(self) -> np.ndarray:
        return self.u != OUT_OF_RANGE

    @property
    def flat(self) -> np.ndarray:
        """Flattened cell id v*w + u; -1 for out-of-range points."""
        out = self.v * self.cfg.w + self.u
        out[~self.in_range] = OUT_OF_RANGE
        return out

    def counts(self) -> np.ndarray:
        """(h, w) array of in-range point counts per cell."""
        c = np.zeros(self.cfg.h * self.cfg.w, dtype=np.int64)
        np.add.at(c, self.flat[self.in_range], 1)
        return c.reshape(self.cfg.h, self.cfg.w)

    def cell_points(self, u: int, v: int) -> np.ndarray:
        """Point indices assigned to cell (u, v), in input order."""
        return np.nonzero((self.u == u) & (self.v == v))[0]

    def grouped(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR-style grouping: (order, starts) where order lists in-range
        point indices sorted by cell and starts[c]..starts[c+1] delimits
        cell c's slice. Within a cell, input order is preserved."""
        valid = np.nonzero(self.in_range)[0]
        cells = self.flat[valid]
        order = valid[np.argsort(cells, kind="stable")]
        sorted_cells = self.flat[order]
        starts = np.searchsorted(sorted_cells, np.arange(self.cfg.h * self.cfg.w + 1))
        return order, starts


def partition(cloud: PointCloud, cfg: GridConfig) -> Partition:
    """Assign every point of the cloud to its polar cell.

    No z filtering happens here; the vertical band only applies when height
    images are built.
    """
    rho, theta = polar_coordinates(cloud.xyz)
    u, v = bin_polar(rho, theta, cfg)
    return Partition(u=u, v=v, cfg=cfg, frame_index=cloud.frame_index)


def back_project(grid_pred: np.ndarray, part: Partition) -> np.ndarray:
    """Lift an (h, w) per-cell class map back to per-point classes.

    Every point inherits its cell's class; out-of-range points are static.
    """
    grid_pred = np.asarray(grid_pred)
    if grid_pred.shape != (part.cfg.h, part.cfg.w):
        raise ValueError(
            f"grid shape {grid_pred.shape} does not match partition grid ({part.cfg.h}, {part.cfg.w})"
        )
    out = np.full(len(part), STATIC, dtype=grid_pred.dtype)
    mask = part.in_range
    out[mask] = grid_pred[part.v[mask], part.u[mask]]
    return out
