"""Temporal-window motion features from height differences of polar cells.

Two adjacent half-windows Q1 (newer, contains the current frame) and Q2
(older) of N/2 frames each are maintained over a stream of scans. For a
target frame, every buffered scan is re-expressed in the target's sensor
frame, the in-band heights (max z - min z per cell, z restricted to the
open interval (z_min, z_max)) are collected per half-window, and the
difference I1 - I2 forms one motion channel after filtering.

A frame entering the buffer sits at window position 0 (newest) and drifts
one position per push. At position k it receives channel k, computed in its
own polar grid, with sign I1 - I2 while it is inside Q1 (k < N/2) and
I2 - I1 afterwards. After N-1 further pushes the frame has traversed the
whole window and pops with its N-channel feature stack: frame j completes
exactly when frame j + N - 1 arrives. Channels whose write step fell before
the buffer first filled stay zero; frames pushed before the first fill are
the stream's warm-up frames.

The residual filter keeps a value only when it lies inside the keep-band
[d_min, d_max] and both half-windows contributed at least ``min_points``
in-band points to the cell.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .core import GridConfig, PointCloud, PoseSE3
from .errors import ConfigError, FrameOrderError, InsufficientFramesError
from .geometry import bin_polar, polar_coordinates, relative_transform


class FeatureMode(Enum):
    COMPLETE = "complete"
    DELAY_FREE = "delay_free"


class ResidualSign(Enum):
    Q1_MINUS_Q2 = "q1-q2"
    Q2_MINUS_Q1 = "q2-q1"


@dataclass(frozen=True)
class CellStats:
    """Per-cell aggregate of in-band points: count, min z and max z.

    Cells with count 0 hold +inf/-inf sentinels in z_min/z_max.
    """

    count: np.ndarray
    z_min: np.ndarray
    z_max: np.ndarray

    def merge(self, other: "CellStats") -> "CellStats":
        return CellStats(
            count=self.count + other.count,
            z_min=np.minimum(self.z_min, other.z_min),
            z_max=np.maximum(self.z_max, other.z_max),
        )


@dataclass(frozen=True)
class HeightImage:
    """Per-cell occupied height of one half-window in a reference frame.

    values(u,v) = max z - min z over the window's in-band points of the
    cell (0 where the cell is empty, in which case valid is False);
    counts records the in-band point count used by the min-points rule.
    """

    values: np.ndarray
    valid: np.ndarray
    counts: np.ndarray
    window_id: int
    frame_index: int


@dataclass(frozen=True)
class MotionFeatures:
    """(h, w, C) residual stack for one frame.

    C equals the window length N in complete mode and 1 in delay-free mode.
    Every value is either 0 or lies inside [d_min, d_max].
    """

    values: np.ndarray
    frame_index: int
    mode: FeatureMode

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def cell_stats(xyz: np.ndarray, cfg: GridConfig) -> CellStats:
    """Aggregate count/min-z/max-z per polar cell over in-band points.

    Points outside the grid or outside the open z band (z_min, z_max) are
    ignored. Output arrays have shape (h, w).
    """
    rho, theta = polar_coordinates(xyz)
    u, v = bin_polar(rho, theta, cfg)
    z = xyz[:, 2]
    keep = (u >= 0) & (z > cfg.z_min) & (z < cfg.z_max)
    flat = (v[keep] * cfg.w + u[keep]).astype(np.int64)
    zk = z[keep]
    n = cfg.h * cfg.w
    count = np.zeros(n, dtype=np.int64)
    np.add.at(count, flat, 1)
    zmin = np.full(n, np.inf)
    np.minimum.at(zmin, flat, zk)
    zmax = np.full(n, -np.inf)
    np.maximum.at(zmax, flat, zk)
    shape = (cfg.h, cfg.w)
    return CellStats(count.reshape(shape), zmin.reshape(shape), zmax.reshape(shape))


def _height_from_stats(stats: CellStats, window_id: int, frame_index: int) -> HeightImage:
    valid = stats.count > 0
    values = np.where(valid, stats.z_max - stats.z_min, 0.0)
    return HeightImage(values=values, valid=valid, counts=stats.count, window_id=window_id, frame_index=frame_index)


def height_image(
    clouds: Iterable[PointCloud], cfg: GridConfig, window_id: int = 1, frame_index: int = 0
) -> HeightImage:
    """Height image over clouds already aligned to the reference frame."""
    stats = None
    for cloud in clouds:
        s = cell_stats(cloud.xyz, cfg)
        stats = s if stats is None else stats.merge(s)
    if stats is None:
        n = (cfg.h, cfg.w)
        stats = CellStats(np.zeros(n, dtype=np.int64), np.full(n, np.inf), np.full(n, -np.inf))
    return _height_from_stats(stats, window_id, frame_index)


def filter_residual(raw: float, in_band_count_q1: int, in_band_count_q2: int, cfg: GridConfig) -> float:
    """Apply the keep-band and min-points rules to one raw residual."""
    if not (cfg.d_min <= raw <= cfg.d_max):
        return 0.0
    if in_band_count_q1 < cfg.min_points or in_band_count_q2 < cfg.min_points:
        return 0.0
    return raw


def _filter_residual_map(raw: np.ndarray, i1: HeightImage, i2: HeightImage, cfg: GridConfig) -> np.ndarray:
    keep = (raw >= cfg.d_min) & (raw <= cfg.d_max)
    keep &= i1.valid & i2.valid
    keep &= (i1.counts >= cfg.min_points) & (i2.counts >= cfg.min_points)
    return np.where(keep, raw, 0.0)


def residual(i1: HeightImage, i2: HeightImage, sign: ResidualSign, cfg: GridConfig) -> np.ndarray:
    """Signed, filtered height difference of two half-window images."""
    if i1.values.shape != i2.values.shape:
        raise ValueError(f"height image shapes differ: {i1.values.shape} vs {i2.values.shape}")
    if i1.frame_index != i2.frame_index:
        raise ValueError(
            f"height images reference different frames: {i1.frame_index} vs {i2.frame_index}"
        )
    raw = i1.values - i2.values if sign is ResidualSign.Q1_MINUS_Q2 else i2.values - i1.values
    return _filter_residual_map(raw, i1, i2, cfg)


@dataclass
class _Entry:
    frame_index: int
    cloud: PointCloud
    pose: PoseSE3


class WindowState:
    """Single-writer temporal window over one scan stream.

    Holds up to N (cloud, world pose) entries plus the per-frame channel
    accumulators. Push frames in strictly increasing frame order; each push
    after the buffer first fills emits the completed features of the frame
    that has now traversed the whole window.
    """

    def __init__(self, cfg: GridConfig):
        if cfg.window_size < 2:
            raise ConfigError("motion window needs window_size >= 2")
        self.cfg = cfg
        self._entries: deque[_Entry] = deque()
        self._acc: dict[int, np.ndarray] = {}
        self._written: dict[int, np.ndarray] = {}
        self._pair_cache: dict[tuple[int, int], CellStats] = {}

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def frame_indices(self) -> list[int]:
        return [e.frame_index for e in self._entries]

    def push(self, cloud: PointCloud, world_pose: PoseSE3) -> Optional[MotionFeatures]:
        """Add one frame; returns the popped frame's features once available."""
        n = self.cfg.window_size
        if self._entries and cloud.frame_index <= self._entries[-1].frame_index:
            raise FrameOrderError(
                f"frame index {cloud.frame_index} does not increase past {self._entries[-1].frame_index}"
            )
        if len(self._entries) == n:
            evicted = self._entries.popleft()
            self._prune_cache(self._entries[0].frame_index)
            self._acc.pop(evicted.frame_index, None)
            self._written.pop(evicted.frame_index, None)
        self._entries.append(_Entry(cloud.frame_index, cloud, world_pose))
        self._acc[cloud.frame_index] = np.zeros((self.cfg.h, self.cfg.w, n))
        self._written[cloud.frame_index] = np.zeros(n, dtype=bool)
        if len(self._entries) < n:
            return None
        for k in range(n):  # k = 0 is the newest entry
            target = self._entries[n - 1 - k]
            self._acc[target.frame_index][:, :, k] = self._channel_residual(target, k)
            self._written[target.frame_index][k] = True
        oldest = self._entries[0]
        values = self._acc.pop(oldest.frame_index)
        self._written.pop(oldest.frame_index)
        return MotionFeatures(values=values, frame_index=oldest.frame_index, mode=FeatureMode.COMPLETE)

    def written_channels(self, frame_index: int) -> np.ndarray:
        """Copy of the written-channel mask of an in-flight frame."""
        return self._written[frame_index].copy()

    def delay_free(self) -> MotionFeatures:
        """Channel-0 features for the newest frame, available without delay."""
        n = self.cfg.window_size
        if len(self._entries) < n:
            raise InsufficientFramesError(
                f"delay-free features need {n} buffered frames, have {len(self._entries)}"
            )
        newest = self._entries[-1]
        values = self._channel_residual(newest, 0)[:, :, None]
        return MotionFeatures(values=values, frame_index=newest.frame_index, mode=FeatureMode.DELAY_FREE)

    def _pair_stats(self, target: _Entry, source: _Entry) -> CellStats:
        key = (target.frame_index, source.frame_index)
        stats = self._pair_cache.get(key)
        if stats is None:
            t = relative_transform(target.pose, source.pose)
            stats = cell_stats(t.transform(source.cloud.xyz), self.cfg)
            self._pair_cache[key] = stats
        return stats

    def _window_image(self, target: _Entry, entries: list[_Entry], window_id: int) -> HeightImage:
        stats = self._pair_stats(target, entries[0])
        for e in entries[1:]:
            stats = stats.merge(self._pair_stats(target, e))
        return _height_from_stats(stats, window_id, target.frame_index)

    def _channel_residual(self, target: _Entry, k: int) -> np.ndarray:
        n2 = self.cfg.window_size // 2
        entries = list(self._entries)
        i2 = self._window_image(target, entries[:n2], window_id=2)
        i1 = self._window_image(target, entries[n2:], window_id=1)
        sign = ResidualSign.Q1_MINUS_Q2 if k < n2 else ResidualSign.Q2_MINUS_Q1
        return residual(i1, i2, sign, self.cfg)

    def _prune_cache(self, oldest_kept: int) -> None:
        stale = [key for key in self._pair_cache if key[0] < oldest_kept or key[1] < oldest_kept]
        for key in stale:
            del self._pair_cache[key]


def push_frame(state: WindowState, cloud: PointCloud, world_pose: PoseSE3) -> Optional[MotionFeatures]:
    """Functional alias for :meth:`WindowState.push`."""
    return state.push(cloud, world_pose)


def delay_free_features(state: WindowState) -> MotionFeatures:
    """Functional alias for :meth:`WindowState.delay_free`."""
    return state.delay_free()
