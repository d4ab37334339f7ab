"""Stateless batch recomputation of motion features.

For frame j and channel k, the window at the write step consisted of the N
frames ending at j + k; both half-windows are re-aligned to frame j's pose
and the filtered height difference is taken with the sign rule (I1 - I2
while the frame sits in the newer half, I2 - I1 afterwards). Channels whose
window would begin before the sequence stay zero, mirroring the streaming
warm-up. This is the equality oracle for the incremental window state: it
rebuilds everything per frame with no carried state.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import GridConfig
from ..errors import InsufficientFramesError
from ..geometry import relative_transform
from ..motion import (
    CellStats,
    FeatureMode,
    MotionFeatures,
    ResidualSign,
    _height_from_stats,
    cell_stats,
    residual,
)
from .scenes import Frame


def oracle_motion_features(frames: Sequence[Frame], cfg: GridConfig, j: int) -> MotionFeatures:
    """Recompute frame j's complete features from scratch.

    ``frames`` is the whole sequence in order; frames j .. j+N-1 must exist.
    """
    n = cfg.window_size
    n2 = n // 2
    if j < 0 or j + n - 1 >= len(frames):
        raise InsufficientFramesError(
            f"frame {j} needs frames up to {j + n - 1}, sequence has {len(frames)}"
        )
    target = frames[j]
    values = np.zeros((cfg.h, cfg.w, n))
    for k in range(n):
        newest = j + k
        start = newest - n + 1
        if start < 0:
            continue  # the streaming buffer had not filled yet
        window = frames[start : newest + 1]
        q2, q1 = window[:n2], window[n2:]
        i2 = _window_height(q2, target, cfg, window_id=2)
        i1 = _window_height(q1, target, cfg, window_id=1)
        sign = ResidualSign.Q1_MINUS_Q2 if k < n2 else ResidualSign.Q2_MINUS_Q1
        values[:, :, k] = residual(i1, i2, sign, cfg)
    return MotionFeatures(values=values, frame_index=target.cloud.frame_index, mode=FeatureMode.COMPLETE)


def _window_height(window: Sequence[Frame], target: Frame, cfg: GridConfig, window_id: int):
    aligned = []
    for f in window:
        t = relative_transform(target.pose, f.pose)
        aligned.append(t.transform(f.cloud.xyz))
    stats = cell_stats(np.concatenate(aligned, axis=0), cfg)
    return _height_from_stats(stats, window_id, target.cloud.frame_index)
