"""Shared domain types: points, clouds, rigid transforms and grid configuration.

All geometry is carried in 64-bit floats. Arrays stored on the frozen
dataclasses below are marked read-only so values can be shared between
threads without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigError, PoseValidationError

# Per-point class ids used across the pipeline.
STATIC = 0
MOVING = 1
UNLABELED = 2

CLASS_NAMES = {STATIC: "static", MOVING: "moving", UNLABELED: "unlabeled"}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Point:
    """A single LiDAR return in Cartesian sensor coordinates (meters)."""

    x: float
    y: float
    z: float
    intensity: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.z)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y}, {self.z})")


@dataclass(frozen=True)
class PointCloud:
    """One frame of points. Point order is significant: labels are positional.

    Attributes
    ----------
    xyz : (M, 3) float64 array of coordinates in the sensor frame.
    intensity : optional (M,) array, unitless in [0, 1].
    frame_index : non-negative index of the frame within its sequence.
    """

    xyz: np.ndarray
    intensity: Optional[np.ndarray] = None
    frame_index: int = 0

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "xyz", _readonly(xyz))
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != xyz.shape[0]:
                raise ValueError("intensity length does not match point count")
            object.__setattr__(self, "intensity", _readonly(inten))
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def point(self, i: int) -> Point:
        inten = None if self.intensity is None else float(self.intensity[i])
        return Point(float(self.xyz[i, 0]), float(self.xyz[i, 1]), float(self.xyz[i, 2]), inten)


class PoseSE3:
    """Rigid transform stored as a homogeneous 4x4 matrix.

    The rotation block must be orthonormal with determinant +1 and the
    bottom row must be (0, 0, 0, 1); both are validated on construction
    to 1e-9.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise PoseValidationError(f"pose matrix must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise PoseValidationError("pose matrix contains non-finite values")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
            raise PoseValidationError(f"pose bottom row must be (0,0,0,1), got {m[3]}")
        r = m[:3, :3]
        ortho_err = np.max(np.abs(r @ r.T - np.eye(3)))
        det_err = abs(np.linalg.det(r) - 1.0)
        if ortho_err > 1e-9 or det_err > 1e-9:
            raise PoseValidationError(
                f"rotation block is not orthonormal: |R R^T - I|={ortho_err:.3e}, |det R - 1|={det_err:.3e}"
            )
        self.matrix = _readonly(m)

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3(np.eye(4))

    @staticmethod
    def from_rt(rotation: np.ndarray, translation: np.ndarray) -> "PoseSE3":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return PoseSE3(m)

    @staticmethod
    def translation(x: float, y: float, z: float) -> "PoseSE3":
        m = np.eye(4)
        m[:3, 3] = (x, y, z)
        return PoseSE3(m)

    @staticmethod
    def rotation_z(angle: float) -> "PoseSE3":
        c, s = np.cos(angle), np.sin(angle)
        m = np.eye(4)
        m[0, 0], m[0, 1] = c, -s
        m[1, 0], m[1, 1] = s, c
        return PoseSE3(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def offset(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        return PoseSE3(self.matrix @ other.matrix)

    def __matmul__(self, other: "PoseSE3") -> "PoseSE3":
        return self.compose(other)

    def inverse(self) -> "PoseSE3":
        # Analytic SE3 inverse keeps the bottom row exact.
        r = self.matrix[:3, :3]
        t = self.matrix[:3, 3]
        m = np.eye(4)
        m[:3, :3] = r.T
        m[:3, 3] = -(r.T @ t)
        return PoseSE3(m)

    def transform(self, xyz: np.ndarray) -> np.ndarray:
        """Apply the transform to an (M, 3) array of points."""
        xyz = np.asarray(xyz, dtype=np.float64)
        return xyz @ self.matrix[:3, :3].T + self.matrix[:3, 3]

    def almost_equal(self, other: "PoseSE3", tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= tol)

    def __repr__(self) -> str:
        return f"PoseSE3(t={self.offset}, R=\n{self.rotation})"


@dataclass(frozen=True)
class GridConfig:
    """Polar grid partition and temporal-window parameters.

    ``h`` angular bins span ``[theta_min, theta_max)`` and ``w`` radial bins
    span ``[rho_min, rho_max)``; values exactly on the upper boundary clamp
    into the last bin. ``d_min``/``d_max`` bound the residual keep-band,
    ``min_points`` is the per-cell in-band count needed for a residual to
    survive, and ``window_size`` is the total temporal window length N
    (two adjacent half-windows of N/2 frames each, so N must be even).
    """

    h: int = 360
    w: int = 480
    rho_min: float = 0.0
    rho_max: float = 50.0
    theta_min: float = -np.pi
    theta_max: float = np.pi
    z_min: float = -4.0
    z_max: float = 2.0
    d_min: float = 0.4
    d_max: float = 4.0
    min_points: int = 5
    window_size: int = 8

    def __post_init__(self):
        if self.h < 1:
            raise ConfigError("h must be >= 1")
        if self.w < 1:
            raise ConfigError("w must be >= 1")
        if not self.rho_max > self.rho_min:
            raise ConfigError("rho_max must exceed rho_min")
        if not self.theta_max > self.theta_min:
            raise ConfigError("theta_max must exceed theta_min")
        if not self.z_max > self.z_min:
            raise ConfigError("z_max must exceed z_min")
        if not 0.0 < self.d_min < self.d_max:
            raise ConfigError("residual band requires 0 < d_min < d_max")
        if self.min_points < 1:
            raise ConfigError("min_points must be >= 1")
        if self.window_size < 0 or self.window_size % 2 != 0:
            raise ConfigError("window_size (N) must be even and >= 0")

    @property
    def rho_span(self) -> float:
        return self.rho_max - self.rho_min

    @property
    def theta_span(self) -> float:
        return self.theta_max - self.theta_min

    def replace(self, **kwargs) -> "GridConfig":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(kwargs)
        return GridConfig(**current)


DEFAULT_CONFIG = GridConfig()
