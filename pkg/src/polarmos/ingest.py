"""Readers and writers for the on-disk dataset formats.

Formats (all binary values little-endian):

* scan: flat binary, 4 float32 per point (x, y, z, intensity).
* poses: text, 12 whitespace-separated reals per line (row-major 3x4).
  An optional calibration file contributes a "Tr:" line; poses are then
  conjugated into the sensor frame as Tr^-1 . P . Tr.
* labels: flat binary, one uint32 per point; the lower 16 bits carry the
  semantic code.
* config: YAML key-value document mapping onto :class:`GridConfig`.

All readers are pure functions over immutable inputs and can run
concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

from .core import MOVING, STATIC, UNLABELED, GridConfig, PointCloud, PoseSE3
from .errors import (
    ConfigError,
    LabelFormatError,
    PairingError,
    PoseFormatError,
    PoseValidationError,
    ScanFormatError,
)

PathLike = Union[str, Path]

SCAN_RECORD_BYTES = 16  # 4 little-endian float32 per point
_SCAN_DTYPE = np.dtype("<f4")
_LABEL_DTYPE = np.dtype("<u4")

# Community convention for moving-object labels: 251 marks moving points,
# 9 the static remainder, 0 unlabeled. The mapping is configurable because
# datasets may renumber.
DEFAULT_MOVING_CODES = frozenset({251})
DEFAULT_STATIC_CODES = frozenset({9})
DEFAULT_UNLABELED_CODES = frozenset({0})


@dataclass(frozen=True)
class LabelMap:
    """Maps 16-bit semantic codes onto {static, moving, unlabeled}."""

    moving_codes: frozenset = DEFAULT_MOVING_CODES
    static_codes: frozenset = DEFAULT_STATIC_CODES
    unlabeled_codes: frozenset = DEFAULT_UNLABELED_CODES

    def classify(self, semantic_code: int) -> int:
        if semantic_code in self.moving_codes:
            return MOVING
        if semantic_code in self.static_codes:
            return STATIC
        return UNLABELED

    def classify_raw(self, raw: np.ndarray) -> np.ndarray:
        """Vectorized class lookup on raw uint32 codes (lower 16 bits)."""
        sem = np.asarray(raw, dtype=np.uint32) & np.uint32(0xFFFF)
        out = np.full(sem.shape, UNLABELED, dtype=np.int8)
        out[np.isin(sem, list(self.moving_codes))] = MOVING
        out[np.isin(sem, list(self.static_codes))] = STATIC
        return out

    def encode(self, classes: np.ndarray) -> np.ndarray:
        """Raw codes for class ids, using the smallest code of each set."""
        moving = min(self.moving_codes)
        static = min(self.static_codes)
        unlab = min(self.unlabeled_codes) if self.unlabeled_codes else 0
        classes = np.asarray(classes)
        out = np.full(classes.shape, unlab, dtype=np.uint32)
        out[classes == MOVING] = moving
        out[classes == STATIC] = static
        return out


@dataclass(frozen=True)
class LabelCode:
    """One raw 32-bit label and its class under a mapping table."""

    raw: int
    label_map: LabelMap = field(default_factory=LabelMap)

    @property
    def semantic(self) -> int:
        return self.raw & 0xFFFF

    @property
    def cls(self) -> int:
        return self.label_map.classify(self.semantic)


def read_scan(path: PathLike) -> PointCloud:
    """Read a binary scan into a point cloud.

    The frame index is parsed from the file stem when it is numeric
    ("000042.bin" -> 42), otherwise 0. Raises :class:`ScanFormatError`
    when the file length is not a multiple of 16 bytes.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) % SCAN_RECORD_BYTES != 0:
        raise ScanFormatError(
            f"{path}: scan length {len(data)} bytes is not a multiple of {SCAN_RECORD_BYTES}"
        )
    raw = np.frombuffer(data, dtype=_SCAN_DTYPE).reshape(-1, 4)
    frame_index = int(path.stem) if path.stem.isdigit() else 0
    return PointCloud(xyz=raw[:, :3].astype(np.float64), intensity=raw[:, 3].astype(np.float64), frame_index=frame_index)


def write_scan(cloud: PointCloud, path: PathLike) -> None:
    """Write a cloud as 16-byte records; inverse of :func:`read_scan`."""
    rec = np.zeros((len(cloud), 4), dtype=_SCAN_DTYPE)
    rec[:, :3] = cloud.xyz.astype(np.float32)
    if cloud.intensity is not None:
        rec[:, 3] = cloud.intensity.astype(np.float32)
    Path(path).write_bytes(rec.tobytes())


def _parse_matrix_line(line: str, lineno: int, path: Path) -> np.ndarray:
    parts = line.split()
    values = parts[1:] if parts and parts[0].endswith(":") else parts
    if len(values) != 12:
        raise PoseFormatError(f"{path}:{lineno}: expected 12 numbers, got {len(values)}")
    try:
        row = np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as exc:
        raise PoseFormatError(f"{path}:{lineno}: {exc}") from None
    m = np.eye(4)
    m[:3, :4] = row.reshape(3, 4)
    return m


def read_calibration(path: PathLike, key: str = "Tr") -> np.ndarray:
    """Extract the named 3x4 transform from a calibration file as 4x4."""
    path = Path(path)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if line.startswith(f"{key}:"):
            return _parse_matrix_line(line, lineno, path)
    raise PoseFormatError(f"{path}: no '{key}:' line found")


def _validate_rotation(m: np.ndarray, where: str) -> PoseSE3:
    r = m[:3, :3]
    err = max(np.max(np.abs(r @ r.T - np.eye(3))), abs(np.linalg.det(r) - 1.0))
    if err > 1e-6:
        raise PoseValidationError(f"{where}: rotation not orthonormal (error {err:.3e})")
    if err > 1e-9:
        # Snap slightly noisy rotations (text round-off) onto SO(3) so the
        # pose invariant holds; clean inputs pass through bit-identically.
        u, _, vt = np.linalg.svd(r)
        r = u @ vt
        if np.linalg.det(r) < 0:
            u[:, -1] = -u[:, -1]
            r = u @ vt
        m = m.copy()
        m[:3, :3] = r
    return PoseSE3(m)


def read_poses(poses_path: PathLike, calib_path: Optional[PathLike] = None) -> list[PoseSE3]:
    """Read per-frame poses, optionally conjugated into the sensor frame.

    Each line holds 12 reals (row-major 3x4); a bottom row (0,0,0,1) is
    appended. With a calibration file the sensor-frame pose is
    Tr^-1 . P . Tr; without, the pose is used as read.
    """
    poses_path = Path(poses_path)
    tr = tr_inv = None
    if calib_path is not None:
        tr = read_calibration(calib_path)
        _validate_rotation(tr, f"{calib_path} Tr")
        tr_inv = np.linalg.inv(tr)
    out = []
    for lineno, line in enumerate(poses_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        m = _parse_matrix_line(line, lineno, poses_path)
        if tr is not None:
            m = tr_inv @ m @ tr
        out.append(_validate_rotation(m, f"{poses_path}:{lineno}"))
    return out


def read_labels(path: PathLike) -> np.ndarray:
    """Read raw uint32 label codes; length must be a multiple of 4 bytes."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 4 != 0:
        raise LabelFormatError(f"{path}: label file length {len(data)} is not a multiple of 4")
    return np.frombuffer(data, dtype=_LABEL_DTYPE).copy()


def write_labels(labels: Sequence[int], path: PathLike) -> None:
    """Write raw codes as little-endian uint32; inverse of :func:`read_labels`."""
    np.asarray(labels, dtype=_LABEL_DTYPE).tofile(str(path))


def load_frame(scan_path: PathLike, label_path: PathLike) -> tuple[PointCloud, np.ndarray]:
    """Read a paired scan and label file, enforcing the positional contract."""
    cloud = read_scan(scan_path)
    labels = read_labels(label_path)
    if len(labels) != len(cloud):
        raise PairingError(
            f"{label_path}: {len(labels)} labels but {scan_path} holds {len(cloud)} points"
        )
    return cloud, labels


_GRID_KEYS = {f.name for f in fields(GridConfig)}
_LABEL_KEYS = {"moving_codes", "static_codes", "unlabeled_codes"}


def load_config(path: PathLike) -> GridConfig:
    """Load a GridConfig from a YAML document; omitted keys take defaults."""
    cfg, _ = load_config_with_labels(path)
    return cfg


def load_config_with_labels(path: PathLike) -> tuple[GridConfig, LabelMap]:
    """Load grid parameters plus the label mapping table from one document.

    Unknown keys produce a warning rather than an error so configs can carry
    annotations; invariant violations raise :class:`ConfigError`.
    """
    doc = yaml.safe_load(Path(path).read_text())
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping, got {type(doc).__name__}")
    grid_kwargs = {}
    label_kwargs = {}
    for key, value in doc.items():
        if key in _GRID_KEYS:
            grid_kwargs[key] = value
        elif key in _LABEL_KEYS:
            label_kwargs[key] = frozenset(int(v) for v in value)
        else:
            warnings.warn(f"{path}: unknown config key '{key}' ignored", stacklevel=2)
    try:
        cfg = GridConfig(**grid_kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg, LabelMap(**label_kwargs)


def list_scan_files(scan_dir: PathLike) -> list[Path]:
    """Sorted .bin scan files of a directory."""
    return sorted(Path(scan_dir).glob("*.bin"))


def list_label_files(label_dir: PathLike) -> list[Path]:
    """Sorted .label files of a directory."""
    return sorted(Path(label_dir).glob("*.label"))
