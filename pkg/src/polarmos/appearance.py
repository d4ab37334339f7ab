"""Per-cell appearance features: point MLP followed by cell max-pooling.

Each in-range point is described by a 7-vector (x, y, z, rho, theta, and
its polar offset from the cell center), pushed through a small MLP, and the
componentwise maximum over a cell's points becomes the cell feature.
Empty cells hold the zero vector. The max-pool subgradient routes to the
earliest point attaining the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GridConfig, PointCloud, Point
from .geometry import GridIndex, Partition, cart_to_polar

DESCRIPTOR_DIM = 7


def cell_center(g: GridIndex, cfg: GridConfig) -> tuple[float, float]:
    """Polar center (rho_c, theta_c) of a cell."""
    rho_c = cfg.rho_min + (g.u + 0.5) * cfg.rho_span / cfg.w
    theta_c = cfg.theta_min + (g.v + 0.5) * cfg.theta_span / cfg.h
    return rho_c, theta_c


def point_descriptor(p: Point, g: GridIndex, cfg: GridConfig) -> np.ndarray:
    """7-vector (x, y, z, rho, theta, rho - rho_c, theta - theta_c)."""
    pp = cart_to_polar(p)
    rho_c, theta_c = cell_center(g, cfg)
    return np.array([p.x, p.y, p.z, pp.rho, pp.theta, pp.rho - rho_c, pp.theta - theta_c])


def descriptors(cloud: PointCloud, part: Partition) -> np.ndarray:
    """(M, 7) descriptor matrix; out-of-range rows are zero (never pooled)."""
    if len(part) != len(cloud):
        raise ValueError(f"partition holds {len(part)} assignments for {len(cloud)} points")
    cfg = part.cfg
    x, y, z = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
    rho = np.sqrt(x * x + y * y)
    theta = np.arctan2(y, x)
    rho_c = cfg.rho_min + (part.u + 0.5) * cfg.rho_span / cfg.w
    theta_c = cfg.theta_min + (part.v + 0.5) * cfg.theta_span / cfg.h
    out = np.stack([x, y, z, rho, theta, rho - rho_c, theta - theta_c], axis=1)
    out[~part.in_range] = 0.0
    return out


@dataclass
class MlpParams:
    """Affine layers (weight (d_out, d_in), bias (d_out,)) with an
    elementwise activation between layers and none after the last."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("MLP needs at least one layer")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unsupported activation '{self.activation}'")
        d = self.layers[0][0].shape[1]
        for i, (w, b) in enumerate(self.layers):
            if w.shape[1] != d:
                raise ValueError(f"layer {i} expects input dim {w.shape[1]}, previous layer emits {d}")
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i} bias shape {b.shape} does not match weight {w.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} holds non-finite parameters")
            d = w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @classmethod
    def random(cls, dims: list[int], rng: np.random.Generator, dtype=np.float64) -> "MlpParams":
        layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            w = (np.sqrt(2.0 / d_in) * rng.standard_normal((d_out, d_in))).astype(dtype)
            layers.append((w, np.zeros(d_out, dtype=dtype)))
        return cls(layers)

    @classmethod
    def identity(cls, dim: int = DESCRIPTOR_DIM) -> "MlpParams":
        return cls([(np.eye(dim), np.zeros(dim))], activation="identity")

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in self.layers])

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        layers = []
        off = 0
        for w, b in self.layers:
            nw, nb = w.size, b.size
            layers.append((flat[off : off + nw].reshape(w.shape), flat[off + nw : off + nw + nb]))
            off += nw + nb
        return MlpParams(layers, self.activation)


@dataclass(frozen=True)
class AppearanceFeatures:
    """(C_a, h, w) cell features; empty cells hold the zero vector."""

    values: np.ndarray
    frame_index: int


def _mlp_forward(desc: np.ndarray, params: MlpParams):
    acts = [desc]
    h = desc
    n = len(params.layers)
    for i, (w, b) in enumerate(params.layers):
        h = h @ w.T + b
        if i < n - 1 and params.activation == "relu":
            h = np.maximum(h, 0)
        acts.append(h)
    return h, acts


def _mlp_backward(d_out: np.ndarray, acts: list[np.ndarray], params: MlpParams):
    grads = []
    d = d_out
    n = len(params.layers)
    for i in range(n - 1, -1, -1):
        w, _ = params.layers[i]
        if i < n - 1 and params.activation == "relu":
            # acts stores rectified outputs; positivity matches the
            # pre-activation sign, so it doubles as the relu mask.
            d = np.where(acts[i + 1] > 0, d, 0)
        x_in = acts[i]
        dw = d.T @ x_in
        db = d.sum(axis=0)
        grads.append((dw, db))
        d = d @ w
    grads.reverse()
    return grads, d


def encode_appearance(
    part: Partition,
    cloud: PointCloud,
    params: MlpParams,
    cfg: GridConfig,
    input_scale: Optional[np.ndarray] = None,
):
    """Encode one frame: per-point MLP, then max-pool within each cell.

    ``input_scale`` optionally rescales descriptor columns before the MLP
    (training convenience; identity by default). Returns
    (AppearanceFeatures, cache) where the cache drives the backward pass.
    """
    if params.in_dim != DESCRIPTOR_DIM:
        raise ValueError(f"MLP expects input dim {params.in_dim}, descriptors have {DESCRIPTOR_DIM}")
    if cfg.h != part.cfg.h or cfg.w != part.cfg.w:
        raise ValueError("partition grid does not match config")
    desc = descriptors(cloud, part)
    if input_scale is not None:
        desc = desc * input_scale
    return encode_descriptors(desc, part, params, cloud.frame_index)


def encode_descriptors(desc: np.ndarray, part: Partition, params: MlpParams, frame_index: int = 0):
    """Encode precomputed descriptors (see :func:`encode_appearance`)."""
    cfg = part.cfg
    c_out = params.out_dim
    n_cells = cfg.h * cfg.w
    valid = part.in_range
    idx = np.nonzero(valid)[0]
    dtype = np.result_type(desc, params.layers[0][0])
    if idx.size == 0:
        values = np.zeros((c_out, cfg.h, cfg.w), dtype=dtype)
        cache = {"acts": None, "winners": None, "idx": idx, "part": part, "params": params, "desc": desc}
        return AppearanceFeatures(values=values, frame_index=frame_index), cache
    feats, acts = _mlp_forward(desc[idx], params)
    cells = part.flat[idx]
    pooled = np.full((n_cells, c_out), -np.inf, dtype=dtype)
    np.maximum.at(pooled, cells, feats)
    # Earliest point attaining the max wins the subgradient.
    winners = np.full((n_cells, c_out), idx.size, dtype=np.int64)
    is_max = feats == pooled[cells]
    rows = np.arange(idx.size)
    for c in range(c_out):
        m = is_max[:, c]
        np.minimum.at(winners[:, c], cells[m], rows[m])
    occupied = np.isfinite(pooled[:, 0])
    pooled[~occupied] = 0.0
    values = np.ascontiguousarray(pooled.T.reshape(c_out, cfg.h, cfg.w))
    cache = {
        "acts": acts,
        "winners": winners,
        "occupied": occupied,
        "idx": idx,
        "part": part,
        "params": params,
        "desc": desc,
    }
    return AppearanceFeatures(values=values, frame_index=frame_index), cache


def encode_appearance_backward(d_values: np.ndarray, cache: dict):
    """Gradients of the encoder w.r.t. MLP parameters (list of (dW, db))
    and, for completeness, the scaled descriptors."""
    params: MlpParams = cache["params"]
    desc = cache["desc"]
    if cache["acts"] is None:
        zero = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
        return zero, np.zeros_like(desc)
    idx = cache["idx"]
    winners = cache["winners"]
    occupied = cache["occupied"]
    c_out = d_values.shape[0]
    d_flat = d_values.reshape(c_out, -1).T  # (cells, C)
    d_feats = np.zeros((idx.size, c_out), dtype=d_values.dtype)
    occ_cells = np.nonzero(occupied)[0]
    for c in range(c_out):
        rows = winners[occ_cells, c]
        np.add.at(d_feats[:, c], rows, d_flat[occ_cells, c])
    grads, d_desc_valid = _mlp_backward(d_feats, cache["acts"], params)
    d_desc = np.zeros_like(desc)
    d_desc[idx] = d_desc_valid
    return grads, d_desc


def flip_y(xyz: np.ndarray) -> np.ndarray:
    """Mirror across the xz-plane (y -> -y); an involution."""
    out = xyz.copy()
    out[:, 1] = -out[:, 1]
    return out


def rotate_z(xyz: np.ndarray, angle: float) -> np.ndarray:
    """Rotate points about the z axis."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return xyz @ rot.T


def translate(xyz: np.ndarray, offset: np.ndarray) -> np.ndarray:
    return xyz + offset


def augment(cloud: PointCloud, seed: int, cfg: GridConfig) -> PointCloud:
    """Random flip / rotation / small translation, deterministic under seed.

    Draw order: flip coin, rotation angle uniform in [-pi, pi), then a
    translation with components uniform in [-0.5, 0.5] m; applied in that
    order.
    """
    rng = np.random.default_rng(seed)
    xyz = cloud.xyz
    if rng.random() < 0.5:
        xyz = flip_y(xyz)
    angle = rng.uniform(-np.pi, np.pi)
    xyz = rotate_z(xyz, angle)
    offset = rng.uniform(-0.5, 0.5, size=3)
    xyz = translate(xyz, offset)
    return PointCloud(xyz=xyz, intensity=cloud.intensity, frame_index=cloud.frame_index)
