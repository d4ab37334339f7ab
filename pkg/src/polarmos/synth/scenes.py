"""Synthetic LiDAR scenes: a flat ground disc plus box-shaped objects.

Every frame samples the ground around the sensor (uniform in polar
coordinates, so cell occupancy is roughly uniform across the grid) and the
surfaces of each box (top face plus four sides, area-weighted). Points are
expressed in the sensor frame of that frame's pose; moving-box points carry
moving labels. No occlusion or ray physics: the ground is sampled under
objects too.

Generation is a pure function of the spec: the per-frame RNG is seeded with
(spec seed, frame), so identical specs reproduce identical sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from ..core import MOVING, STATIC, PointCloud, PoseSE3


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned box on the ground plane.

    size is the (sx, sy) footprint in meters; center the world xy position
    at frame 0; velocity the world xy displacement per frame. The box is
    moving exactly when its velocity is nonzero.
    """

    size: tuple[float, float] = (2.0, 2.0)
    height: float = 1.5
    center: tuple[float, float] = (8.0, 0.0)
    velocity: tuple[float, float] = (0.0, 0.0)

    @property
    def moving(self) -> bool:
        return math.hypot(*self.velocity) > 0.0

    def center_at(self, frame: int) -> tuple[float, float]:
        return (self.center[0] + self.velocity[0] * frame, self.center[1] + self.velocity[1] * frame)


@dataclass(frozen=True)
class EgoSpec:
    """Sensor trajectory: straight line or circular arc, with yaw following
    the direction of travel."""

    kind: str = "static"  # static | line | arc
    speed: float = 0.0  # m per frame
    heading: float = 0.0  # rad, line direction
    radius: float = 10.0  # arc radius (m)

    def pose(self, frame: int) -> PoseSE3:
        if self.kind == "static" or self.speed == 0.0:
            return PoseSE3.identity()
        if self.kind == "line":
            d = self.speed * frame
            m = np.eye(4)
            c, s = np.cos(self.heading), np.sin(self.heading)
            m[0, 0], m[0, 1] = c, -s
            m[1, 0], m[1, 1] = s, c
            m[0, 3] = d * c
            m[1, 3] = d * s
            return PoseSE3(m)
        if self.kind == "arc":
            ang = self.speed * frame / self.radius
            m = np.eye(4)
            yaw = ang + self.heading
            c, s = np.cos(yaw), np.sin(yaw)
            m[0, 0], m[0, 1] = c, -s
            m[1, 0], m[1, 1] = s, c
            m[0, 3] = self.radius * np.sin(ang)
            m[1, 3] = self.radius * (1.0 - np.cos(ang))
            return PoseSE3(m)
        raise ValueError(f"unknown ego kind '{self.kind}'")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to generate one deterministic sequence."""

    seed: int = 0
    frames: int = 24
    ground_z: float = -1.7
    ground_points: int = 16000
    object_points: int = 1200
    rho_limit: float = 20.0
    noise_sigma: float = 0.02
    ego: EgoSpec = field(default_factory=EgoSpec)
    objects: tuple[BoxSpec, ...] = ()
    pose_noise: float = 0.0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("scene needs at least one frame")
        for i, b in enumerate(self.objects):
            for t in range(self.frames):
                cx, cy = b.center_at(t)
                ex, ey = self.ego.pose(t).offset[:2]
                reach = math.hypot(cx - ex, cy - ey) + math.hypot(*b.size) / 2.0
                if reach > self.rho_limit:
                    raise ValueError(
                        f"object {i} leaves rho_limit={self.rho_limit} at frame {t} "
                        f"(distance from sensor {reach:.2f})"
                    )


@dataclass(frozen=True)
class Frame:
    cloud: PointCloud
    pose: PoseSE3
    labels: np.ndarray  # per-point class ids (STATIC / MOVING)


def _sample_ground(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    n = spec.ground_points
    rho = rng.uniform(0.2, spec.rho_limit - 0.1, n)
    theta = rng.uniform(-np.pi, np.pi, n)
    xyz = np.empty((n, 3))
    xyz[:, 0] = rho * np.cos(theta)
    xyz[:, 1] = rho * np.sin(theta)
    xyz[:, 2] = spec.ground_z
    return xyz


def _sample_box(rng: np.random.Generator, box: BoxSpec, frame: int, spec: SceneSpec) -> np.ndarray:
    """World-frame surface samples: top face plus the four side walls."""
    sx, sy = box.size
    cx, cy = box.center_at(frame)
    z0 = spec.ground_z
    z1 = spec.ground_z + box.height
    areas = np.array([sx * sy, sx * box.height, sx * box.height, sy * box.height, sy * box.height])
    n = spec.object_points
    counts = rng.multinomial(n, areas / areas.sum())
    parts = []
    # top
    pts = np.empty((counts[0], 3))
    pts[:, 0] = rng.uniform(cx - sx / 2, cx + sx / 2, counts[0])
    pts[:, 1] = rng.uniform(cy - sy / 2, cy + sy / 2, counts[0])
    pts[:, 2] = z1
    parts.append(pts)
    # sides at y = cy +- sy/2
    for sign, cnt in ((1, counts[1]), (-1, counts[2])):
        pts = np.empty((cnt, 3))
        pts[:, 0] = rng.uniform(cx - sx / 2, cx + sx / 2, cnt)
        pts[:, 1] = cy + sign * sy / 2
        pts[:, 2] = rng.uniform(z0, z1, cnt)
        parts.append(pts)
    # sides at x = cx +- sx/2
    for sign, cnt in ((1, counts[3]), (-1, counts[4])):
        pts = np.empty((cnt, 3))
        pts[:, 0] = cx + sign * sx / 2
        pts[:, 1] = rng.uniform(cy - sy / 2, cy + sy / 2, cnt)
        pts[:, 2] = rng.uniform(z0, z1, cnt)
        parts.append(pts)
    return np.concatenate(parts, axis=0)


def generate(spec: SceneSpec) -> list[Frame]:
    """Generate the full sequence described by the spec."""
    frames = []
    for t in range(spec.frames):
        rng = np.random.default_rng([spec.seed, t])
        pose = spec.ego.pose(t)
        if spec.pose_noise > 0:
            d = spec.pose_noise * rng.standard_normal(3)
            ang = spec.pose_noise * rng.standard_normal()
            jitter = PoseSE3.rotation_z(ang).matrix.copy()
            jitter[:3, 3] = d
            pose = pose.compose(PoseSE3(jitter))
        inv = pose.inverse()
        ground = _sample_ground(rng, spec)  # already sensor-centered in xy
        # Ground is sampled around the sensor: shift to world, keep z.
        ground_world = ground.copy()
        ground_world[:, :2] = pose.transform(ground)[:, :2]
        parts = [ground_world]
        labels = [np.full(len(ground_world), STATIC, dtype=np.int8)]
        for box in spec.objects:
            pts = _sample_box(rng, box, t, spec)
            parts.append(pts)
            labels.append(np.full(len(pts), MOVING if box.moving else STATIC, dtype=np.int8))
        world = np.concatenate(parts, axis=0)
        sensor = inv.transform(world)
        if spec.noise_sigma > 0:
            sensor = sensor + spec.noise_sigma * rng.standard_normal(sensor.shape)
        cloud = PointCloud(xyz=sensor, frame_index=t)
        frames.append(Frame(cloud=cloud, pose=pose, labels=np.concatenate(labels)))
    return frames


def _box_from_dict(d: dict) -> BoxSpec:
    return BoxSpec(
        size=tuple(d.get("size", (2.0, 2.0))),
        height=float(d.get("height", 1.5)),
        center=tuple(d.get("center", (8.0, 0.0))),
        velocity=tuple(d.get("velocity", (0.0, 0.0))),
    )


def scene_from_dict(d: dict) -> SceneSpec:
    ego = d.get("ego", {})
    return SceneSpec(
        seed=int(d.get("seed", 0)),
        frames=int(d.get("frames", 24)),
        ground_z=float(d.get("ground_z", -1.7)),
        ground_points=int(d.get("ground_points", 16000)),
        object_points=int(d.get("object_points", 1200)),
        rho_limit=float(d.get("rho_limit", 20.0)),
        noise_sigma=float(d.get("noise_sigma", 0.02)),
        ego=EgoSpec(
            kind=str(ego.get("kind", "static")),
            speed=float(ego.get("speed", 0.0)),
            heading=float(ego.get("heading", 0.0)),
            radius=float(ego.get("radius", 10.0)),
        ),
        objects=tuple(_box_from_dict(b) for b in d.get("objects", [])),
        pose_noise=float(d.get("pose_noise", 0.0)),
    )


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    """Load one scene spec from a YAML document."""
    return scene_from_dict(yaml.safe_load(Path(path).read_text()) or {})
