"""Toy training loop: featurize synthetic sequences, fit the dual-branch
model with SGD, track held-out moving-class IoU per epoch."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..appearance import descriptors
from ..core import MOVING, GridConfig
from ..errors import DivergenceError
from ..geometry import Partition, back_project, partition
from ..motion import WindowState
from ..netcore import SgdOptimizer
from ..objective import ClassStats, ConfusionCounts, accumulate, iou, total_loss
from .model import ToyMosNet
from .scenes import Frame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSample:
    """One training/evaluation unit: a frame with complete motion features."""

    frame_index: int
    desc: np.ndarray  # (M, 7) raw descriptors
    part: Partition
    motion: np.ndarray  # (N, h, w)
    grid_labels: np.ndarray  # (h, w) int8
    ignore: np.ndarray  # (h, w) bool, True = no points in cell
    point_labels: np.ndarray  # (M,)


@dataclass
class ToyTrainResult:
    model: ToyMosNet
    iou_history: list[float]
    stats: ClassStats

    @property
    def final_iou(self) -> float:
        return self.iou_history[-1]


def grid_labels_from_points(part: Partition, point_labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell labels: moving when the cell holds any moving point; cells
    without points are flagged for the ignore mask."""
    cfg = part.cfg
    n_cells = cfg.h * cfg.w
    occupied = np.zeros(n_cells, dtype=bool)
    has_moving = np.zeros(n_cells, dtype=bool)
    mask = part.in_range
    flat = part.flat[mask]
    occupied[flat] = True
    mov = flat[np.asarray(point_labels)[mask] == MOVING]
    has_moving[mov] = True
    labels = has_moving.astype(np.int8).reshape(cfg.h, cfg.w)
    ignore = (~occupied).reshape(cfg.h, cfg.w)
    return labels, ignore


def build_samples(frames: Sequence[Frame], cfg: GridConfig, zero_motion: bool = False) -> list[TrainSample]:
    """Stream a sequence through the temporal window and keep every frame
    whose N channels were all written (no warm-up zeros)."""
    n = cfg.window_size
    state = WindowState(cfg)
    samples = []
    for i, frame in enumerate(frames):
        feats = state.push(frame.cloud, frame.pose)
        if feats is None:
            continue
        j = feats.frame_index
        if j < n - 1:
            continue  # early frames carry warm-up zero channels
        src = frames[j]
        part = partition(src.cloud, cfg)
        desc = descriptors(src.cloud, part)
        motion = np.ascontiguousarray(feats.values.transpose(2, 0, 1))
        if zero_motion:
            motion = np.zeros_like(motion)
        labels, ignore = grid_labels_from_points(part, src.labels)
        samples.append(
            TrainSample(
                frame_index=j,
                desc=desc,
                part=part,
                motion=motion,
                grid_labels=labels,
                ignore=ignore,
                point_labels=src.labels,
            )
        )
    return samples


def class_stats_from_samples(samples: Sequence[TrainSample]) -> ClassStats:
    counts = np.zeros(2, dtype=np.int64)
    for s in samples:
        use = ~s.ignore
        counts[0] += int(np.sum(s.grid_labels[use] == 0))
        counts[1] += int(np.sum(s.grid_labels[use] == 1))
    return ClassStats.from_counts(counts)


def evaluate(model: ToyMosNet, samples: Sequence[TrainSample]) -> float:
    counts = ConfusionCounts()
    for s in samples:
        pred_map = model.predict(s.desc, s.part, s.motion)
        pred_points = back_project(pred_map, s.part)
        counts = accumulate(counts, pred_points, s.point_labels)
    return iou(counts)


def zero_motion_copy(samples: Sequence[TrainSample]) -> list[TrainSample]:
    """Samples with motion features zeroed (the single-branch ablation)."""
    import dataclasses

    return [dataclasses.replace(s, motion=np.zeros_like(s.motion)) for s in samples]


def toy_train(
    train_frames: Sequence[Sequence[Frame]],
    val_frames: Sequence[Sequence[Frame]],
    cfg: GridConfig,
    epochs: int = 30,
    lr: float = 0.05,
    lr_decay: float = 0.99,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
    seed: int = 0,
    use_motion: bool = True,
    channels: int = 16,
    stats: Optional[ClassStats] = None,
) -> ToyTrainResult:
    """Train the toy model on generated sequences; deterministic under seed.

    ``use_motion=False`` zeroes the motion features in both training and
    evaluation (the single-branch ablation). Raises
    :class:`DivergenceError` when the loss turns non-finite.
    """
    train = [s for seq in train_frames for s in build_samples(seq, cfg, zero_motion=not use_motion)]
    val = [s for seq in val_frames for s in build_samples(seq, cfg, zero_motion=not use_motion)]
    return train_on_samples(
        train,
        val,
        cfg,
        epochs=epochs,
        lr=lr,
        lr_decay=lr_decay,
        momentum=momentum,
        weight_decay=weight_decay,
        seed=seed,
        channels=channels,
        stats=stats,
    )


def train_on_samples(
    train: Sequence[TrainSample],
    val: Sequence[TrainSample],
    cfg: GridConfig,
    epochs: int = 30,
    lr: float = 0.05,
    lr_decay: float = 0.99,
    momentum: float = 0.9,
    weight_decay: float = 1e-4,
    seed: int = 0,
    channels: int = 16,
    stats: Optional[ClassStats] = None,
) -> ToyTrainResult:
    """Training loop over prebuilt samples (lets callers featurize once
    and reuse across seeds/ablations)."""
    if not train:
        raise ValueError("no trainable frames: sequences shorter than 2N-1?")
    if stats is None:
        stats = class_stats_from_samples(train)
    model = ToyMosNet(cfg, channels=channels, seed=seed)
    opt = SgdOptimizer(model.parameters(), momentum=momentum, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        lr_e = lr * (lr_decay**epoch)
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        for idx in order:
            s = train[idx]
            logits = model.forward(s.desc, s.part, s.motion)
            loss, d_logits = total_loss(logits.astype(np.float64), s.grid_labels, stats, s.ignore)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"loss = {loss} at epoch {epoch}, frame {s.frame_index}; lr {lr_e:.4g}"
                )
            epoch_loss += loss
            opt.zero_grad()
            model.backward(d_logits)
            opt.step(lr_e)
        val_iou = evaluate(model, val) if val else float("nan")
        history.append(val_iou)
        log.info("epoch %d: loss %.4f, val IoU %.4f", epoch, epoch_loss / len(train), val_iou)
    return ToyTrainResult(model=model, iou_history=history, stats=stats)
