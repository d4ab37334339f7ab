"""Training losses and the moving-class IoU metric.

The loss is the unweighted sum of a frequency-weighted cross-entropy
(weights 1/sqrt(f_c), mean-reduced over unmasked pixels) and the
Lovasz-Softmax surrogate of the Jaccard loss, averaged over the classes
present in the labels. Both come with analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MOVING, STATIC, UNLABELED


@dataclass(frozen=True)
class ClassStats:
    """Per-class frequencies f and the derived weights alpha = 1/sqrt(f)."""

    frequencies: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        if np.any(f <= 0) or np.any(f > 1):
            raise ValueError(f"class frequencies must lie in (0, 1], got {f}")
        if abs(f.sum() - 1.0) > 1e-9:
            raise ValueError(f"class frequencies must sum to 1, got {f.sum()!r}")
        object.__setattr__(self, "frequencies", f)

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.frequencies)

    @classmethod
    def from_counts(cls, counts: np.ndarray, floor: float = 1e-6) -> "ClassStats":
        counts = np.asarray(counts, dtype=np.float64)
        f = counts / counts.sum()
        f = np.clip(f, floor, None)
        return cls(f / f.sum())


def _softmax_channels(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def weighted_ce(
    logits: np.ndarray,
    labels: np.ndarray,
    stats: ClassStats,
    ignore_mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy over unmasked pixels, mean-reduced.

    logits: (C, h, w); labels: (h, w) ints in [0, C); ignore_mask: (h, w)
    bool, True = excluded. Returns (loss, dloss/dlogits).
    """
    c = logits.shape[0]
    labels = np.asarray(labels)
    use = np.ones(labels.shape, dtype=bool) if ignore_mask is None else ~np.asarray(ignore_mask)
    if np.any((labels[use] < 0) | (labels[use] >= c)):
        bad = labels[use]
        raise ValueError(f"labels outside [0, {c}) present and not ignored: {np.unique(bad)}")
    n = int(use.sum())
    if n == 0:
        return 0.0, np.zeros_like(logits)
    probs = _softmax_channels(logits)
    alpha = stats.alpha
    vi, ui = np.nonzero(use)
    y = labels[vi, ui]
    p_true = probs[y, vi, ui]
    loss = float(np.sum(alpha[y] * (-np.log(p_true)))) / n
    grad = np.zeros_like(logits)
    weights = alpha[y] / n
    grad[:, vi, ui] = probs[:, vi, ui] * weights
    grad[y, vi, ui] -= weights
    return loss, grad


def _lovasz_jaccard_deltas(gt_sorted: np.ndarray) -> np.ndarray:
    """Derivative of the Lovasz extension of the Jaccard loss w.r.t. the
    descending-sorted error vector (the standard sorted-gradient rule)."""
    gts = gt_sorted.sum()
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    if gt_sorted.size > 1:
        jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(
    probs: np.ndarray,
    labels: np.ndarray,
    ignore_mask: np.ndarray | None = None,
    normalization_tol: float = 1e-6,
) -> tuple[float, np.ndarray]:
    """Lovasz-Softmax loss over classes present in the labels.

    probs: (C, h, w) with channel columns summing to 1. Returns
    (loss, dloss/dprobs); the gradient is piecewise linear with ties broken
    by stable sort on pixel index.
    """
    c = probs.shape[0]
    col_sums = probs.sum(axis=0)
    if np.max(np.abs(col_sums - 1.0)) > normalization_tol:
        raise ValueError(
            f"probabilities not normalized: max |sum - 1| = {np.max(np.abs(col_sums - 1.0)):.3e}"
        )
    labels = np.asarray(labels)
    use = np.ones(labels.shape, dtype=bool) if ignore_mask is None else ~np.asarray(ignore_mask)
    grad = np.zeros_like(probs)
    if not use.any():
        return 0.0, grad
    vi, ui = np.nonzero(use)
    y = labels[vi, ui]
    flat = probs[:, vi, ui]  # (C, P)
    total = 0.0
    present = 0
    for cls in range(c):
        fg = (y == cls).astype(np.float64)
        if fg.sum() == 0:
            continue
        present += 1
        errors = np.where(fg > 0, 1.0 - flat[cls], flat[cls])
        order = np.argsort(-errors, kind="stable")
        deltas = _lovasz_jaccard_deltas(fg[order])
        total += float(errors[order] @ deltas)
        d_err = np.zeros_like(errors)
        d_err[order] = deltas
        grad[cls, vi, ui] += np.where(fg > 0, -d_err, d_err)
    if present == 0:
        return 0.0, np.zeros_like(probs)
    grad /= present
    return total / present, grad


def lovasz_softmax_from_logits(
    logits: np.ndarray,
    labels: np.ndarray,
    ignore_mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Lovasz-Softmax on softmax(logits), with the chain rule applied."""
    probs = _softmax_channels(logits)
    loss, d_probs = lovasz_softmax(probs, labels, ignore_mask)
    dot = np.sum(d_probs * probs, axis=0, keepdims=True)
    grad = probs * (d_probs - dot)
    return loss, grad


def total_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    stats: ClassStats,
    ignore_mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Sum of weighted cross-entropy and Lovasz-Softmax, with gradient."""
    ce, ce_grad = weighted_ce(logits, labels, stats, ignore_mask)
    ls, ls_grad = lovasz_softmax_from_logits(logits, labels, ignore_mask)
    return ce + ls, ce_grad + ls_grad


@dataclass(frozen=True)
class ConfusionCounts:
    """Moving-class confusion totals."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def accumulate(
    counts: ConfusionCounts,
    pred: np.ndarray,
    gt: np.ndarray,
    ignore: int = UNLABELED,
) -> ConfusionCounts:
    """Fold one prediction/ground-truth pair into the confusion counts."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction length {pred.shape} != ground truth {gt.shape}")
    use = gt != ignore
    p_mov = pred[use] == MOVING
    g_mov = gt[use] == MOVING
    return counts.merge(
        ConfusionCounts(
            tp=int(np.sum(p_mov & g_mov)),
            fp=int(np.sum(p_mov & ~g_mov)),
            fn=int(np.sum(~p_mov & g_mov)),
            tn=int(np.sum(~p_mov & ~g_mov)),
        )
    )


def iou(counts: ConfusionCounts) -> float:
    """Moving-class IoU = TP / (TP + FP + FN); 1.0 when all three are zero
    (nothing moving anywhere and nothing predicted moving)."""
    denom = counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 1.0
    return counts.tp / denom


def format_report(per_sequence: dict[str, ConfusionCounts]) -> str:
    """Key-value evaluation report with per-sequence and overall IoU."""
    lines = []
    overall = ConfusionCounts()
    for name in sorted(per_sequence):
        c = per_sequence[name]
        overall = overall.merge(c)
        lines.append(f"sequence.{name}.iou: {iou(c):.6f}")
        lines.append(f"sequence.{name}.tp: {c.tp}")
        lines.append(f"sequence.{name}.fp: {c.fp}")
        lines.append(f"sequence.{name}.fn: {c.fn}")
    lines.append(f"overall.iou: {iou(overall):.6f}")
    lines.append(f"overall.tp: {overall.tp}")
    lines.append(f"overall.fp: {overall.fp}")
    lines.append(f"overall.fn: {overall.fn}")
    return "\n".join(lines) + "\n"
