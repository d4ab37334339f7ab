"""Desk-scale dual-branch segmentation model.

Appearance branch: point-MLP cell encoder, then two ring convolutions.
Motion branch: two ring convolutions over the N-channel residual stack.
The branches meet in one co-attention block at full resolution and a 1x1
head emits static/moving logits per cell. Small enough to train on a CPU
in minutes while exercising every network op.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..appearance import (
    DESCRIPTOR_DIM,
    MlpParams,
    encode_appearance_backward,
    encode_descriptors,
)
from ..core import GridConfig
from ..geometry import Partition
from ..netcore import AmcmBlock, Param, ReLU, RingConv
from ..tensorfile import read_tensor_records, write_tensor_records


class ToyMosNet:
    """Dual-branch co-attention network over a polar grid."""

    def __init__(self, cfg: GridConfig, channels: int = 16, mlp_hidden: int = 32, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.channels = channels
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.mlp = MlpParams.random([DESCRIPTOR_DIM, mlp_hidden, channels], rng, dtype=dtype)
        # Descriptor columns live on very different scales; normalize them
        # to keep the encoder well-conditioned.
        span = max(cfg.rho_span, 1.0)
        self.input_scale = np.array(
            [1.0 / span, 1.0 / span, 0.5, 1.0 / span, 1.0 / np.pi, cfg.w / span, cfg.h / (2 * np.pi)],
            dtype=dtype,
        )
        self.app_convs = [
            RingConv.create(channels, channels, 3, rng, "app0", dtype=dtype),
            RingConv.create(channels, channels, 3, rng, "app1", dtype=dtype),
        ]
        self.mot_convs = [
            RingConv.create(cfg.window_size, channels, 3, rng, "mot0", dtype=dtype),
            RingConv.create(channels, channels, 3, rng, "mot1", dtype=dtype),
        ]
        self.app_relus = [ReLU(), ReLU()]
        self.mot_relus = [ReLU(), ReLU()]
        self.amcm = AmcmBlock.create(channels, channels, rng, dtype=dtype)
        self.head = RingConv.create(channels, 2, 1, rng, "head", dtype=dtype)
        self._mlp_cache = None
        self._mlp_params = [Param(w, f"mlp{i}.w") for i, (w, _) in enumerate(self.mlp.layers)]
        self._mlp_biases = [Param(b, f"mlp{i}.b") for i, (_, b) in enumerate(self.mlp.layers)]

    def parameters(self) -> list[Param]:
        params: list[Param] = []
        params.extend(self._mlp_params)
        params.extend(self._mlp_biases)
        for conv in self.app_convs + self.mot_convs + [self.head]:
            params.extend(conv.parameters())
        params.extend(self.amcm.parameters())
        return params

    def _current_mlp(self) -> MlpParams:
        layers = [(w.value, b.value) for w, b in zip(self._mlp_params, self._mlp_biases)]
        return MlpParams(layers, self.mlp.activation)

    def forward(self, desc: np.ndarray, part: Partition, motion_chw: np.ndarray) -> np.ndarray:
        """Logits (2, h, w) for one frame.

        desc: raw (M, 7) descriptors; motion_chw: (N, h, w) residual stack.
        """
        feats, self._mlp_cache = encode_descriptors(
            (desc * self.input_scale).astype(self.dtype), part, self._current_mlp()
        )
        xa = feats.values
        for conv, act in zip(self.app_convs, self.app_relus):
            xa = act.forward(conv.forward(xa))
        xm = motion_chw.astype(self.dtype)
        self._motion_in = xm
        for conv, act in zip(self.mot_convs, self.mot_relus):
            xm = act.forward(conv.forward(xm))
        fused = self.amcm.forward(xa, xm)
        return self.head.forward(fused)

    def backward(self, d_logits: np.ndarray) -> None:
        d_fused = self.head.backward(d_logits.astype(self.dtype))
        d_xa, d_xm = self.amcm.backward(d_fused)
        for conv, act in zip(reversed(self.mot_convs), reversed(self.mot_relus)):
            d_xm = conv.backward(act.backward(d_xm))
        for conv, act in zip(reversed(self.app_convs), reversed(self.app_relus)):
            d_xa = conv.backward(act.backward(d_xa))
        grads, _ = encode_appearance_backward(d_xa, self._mlp_cache)
        for (dw, db), pw, pb in zip(grads, self._mlp_params, self._mlp_biases):
            pw.grad += dw
            pb.grad += db

    def predict(self, desc: np.ndarray, part: Partition, motion_chw: np.ndarray) -> np.ndarray:
        """Per-cell argmax class map (h, w)."""
        logits = self.forward(desc, part, motion_chw)
        return np.argmax(logits, axis=0)

    def save(self, path) -> None:
        records = [(p.name, p.value) for p in self.parameters()]
        records.append(("input_scale", self.input_scale))
        write_tensor_records(path, records)

    def load(self, path) -> None:
        by_name = dict(read_tensor_records(path))
        for p in self.parameters():
            p.value[...] = by_name[p.name].astype(self.dtype)
        self.input_scale = by_name["input_scale"].astype(self.dtype)
