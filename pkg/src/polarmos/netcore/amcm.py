"""Appearance-motion co-attention: gating plus motion-guided attention.

The co-attention gate concatenates the two feature maps, runs a ring
convolution down to two channels, and turns the sigmoid of each channel's
global average into a scalar importance score per modality; the features
are rescaled by their scores.

Motion-guided attention then modulates the gated appearance features twice:
spatially, by the sigmoid of a 1x1 convolution of the gated motion features
(one map broadcast across channels), and channel-wise, by a softmax over a
1x1 convolution of the globally averaged salient features scaled by the
channel count; a residual add of the gated appearance features closes the
block.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .ops import ring_conv2d, ring_conv2d_backward, sigmoid, softmax


@dataclass
class AmcmParams:
    """Kernels and biases of one co-attention block.

    gate_kernel fuses the concatenated modalities down to 2 gate channels;
    spatial_kernel maps motion features to the 1-channel spatial map;
    channel_kernel maps pooled salient features to per-channel logits.
    """

    gate_kernel: np.ndarray  # (2, C_a + C_m, kg, kg)
    gate_bias: np.ndarray  # (2,)
    spatial_kernel: np.ndarray  # (1, C_m, 1, 1)
    spatial_bias: np.ndarray  # (1,)
    channel_kernel: np.ndarray  # (C_a, C_a, 1, 1)
    channel_bias: np.ndarray  # (C_a,)

    def __post_init__(self):
        c_a = self.channel_kernel.shape[0]
        c_m = self.spatial_kernel.shape[1]
        if self.gate_kernel.shape[0] != 2 or self.gate_kernel.shape[1] != c_a + c_m:
            raise ValueError(
                f"gate kernel {self.gate_kernel.shape} incompatible with C_a={c_a}, C_m={c_m}"
            )
        if self.channel_kernel.shape != (c_a, c_a, 1, 1):
            raise ValueError(f"channel kernel must be (C_a, C_a, 1, 1), got {self.channel_kernel.shape}")
        if self.spatial_kernel.shape[0] != 1 or self.spatial_kernel.shape[2:] != (1, 1):
            raise ValueError(f"spatial kernel must be (1, C_m, 1, 1), got {self.spatial_kernel.shape}")

    @property
    def c_a(self) -> int:
        return self.channel_kernel.shape[0]

    @property
    def c_m(self) -> int:
        return self.spatial_kernel.shape[1]

    @classmethod
    def zeros(cls, c_a: int, c_m: int, gate_size: int = 3, dtype=np.float64) -> "AmcmParams":
        return cls(
            gate_kernel=np.zeros((2, c_a + c_m, gate_size, gate_size), dtype=dtype),
            gate_bias=np.zeros(2, dtype=dtype),
            spatial_kernel=np.zeros((1, c_m, 1, 1), dtype=dtype),
            spatial_bias=np.zeros(1, dtype=dtype),
            channel_kernel=np.zeros((c_a, c_a, 1, 1), dtype=dtype),
            channel_bias=np.zeros(c_a, dtype=dtype),
        )

    @classmethod
    def random(cls, c_a: int, c_m: int, rng: np.random.Generator, gate_size: int = 3, scale: float = 0.1) -> "AmcmParams":
        return cls(
            gate_kernel=scale * rng.standard_normal((2, c_a + c_m, gate_size, gate_size)),
            gate_bias=scale * rng.standard_normal(2),
            spatial_kernel=scale * rng.standard_normal((1, c_m, 1, 1)),
            spatial_bias=scale * rng.standard_normal(1),
            channel_kernel=scale * rng.standard_normal((c_a, c_a, 1, 1)),
            channel_bias=scale * rng.standard_normal(c_a),
        )


@dataclass
class AmcmGrads:
    """Gradients mirroring :class:`AmcmParams` plus the block inputs."""

    gate_kernel: np.ndarray
    gate_bias: np.ndarray
    spatial_kernel: np.ndarray
    spatial_bias: np.ndarray
    channel_kernel: np.ndarray
    channel_bias: np.ndarray
    f_a: np.ndarray
    f_m: np.ndarray


@dataclass(frozen=True)
class AmcmAux:
    """Inspection record of one forward pass."""

    g_a: float
    g_m: float
    spatial_map: np.ndarray  # (h, w)
    channel_weights: np.ndarray  # (C_a,)


def coattention_gate(f_a: np.ndarray, f_m: np.ndarray, params: AmcmParams):
    """Gate both modalities by their learned scalar importance.

    Returns ((g_a, g_m, gated_a, gated_m), cache).
    """
    if f_a.shape[1:] != f_m.shape[1:]:
        raise ValueError(f"spatial dims differ: {f_a.shape} vs {f_m.shape}")
    cat = np.concatenate([f_a, f_m], axis=0)
    gate_maps = ring_conv2d(cat, params.gate_kernel, params.gate_bias)
    s = sigmoid(gate_maps)
    g_a = float(s[0].mean())
    g_m = float(s[1].mean())
    gated_a = g_a * f_a
    gated_m = g_m * f_m
    cache = {"f_a": f_a, "f_m": f_m, "cat": cat, "s": s, "g_a": g_a, "g_m": g_m, "params": params}
    return (g_a, g_m, gated_a, gated_m), cache


def coattention_gate_backward(d_gated_a: np.ndarray, d_gated_m: np.ndarray, cache: dict):
    """Gradients of the gate w.r.t. both inputs and the gate conv parameters."""
    f_a, f_m, cat, s = cache["f_a"], cache["f_m"], cache["cat"], cache["s"]
    params: AmcmParams = cache["params"]
    c_a = f_a.shape[0]
    npix = f_a.shape[1] * f_a.shape[2]
    df_a = cache["g_a"] * d_gated_a
    df_m = cache["g_m"] * d_gated_m
    dg_a = float(np.sum(d_gated_a * f_a))
    dg_m = float(np.sum(d_gated_m * f_m))
    ds = np.zeros_like(s)
    ds[0] = dg_a / npix
    ds[1] = dg_m / npix
    d_maps = ds * s * (1.0 - s)
    dcat, dgk, dgb = ring_conv2d_backward(d_maps, cat, params.gate_kernel)
    df_a += dcat[:c_a]
    df_m += dcat[c_a:]
    return df_a, df_m, dgk, dgb


def motion_guided_attention(gated_a: np.ndarray, gated_m: np.ndarray, params: AmcmParams):
    """Spatial then channel attention on the gated appearance features.

    Returns ((out, spatial_map, channel_weights), cache).
    """
    c_a, h, w = gated_a.shape
    spatial_logit = ring_conv2d(gated_m, params.spatial_kernel, params.spatial_bias)  # (1, h, w)
    sp = sigmoid(spatial_logit)
    salient = gated_a * sp  # broadcast the single map over channels
    avg = salient.mean(axis=(1, 2))
    z = ring_conv2d(avg[:, None, None], params.channel_kernel, params.channel_bias)[:, 0, 0]
    p = softmax(z)
    w_c = p * c_a
    out = salient * w_c[:, None, None] + gated_a
    cache = {
        "gated_a": gated_a,
        "gated_m": gated_m,
        "sp": sp,
        "salient": salient,
        "avg": avg,
        "p": p,
        "w_c": w_c,
        "params": params,
    }
    return (out, sp[0], w_c), cache


def motion_guided_attention_backward(d_out: np.ndarray, cache: dict):
    """Gradients of the attention stage w.r.t. gated inputs and parameters."""
    gated_a, gated_m = cache["gated_a"], cache["gated_m"]
    sp, salient, avg, p, w_c = cache["sp"], cache["salient"], cache["avg"], cache["p"], cache["w_c"]
    params: AmcmParams = cache["params"]
    c_a, h, w = gated_a.shape
    npix = h * w
    d_gated_a = d_out.copy()  # residual branch
    d_salient = d_out * w_c[:, None, None]
    dw_c = np.sum(d_out * salient, axis=(1, 2))
    dp = dw_c * c_a
    dz = p * (dp - float(np.dot(p, dp)))
    davg_map, dck, dcb = ring_conv2d_backward(dz[:, None, None], avg[:, None, None], params.channel_kernel)
    d_salient += (davg_map[:, 0, 0] / npix)[:, None, None]
    d_gated_a += d_salient * sp
    dsp = np.sum(d_salient * gated_a, axis=0, keepdims=True)
    d_logit = dsp * sp * (1.0 - sp)
    d_gated_m, dsk, dsb = ring_conv2d_backward(d_logit, gated_m, params.spatial_kernel)
    return d_gated_a, d_gated_m, dsk, dsb, dck, dcb


def amcm_forward(f_a: np.ndarray, f_m: np.ndarray, params: AmcmParams):
    """Full co-attention block: gate, then motion-guided attention.

    Returns (out, aux, cache) where aux records the gate scores, spatial
    map and channel weights of the pass.
    """
    (g_a, g_m, gated_a, gated_m), gate_cache = coattention_gate(f_a, f_m, params)
    (out, spatial_map, w_c), mga_cache = motion_guided_attention(gated_a, gated_m, params)
    aux = AmcmAux(g_a=g_a, g_m=g_m, spatial_map=spatial_map, channel_weights=w_c)
    return out, aux, {"gate": gate_cache, "mga": mga_cache}


def amcm_backward(d_out: np.ndarray, cache: dict) -> AmcmGrads:
    """Gradients of :func:`amcm_forward` w.r.t. inputs and all parameters."""
    d_gated_a, d_gated_m, dsk, dsb, dck, dcb = motion_guided_attention_backward(d_out, cache["mga"])
    df_a, df_m, dgk, dgb = coattention_gate_backward(d_gated_a, d_gated_m, cache["gate"])
    return AmcmGrads(
        gate_kernel=dgk,
        gate_bias=dgb,
        spatial_kernel=dsk,
        spatial_bias=dsb,
        channel_kernel=dck,
        channel_bias=dcb,
        f_a=df_a,
        f_m=df_m,
    )


def param_field_names() -> list[str]:
    return [f.name for f in fields(AmcmParams)]
