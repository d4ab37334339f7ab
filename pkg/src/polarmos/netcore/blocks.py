"""Trainable layer wrappers over the functional ops.

Each block keeps its forward cache between forward() and backward();
backward() accumulates parameter gradients and returns the input gradient.
Single-writer discipline: one training step at a time per block.
"""

from __future__ import annotations

import numpy as np

from .amcm import AmcmParams, amcm_backward, amcm_forward
from .ops import ring_conv2d, ring_conv2d_backward


class Param:
    """A trainable array with an accumulated gradient."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.array(value)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0


class RingConv:
    """Ring convolution layer (circular in theta, zero-padded in rho)."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, name: str = "conv"):
        self.weight = Param(weight, f"{name}.w")
        self.bias = Param(bias, f"{name}.b")
        self._x = None

    @classmethod
    def create(cls, c_in: int, c_out: int, ksize: int, rng: np.random.Generator, name: str = "conv", dtype=np.float64):
        scale = np.sqrt(2.0 / (c_in * ksize * ksize))
        w = (scale * rng.standard_normal((c_out, c_in, ksize, ksize))).astype(dtype)
        b = np.zeros(c_out, dtype=dtype)
        return cls(w, b, name)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return ring_conv2d(x, self.weight.value, self.bias.value)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = ring_conv2d_backward(dy, self._x, self.weight.value)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def parameters(self) -> list[Param]:
        return [self.weight, self.bias]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0)

    def parameters(self) -> list[Param]:
        return []


class AmcmBlock:
    """Co-attention block with trainable parameters."""

    def __init__(self, params: AmcmParams, name: str = "amcm"):
        self.gate_kernel = Param(params.gate_kernel, f"{name}.gate.w")
        self.gate_bias = Param(params.gate_bias, f"{name}.gate.b")
        self.spatial_kernel = Param(params.spatial_kernel, f"{name}.spatial.w")
        self.spatial_bias = Param(params.spatial_bias, f"{name}.spatial.b")
        self.channel_kernel = Param(params.channel_kernel, f"{name}.channel.w")
        self.channel_bias = Param(params.channel_bias, f"{name}.channel.b")
        self._cache = None
        self.last_aux = None

    @classmethod
    def create(cls, c_a: int, c_m: int, rng: np.random.Generator, name: str = "amcm", dtype=np.float64):
        params = AmcmParams.random(c_a, c_m, rng)
        params = AmcmParams(**{k: np.asarray(v, dtype=dtype) for k, v in vars(params).items()})
        return cls(params, name)

    def _params(self) -> AmcmParams:
        return AmcmParams(
            gate_kernel=self.gate_kernel.value,
            gate_bias=self.gate_bias.value,
            spatial_kernel=self.spatial_kernel.value,
            spatial_bias=self.spatial_bias.value,
            channel_kernel=self.channel_kernel.value,
            channel_bias=self.channel_bias.value,
        )

    def forward(self, f_a: np.ndarray, f_m: np.ndarray) -> np.ndarray:
        out, aux, cache = amcm_forward(f_a, f_m, self._params())
        self._cache = cache
        self.last_aux = aux
        return out

    def backward(self, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = amcm_backward(dy, self._cache)
        self.gate_kernel.grad += g.gate_kernel
        self.gate_bias.grad += g.gate_bias
        self.spatial_kernel.grad += g.spatial_kernel
        self.spatial_bias.grad += g.spatial_bias
        self.channel_kernel.grad += g.channel_kernel
        self.channel_bias.grad += g.channel_bias
        return g.f_a, g.f_m

    def parameters(self) -> list[Param]:
        return [
            self.gate_kernel,
            self.gate_bias,
            self.spatial_kernel,
            self.spatial_bias,
            self.channel_kernel,
            self.channel_bias,
        ]
