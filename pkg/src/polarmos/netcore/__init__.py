"""Minimal dense-tensor engine for the dual-branch segmentation network.

Tensors are plain numpy arrays (channels-first, (C, h, w)); every forward
op has a hand-written backward verified against central finite differences.
"""

from .ops import (
    global_avg,
    relu,
    ring_conv2d,
    ring_conv2d_backward,
    sigmoid,
    softmax,
)
from .amcm import (
    AmcmAux,
    AmcmGrads,
    AmcmParams,
    amcm_backward,
    amcm_forward,
    coattention_gate,
    coattention_gate_backward,
    motion_guided_attention,
    motion_guided_attention_backward,
)
from .sgd import SgdOptimizer, sgd_step
from .gradcheck import GradCheckResult, central_difference, check_gradient, relative_error
from .blocks import AmcmBlock, Param, ReLU, RingConv

__all__ = [
    "AmcmAux",
    "AmcmBlock",
    "AmcmGrads",
    "AmcmParams",
    "GradCheckResult",
    "Param",
    "ReLU",
    "RingConv",
    "SgdOptimizer",
    "amcm_backward",
    "amcm_forward",
    "central_difference",
    "check_gradient",
    "coattention_gate",
    "coattention_gate_backward",
    "global_avg",
    "motion_guided_attention",
    "motion_guided_attention_backward",
    "relative_error",
    "relu",
    "ring_conv2d",
    "ring_conv2d_backward",
    "sgd_step",
    "sigmoid",
    "softmax",
]
