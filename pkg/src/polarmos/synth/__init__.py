"""Deterministic synthetic LiDAR scenes with ground truth, brute-force
oracles for the motion pipeline, and the desk-scale toy trainer."""

from .scenes import BoxSpec, EgoSpec, Frame, SceneSpec, generate, load_scene_spec
from .oracle import oracle_motion_features
from .model import ToyMosNet
from .train import (
    ToyTrainResult,
    TrainSample,
    build_samples,
    toy_train,
    train_on_samples,
    zero_motion_copy,
)

__all__ = [
    "BoxSpec",
    "EgoSpec",
    "Frame",
    "SceneSpec",
    "ToyMosNet",
    "ToyTrainResult",
    "TrainSample",
    "build_samples",
    "generate",
    "load_scene_spec",
    "oracle_motion_features",
    "toy_train",
    "train_on_samples",
    "zero_motion_copy",
]
