"""Face hallucination GAN with sparsely aggregated generator blocks.

Thin re-export of the compiled ``fhgan._core`` module.
"""

from ._core import (
    BlockSpec,
    CheckpointError,
    ConfigError,
    DataError,
    FhganError,
    Model,
    NetworkSpec,
    ShapeError,
    TrainingFault,
    arcface_loss,
    block_parameter_count,
    config_keys,
    depth_accounting,
    network_parameter_count,
    predecessors,
    psnr,
    ssim,
    synth_toy_dataset,
    train_phase,
    upsample_bilinear,
    verification_accuracy,
)

__all__ = [
    "BlockSpec",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "FhganError",
    "Model",
    "NetworkSpec",
    "ShapeError",
    "TrainingFault",
    "arcface_loss",
    "block_parameter_count",
    "config_keys",
    "depth_accounting",
    "network_parameter_count",
    "predecessors",
    "psnr",
    "ssim",
    "synth_toy_dataset",
    "train_phase",
    "upsample_bilinear",
    "verification_accuracy",
]
