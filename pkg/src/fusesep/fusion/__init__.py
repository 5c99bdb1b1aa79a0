"""Learned and closed-form fusion of deterministic and generative estimates."""
from .checkpoint import load_params, params_from_dict, params_to_dict, save_params
from .combine import (
    FusionWeights,
    apply_fusion,
    fuse_spectrum,
    oracle_weights,
    spectral_residual,
    weights_from_heads,
)
from .network import (
    DESK_CONFIG,
    FULL_CONFIG,
    CombinerConfig,
    CombinerError,
    CombinerParams,
    combiner_forward,
    init_params,
    zeros_like_params,
)
from .train import (
    Example,
    TrainConfig,
    TrainError,
    batch_loss,
    loss_and_grad,
    make_example,
    train_combiner,
)

__all__ = [
    "FusionWeights",
    "apply_fusion",
    "fuse_spectrum",
    "oracle_weights",
    "spectral_residual",
    "weights_from_heads",
    "CombinerConfig",
    "CombinerError",
    "CombinerParams",
    "DESK_CONFIG",
    "FULL_CONFIG",
    "combiner_forward",
    "init_params",
    "zeros_like_params",
    "Example",
    "TrainConfig",
    "TrainError",
    "batch_loss",
    "loss_and_grad",
    "make_example",
    "train_combiner",
    "load_params",
    "save_params",
    "params_to_dict",
    "params_from_dict",
]
