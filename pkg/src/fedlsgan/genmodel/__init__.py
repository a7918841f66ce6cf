from .checkpoint import load_checkpoint, save_checkpoint
from .losses import (
    DEFAULT_CODING,
    LossCoding,
    d_loss_gan,
    d_loss_lsgan,
    g_loss_gan,
    g_loss_lsgan,
    optimal_lsgan_score,
)
from .nets import (
    ShapeError,
    discriminator_forward,
    discriminator_forward_train,
    generator_forward,
    generator_forward_train,
)
from .optim import NonFiniteGradientError, OptState, adam_step
from .params import DISCRIMINATOR, GENERATOR, ModelParams, NetConfig, SchemaError, init_params
from .training import EpochResult, generate, local_train_epoch, sample_noise

__all__ = [
    "DEFAULT_CODING",
    "DISCRIMINATOR",
    "EpochResult",
    "GENERATOR",
    "LossCoding",
    "ModelParams",
    "NetConfig",
    "NonFiniteGradientError",
    "OptState",
    "SchemaError",
    "ShapeError",
    "adam_step",
    "d_loss_gan",
    "d_loss_lsgan",
    "discriminator_forward",
    "discriminator_forward_train",
    "g_loss_gan",
    "g_loss_lsgan",
    "generate",
    "generator_forward",
    "generator_forward_train",
    "init_params",
    "load_checkpoint",
    "local_train_epoch",
    "optimal_lsgan_score",
    "sample_noise",
    "save_checkpoint",
]
