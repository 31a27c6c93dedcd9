"""Self-supervised composition of foreground and background layers."""

from .autodiff import Tensor, backward, OPSET_VERSION
from .model import CompositorModel, Discriminator, ModelConfig
from .losses import (fft2, loss_adversarial, loss_frequency,
                     loss_reconstruction, LossWeights)
from .train import StageConfig, TrainingSample, train
from .multistage import multi_stage_infer, single_stage_infer
from .checkpoint import load_model, save_model

__all__ = [
    "Tensor", "backward", "OPSET_VERSION",
    "CompositorModel", "Discriminator", "ModelConfig",
    "fft2", "loss_adversarial", "loss_frequency", "loss_reconstruction",
    "LossWeights", "StageConfig", "TrainingSample", "train",
    "multi_stage_infer", "single_stage_infer", "load_model", "save_model",
]
