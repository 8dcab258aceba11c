from .layers import (GRU, AttentionPool, Conv1d, Dense, Dropout, LastStep, ReLU, dropout,
                     sigmoid, softmax)
from .losses import bce_logits_loss, cross_entropy_loss
from .model import KeystrokeNet, ModelConfig, NonFiniteInput
from .optim import AdamW, MultiStepLR, NonFiniteGradient

__all__ = [
    "GRU", "AttentionPool", "Conv1d", "Dense", "Dropout", "LastStep", "ReLU", "dropout",
    "sigmoid", "softmax", "bce_logits_loss", "cross_entropy_loss", "KeystrokeNet",
    "ModelConfig", "NonFiniteInput", "AdamW", "MultiStepLR", "NonFiniteGradient",
]
