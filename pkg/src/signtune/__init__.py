"""Robust fine-tuning toolkit for contrastive traffic sign classifiers."""

from .schedule import AdaptiveFactorConfig, FactorTrace, adaptive_factor, cosine_term
from .weights import (
    Checkpoint,
    ParameterSet,
    interpolate,
    load_checkpoint,
    save_checkpoint,
    squared_distance,
)

__all__ = [
    "AdaptiveFactorConfig",
    "FactorTrace",
    "adaptive_factor",
    "cosine_term",
    "Checkpoint",
    "ParameterSet",
    "interpolate",
    "load_checkpoint",
    "save_checkpoint",
    "squared_distance",
]

__version__ = "0.1.0"
