"""Discriminative referring-expression generation.

A model-agnostic engine that steers a language model's token-by-token
decoding with a visual-semantic similarity score favoring a target image
region over its distractors, plus the evaluation harness (listener
accuracy, language metrics, hyperparameter sweeps) used to validate it.
"""

from disclip.core import (
    BBox,
    ConfigError,
    DisclipError,
    Embedding,
    GenerationResult,
    Hyperparameters,
    Region,
    RegionRepresentation,
    Scene,
    validate_scene,
)
from disclip.decoding import SceneEmbeddings, generate, precompute_scene_embeddings
from disclip.imaging import Image, ImagingConfig

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "ConfigError",
    "DisclipError",
    "Embedding",
    "GenerationResult",
    "Hyperparameters",
    "Image",
    "ImagingConfig",
    "Region",
    "RegionRepresentation",
    "Scene",
    "SceneEmbeddings",
    "generate",
    "precompute_scene_embeddings",
    "validate_scene",
    "__version__",
]
