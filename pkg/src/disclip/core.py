"""Shared domain types, validation, and configuration.

Everything here is immutable after construction and safe to share across
threads. Range and consistency violations are raised at construction time
(`ConfigError`) or during scene validation (`SceneValidationError`) so that
downstream modules can assume well-formed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NORM_MODES = ("raw", "softmax")
SIM_MODES = ("cosine", "clipscore")

STOP_TOKEN = "stop_token"
MAX_TOKENS = "max_tokens"


class DisclipError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DisclipError, ValueError):
    """A configuration value is outside its documented range."""


class SceneValidationError(DisclipError, ValueError):
    """A scene violates a structural invariant; message names the field."""


class ScoringError(DisclipError, ValueError):
    """Invalid scoring input (dimension mismatch, zero vector, non-finite)."""


class BackendError(DisclipError, RuntimeError):
    """A model backend failed to produce a usable response."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: (x, y) is the top-left corner, (w, h) the extent.

    Width and height must be positive. Bounds against a concrete image are
    checked by `validate_scene`, not at construction.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ConfigError(f"bbox w/h must be positive, got w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ConfigError(f"bbox x/y must be non-negative, got x={self.x}, y={self.y}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Region:
    """A labelled region of a scene.

    `attributes` grounds synthetic semantics for the toy backend only;
    real backends ignore it.
    """

    id: str
    bbox: BBox
    attributes: Optional[frozenset[str]] = None

    def __post_init__(self):
        if self.attributes is not None and not isinstance(self.attributes, frozenset):
            object.__setattr__(self, "attributes", frozenset(self.attributes))


@dataclass(frozen=True)
class Scene:
    """An image plus labelled regions, one of which is the target.

    `image` is whatever the imaging layer can consume (a decoded
    `disclip.imaging.Image`); it may be None for workflows that construct
    region embeddings directly. Every region other than the target acts as
    a distractor.
    """

    image: object
    regions: tuple[Region, ...]
    target_id: str
    ground_truth_expressions: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.ground_truth_expressions is not None:
            object.__setattr__(
                self, "ground_truth_expressions", tuple(self.ground_truth_expressions)
            )

    @property
    def target(self) -> Region:
        for region in self.regions:
            if region.id == self.target_id:
                return region
        raise SceneValidationError(f"target_id {self.target_id!r} matches no region")

    @property
    def distractors(self) -> tuple[Region, ...]:
        return tuple(r for r in self.regions if r.id != self.target_id)


def validate_scene(scene: Scene, image_w: float, image_h: float) -> Scene:
    """Check structural invariants and return the scene unchanged.

    Idempotent; region order is preserved. Raises `SceneValidationError`
    naming the offending field on the first violation found.
    """
    if not scene.regions:
        raise SceneValidationError("regions: scene must contain at least one region")
    seen: set[str] = set()
    for region in scene.regions:
        if region.id in seen:
            raise SceneValidationError(f"regions[].id: duplicate region id {region.id!r}")
        seen.add(region.id)
    if scene.target_id not in seen:
        raise SceneValidationError(f"target_id: target not found ({scene.target_id!r})")
    for region in scene.regions:
        box = region.bbox
        if box.x2 > image_w or box.y2 > image_h:
            raise SceneValidationError(
                f"regions[{region.id}].bbox: box ({box.x}, {box.y}, {box.w}, {box.h}) "
                f"exceeds image bounds {image_w}x{image_h}"
            )
    return scene


@dataclass(frozen=True)
class Hyperparameters:
    """The full knob set of the decoding objective.

    lambda_  weight of the target term against the distractor penalty
    delta    blur-vs-crop mix used by region similarity
    beta     weight of the visual score against the language score
    alpha    degeneration-penalty weight inside the language score
    k        number of top candidate tokens considered per step
    """

    lambda_: float = 0.75
    delta: float = 0.5
    beta: float = 2.0
    alpha: float = 0.6
    k: int = 45
    max_tokens: int = 16
    stop_tokens: Optional[frozenset[int]] = None
    norm_mode: str = "softmax"
    sim_mode: str = "cosine"

    def __post_init__(self):
        for name in ("lambda_", "delta", "alpha"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {value!r}")
        if not (isinstance(self.beta, (int, float)) and self.beta >= 0.0):
            raise ConfigError(f"beta must be >= 0, got {self.beta!r}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ConfigError(f"k must be an integer >= 1, got {self.k!r}")
        if not (isinstance(self.max_tokens, int) and self.max_tokens >= 1):
            raise ConfigError(f"max_tokens must be an integer >= 1, got {self.max_tokens!r}")
        if self.norm_mode not in NORM_MODES:
            raise ConfigError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if self.sim_mode not in SIM_MODES:
            raise ConfigError(f"sim_mode must be one of {SIM_MODES}, got {self.sim_mode!r}")
        if self.stop_tokens is not None:
            object.__setattr__(self, "stop_tokens", frozenset(self.stop_tokens))


class Embedding:
    """A fixed-length real vector in the shared visual-semantic space.

    Values are stored as a read-only float64 array; all entries must be
    finite. Embeddings compared in one scoring context must share `dim`.
    """

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ConfigError(f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("embedding entries must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        self.values = arr

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"Embedding(dim={self.dim})"


@dataclass(frozen=True)
class RegionRepresentation:
    """The pair of embeddings (crop view, blurred-context view) for a region."""

    crop_emb: Embedding
    blur_emb: Embedding

    def __post_init__(self):
        if self.crop_emb.dim != self.blur_emb.dim:
            raise ConfigError(
                f"representation embeddings disagree on dim: "
                f"{self.crop_emb.dim} vs {self.blur_emb.dim}"
            )

    @property
    def dim(self) -> int:
        return self.crop_emb.dim


@dataclass(frozen=True)
class StepTrace:
    """One decoding step: every candidate's score breakdown plus the pick."""

    candidates: tuple  # tuple[CandidateScore, ...] (defined in disclip.scoring)
    chosen_index: int


@dataclass(frozen=True)
class GenerationResult:
    """Final expression plus the per-step audit trail of the search."""

    expression: str
    tokens: tuple[int, ...]
    trace: tuple[StepTrace, ...]
    stop_reason: str  # STOP_TOKEN or MAX_TOKENS

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "trace", tuple(self.trace))
        if self.stop_reason not in (STOP_TOKEN, MAX_TOKENS):
            raise ConfigError(f"unknown stop_reason {self.stop_reason!r}")
