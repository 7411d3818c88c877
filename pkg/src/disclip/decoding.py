"""The generation loop: one token per step by fused-score argmax.

Region embeddings are fixed for the whole generation, so they are computed
once per scene (`precompute_scene_embeddings`) and reused across steps.
Each step asks the language model for its top-k candidates, encodes the
candidate continuation texts, scores them, and appends the argmax token
until a stop token or the token budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from disclip.backends import Encoder, LanguageModel, default_stop_tokens
from disclip.core import (
    MAX_TOKENS,
    STOP_TOKEN,
    BackendError,
    ConfigError,
    Embedding,
    GenerationResult,
    Hyperparameters,
    RegionRepresentation,
    Scene,
    StepTrace,
)
from disclip.imaging import ImagingConfig, represent_region
from disclip.scoring import best_candidate, score_candidates

DEFAULT_PROMPT = "A photo of"


@dataclass(frozen=True)
class SceneEmbeddings:
    """Per-region representations of one scene, target split out.

    `distractors` preserves scene region order with the target removed;
    `region_ids` and `target_index` keep enough bookkeeping to reconstruct
    the full scene-ordered list for the listener.
    """

    target: RegionRepresentation
    distractors: tuple[RegionRepresentation, ...]
    region_ids: tuple[str, ...]
    target_index: int

    def __post_init__(self):
        if len(self.distractors) != len(self.region_ids) - 1:
            raise ConfigError(
                f"expected {len(self.region_ids) - 1} distractors, got {len(self.distractors)}"
            )
        if not 0 <= self.target_index < len(self.region_ids):
            raise ConfigError(f"target_index {self.target_index} out of range")

    def all_representations(self) -> list[tuple[str, RegionRepresentation]]:
        """(region id, representation) pairs in scene region order."""
        reps = list(self.distractors)
        reps.insert(self.target_index, self.target)
        return list(zip(self.region_ids, reps))


def precompute_scene_embeddings(
    scene: Scene,
    encoder: Encoder,
    cfg: ImagingConfig,
    rep_mode: str = "crop_blur",
) -> SceneEmbeddings:
    """Encode every region of a validated scene exactly once."""
    target_rep: Optional[RegionRepresentation] = None
    target_index = -1
    distractors = []
    ids = []
    for i, region in enumerate(scene.regions):
        rep = represent_region(scene.image, region.bbox, cfg, encoder, rep_mode=rep_mode)
        ids.append(region.id)
        if region.id == scene.target_id:
            target_rep = rep
            target_index = i
        else:
            distractors.append(rep)
    if target_rep is None:
        raise ConfigError(f"target_id {scene.target_id!r} matches no region")
    return SceneEmbeddings(
        target=target_rep,
        distractors=tuple(distractors),
        region_ids=tuple(ids),
        target_index=target_index,
    )


def generate(
    scene_embs: SceneEmbeddings,
    lm: LanguageModel,
    encoder: Encoder,
    prompt: str,
    hyper: Hyperparameters,
    strip_prompt_for_clip: bool = False,
) -> GenerationResult:
    """Greedy guided decoding of a referring expression.

    The emitted expression is the detokenized generated suffix; the prompt
    is never part of it. Candidate texts sent to the text encoder include
    the prompt unless `strip_prompt_for_clip` is set. Deterministic:
    identical inputs produce identical results, with fused-score ties
    resolved toward the lowest token id.
    """
    context = lm.tokenize(prompt)
    stop_tokens = (
        hyper.stop_tokens if hyper.stop_tokens is not None else default_stop_tokens(lm)
    )

    generated: list[int] = []
    prev_hiddens: list[Embedding] = []
    trace: list[StepTrace] = []
    stop_reason = MAX_TOKENS

    for step in range(hyper.max_tokens):
        try:
            candidates = lm.top_k(context + generated, hyper.k)
        except Exception as exc:
            raise BackendError(f"language model failed at step {step}: {exc}") from exc
        if not candidates:
            raise BackendError(f"language model returned no candidates at step {step}")
        text_embs = []
        for token, _, _ in candidates:
            if strip_prompt_for_clip:
                text = lm.detokenize(generated + [token])
            else:
                text = lm.detokenize(context + generated + [token])
            try:
                text_embs.append(encoder.encode_text(text))
            except Exception as exc:
                raise BackendError(f"text encoder failed at step {step}: {exc}") from exc

        scores = score_candidates(
            candidates,
            text_embs,
            scene_embs.target,
            scene_embs.distractors,
            prev_hiddens,
            hyper,
        )
        chosen = best_candidate(scores)
        trace.append(StepTrace(candidates=tuple(scores), chosen_index=chosen))
        token = scores[chosen].token
        generated.append(token)
        prev_hiddens.append(scores[chosen].hidden)
        if token in stop_tokens:
            stop_reason = STOP_TOKEN
            break

    expression_tokens = generated
    if expression_tokens and expression_tokens[-1] == lm.eot_token:
        expression_tokens = expression_tokens[:-1]
    return GenerationResult(
        expression=lm.detokenize(expression_tokens),
        tokens=tuple(generated),
        trace=tuple(trace),
        stop_reason=stop_reason,
    )
