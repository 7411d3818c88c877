"""Score arithmetic for guided decoding.

Components, in the order they compose per step:

  similarity              cosine (optionally clipped/scaled) in the shared space
  region_similarity       blur/crop mix of similarities against one region
  candidate_distribution  softmax over the k candidates' scores for one image
  disclip_score           target-vs-distractors mix
  language_score          model confidence minus degeneration penalty
  fused_score             language + beta * visual
  score_candidates        the full per-step composition

Everything here is scalar float arithmetic over small vectors (k candidates,
a handful of regions), kept in plain Python floats so results are exactly
reproducible by independent re-implementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from disclip.core import Embedding, Hyperparameters, RegionRepresentation, ScoringError


@dataclass(frozen=True)
class CandidateScore:
    """Full score breakdown for one candidate token at one step."""

    token: int
    p_model: float
    hidden: Embedding
    s_plus: float
    s_minus_mean: float
    l_disclip: float
    degen_penalty: float
    l_lang: float
    fused: float


def _dot(a: list[float], b: list[float]) -> float:
    s = 0.0
    for x, y in zip(a, b):
        s += x * y
    return s


def _cosine(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise ScoringError(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = a.values.tolist()
    bv = b.values.tolist()
    na = math.sqrt(_dot(av, av))
    nb = math.sqrt(_dot(bv, bv))
    if na == 0.0 or nb == 0.0:
        raise ScoringError("cosine similarity undefined for a zero vector")
    return _dot(av, bv) / (na * nb)


def similarity(text_emb: Embedding, image_emb: Embedding, sim_mode: str = "cosine") -> float:
    """Similarity of a text and an image embedding.

    "cosine" is the raw cosine in [-1, 1]; "clipscore" rescales it as
    2.5 * max(cosine, 0).
    """
    cos = _cosine(text_emb, image_emb)
    if sim_mode == "cosine":
        return cos
    if sim_mode == "clipscore":
        return 2.5 * max(cos, 0.0)
    raise ScoringError(f"unknown sim_mode {sim_mode!r}")


def candidate_distribution(scores: Sequence[float]) -> list[float]:
    """Softmax over one image's candidate scores.

    Shift-invariant and order-preserving; the output sums to 1 within 1e-9.
    """
    if len(scores) == 0:
        raise ScoringError("candidate_distribution requires a non-empty score list")
    for s in scores:
        if not math.isfinite(s):
            raise ScoringError(f"non-finite score {s!r}")
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def region_similarity(
    text_emb: Embedding,
    rep: RegionRepresentation,
    delta: float,
    sim_mode: str = "cosine",
) -> float:
    """Blur/crop mix: delta * sim(text, blur) + (1 - delta) * sim(text, crop)."""
    if not 0.0 <= delta <= 1.0:
        raise ScoringError(f"delta must be in [0, 1], got {delta}")
    blur_sim = similarity(text_emb, rep.blur_emb, sim_mode)
    crop_sim = similarity(text_emb, rep.crop_emb, sim_mode)
    return delta * blur_sim + (1.0 - delta) * crop_sim


def disclip_score(s_plus: float, s_minus: Sequence[float], lambda_: float) -> float:
    """Target-vs-distractors mix: lambda * S+ - (1 - lambda) * mean(S-).

    An empty distractor list contributes 0, reducing to lambda * S+.
    """
    if not 0.0 <= lambda_ <= 1.0:
        raise ScoringError(f"lambda must be in [0, 1], got {lambda_}")
    if not math.isfinite(s_plus):
        raise ScoringError(f"non-finite s_plus {s_plus!r}")
    for s in s_minus:
        if not math.isfinite(s):
            raise ScoringError(f"non-finite distractor similarity {s!r}")
    mean = sum(s_minus) / len(s_minus) if len(s_minus) else 0.0
    return lambda_ * s_plus - (1.0 - lambda_) * mean


def _degeneration_penalty(hidden_v: Embedding, prev_hiddens: Sequence[Embedding]) -> float:
    """Max cosine against any previous hidden state; 0 with no history."""
    penalty = 0.0
    for i, prev in enumerate(prev_hiddens):
        cos = _cosine(hidden_v, prev)
        if i == 0 or cos > penalty:
            penalty = cos
    return penalty


def language_score(
    p_model: float,
    hidden_v: Embedding,
    prev_hiddens: Sequence[Embedding],
    alpha: float,
) -> float:
    """(1 - alpha) * p_model - alpha * max cos(hidden_v, previous hiddens)."""
    if not 0.0 <= alpha <= 1.0:
        raise ScoringError(f"alpha must be in [0, 1], got {alpha}")
    penalty = _degeneration_penalty(hidden_v, prev_hiddens)
    return (1.0 - alpha) * p_model - alpha * penalty


def fused_score(l_lang: float, l_disclip: float, beta: float) -> float:
    """Decoding objective: l_lang + beta * l_disclip."""
    if beta < 0.0:
        raise ScoringError(f"beta must be >= 0, got {beta}")
    if not (math.isfinite(l_lang) and math.isfinite(l_disclip)):
        raise ScoringError("non-finite fused_score inputs")
    return l_lang + beta * l_disclip


def score_candidates(
    candidates: Sequence[tuple[int, float, Embedding]],
    text_embs: Sequence[Embedding],
    target_rep: RegionRepresentation,
    distractor_reps: Sequence[RegionRepresentation],
    prev_hiddens: Sequence[Embedding],
    hyper: Hyperparameters,
) -> list[CandidateScore]:
    """Score every candidate token of one decoding step.

    Similarities are computed per region over all k candidates; in softmax
    normalization mode each region's k-vector is renormalized with
    `candidate_distribution` before the target/distractor mix.
    """
    if len(candidates) != len(text_embs):
        raise ScoringError(
            f"candidates and text embeddings disagree on length: "
            f"{len(candidates)} vs {len(text_embs)}"
        )
    if len(candidates) == 0:
        raise ScoringError("score_candidates requires at least one candidate")

    target_sims = [
        region_similarity(te, target_rep, hyper.delta, hyper.sim_mode) for te in text_embs
    ]
    distractor_sims = [
        [region_similarity(te, rep, hyper.delta, hyper.sim_mode) for te in text_embs]
        for rep in distractor_reps
    ]
    if hyper.norm_mode == "softmax":
        target_sims = candidate_distribution(target_sims)
        distractor_sims = [candidate_distribution(sims) for sims in distractor_sims]

    out = []
    for i, (token, p_model, hidden) in enumerate(candidates):
        s_plus = target_sims[i]
        s_minus = [sims[i] for sims in distractor_sims]
        l_disclip = disclip_score(s_plus, s_minus, hyper.lambda_)
        s_minus_mean = sum(s_minus) / len(s_minus) if s_minus else 0.0
        penalty = _degeneration_penalty(hidden, prev_hiddens)
        l_lang = (1.0 - hyper.alpha) * p_model - hyper.alpha * penalty
        fused = fused_score(l_lang, l_disclip, hyper.beta)
        out.append(
            CandidateScore(
                token=token,
                p_model=p_model,
                hidden=hidden,
                s_plus=s_plus,
                s_minus_mean=s_minus_mean,
                l_disclip=l_disclip,
                degen_penalty=penalty,
                l_lang=l_lang,
                fused=fused,
            )
        )
    return out


def best_candidate(scores: Sequence[CandidateScore]) -> int:
    """Index of the fused-score argmax; ties go to the lowest token id."""
    if not scores:
        raise ScoringError("best_candidate requires at least one candidate")
    best = 0
    for i in range(1, len(scores)):
        current, leader = scores[i], scores[best]
        if current.fused > leader.fused or (
            current.fused == leader.fused and current.token < leader.token
        ):
            best = i
    return best
