"""Listener-based comprehension accuracy plus standard language metrics.

The built-in listener scores an expression against every region in the
shared embedding space and predicts the argmax region. Box accuracy uses
the IoU >= 0.5 rule. Language metrics operate on token lists produced by
`metric_tokens` (lowercase, punctuation stripped, whitespace split) so
reported values are reproducible bit-for-bit.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from disclip.backends import Encoder
from disclip.core import BBox, DisclipError
from disclip.decoding import SceneEmbeddings
from disclip.scoring import region_similarity


class EvaluationError(DisclipError, ValueError):
    """Invalid evaluation input (empty candidate, empty corpus, ...)."""


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def metric_tokens(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True)
class ListenerPrediction:
    """Argmax region choice with the full per-region score list."""

    predicted_region_id: str
    scores: tuple[tuple[str, float], ...]


def clip_listener(
    expression: str,
    scene_embs: SceneEmbeddings,
    encoder: Encoder,
    delta: float,
    sim_mode: str = "cosine",
) -> ListenerPrediction:
    """Predict which region an expression refers to.

    The expression is encoded once and scored against every region with the
    same blur/crop mix used during generation; ties go to the earliest
    region in scene order.
    """
    text_emb = encoder.encode_text(expression)
    scores = []
    best_idx = 0
    pairs = scene_embs.all_representations()
    for i, (region_id, rep) in enumerate(pairs):
        value = region_similarity(text_emb, rep, delta, sim_mode)
        scores.append((region_id, value))
        if value > scores[best_idx][1]:
            best_idx = i
    return ListenerPrediction(
        predicted_region_id=scores[best_idx][0], scores=tuple(scores)
    )


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; disjoint boxes score 0."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


def rec_accuracy(
    predictions: Sequence[tuple[BBox, BBox]], threshold: float = 0.5
) -> float:
    """Fraction of (predicted, ground-truth) pairs with IoU >= threshold."""
    if not predictions:
        raise EvaluationError("rec_accuracy requires at least one prediction")
    hits = sum(1 for pred, gt in predictions if iou(pred, gt) >= threshold)
    return hits / len(predictions)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(
    candidate: Sequence[str], references: Sequence[Sequence[str]], n: int
) -> float:
    """Sentence BLEU with uniform weights up to n-grams, no smoothing.

    Uses clipped n-gram counts, the closest-reference-length brevity
    penalty, and returns 0 when any order has zero precision.
    """
    if not candidate:
        raise EvaluationError("bleu_n requires a non-empty candidate")
    if not references or any(not ref for ref in references):
        raise EvaluationError("bleu_n requires non-empty references")
    if n < 1:
        raise EvaluationError(f"n must be >= 1, got {n}")

    log_precision_sum = 0.0
    for k in range(1, n + 1):
        cand_counts = _ngram_counts(candidate, k)
        guess = max(0, len(candidate) - k + 1)
        if guess == 0:
            return 0.0
        max_ref = Counter()
        for ref in references:
            for gram, count in _ngram_counts(ref, k).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        if clipped == 0:
            return 0.0
        log_precision_sum += math.log(clipped / guess) / n

    cand_len = len(candidate)
    ref_len = min((abs(len(ref) - cand_len), len(ref)) for ref in references)[1]
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                row.append(prev[j - 1] + 1)
            else:
                row.append(max(prev[j], row[j - 1]))
        prev = row
    return prev[len(b)]


def rouge_l(candidate: Sequence[str], reference: Sequence[str], beta: float = 1.2) -> float:
    """LCS F-measure with the conventional recall-favoring beta."""
    if not candidate or not reference:
        raise EvaluationError("rouge_l requires non-empty candidate and reference")
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return ((1.0 + beta * beta) * precision * recall) / (recall + beta * beta * precision)


def _tfidf_vectors(
    tokens: Sequence[str], df: dict, log_docs: float, n: int
) -> list[dict]:
    vecs = []
    for k in range(1, n + 1):
        vec = {}
        for gram, count in _ngram_counts(tokens, k).items():
            idf = log_docs - math.log(max(1.0, df.get(gram, 0.0)))
            vec[gram] = count * idf
        vecs.append(vec)
    return vecs


def _cosine_sparse(a: dict, b: dict) -> float:
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    dot = sum(v * b[g] for g, v in a.items() if g in b)
    return dot / (norm_a * norm_b)


def cider(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[Sequence[str]]],
    corpus: Optional[Sequence[Sequence[Sequence[str]]]] = None,
    n: int = 4,
) -> float:
    """Consensus metric: TF-IDF n-gram cosine, n = 1..4, averaged, x10.

    Document frequencies come from `corpus` (one document per reference
    set); by default the references themselves. Returns the mean over
    candidates of the per-candidate score.
    """
    if len(candidates) != len(references):
        raise EvaluationError("candidates and references disagree on length")
    if not candidates:
        raise EvaluationError("cider requires at least one candidate")
    docs = references if corpus is None else corpus
    if not docs:
        raise EvaluationError("cider requires a non-empty corpus for IDF")

    df: dict = {}
    for doc in docs:
        grams = set()
        for ref in doc:
            for k in range(1, n + 1):
                grams.update(_ngram_counts(ref, k).keys())
        for gram in grams:
            df[gram] = df.get(gram, 0.0) + 1.0
    log_docs = math.log(float(len(docs)))

    scores = []
    for cand, refs in zip(candidates, references):
        if not refs:
            raise EvaluationError("every candidate needs at least one reference")
        cand_vecs = _tfidf_vectors(cand, df, log_docs, n)
        per_n = [0.0] * n
        for ref in refs:
            ref_vecs = _tfidf_vectors(ref, df, log_docs, n)
            for k in range(n):
                per_n[k] += _cosine_sparse(cand_vecs[k], ref_vecs[k])
        mean_over_n = sum(value / len(refs) for value in per_n) / n
        scores.append(10.0 * mean_over_n)
    return sum(scores) / len(scores)


def diversity_stats(
    expressions: Sequence[str],
    reference: Optional[Sequence[str]] = None,
    top_n: int = 10,
) -> dict:
    """Vocabulary size, novel-sentence fraction, and most frequent words.

    Tokenization here is plain lowercased whitespace splitting. Novelty is
    measured against `reference` when given (1.0 means every expression is
    unseen); without a reference set the fraction is defined as 1.0.
    """
    counts = Counter()
    for expression in expressions:
        counts.update(expression.lower().split())
    top_words = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:top_n]

    if reference is None:
        novel = 1.0
    elif not expressions:
        novel = 0.0
    else:
        seen = {ref.lower().strip() for ref in reference}
        fresh = sum(1 for e in expressions if e.lower().strip() not in seen)
        novel = fresh / len(expressions)

    return {
        "vocab_size": len(counts),
        "novel_fraction": novel,
        "top_words": top_words,
    }
