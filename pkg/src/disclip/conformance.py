"""Backend interface conformance checks.

Any backend (in-process or remote) passing these checks is usable by the
decoding loop without modification: deterministic outputs, top-k sorted by
probability with ties on token id, probabilities in (0, 1], and a fixed
embedding dimension. Checks raise `ConformanceFailure` naming the first
violated property.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from disclip.imaging import Image


class ConformanceFailure(AssertionError):
    """A backend violated an interface property."""


def _require(condition: bool, message: str):
    if not condition:
        raise ConformanceFailure(message)


def check_language_model(lm, contexts: Sequence[Sequence[int]], k: int = 5):
    """Determinism, ordering, bounds, and tokenizer round-trip checks."""
    _require(isinstance(lm.eot_token, int) and lm.eot_token >= 0, "eot_token must be a token id")
    for context in contexts:
        first = lm.top_k(list(context), k)
        second = lm.top_k(list(context), k)
        _require(len(first) >= 1, "top_k returned no candidates")
        _require(len(first) <= k, f"top_k returned {len(first)} > k={k} candidates")
        _require(
            len(first) == len(second)
            and all(a[0] == b[0] and a[1] == b[1] for a, b in zip(first, second)),
            "top_k is not deterministic for a fixed context",
        )
        _require(
            all(
                np.array_equal(a[2].values, b[2].values)
                for a, b in zip(first, second)
            ),
            "top_k hidden states are not deterministic",
        )
        for token, p, hidden in first:
            _require(isinstance(token, int) and token >= 0, f"bad token id {token!r}")
            _require(0.0 < p <= 1.0, f"probability {p} outside (0, 1]")
            _require(hidden.dim == first[0][2].dim, "hidden state dimensions vary")
        keys = [(-p, token) for token, p, _ in first]
        _require(keys == sorted(keys), "top_k not sorted by p desc, token id asc")
    roundtrip = lm.detokenize(lm.tokenize("a photo of"))
    _require(isinstance(roundtrip, str) and roundtrip.strip() != "", "tokenize/detokenize broken")


def check_encoder(encoder, texts: Sequence[str], images: Sequence[Image]):
    """Determinism and fixed-dimension checks for both encoder paths."""
    _require(isinstance(encoder.dim, int) and encoder.dim >= 1, "encoder.dim must be positive")
    for text in texts:
        first = encoder.encode_text(text)
        second = encoder.encode_text(text)
        _require(first.dim == encoder.dim, f"text embedding dim {first.dim} != {encoder.dim}")
        _require(np.array_equal(first.values, second.values), "encode_text not deterministic")
        _require(bool(np.all(np.isfinite(first.values))), "non-finite text embedding")
    for image in images:
        first = encoder.encode_image(image)
        second = encoder.encode_image(image)
        _require(first.dim == encoder.dim, f"image embedding dim {first.dim} != {encoder.dim}")
        _require(np.array_equal(first.values, second.values), "encode_image not deterministic")
        _require(bool(np.all(np.isfinite(first.values))), "non-finite image embedding")


def check_backend(lm, encoder, contexts=None, texts=None, images=None, k: int = 5):
    """Run the full conformance suite with reasonable defaults."""
    if contexts is None:
        contexts = [[], [lm.eot_token]]
    if texts is None:
        texts = ["a photo of", "a"]
    if images is None:
        arr = np.zeros((8, 8, 3), dtype=np.uint8)
        arr[2:6, 2:6] = (255, 0, 1)
        images = [Image.from_array(arr)]
    check_language_model(lm, contexts, k=k)
    check_encoder(encoder, texts, images)
