"""Model interfaces and the deterministic synthetic backend.

The synthetic "toy world" makes every scoring formula analytically
checkable: a text embeds as the L2-normalized indicator of the attribute
words it contains, a region embeds as the indicator of its attributes, so
cos(text, region) = |shared| / sqrt(|text attrs| * |region attrs|) in
closed form.

Region pixels carry the attribute set losslessly: a painted region is a
solid color with R = 255 and the attribute bitmask packed into (G, B).
Blurring can only produce R < 255 outside the sharp box (toy scenes keep
regions small relative to the blur radius and far enough apart), so the
toy image encoder recovers the attribute set of any crop or blur view by
majority vote over exact color matches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from disclip.core import BackendError, BBox, ConfigError, Embedding, Region, Scene
from disclip.imaging import Image

DEFAULT_FILLERS = ("a", "photo", "of")
EOT_WORD = "<eot>"
PERIOD_WORD = "."

# Geometry guaranteeing exact attribute recovery under blur (see module doc):
# region side <= blur radius, pairwise gaps >= kernel width, background margin.
TOY_REGION_SIDE = 10
TOY_REGION_GAP = 25
TOY_MARGIN = 8
TOY_BLUR_SIGMA = 4.0
TOY_ENCODER_RESOLUTION = 64


@runtime_checkable
class LanguageModel(Protocol):
    """Next-token model: tokenize/detokenize plus top-k candidate lookup."""

    eot_token: int

    def tokenize(self, text: str) -> list[int]: ...

    def detokenize(self, tokens: Sequence[int]) -> str: ...

    def top_k(self, context: Sequence[int], k: int) -> list[tuple[int, float, Embedding]]: ...


@runtime_checkable
class Encoder(Protocol):
    """Shared-space encoder for texts and images."""

    dim: int

    def encode_text(self, text: str) -> Embedding: ...

    def encode_image(self, image: Image) -> Embedding: ...


class ToyWorld:
    """Closed vocabulary of attribute and filler words with exact embeddings.

    The embedding space has one axis per attribute word plus a reserved
    axis for texts containing no attribute word at all.
    """

    def __init__(
        self,
        attribute_words: Sequence[str],
        filler_words: Sequence[str] = DEFAULT_FILLERS,
        include_period: bool = True,
    ):
        attribute_words = tuple(attribute_words)
        filler_words = tuple(filler_words)
        if len(attribute_words) > 16:
            raise ConfigError("toy world supports at most 16 attribute words")
        extras = (PERIOD_WORD,) if include_period else ()
        self.attribute_words = attribute_words
        self.vocabulary: tuple[str, ...] = attribute_words + filler_words + extras + (EOT_WORD,)
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ConfigError("toy vocabulary contains duplicate words")
        self._attr_bit = {word: i for i, word in enumerate(attribute_words)}
        self._word_id = {word: i for i, word in enumerate(self.vocabulary)}

    @property
    def dim(self) -> int:
        return len(self.attribute_words) + 1

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def eot_token(self) -> int:
        return self._word_id[EOT_WORD]

    def word_id(self, word: str) -> int:
        try:
            return self._word_id[word]
        except KeyError:
            raise BackendError(f"word {word!r} not in toy vocabulary") from None

    def text_attributes(self, text: str) -> frozenset[str]:
        return frozenset(
            word for word in text.lower().split() if word in self._attr_bit
        )

    def embed_attributes(self, attributes: Iterable[str]) -> Embedding:
        """Normalized indicator over attribute axes; empty set -> reserved axis."""
        attrs = frozenset(attributes)
        vec = np.zeros(self.dim, dtype=np.float64)
        if not attrs:
            vec[-1] = 1.0
            return Embedding(vec)
        for word in attrs:
            if word not in self._attr_bit:
                raise BackendError(f"attribute {word!r} not in toy vocabulary")
            vec[self._attr_bit[word]] = 1.0
        return Embedding(vec / np.sqrt(float(len(attrs))))

    def attribute_color(self, attributes: Iterable[str]) -> tuple[int, int, int]:
        """Solid paint color encoding an attribute set: (255, mask_hi, mask_lo)."""
        mask = 0
        for word in frozenset(attributes):
            if word not in self._attr_bit:
                raise BackendError(f"attribute {word!r} not in toy vocabulary")
            mask |= 1 << self._attr_bit[word]
        return (255, (mask >> 8) & 0xFF, mask & 0xFF)

    def decode_attributes(self, mask: int) -> frozenset[str]:
        mask &= (1 << len(self.attribute_words)) - 1
        return frozenset(
            word for word, bit in self._attr_bit.items() if mask & (1 << bit)
        )


def toy_encode_text(text: str, world: ToyWorld) -> Embedding:
    """Embed a text as the normalized indicator of its attribute words."""
    return world.embed_attributes(world.text_attributes(text))


class ToyEncoder:
    """Deterministic encoder over a toy world; implements `Encoder`."""

    def __init__(self, world: ToyWorld):
        self.world = world
        self.dim = world.dim

    def encode_text(self, text: str) -> Embedding:
        return toy_encode_text(text, self.world)

    def encode_image(self, image: Image) -> Embedding:
        """Recover the dominant painted attribute set from exact colors.

        Counts pixels with R == 255 per (G, B) bitmask and embeds the most
        frequent mask (ties: smallest mask). No such pixel means no painted
        region is visible; that maps to the reserved axis.
        """
        arr = image.to_array()
        marked = arr[arr[:, :, 0] == 255]
        if marked.size == 0:
            return self.world.embed_attributes(())
        masks = marked[:, 1].astype(np.int64) * 256 + marked[:, 2].astype(np.int64)
        counts = np.bincount(masks)
        best_mask = int(np.argmax(counts))
        return self.world.embed_attributes(self.world.decode_attributes(best_mask))


class ToyLM:
    """Deterministic table-driven language model; implements `LanguageModel`.

    The next-token distribution depends only on the previous token:
    `table[last_token]` (falling back to `table[None]`, default uniform).
    Hidden states are one-hot in the token id, so the degeneration penalty
    for repeating a token is exactly the cosine value 1.
    """

    def __init__(
        self,
        world: ToyWorld,
        table: Optional[dict[Optional[int], Sequence[float]]] = None,
    ):
        self.world = world
        size = world.vocab_size
        self._rows: dict[Optional[int], np.ndarray] = {}
        uniform = np.full(size, 1.0 / size, dtype=np.float64)
        rows = dict(table or {})
        rows.setdefault(None, uniform)
        for key, row in rows.items():
            arr = np.asarray(row, dtype=np.float64)
            if arr.shape != (size,):
                raise ConfigError(f"toy LM row for {key!r} must have length {size}")
            if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise ConfigError("toy LM probabilities must be positive and finite")
            self._rows[key] = arr / arr.sum()

    @property
    def eot_token(self) -> int:
        return self.world.eot_token

    @property
    def vocab_size(self) -> int:
        return self.world.vocab_size

    def tokenize(self, text: str) -> list[int]:
        return [self.world.word_id(word) for word in text.lower().split()]

    def detokenize(self, tokens: Sequence[int]) -> str:
        words = []
        for token in tokens:
            if not 0 <= token < self.world.vocab_size:
                raise BackendError(f"token id {token} out of range")
            word = self.world.vocabulary[token]
            if word != EOT_WORD:
                words.append(word)
        return " ".join(words)

    def top_k(self, context: Sequence[int], k: int) -> list[tuple[int, float, Embedding]]:
        if k < 1:
            raise BackendError(f"k must be >= 1, got {k}")
        last = context[-1] if len(context) else None
        row = self._rows.get(last, self._rows[None])
        order = sorted(range(len(row)), key=lambda i: (-row[i], i))[: min(k, len(row))]
        out = []
        for token in order:
            hidden = np.zeros(self.world.vocab_size, dtype=np.float64)
            hidden[token] = 1.0
            out.append((token, float(row[token]), Embedding(hidden)))
        return out


@dataclass(frozen=True)
class ToyScenePlan:
    """Geometry chosen by `build_toy_scene`, useful for assertions."""

    image_width: int
    image_height: int
    boxes: tuple[BBox, ...]


def toy_region_layout(count: int) -> ToyScenePlan:
    """Grid placement keeping regions blur-separable (see module doc)."""
    cols = int(np.ceil(np.sqrt(count)))
    rows = int(np.ceil(count / cols))
    pitch = TOY_REGION_SIDE + TOY_REGION_GAP
    width = 2 * TOY_MARGIN + cols * TOY_REGION_SIDE + (cols - 1) * TOY_REGION_GAP
    height = 2 * TOY_MARGIN + rows * TOY_REGION_SIDE + (rows - 1) * TOY_REGION_GAP
    boxes = []
    for i in range(count):
        r, c = divmod(i, cols)
        boxes.append(
            BBox(
                x=TOY_MARGIN + c * pitch,
                y=TOY_MARGIN + r * pitch,
                w=TOY_REGION_SIDE,
                h=TOY_REGION_SIDE,
            )
        )
    return ToyScenePlan(image_width=width, image_height=height, boxes=tuple(boxes))


def build_toy_scene(
    world: ToyWorld,
    attribute_sets: Sequence[Iterable[str]],
    target_index: int,
    ground_truth: Optional[Sequence[str]] = None,
    region_ids: Optional[Sequence[str]] = None,
) -> Scene:
    """Paint a scene whose regions carry the given attribute sets.

    Regions are laid out on a background of black so that the toy encoder
    recovers each set exactly from both the crop and the blur view.
    """
    if not attribute_sets:
        raise ConfigError("attribute_sets must be non-empty")
    if not 0 <= target_index < len(attribute_sets):
        raise ConfigError(f"target_index {target_index} out of range")
    plan = toy_region_layout(len(attribute_sets))
    canvas = np.zeros((plan.image_height, plan.image_width, 3), dtype=np.uint8)
    regions = []
    for i, (attrs, box) in enumerate(zip(attribute_sets, plan.boxes)):
        attrs = frozenset(attrs)
        color = world.attribute_color(attrs)
        x0, y0 = int(box.x), int(box.y)
        canvas[y0 : y0 + int(box.h), x0 : x0 + int(box.w)] = color
        rid = region_ids[i] if region_ids else f"r{i}"
        regions.append(Region(id=rid, bbox=box, attributes=attrs))
    return Scene(
        image=Image.from_array(canvas),
        regions=tuple(regions),
        target_id=regions[target_index].id,
        ground_truth_expressions=tuple(ground_truth) if ground_truth else None,
    )


def toy_imaging_config():
    """ImagingConfig matched to the toy layout's blur-separability bounds."""
    from disclip.imaging import ImagingConfig

    return ImagingConfig(
        encoder_resolution=TOY_ENCODER_RESOLUTION, blur_sigma=TOY_BLUR_SIGMA
    )


def default_stop_tokens(lm: LanguageModel) -> frozenset[int]:
    """End-of-text plus the period token, when the LM can tokenize one."""
    stops = {lm.eot_token}
    try:
        period = lm.tokenize(".")
    except BackendError:
        period = []
    if len(period) == 1:
        stops.add(period[0])
    return frozenset(stops)
