import itertools
import math

import numpy as np
import pytest

from disclip.backends import (
    EOT_WORD,
    ToyEncoder,
    ToyLM,
    ToyWorld,
    build_toy_scene,
    default_stop_tokens,
    toy_encode_text,
    toy_imaging_config,
    toy_region_layout,
)
from disclip.conformance import ConformanceFailure, check_backend
from disclip.core import BackendError, ConfigError, validate_scene
from disclip.imaging import blur_except, crop_region
from disclip.scoring import similarity


class TestToyEncodeText:
    def test_two_attribute_indicator(self, small_world):
        emb = toy_encode_text("aqua violet", small_world)
        expected = np.zeros(small_world.dim)
        expected[small_world.attribute_words.index("aqua")] = 1 / math.sqrt(2)
        expected[small_world.attribute_words.index("violet")] = 1 / math.sqrt(2)
        assert np.allclose(emb.values, expected, atol=1e-15)

    def test_all_filler_reserved_axis(self, small_world):
        emb = toy_encode_text("a photo of a", small_world)
        expected = np.zeros(small_world.dim)
        expected[-1] = 1.0
        assert np.array_equal(emb.values, expected)

    def test_duplicates_collapse(self, small_world):
        assert toy_encode_text("aqua aqua aqua", small_world) == toy_encode_text(
            "aqua", small_world
        )

    def test_perfect_match_cosine(self, small_world):
        text = toy_encode_text("aqua violet", small_world)
        region = small_world.embed_attributes({"aqua", "violet"})
        assert similarity(text, region) == pytest.approx(1.0, abs=1e-12)


class TestClosedFormSimilarity:
    def test_exhaustive_subsets_match_formula(self, small_world):
        words = small_world.attribute_words
        subsets = [
            frozenset(c)
            for r in range(len(words) + 1)
            for c in itertools.combinations(words, r)
        ]
        for text_attrs in subsets:
            for region_attrs in subsets:
                if not text_attrs or not region_attrs:
                    continue
                text = small_world.embed_attributes(text_attrs)
                region = small_world.embed_attributes(region_attrs)
                expected = len(text_attrs & region_attrs) / math.sqrt(
                    len(text_attrs) * len(region_attrs)
                )
                assert abs(similarity(text, region) - expected) <= 1e-12


class TestToyLM:
    def test_uniform_sorted_by_id(self, small_world, small_lm):
        out = small_lm.top_k([], 5)
        assert [t for t, _, _ in out] == [0, 1, 2, 3, 4]
        assert all(p == pytest.approx(1 / small_world.vocab_size) for _, p, _ in out)

    def test_k_truncation_and_cap(self, small_world, small_lm):
        assert len(small_lm.top_k([], 3)) == 3
        assert len(small_lm.top_k([], 10_000)) == small_world.vocab_size

    def test_table_override_sorting(self, small_world):
        size = small_world.vocab_size
        row = np.ones(size)
        row[3] = 5.0
        lm = ToyLM(small_world, table={None: row})
        out = lm.top_k([], 2)
        assert out[0][0] == 3
        assert out[0][1] > out[1][1]

    def test_conditional_row(self, small_world):
        size = small_world.vocab_size
        row = np.ones(size)
        row[1] = 9.0
        lm = ToyLM(small_world, table={0: row})
        assert lm.top_k([0], 1)[0][0] == 1
        assert lm.top_k([2], 1)[0][0] == 0

    def test_hidden_one_hot(self, small_lm):
        token, _, hidden = small_lm.top_k([], 1)[0]
        expected = np.zeros(small_lm.vocab_size)
        expected[token] = 1.0
        assert np.array_equal(hidden.values, expected)

    def test_tokenize_round_trip(self, small_lm):
        tokens = small_lm.tokenize("A photo of aqua")
        assert small_lm.detokenize(tokens) == "a photo of aqua"

    def test_unknown_word(self, small_lm):
        with pytest.raises(BackendError):
            small_lm.tokenize("xyzzy")

    def test_detokenize_skips_eot(self, small_world, small_lm):
        eot = small_world.eot_token
        assert small_lm.detokenize([small_world.word_id("aqua"), eot]) == "aqua"

    def test_bad_table_rejected(self, small_world):
        with pytest.raises(ConfigError):
            ToyLM(small_world, table={None: [1.0]})
        with pytest.raises(ConfigError):
            ToyLM(small_world, table={None: [0.0] * small_world.vocab_size})

    def test_default_stop_tokens(self, small_world, small_lm):
        stops = default_stop_tokens(small_lm)
        assert small_world.eot_token in stops
        assert small_world.word_id(".") in stops


class TestToyEncoderImages:
    def test_crop_view_decodes_attributes(self, small_world, small_encoder):
        scene = build_toy_scene(
            small_world, [{"aqua", "white"}, {"violet"}], target_index=0
        )
        cfg = toy_imaging_config()
        crop = crop_region(scene.image, scene.regions[0].bbox, cfg)
        assert small_encoder.encode_image(crop) == small_world.embed_attributes(
            {"aqua", "white"}
        )

    def test_blur_view_decodes_attributes(self, small_world, small_encoder):
        scene = build_toy_scene(
            small_world, [{"aqua", "white"}, {"violet"}], target_index=0
        )
        cfg = toy_imaging_config()
        for region in scene.regions:
            blur = blur_except(scene.image, region.bbox, cfg)
            assert small_encoder.encode_image(blur) == small_world.embed_attributes(
                region.attributes
            )

    def test_unpainted_image_reserved_axis(self, small_world, small_encoder):
        from disclip.imaging import Image

        arr = np.zeros((8, 8, 3), dtype=np.uint8)
        emb = small_encoder.encode_image(Image.from_array(arr))
        assert emb == small_world.embed_attributes(())


class TestToySceneBuilder:
    def test_layout_counts(self):
        plan = toy_region_layout(4)
        assert len(plan.boxes) == 4
        xs = sorted({box.x for box in plan.boxes})
        assert len(xs) == 2

    def test_scene_validates(self, small_world):
        scene = build_toy_scene(
            small_world, [{"aqua"}, {"violet"}, {"white"}], target_index=2
        )
        validate_scene(scene, scene.image.width, scene.image.height)
        assert scene.target_id == "r2"

    def test_bad_target_index(self, small_world):
        with pytest.raises(ConfigError):
            build_toy_scene(small_world, [{"aqua"}], target_index=5)

    def test_vocab_limit(self):
        with pytest.raises(ConfigError):
            ToyWorld([f"w{i}" for i in range(17)])


class TestConformance:
    def test_toy_backend_passes(self, small_lm, small_encoder):
        check_backend(small_lm, small_encoder)

    def test_detects_unsorted_top_k(self, small_world, small_encoder, small_lm):
        class Shuffled:
            eot_token = small_lm.eot_token
            vocab_size = small_lm.vocab_size

            def tokenize(self, text):
                return small_lm.tokenize(text)

            def detokenize(self, tokens):
                return small_lm.detokenize(tokens)

            def top_k(self, context, k):
                return list(reversed(small_lm.top_k(context, k)))

        with pytest.raises(ConformanceFailure):
            check_backend(Shuffled(), small_encoder)

    def test_world_vocabulary_has_eot(self, small_world):
        assert small_world.vocabulary[-1] == EOT_WORD
