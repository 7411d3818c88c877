import numpy as np
import pytest

from disclip._kernels import backend_name, gaussian_kernel
from disclip.backends import ToyEncoder, ToyWorld, build_toy_scene, toy_imaging_config
from disclip.core import BBox, ConfigError
from disclip.imaging import (
    Image,
    ImagingConfig,
    ImagingError,
    blur_except,
    blur_except_full,
    crop_region,
    mirror_pad_crop,
    represent_region,
)
from oracles import reference_bilinear, reference_blur_2d, reference_mirror_indices


def image_from(arr):
    return Image.from_array(np.asarray(arr, dtype=np.uint8))


def cfg_at(resolution, sigma=1.0):
    return ImagingConfig(encoder_resolution=resolution, blur_sigma=sigma)


class TestImageType:
    def test_buffer_length_checked(self):
        with pytest.raises(ImagingError):
            Image(width=2, height=2, pixels=b"\x00" * 11)

    def test_array_round_trip(self, rng):
        arr = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        assert np.array_equal(Image.from_array(arr).to_array(), arr)


class TestCropRegion:
    def test_identity_crop_at_native_resolution(self, rng):
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        img = image_from(arr)
        out = crop_region(img, BBox(0, 0, 16, 16), cfg_at(16))
        assert np.array_equal(out.to_array(), arr)

    def test_left_column_duplicated_on_upscale(self, rng):
        arr = rng.integers(0, 256, size=(2, 2, 3), dtype=np.uint8)
        img = image_from(arr)
        out = crop_region(img, BBox(0, 0, 1, 2), cfg_at(2)).to_array()
        expected = reference_bilinear(arr[:, :1, :], 2, 2)
        assert np.array_equal(out, expected)
        assert np.array_equal(out[:, 0], out[:, 1])
        assert np.array_equal(out[:, 0], arr[:, 0])

    def test_matches_reference_resampler(self, rng):
        for _ in range(5):
            arr = rng.integers(0, 256, size=(9, 13, 3), dtype=np.uint8)
            out = crop_region(image_from(arr), BBox(1, 2, 7, 5), cfg_at(8)).to_array()
            assert np.array_equal(out, reference_bilinear(arr[2:7, 1:8, :], 8, 8))

    def test_zero_width_bbox_rejected(self):
        with pytest.raises(ConfigError):
            BBox(0, 0, 0, 2)

    def test_out_of_bounds_bbox(self, rng):
        img = image_from(rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8))
        with pytest.raises(ImagingError):
            crop_region(img, BBox(2, 0, 3, 2), cfg_at(4))


class TestBlurExcept:
    def test_sigma_zero_is_identity(self, rng):
        arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        out = blur_except(image_from(arr), BBox(2, 2, 3, 3), cfg_at(8, sigma=0.0))
        assert np.array_equal(out.to_array(), arr)

    def test_constant_image_stays_constant(self):
        arr = np.full((10, 12, 3), 77, dtype=np.uint8)
        out = blur_except(image_from(arr), BBox(1, 1, 2, 2), cfg_at(10, sigma=2.5))
        assert np.all(out.to_array() == 77)

    def test_single_white_pixel_matches_direct_convolution(self):
        arr = np.zeros((5, 5, 3), dtype=np.uint8)
        arr[2, 2] = 255
        bbox = BBox(0, 0, 2, 2)
        out = blur_except_full(image_from(arr), bbox, cfg_at(5, sigma=1.0)).to_array()
        expected = reference_blur_2d(arr, 1.0)
        outside = np.ones((5, 5), dtype=bool)
        outside[0:2, 0:2] = False
        diff = np.abs(out.astype(int) - expected.astype(int))
        assert diff[outside].max() <= 1

    def test_inside_bbox_pixels_bit_exact(self, rng):
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        bbox = BBox(3, 5, 6, 4)
        out = blur_except_full(image_from(arr), bbox, cfg_at(16, sigma=2.0)).to_array()
        assert np.array_equal(out[5:9, 3:9], arr[5:9, 3:9])

    def test_direct_convolution_oracle_within_one_unit(self, rng):
        for _ in range(3):
            arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
            out = blur_except_full(image_from(arr), BBox(0, 0, 1, 1), cfg_at(16, 1.5))
            expected = reference_blur_2d(arr, 1.5)
            diff = np.abs(out.to_array().astype(int) - expected.astype(int))
            diff[0, 0] = 0
            assert diff.max() <= 1

    def test_mean_brightness_of_random_images(self, rng):
        for _ in range(5):
            arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
            out = blur_except_full(image_from(arr), BBox(0, 0, 1, 1), cfg_at(16, 1.0))
            before = arr.reshape(-1, 3).mean(axis=0)
            after = out.to_array().reshape(-1, 3).mean(axis=0)
            assert np.abs(before - after).max() <= 1.0


class TestKernel:
    def test_kernel_normalized(self):
        for sigma in (0.0, 0.3, 1.0, 4.0, 10.0):
            assert abs(gaussian_kernel(sigma).sum() - 1.0) <= 1e-9

    def test_kernel_radius(self):
        assert len(gaussian_kernel(10.0)) == 2 * 30 + 1
        assert len(gaussian_kernel(0.0)) == 1

    def test_backend_reported(self):
        assert backend_name() in ("cython", "numpy")


class TestMirrorPadCrop:
    def test_square_bbox_equals_crop(self, rng):
        arr = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
        img = image_from(arr)
        bbox = BBox(2, 3, 5, 5)
        a = mirror_pad_crop(img, bbox, cfg_at(7))
        b = crop_region(img, bbox, cfg_at(7))
        assert a == b

    def test_wide_crop_reflects_rows(self, rng):
        arr = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        out = mirror_pad_crop(image_from(arr), BBox(1, 2, 4, 2), cfg_at(4)).to_array()
        crop = arr[2:4, 1:5, :]
        rows = reference_mirror_indices(2, 4)
        assert rows == [0, 1, 1, 0]
        assert np.array_equal(out, crop[rows, :, :])

    def test_single_column_repeats(self, rng):
        arr = rng.integers(0, 256, size=(5, 5, 3), dtype=np.uint8)
        out = mirror_pad_crop(image_from(arr), BBox(2, 1, 1, 3), cfg_at(3)).to_array()
        crop = arr[1:4, 2:3, :]
        cols = reference_mirror_indices(1, 3)
        assert cols == [0, 0, 0]
        assert np.array_equal(out, crop[:, cols, :])

    def test_longer_reflection_cycle(self, rng):
        arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        out = mirror_pad_crop(image_from(arr), BBox(0, 0, 2, 5), cfg_at(5)).to_array()
        crop = arr[0:5, 0:2, :]
        cols = reference_mirror_indices(2, 5)
        assert cols == [0, 1, 1, 0, 0]
        assert np.array_equal(out, crop[:, cols, :])

    def test_deterministic(self, rng):
        arr = rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8)
        img = image_from(arr)
        bbox = BBox(1, 1, 3, 7)
        assert mirror_pad_crop(img, bbox, cfg_at(9)) == mirror_pad_crop(img, bbox, cfg_at(9))


class TestRepresentRegion:
    def test_toy_dimension_contract(self, small_world, small_encoder):
        scene = build_toy_scene(small_world, [{"aqua"}, {"violet"}], target_index=0)
        rep = represent_region(
            scene.image, scene.regions[0].bbox, toy_imaging_config(), small_encoder
        )
        assert rep.crop_emb.dim == small_encoder.dim
        assert rep.blur_emb.dim == small_encoder.dim

    def test_identical_inputs_identical_representation(self, small_world, small_encoder):
        scene = build_toy_scene(small_world, [{"aqua"}, {"violet"}], target_index=0)
        cfg = toy_imaging_config()
        a = represent_region(scene.image, scene.regions[0].bbox, cfg, small_encoder)
        b = represent_region(scene.image, scene.regions[0].bbox, cfg, small_encoder)
        assert a == b

    def test_toy_crop_embedding_is_attribute_indicator(self):
        world = ToyWorld(["ball", "red"])
        encoder = ToyEncoder(world)
        scene = build_toy_scene(world, [{"red", "ball"}, {"ball"}], target_index=0)
        rep = represent_region(
            scene.image, scene.regions[0].bbox, toy_imaging_config(), encoder
        )
        assert rep.crop_emb == world.embed_attributes({"red", "ball"})
        assert rep.blur_emb == world.embed_attributes({"red", "ball"})

    def test_rep_mode_variants(self, small_world, small_encoder):
        scene = build_toy_scene(small_world, [{"aqua"}, {"violet"}], target_index=0)
        cfg = toy_imaging_config()
        bbox = scene.regions[0].bbox
        for mode in ("crop", "blur", "mirror"):
            rep = represent_region(scene.image, bbox, cfg, small_encoder, rep_mode=mode)
            assert rep.crop_emb == rep.blur_emb
        with pytest.raises(ImagingError):
            represent_region(scene.image, bbox, cfg, small_encoder, rep_mode="nope")
