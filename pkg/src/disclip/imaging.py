"""Visual inputs for regions: crop, blur-except, and mirror-pad variants.

All operations are pure functions over immutable `Image` values and are
deterministic byte-for-byte. Each region view is resized to the encoder's
square native resolution with bilinear resampling (aspect ratio is not
preserved, except by `mirror_pad_crop`, which squares the crop first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from disclip import _kernels
from disclip.core import BBox, DisclipError, Embedding, RegionRepresentation

REP_MODES = ("crop_blur", "blur", "mirror", "crop")


class ImagingError(DisclipError, ValueError):
    """Invalid imaging input, e.g. a box outside the image bounds."""


@dataclass(frozen=True)
class Image:
    """An 8-bit RGB raster stored as row-major packed bytes."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise ImagingError(
                f"pixel buffer has {len(self.pixels)} bytes, expected "
                f"{expected} for {self.width}x{self.height} RGB"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImagingError(f"expected (h, w, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self.pixels, dtype=np.uint8)
        return arr.reshape(self.height, self.width, 3)


@dataclass(frozen=True)
class ImagingConfig:
    """Knobs of the region-view pipeline.

    encoder_resolution  square side the encoder consumes
    blur_sigma          Gaussian sigma in source pixels (radius = ceil(3*sigma))
    border_mode         blur edge handling; only clamp-to-edge is supported
    """

    encoder_resolution: int = 224
    blur_sigma: float = 10.0
    border_mode: str = "clamp"

    def __post_init__(self):
        if self.encoder_resolution < 1:
            raise ImagingError(f"encoder_resolution must be >= 1, got {self.encoder_resolution}")
        if self.blur_sigma < 0:
            raise ImagingError(f"blur_sigma must be >= 0, got {self.blur_sigma}")
        if self.border_mode != "clamp":
            raise ImagingError(f"unsupported border_mode {self.border_mode!r}")


def _int_bounds(image: Image, bbox: BBox) -> tuple[int, int, int, int]:
    """Integer pixel bounds of a box, validated against the image."""
    x0, y0 = int(bbox.x), int(bbox.y)
    x1, y1 = int(round(bbox.x + bbox.w)), int(round(bbox.y + bbox.h))
    if x1 <= x0 or y1 <= y0:
        raise ImagingError(f"bbox collapses to zero pixels: {bbox}")
    if x0 < 0 or y0 < 0 or x1 > image.width or y1 > image.height:
        raise ImagingError(
            f"bbox ({bbox.x}, {bbox.y}, {bbox.w}, {bbox.h}) out of bounds for "
            f"{image.width}x{image.height} image"
        )
    return x0, y0, x1, y1


def crop_region(image: Image, bbox: BBox, cfg: ImagingConfig) -> Image:
    """The box sub-image, bilinearly resized to the encoder resolution."""
    x0, y0, x1, y1 = _int_bounds(image, bbox)
    crop = image.to_array()[y0:y1, x0:x1]
    res = cfg.encoder_resolution
    return Image.from_array(_kernels.resize_bilinear(crop, res, res))


def blur_except(image: Image, bbox: BBox, cfg: ImagingConfig) -> Image:
    """The whole image blurred, with the box kept sharp, then resized.

    The Gaussian uses clamp-to-edge borders; original pixels are composited
    back inside the box bit-exactly before the resize.
    """
    res = cfg.encoder_resolution
    composite = blur_except_full(image, bbox, cfg)
    return Image.from_array(_kernels.resize_bilinear(composite.to_array(), res, res))


def blur_except_full(image: Image, bbox: BBox, cfg: ImagingConfig) -> Image:
    """`blur_except` before the final resize, at source resolution."""
    x0, y0, x1, y1 = _int_bounds(image, bbox)
    src = image.to_array()
    kernel = _kernels.gaussian_kernel(cfg.blur_sigma)
    blurred = _kernels.blur(src, kernel)
    blurred[y0:y1, x0:x1] = src[y0:y1, x0:x1]
    return Image.from_array(blurred)


def _mirror_indices(size: int, target: int) -> np.ndarray:
    """Symmetric-extension index map appending reflections after `size`."""
    period = 2 * size
    idx = np.arange(target) % period
    return np.where(idx < size, idx, period - 1 - idx)


def mirror_pad_crop(image: Image, bbox: BBox, cfg: ImagingConfig) -> Image:
    """The crop squared by mirror-reflecting its shorter axis, then resized.

    Content is extended past the original edge by symmetric reflection
    (edge row/column included), repeating as needed; a square box gives
    exactly the `crop_region` result.
    """
    x0, y0, x1, y1 = _int_bounds(image, bbox)
    crop = image.to_array()[y0:y1, x0:x1]
    h, w = crop.shape[:2]
    side = max(h, w)
    if h < side:
        crop = crop[_mirror_indices(h, side), :, :]
    elif w < side:
        crop = crop[:, _mirror_indices(w, side), :]
    res = cfg.encoder_resolution
    return Image.from_array(_kernels.resize_bilinear(crop, res, res))


def represent_region(
    image: Image,
    bbox: BBox,
    cfg: ImagingConfig,
    encoder,
    rep_mode: str = "crop_blur",
) -> RegionRepresentation:
    """Encode a region's crop and blur views into a representation pair.

    `rep_mode` selects the ablation variant: "crop_blur" is the full pair;
    "crop", "blur", and "mirror" use a single view for both slots, making
    the downstream blur/crop mix a no-op.
    """
    if rep_mode not in REP_MODES:
        raise ImagingError(f"rep_mode must be one of {REP_MODES}, got {rep_mode!r}")
    if rep_mode == "crop_blur":
        crop_emb = encoder.encode_image(crop_region(image, bbox, cfg))
        blur_emb = encoder.encode_image(blur_except(image, bbox, cfg))
        return RegionRepresentation(crop_emb=crop_emb, blur_emb=blur_emb)
    if rep_mode == "crop":
        view = crop_region(image, bbox, cfg)
    elif rep_mode == "blur":
        view = blur_except(image, bbox, cfg)
    else:
        view = mirror_pad_crop(image, bbox, cfg)
    emb: Embedding = encoder.encode_image(view)
    return RegionRepresentation(crop_emb=emb, blur_emb=emb)
