#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Image and mask I/O, masking, and the crop/augment family that turns an image
into the patch views the directional loss is computed over.
"""

import os
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
import torch
import torchvision.transforms.functional as TF
from PIL import Image, UnidentifiedImageError
from torchvision.transforms import InterpolationMode

from objmst.data_model.constants import (
    MASK_THRESHOLD,
    MIN_MASK_FRACTION,
    WORKING_RESOLUTION,
)
from objmst.data_model.exceptions import (
    CorruptImage,
    ImageFileNotFound,
    ImageTooSmall,
    SegmenterUnavailable,
    UnsupportedFormat,
)
from objmst.data_model.image import BinaryMask, ImagePlane, PatchSet
from objmst.data_model.job_spec import IngestArgs
from objmst.operations.logger_core import get_logger
from objmst.operations.utils import atomic_write

if TYPE_CHECKING:
    from objmst.abstractions.segmenter import Segmenter

logger = get_logger(name=__name__)

SUPPORTED_FORMATS = ("PNG", "JPEG")
Box = Tuple[int, int, int, int]


def _open_raster(path: str) -> Image.Image:
    if not os.path.exists(path):
        raise ImageFileNotFound(path)
    try:
        pil_image = Image.open(path)
        fmt = pil_image.format
        pil_image.load()
    except UnidentifiedImageError:
        raise UnsupportedFormat(path, "unknown")
    except (OSError, SyntaxError) as e:
        raise CorruptImage(path, str(e))
    if fmt not in SUPPORTED_FORMATS:
        raise UnsupportedFormat(path, fmt)
    return pil_image


def _fit_square(
    pixels: torch.Tensor, resolution: int, interpolation: InterpolationMode
) -> torch.Tensor:
    """Resize the short side to resolution (aspect kept), then center-crop"""
    height, width = pixels.shape[-2:]
    if height == resolution and width == resolution:
        return pixels
    if min(height, width) != resolution:
        pixels = TF.resize(
            pixels,
            resolution,
            interpolation=interpolation,
            antialias=interpolation != InterpolationMode.NEAREST,
        )
    return TF.center_crop(pixels, [resolution, resolution])


def load_image(path: str, resolution: Optional[int] = WORKING_RESOLUTION) -> ImagePlane:
    """
    Load a PNG or JPEG as an ImagePlane in [0, 1]. With a resolution the
    image is brought to resolution x resolution; with None it is kept native.
    """
    pil_image = _open_raster(path).convert("RGB")
    array = np.asarray(pil_image, dtype=np.float32) / 255.0
    pixels = torch.from_numpy(array.copy()).permute(2, 0, 1)
    if resolution:
        pixels = _fit_square(pixels, resolution, InterpolationMode.BILINEAR)
    logger.debug(f"Loaded {path} at {tuple(pixels.shape[1:])}")
    return ImagePlane(pixels.clamp(0.0, 1.0).contiguous())


def save_image(image: ImagePlane, path: str) -> str:
    """Write a PNG atomically"""
    array = (image.to_numpy() * 255.0).round().clip(0, 255).astype(np.uint8)
    with atomic_write(path, "wb") as out_file:
        Image.fromarray(array, "RGB").save(out_file, format="PNG")
    return path


def load_mask(
    path: str,
    resolution: Optional[int] = WORKING_RESOLUTION,
    threshold: float = MASK_THRESHOLD,
) -> BinaryMask:
    """
    Read a single-channel mask, resampled with nearest neighbour the same way
    load_image resamples its image, then threshold it.
    """
    pil_mask = _open_raster(path).convert("L")
    values = torch.from_numpy(np.asarray(pil_mask, dtype=np.float32) / 255.0)
    if resolution:
        values = _fit_square(values.unsqueeze(0), resolution, InterpolationMode.NEAREST)[0]
    return BinaryMask.from_soft(values, threshold)


def save_mask(mask: BinaryMask, path: str) -> str:
    array = (mask.values.cpu().numpy() * 255).astype(np.uint8)
    with atomic_write(path, "wb") as out_file:
        Image.fromarray(array, "L").save(out_file, format="PNG")
    return path


def resize_plane(image: ImagePlane, size: Tuple[int, int]) -> ImagePlane:
    if image.size == tuple(size):
        return image
    resized = TF.resize(
        image.pixels, list(size), interpolation=InterpolationMode.BILINEAR, antialias=True
    )
    return ImagePlane(resized.clamp(0.0, 1.0))


def resize_mask(mask: BinaryMask, size: Tuple[int, int]) -> BinaryMask:
    if mask.size == tuple(size):
        return mask
    resized = TF.resize(
        mask.values.unsqueeze(0), list(size), interpolation=InterpolationMode.NEAREST
    )[0]
    return BinaryMask(resized)


def acquire_mask(
    image: ImagePlane,
    segmenter: Optional["Segmenter"] = None,
    mask_path: Optional[str] = None,
    threshold: float = MASK_THRESHOLD,
    min_fraction: Optional[float] = MIN_MASK_FRACTION,
) -> BinaryMask:
    """
    Get the salient-object mask of image, either from a precomputed mask
    file (which bypasses the segmenter) or from the segmenter. With a
    min_fraction the foreground must cover at least that share of the frame.
    """
    if mask_path is not None:
        mask = load_mask(mask_path, resolution=None, threshold=threshold)
        mask = resize_mask(mask, image.size)
        logger.debug(f"Using precomputed mask {mask_path}: {mask}")
    elif segmenter is not None:
        mask = segmenter.segment(image)
        mask.check_pairs_with(image)
    else:
        raise SegmenterUnavailable(
            "No segmenter configured and no mask file given; pass --mask"
        )
    if min_fraction is not None:
        mask.require_foreground(min_fraction)
    return mask


def apply_mask(image: ImagePlane, mask: BinaryMask) -> ImagePlane:
    """I * M, elementwise; pixels where the mask is 0 become exactly 0"""
    mask.check_pairs_with(image)
    return ImagePlane(image.pixels * mask.values.to(image.pixels.device))


def _sample_box(
    height: int, width: int, args: IngestArgs, generator: torch.Generator
) -> Box:
    u = float(torch.rand((), generator=generator))
    scale = args.crop_scale_min + (args.crop_scale_max - args.crop_scale_min) * u
    side = int(round(args.patch_size * scale))
    side = max(1, min(side, height, width))
    top = int(torch.randint(0, height - side + 1, (), generator=generator))
    left = int(torch.randint(0, width - side + 1, (), generator=generator))
    return (top, left, side, side)


def _sample_perspective(
    size: int, strength: float, generator: torch.Generator
) -> Tuple[List[List[int]], List[List[int]]]:
    """Corner displacements as in torchvision's RandomPerspective, but seeded"""
    half = size // 2
    reach = int(strength * half) + 1

    def jitter() -> int:
        return int(torch.randint(0, reach, (), generator=generator))

    start = [[0, 0], [size - 1, 0], [size - 1, size - 1], [0, size - 1]]
    end = [
        [jitter(), jitter()],
        [size - 1 - jitter(), jitter()],
        [size - 1 - jitter(), size - 1 - jitter()],
        [jitter(), size - 1 - jitter()],
    ]
    return start, end


def crop_and_augment_batch(
    batch: torch.Tensor,
    n_crop: int,
    generator: torch.Generator,
    args: IngestArgs,
) -> Tuple[torch.Tensor, List[Box]]:
    """
    Cut n_crop random crops from a (1, 3, H, W) batch, resize each to the
    patch size and apply perspective jitter. Differentiable with respect to
    the batch, so the inversion loop can crop generator output directly.
    """
    height, width = batch.shape[-2:]
    if min(height, width) < args.patch_size:
        raise ImageTooSmall(
            f"Image {height}x{width} is smaller than the patch size {args.patch_size}"
        )
    patches = []
    boxes: List[Box] = []
    for _ in range(n_crop):
        box = _sample_box(height, width, args, generator)
        top, left, crop_h, crop_w = box
        patch = batch[:, :, top : top + crop_h, left : left + crop_w]
        if crop_h != args.patch_size or crop_w != args.patch_size:
            patch = TF.resize(
                patch,
                [args.patch_size, args.patch_size],
                interpolation=InterpolationMode.BILINEAR,
                antialias=False,
            )
        if args.perspective > 0:
            start, end = _sample_perspective(args.patch_size, args.perspective, generator)
            if start != end:
                patch = TF.perspective(
                    patch, start, end, interpolation=InterpolationMode.BILINEAR, fill=0.0
                )
        patches.append(patch)
        boxes.append(box)
    return torch.cat(patches, dim=0), boxes


def crop_and_augment(
    a: ImagePlane,
    b: ImagePlane,
    n_crop: int,
    seed: int,
    args: Optional[IngestArgs] = None,
    source_ids: Tuple[str, str] = ("a", "b"),
) -> Tuple[PatchSet, PatchSet]:
    """
    N_crop augmented patches of each of a and b. A pure function of
    (inputs, n_crop, seed, args): the draws for a come first, then b, from a
    single generator seeded with seed.
    """
    if args is None:
        args = IngestArgs()
    if n_crop < 1:
        raise ValueError(f"n_crop must be >= 1, got {n_crop}")
    generator = torch.Generator().manual_seed(seed)
    results = []
    for image, source_id in zip((a, b), source_ids):
        batch, boxes = crop_and_augment_batch(image.as_batch(), n_crop, generator, args)
        patches = [ImagePlane(p.clamp(0.0, 1.0)) for p in batch]
        results.append(PatchSet(patches=patches, source_id=source_id, seed=seed, boxes=boxes))
    return results[0], results[1]
