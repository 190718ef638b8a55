#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Background compositing and harmonization. The stylized salient object is
pasted over a background built from the surrounding-style representations
(or the original content), the seam is feathered, and a harmonizer adjusts
the object toward its new surroundings.
"""

import math
from typing import Dict, List, Optional

import torch
import torch.nn.functional as F
import torchvision.transforms.functional as TF
from omegaconf import OmegaConf

from objmst.abstractions.harmonizer import Harmonizer
from objmst.data_model.composite import Composite, HarmonizedOutput
from objmst.data_model.constants import TARGET_BG
from objmst.data_model.exceptions import EmptyBgReps, HarmonizerUnavailable, ValidationError
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.data_model.latent import StyleRepresentation
from objmst.operations.ingest import resize_plane
from objmst.operations.logger_core import get_logger
from objmst.operations.registry import get_harmonizer_from_type
from objmst.tools.misc import warn_once

logger = get_logger(name=__name__)

BG_FILL_RESIZE = "resize"
BG_FILL_TILE = "tile"
DEGRADED_TYPE = "none"


def composite_over(
    foreground: ImagePlane,
    background: ImagePlane,
    mask: BinaryMask,
    provenance: Optional[Dict[str, str]] = None,
) -> Composite:
    """Hard blend: mask == 1 takes the foreground pixel, mask == 0 the background pixel"""
    mask.check_pairs_with(foreground)
    mask.check_pairs_with(background)
    inside = mask.values.bool().unsqueeze(0)
    image = ImagePlane(torch.where(inside, foreground.pixels, background.pixels))
    return Composite(
        image=image,
        mask=mask,
        provenance=dict(provenance or {}),
        foreground=foreground,
        background=background,
    )


def _tile_background(bg_reps: List[StyleRepresentation], size) -> ImagePlane:
    """Lay the reps out on a k x k grid covering the frame, cycling through them"""
    height, width = size
    side = math.ceil(math.sqrt(len(bg_reps)))
    rows = [height * i // side for i in range(side + 1)]
    cols = [width * j // side for j in range(side + 1)]
    canvas = torch.zeros(3, height, width)
    for i in range(side):
        for j in range(side):
            rep = bg_reps[(i * side + j) % len(bg_reps)]
            cell = (rows[i + 1] - rows[i], cols[j + 1] - cols[j])
            resized = F.interpolate(
                rep.image.as_batch(), size=cell, mode="bilinear", align_corners=False
            )
            canvas[:, rows[i] : rows[i + 1], cols[j] : cols[j + 1]] = resized[0]
    return ImagePlane(canvas.clamp(0.0, 1.0))


def background_from_reps(
    bg_reps: List[StyleRepresentation], size, fill: str = BG_FILL_RESIZE
) -> ImagePlane:
    if len(bg_reps) == 0:
        raise EmptyBgReps("Background compositing needs at least one bg style rep")
    for rep in bg_reps:
        if rep.target != TARGET_BG:
            raise ValidationError(f"Background compositing got a {rep.target} style rep")
    if fill == BG_FILL_RESIZE:
        return resize_plane(bg_reps[0].image, size)
    if fill == BG_FILL_TILE:
        return _tile_background(bg_reps, size)
    raise ValidationError(f"Unknown bg fill {fill}")


def composite_background(
    fg_stylized: ImagePlane,
    mask: BinaryMask,
    bg_reps: List[StyleRepresentation],
    fill: str = BG_FILL_RESIZE,
) -> Composite:
    """
    Fill the background from the surrounding-style reps and copy the
    foreground from the stylized object. `resize` stretches the first rep
    over the frame, `tile` lays every rep out on a grid.
    """
    mask.check_pairs_with(fg_stylized)
    background = background_from_reps(bg_reps, fg_stylized.size, fill)
    bg_source = "bg_rep[0]" if fill == BG_FILL_RESIZE else f"bg_reps[tile x{len(bg_reps)}]"
    return composite_over(
        fg_stylized,
        background,
        mask,
        {"fg_source": "fg_stylized", "bg_source": bg_source},
    )


def source_of_pixel(composite: Composite, row: int, col: int) -> str:
    """Which source a pre-harmonization pixel was taken from"""
    if composite.mask.values[row, col] == 1:
        return composite.fg_source
    return composite.bg_source


def feather(composite: Composite, radius: int = 5) -> ImagePlane:
    """
    Soften the seam with a Gaussian alpha of the given radius. Only the inner
    side of the seam is blended: the stylized foreground carries no content
    outside the mask, so background pixels keep their composite values, as
    do pixels further than `radius` from the mask boundary.
    """
    if radius <= 0 or composite.foreground is None or composite.background is None:
        return composite.image
    kernel = 2 * radius + 1
    hard = composite.mask.values.view(1, 1, *composite.mask.size)
    alpha = TF.gaussian_blur(hard, kernel_size=[kernel, kernel], sigma=[radius / 2.0] * 2)
    dilated = F.max_pool2d(hard, kernel, stride=1, padding=radius)
    eroded = -F.max_pool2d(-hard, kernel, stride=1, padding=radius)
    inner_seam = (dilated != eroded) & (hard > 0)
    alpha = torch.where(inner_seam, alpha, hard)[0]
    blended = alpha * composite.foreground.pixels + (1.0 - alpha) * composite.background.pixels
    return ImagePlane(blended.clamp(0.0, 1.0))


def build_harmonizer(
    harmonizer_type: str, checkpoint: Optional[str] = None, device: str = "cpu"
) -> Harmonizer:
    harmonizer_class = get_harmonizer_from_type(harmonizer_type)
    args = OmegaConf.structured(harmonizer_class.ArgsClass())
    if checkpoint is not None and "checkpoint" in args:
        args.checkpoint = checkpoint
    if "device" in args:
        args.device = device
    return harmonizer_class(args)


def harmonize(
    composite: Composite,
    harmonizer: Optional[Harmonizer] = None,
    feather_radius: int = 5,
) -> HarmonizedOutput:
    """
    Harmonize the foreground (the edited region) into the background. With
    no harmonizer, or one that fails to run, the feathered composite comes
    back flagged as un-harmonized.
    """
    feathered = feather(composite, feather_radius)
    if harmonizer is None:
        warn_once("No harmonizer available, emitting the un-harmonized composite")
        return HarmonizedOutput(feathered, harmonized=False, harmonizer_type=DEGRADED_TYPE)
    try:
        out = harmonizer.harmonize(feathered, composite.mask)
    except HarmonizerUnavailable as e:
        warn_once(f"Harmonizer {harmonizer.HARMONIZER_TYPE} unavailable ({e}), emitting the composite")
        return HarmonizedOutput(feathered, harmonized=False, harmonizer_type=DEGRADED_TYPE)
    logger.debug(f"Harmonized {composite.image.size} composite with {harmonizer.HARMONIZER_TYPE}")
    return HarmonizedOutput(out, harmonized=True, harmonizer_type=harmonizer.HARMONIZER_TYPE)


def mean_color_separation(image: ImagePlane, mask: BinaryMask) -> float:
    """Distance between the mean colors inside and outside the mask"""
    mask.check_pairs_with(image)
    inside = mask.values.bool()
    if not bool(inside.any()) or bool(inside.all()):
        return 0.0
    fg_mean = image.pixels[:, inside].mean(dim=1)
    bg_mean = image.pixels[:, ~inside].mean(dim=1)
    return float((fg_mean - bg_mean).norm())
