#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field

import torch

from objmst.abstractions.harmonizer import Harmonizer, HarmonizerArgs
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.operations.registry import register_objmst_abstraction

HARMONIZER_TYPE = "statistics"


@dataclass
class StatisticsHarmonizerArgs(HarmonizerArgs):
    _harmonizer_type: str = HARMONIZER_TYPE
    strength: float = field(
        default=0.3,
        metadata={
            "help": (
                "How far the foreground colour statistics move toward the "
                "background's, 0 (no change) to 1 (full match)"
            )
        },
    )


def _masked_moments(pixels: torch.Tensor, weights: torch.Tensor):
    total = weights.sum().clamp(min=1.0)
    mean = (pixels * weights).sum(dim=(1, 2)) / total
    var = (((pixels - mean.view(3, 1, 1)) ** 2) * weights).sum(dim=(1, 2)) / total
    return mean.view(3, 1, 1), var.sqrt().view(3, 1, 1)


@register_objmst_abstraction()
class StatisticsHarmonizer(Harmonizer):
    """Weight-free harmonizer: per-channel mean/std matching of the foreground toward the background"""

    ArgsClass = StatisticsHarmonizerArgs
    HARMONIZER_TYPE = HARMONIZER_TYPE

    def _harmonize(self, image: ImagePlane, mask: BinaryMask) -> ImagePlane:
        strength = float(self.args.get("strength", 0.3))
        fg_weights = mask.values.unsqueeze(0)
        bg_weights = 1.0 - fg_weights
        if float(fg_weights.sum()) == 0 or float(bg_weights.sum()) == 0:
            return image
        pixels = image.pixels
        fg_mean, fg_std = _masked_moments(pixels, fg_weights)
        bg_mean, bg_std = _masked_moments(pixels, bg_weights)
        target_mean = fg_mean + strength * (bg_mean - fg_mean)
        target_std = fg_std + strength * (bg_std - fg_std)
        matched = (pixels - fg_mean) / fg_std.clamp(min=1e-6) * target_std + target_mean
        out = torch.where(fg_weights.bool(), matched, pixels)
        return ImagePlane(out.clamp(0.0, 1.0))
