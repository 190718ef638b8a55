#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field

from omegaconf import MISSING

from objmst.abstractions.segmenter import Segmenter, SegmenterArgs
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.operations.ingest import load_mask, resize_mask
from objmst.operations.registry import register_objmst_abstraction

SEGMENTER_TYPE = "mask_file"


@dataclass
class MaskFileSegmenterArgs(SegmenterArgs):
    _segmenter_type: str = SEGMENTER_TYPE
    mask_path: str = field(
        default=MISSING, metadata={"help": "Single-channel mask image to use"}
    )


@register_objmst_abstraction()
class MaskFileSegmenter(Segmenter):
    """Reads a precomputed mask, resized (nearest) to the image"""

    ArgsClass = MaskFileSegmenterArgs
    SEGMENTER_TYPE = SEGMENTER_TYPE

    def _segment(self, image: ImagePlane) -> BinaryMask:
        mask = load_mask(
            self.args.mask_path, resolution=None, threshold=self.args.threshold
        )
        return resize_mask(mask, image.size)
