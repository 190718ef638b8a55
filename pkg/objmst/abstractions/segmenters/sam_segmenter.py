#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field
from typing import List

import numpy as np
import torch
from PIL import Image

from objmst.abstractions.segmenter import Segmenter, SegmenterArgs
from objmst.data_model.constants import MIN_MASK_FRACTION
from objmst.data_model.exceptions import EmptyMask, SegmenterUnavailable
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.operations.logger_core import get_logger
from objmst.operations.registry import register_objmst_abstraction

logger = get_logger(name=__name__)

SEGMENTER_TYPE = "sam"
MAX_MASK_FRACTION = 0.99


@dataclass
class SAMSegmenterArgs(SegmenterArgs):
    _segmenter_type: str = SEGMENTER_TYPE
    checkpoint: str = field(
        default="facebook/sam-vit-base",
        metadata={"help": "Hub id or local directory of the Segment Anything model"},
    )
    revision: str = field(default="main", metadata={"help": "Hub revision to pin"})
    points_per_batch: int = field(
        default=64, metadata={"help": "Prompt points evaluated per forward pass"}
    )
    device: str = field(default="cpu", metadata={"help": "Device to run on"})


def pick_salient(masks: List[np.ndarray], min_fraction: float = MIN_MASK_FRACTION) -> np.ndarray:
    """
    The largest proposal that is neither a speck nor the whole frame.
    Raises EmptyMask when no proposal qualifies: the image has no salient object.
    """
    best, best_area = None, -1.0
    for mask in masks:
        area = float(np.asarray(mask, dtype=np.float32).mean())
        if min_fraction <= area <= MAX_MASK_FRACTION and area > best_area:
            best, best_area = mask, area
    if best is None:
        raise EmptyMask(
            f"None of {len(masks)} mask proposals covers between "
            f"{min_fraction} and {MAX_MASK_FRACTION} of the frame"
        )
    return np.asarray(best, dtype=np.float32)


@register_objmst_abstraction()
class SAMSegmenter(Segmenter):
    """Segment Anything automatic mask generation, keeping the dominant object"""

    ArgsClass = SAMSegmenterArgs
    SEGMENTER_TYPE = SEGMENTER_TYPE

    def __init__(self, args):
        super().__init__(args)
        from transformers import pipeline

        try:
            self.generator = pipeline(
                "mask-generation",
                model=args.checkpoint,
                revision=args.get("revision", "main"),
                device=args.get("device", "cpu"),
            )
        except (OSError, ValueError) as e:
            raise SegmenterUnavailable(f"Could not load {args.checkpoint}: {e}")
        logger.debug(f"Loaded mask generator {args.checkpoint}")

    def _segment(self, image: ImagePlane) -> BinaryMask:
        pil_image = Image.fromarray((image.to_numpy() * 255).round().astype(np.uint8))
        outputs = self.generator(
            pil_image, points_per_batch=int(self.args.get("points_per_batch", 64))
        )
        chosen = pick_salient(list(outputs["masks"]))
        return BinaryMask.from_soft(torch.from_numpy(chosen), self.args.threshold)
