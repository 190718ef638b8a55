#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar, Type

from omegaconf import MISSING, DictConfig

from objmst.data_model.constants import MASK_THRESHOLD
from objmst.data_model.image import BinaryMask, ImagePlane


@dataclass
class SegmenterArgs:
    """Base class for arguments to configure segmenters"""

    _segmenter_type: str = MISSING
    threshold: float = field(
        default=MASK_THRESHOLD,
        metadata={"help": "Threshold applied to soft masks"},
    )


class Segmenter(ABC):
    """
    Produces the binary salient-object mask of a content image. The mask
    always has the image's size.
    """

    ArgsClass: ClassVar[Type[SegmenterArgs]] = SegmenterArgs
    SEGMENTER_TYPE: str

    def __init__(self, args: DictConfig):
        self.args = args

    @abstractmethod
    def _segment(self, image: ImagePlane) -> BinaryMask:
        raise NotImplementedError()

    def segment(self, image: ImagePlane) -> BinaryMask:
        mask = self._segment(image)
        mask.check_pairs_with(image)
        return mask
