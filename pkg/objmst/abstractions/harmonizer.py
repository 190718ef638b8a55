#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Type

from omegaconf import MISSING, DictConfig

from objmst.data_model.image import BinaryMask, ImagePlane


@dataclass
class HarmonizerArgs:
    """Base class for arguments to configure harmonizers"""

    _harmonizer_type: str = MISSING


class Harmonizer(ABC):
    """
    Adjusts the appearance of the masked (edited) region of a composite so it
    sits consistently in its background. Geometry and size never change.
    """

    ArgsClass: ClassVar[Type[HarmonizerArgs]] = HarmonizerArgs
    HARMONIZER_TYPE: str

    def __init__(self, args: DictConfig):
        """
        Set up the harmonizer, loading any weights it needs. Implementations
        raise HarmonizerUnavailable when they cannot run.
        """
        self.args = args

    @abstractmethod
    def _harmonize(self, image: ImagePlane, mask: BinaryMask) -> ImagePlane:
        raise NotImplementedError()

    def harmonize(self, image: ImagePlane, mask: BinaryMask) -> ImagePlane:
        mask.check_pairs_with(image)
        out = self._harmonize(image, mask)
        assert out.size == image.size, (
            f"{self.HARMONIZER_TYPE} harmonizer changed the size from {image.size} to {out.size}"
        )
        return out
