#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import torch

from objmst.data_model.constants import MIN_IMAGE_SIDE, MIN_MASK_FRACTION
from objmst.data_model.exceptions import (
    DimensionMismatch,
    EmptyMask,
    ImageTooSmall,
    ValidationError,
)


class ImagePlane:
    """
    An RGB image with values in [0, 1], the currency every stage trades in.

    Pixels are held as a float32 torch tensor laid out (3, H, W) so they can
    be fed to the networks directly; `to_numpy` gives the H x W x 3 view.
    """

    def __init__(self, pixels: torch.Tensor, validate: bool = True):
        if pixels.dim() != 3 or pixels.shape[0] != 3:
            raise ValidationError(
                f"ImagePlane expects a (3, H, W) tensor, got {tuple(pixels.shape)}"
            )
        self.pixels = pixels.detach().to(torch.float32)
        if validate:
            self.validate()

    @property
    def height(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[2])

    @property
    def size(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def validate(self) -> None:
        if self.height < MIN_IMAGE_SIDE or self.width < MIN_IMAGE_SIDE:
            raise ImageTooSmall(
                f"Images must be at least {MIN_IMAGE_SIDE}px per side, got {self.size}"
            )
        if not bool(torch.isfinite(self.pixels).all()):
            raise ValidationError("ImagePlane contains non-finite values")
        if float(self.pixels.min()) < 0.0 or float(self.pixels.max()) > 1.0:
            raise ValidationError("ImagePlane values must lie within [0, 1]")

    @staticmethod
    def from_numpy(array: np.ndarray) -> "ImagePlane":
        """Build from an H x W x 3 float array in [0, 1]"""
        return ImagePlane(torch.from_numpy(np.ascontiguousarray(array)).permute(2, 0, 1))

    @staticmethod
    def from_batch(batch: torch.Tensor) -> "ImagePlane":
        """Build from a (1, 3, H, W) network output, clamping to [0, 1]"""
        return ImagePlane(batch[0].detach().clamp(0.0, 1.0))

    def to_numpy(self) -> np.ndarray:
        return self.pixels.permute(1, 2, 0).cpu().numpy()

    def as_batch(self, device: "torch.device" = None) -> torch.Tensor:
        batch = self.pixels.unsqueeze(0)
        return batch if device is None else batch.to(device)

    def equals(self, other: "ImagePlane") -> bool:
        """Bitwise equality"""
        return self.size == other.size and bool(torch.equal(self.pixels, other.pixels))

    def __repr__(self) -> str:
        return f"ImagePlane({self.height}x{self.width})"


class BinaryMask:
    """
    A {0, 1} mask over an image marking the salient object. Values are held
    as a float32 (H, W) tensor so they multiply straight into image planes.
    """

    def __init__(self, values: torch.Tensor):
        if values.dim() != 2:
            raise ValidationError(
                f"BinaryMask expects an (H, W) tensor, got {tuple(values.shape)}"
            )
        values = values.detach().to(torch.float32)
        if not bool(((values == 0) | (values == 1)).all()):
            raise ValidationError("BinaryMask values must be exactly 0 or 1")
        self.values = values

    @staticmethod
    def from_soft(values: torch.Tensor, threshold: float) -> "BinaryMask":
        """Threshold a soft (H, W) mask; values at or above threshold become 1"""
        return BinaryMask((values >= threshold).to(torch.float32))

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def size(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def area_fraction(self) -> float:
        return float(self.values.mean())

    def invert(self) -> "BinaryMask":
        return BinaryMask(1.0 - self.values)

    def check_pairs_with(self, image: ImagePlane) -> None:
        if self.size != image.size:
            raise DimensionMismatch(image.size, self.size)

    def require_foreground(self, min_fraction: float = MIN_MASK_FRACTION) -> None:
        """Salient modes need a foreground of at least min_fraction of the frame"""
        if self.area_fraction < min_fraction:
            raise EmptyMask(
                f"Mask covers {self.area_fraction:.4f} of the frame, "
                f"below the floor of {min_fraction}"
            )

    def __repr__(self) -> str:
        return f"BinaryMask({self.height}x{self.width}, fg={self.area_fraction:.3f})"


@dataclass
class PatchSet:
    """
    N_crop cropped and augmented views of one image. The crop boxes
    (top, left, height, width) are kept so the draws can be audited.
    """

    patches: List[ImagePlane]
    source_id: str
    seed: int
    boxes: List[Tuple[int, int, int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def patch_size(self) -> Tuple[int, int]:
        return self.patches[0].size

    def as_batch(self) -> torch.Tensor:
        return torch.stack([p.pixels for p in self.patches])

    def equals(self, other: "PatchSet") -> bool:
        return (
            len(self) == len(other)
            and self.boxes == other.boxes
            and all(a.equals(b) for a, b in zip(self.patches, other.patches))
        )
