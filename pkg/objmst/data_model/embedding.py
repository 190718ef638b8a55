#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field

import torch

from objmst.data_model.constants import DEFAULT_SOURCE_TEXT
from objmst.data_model.exceptions import DegenerateDirection, ValidationError

DEGENERATE_NORM = 1e-12


class Embedding:
    """A point in the shared text/image embedding space"""

    def __init__(self, values: torch.Tensor):
        if values.dim() != 1:
            raise ValidationError(
                f"Embedding expects a 1-d vector, got {tuple(values.shape)}"
            )
        if not bool(torch.isfinite(values).all()):
            raise ValidationError("Embedding contains non-finite values")
        self.values = values
        self.norm = float(values.detach().norm())

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __sub__(self, other: "Embedding") -> "Direction":
        return Direction(self.values - other.values)

    def cosine(self, other: "Embedding") -> float:
        return float(
            torch.nn.functional.cosine_similarity(
                self.values.detach().double(), other.values.detach().double(), dim=0
            )
        )


class Direction:
    """The difference of two embeddings"""

    def __init__(self, values: torch.Tensor):
        if values.dim() != 1:
            raise ValidationError(
                f"Direction expects a 1-d vector, got {tuple(values.shape)}"
            )
        self.values = values

    @property
    def norm(self) -> float:
        return float(self.values.detach().norm())

    def is_degenerate(self) -> bool:
        return self.norm <= DEGENERATE_NORM

    def require_nondegenerate(self, what: str) -> "Direction":
        if self.is_degenerate():
            raise DegenerateDirection(
                f"The {what} direction is zero; its cosine is undefined"
            )
        return self

    def scaled(self, factor: float) -> "Direction":
        return Direction(self.values * factor)


@dataclass
class LossConfig:
    """Weights of the masked directional loss"""

    lambda_: float = field(
        default=1.0,
        metadata={"help": "Weight of the image-image directional term (>= 0)"},
    )
    source_text: str = field(
        default=DEFAULT_SOURCE_TEXT,
        metadata={"help": "Source text every text direction is measured from"},
    )
    n_crop: int = field(
        default=16, metadata={"help": "Number of patch views per image in the loss"}
    )
    norm_epsilon: float = field(
        default=0.0,
        metadata={
            "help": (
                "If > 0, stabilise cosines with this epsilon in the norm instead of "
                "raising DegenerateDirection on zero directions"
            )
        },
    )

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lambda_}")
        if self.n_crop < 1:
            raise ValidationError(f"n_crop must be >= 1, got {self.n_crop}")
