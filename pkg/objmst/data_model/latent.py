#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import torch

from objmst.data_model.constants import TARGET_BG, TARGET_FG
from objmst.data_model.exceptions import ValidationError
from objmst.data_model.image import ImagePlane

LATENT_INIT_RANDOM = "random"
LATENT_INIT_MEAN_W = "mean_w"


class LatentVector:
    """
    A generator latent in W space. Values are (1, w_dim): one style vector
    that the generator broadcasts to all of its synthesis layers.
    """

    def __init__(self, values: torch.Tensor, generator_id: str):
        if not bool(torch.isfinite(values).all()):
            raise ValidationError("LatentVector contains non-finite values")
        self.values = values
        self.generator_id = generator_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "generator_id": self.generator_id,
            "shape": list(self.shape),
            "values": self.values.detach().cpu().flatten().tolist(),
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "LatentVector":
        for key in ["generator_id", "shape", "values"]:
            assert key in data, f"Latent dict missing required field {key}"
        values = torch.tensor(data["values"], dtype=torch.float32).reshape(
            data["shape"]
        )
        return LatentVector(values, data["generator_id"])


@dataclass
class LossRecord:
    step: int
    total: float
    text_term: float
    image_term: float


@dataclass
class StyleRepresentation:
    """A generator-synthesized style exemplar and the latent that produced it"""

    image: ImagePlane
    latent: LatentVector
    target: str
    trajectory: List[LossRecord] = field(default_factory=list)
    best_step: int = 0
    improved: bool = True
    seed: Optional[int] = None

    def __post_init__(self):
        if self.target not in (TARGET_FG, TARGET_BG):
            raise ValidationError(f"Unknown style target {self.target}")

    @property
    def best_loss(self) -> float:
        if len(self.trajectory) == 0:
            return float("nan")
        return min(r.total for r in self.trajectory)


@dataclass
class InversionConfig:
    """Object for grouping the hyperparameters of one latent inversion"""

    steps: int = field(default=300, metadata={"help": "Optimization steps (>= 1)"})
    learning_rate: float = field(
        default=0.05, metadata={"help": "Adam learning rate on the latent"}
    )
    lambda_: float = field(
        default=1.0, metadata={"help": "Weight of the image-image directional term"}
    )
    n_crop: int = field(default=16, metadata={"help": "Patch views per image per step"})
    seed: int = field(default=0, metadata={"help": "Seed for init noise and crops"})
    latent_init: str = field(
        default=LATENT_INIT_MEAN_W,
        metadata={"help": "Latent initialisation, `mean_w` or `random`"},
    )
    init_noise: float = field(
        default=0.05, metadata={"help": "Std of the Gaussian noise added at init"}
    )
    count: int = field(
        default=6, metadata={"help": "Style representations produced per target"}
    )
    masked: bool = field(
        default=True,
        metadata={
            "help": (
                "Subtract the masked content embedding from the image directions. "
                "False selects the unmasked baseline loss."
            )
        },
    )
    lr_schedule: str = field(
        default="constant",
        metadata={"help": "`constant`, or `ramp` for warmup and cosine ramp-down"},
    )
    noise_ramp: float = field(
        default=0.0,
        metadata={
            "help": "Std of latent noise injected early in the run, decaying to 0"
        },
    )
    log_every: int = field(
        default=10, metadata={"help": "Steps between loss checkpoints in the log"}
    )
    resolution: int = field(
        default=0,
        metadata={
            "help": "If > 0, resample generator output to this side before cropping"
        },
    )

    def validate(self) -> None:
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.lambda_ < 0:
            raise ValidationError("lambda must be >= 0")
        if self.n_crop < 1:
            raise ValidationError("n_crop must be >= 1")
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        if self.latent_init not in (LATENT_INIT_RANDOM, LATENT_INIT_MEAN_W):
            raise ValidationError(f"Unknown latent_init {self.latent_init}")
        if self.lr_schedule not in ("constant", "ramp"):
            raise ValidationError(f"Unknown lr_schedule {self.lr_schedule}")
