#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import os
from dataclasses import dataclass, field

import torch

from objmst.abstractions.harmonizer import Harmonizer, HarmonizerArgs
from objmst.data_model.exceptions import HarmonizerUnavailable
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.operations.logger_core import get_logger
from objmst.operations.registry import register_objmst_abstraction

logger = get_logger(name=__name__)

HARMONIZER_TYPE = "ssh"


@dataclass
class SSHHarmonizerArgs(HarmonizerArgs):
    _harmonizer_type: str = HARMONIZER_TYPE
    checkpoint: str = field(
        default="",
        metadata={
            "help": (
                "TorchScript export of the self-supervised harmonization network, "
                "called as net(composite, mask) on (1, 3, H, W) / (1, 1, H, W) "
                "tensors in [0, 1]. Resolved from the weights manifest when empty."
            )
        },
    )
    device: str = field(default="cpu", metadata={"help": "Device to run on"})


@register_objmst_abstraction()
class SSHHarmonizer(Harmonizer):
    """Checkpoint-backed self-supervised harmonization network"""

    ArgsClass = SSHHarmonizerArgs
    HARMONIZER_TYPE = HARMONIZER_TYPE

    def __init__(self, args):
        super().__init__(args)
        checkpoint = args.get("checkpoint", "")
        if not checkpoint or not os.path.exists(checkpoint):
            raise HarmonizerUnavailable(
                f"No harmonizer checkpoint found at {checkpoint!r}"
            )
        self.device = torch.device(args.get("device", "cpu"))
        try:
            self.net = torch.jit.load(checkpoint, map_location=self.device).eval()
        except RuntimeError as e:
            raise HarmonizerUnavailable(f"Could not load harmonizer {checkpoint}: {e}")
        logger.debug(f"Loaded harmonizer from {checkpoint}")

    def _harmonize(self, image: ImagePlane, mask: BinaryMask) -> ImagePlane:
        composite = image.as_batch(self.device)
        mask_batch = mask.values.view(1, 1, *mask.size).to(self.device)
        with torch.no_grad():
            out = self.net(composite, mask_batch)
        return ImagePlane.from_batch(out.cpu())
