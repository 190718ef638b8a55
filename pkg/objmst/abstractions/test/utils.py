#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Tiny randomly initialised stand-ins for the pretrained networks, so the
pipeline can be exercised end to end without any checkpoints.
"""

import os
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image

from objmst.data_model.constants import TARGET_FG
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.data_model.job_spec import IngestArgs
from objmst.data_model.latent import LatentVector, StyleRepresentation
from objmst.operations.clip_direction import ClipEncoder
from objmst.operations.inversion import Generator
from objmst.operations.metrics import ContriqueModel
from objmst.operations.transfer import Decoder, TransferModels, VggEncoder, build_mapper

TEST_RESOLUTION = 64
TEST_GENERATOR_ID = "toy_generator"
TEST_INGEST_ARGS = IngestArgs(
    resolution=TEST_RESOLUTION,
    patch_size=32,
    crop_scale_min=0.75,
    crop_scale_max=1.5,
    perspective=0.2,
)


class ToyMapping(nn.Module):
    def __init__(self, z_dim: int, w_dim: int, num_ws: int):
        super().__init__()
        self.num_ws = num_ws
        self.fc = nn.Linear(z_dim, w_dim)
        self.register_buffer("w_avg", torch.zeros(w_dim))

    def forward(self, z: torch.Tensor, c) -> torch.Tensor:
        w = torch.tanh(self.fc(z))
        return w.unsqueeze(1).repeat(1, self.num_ws, 1)


class ToySynthesis(nn.Module):
    def __init__(self, w_dim: int, resolution: int, base: int = 8):
        super().__init__()
        self.base = base
        self.resolution = resolution
        self.fc = nn.Linear(w_dim, 3 * base * base)

    def forward(self, ws: torch.Tensor, noise_mode: str = "const") -> torch.Tensor:
        x = self.fc(ws.mean(dim=1)).view(-1, 3, self.base, self.base)
        x = F.interpolate(
            x, size=(self.resolution, self.resolution), mode="bilinear", align_corners=False
        )
        return torch.tanh(x)


class ToyGenerator(nn.Module):
    """Exposes the attributes of a StyleGAN-family G_ema"""

    def __init__(self, z_dim: int = 8, w_dim: int = 8, num_ws: int = 4, resolution: int = TEST_RESOLUTION):
        super().__init__()
        self.z_dim = z_dim
        self.w_dim = w_dim
        self.num_ws = num_ws
        self.mapping = ToyMapping(z_dim, w_dim, num_ws)
        self.synthesis = ToySynthesis(w_dim, resolution)


def get_test_generator(seed: int = 0) -> Generator:
    torch.manual_seed(seed)
    return Generator(ToyGenerator(), TEST_GENERATOR_ID)


class CharTokenizer:
    """
    Character-level tokenizer with the call surface of the hub tokenizers:
    begin and end tokens around every text, padding with 0. The end token
    has the largest id so either pooling convention finds it.
    """

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size
        self.bos_token_id = vocab_size - 2
        self.eos_token_id = vocab_size - 1

    def _ids(self, text: str) -> List[int]:
        body = [1 + (ord(ch) % (self.vocab_size - 3)) for ch in text.lower()]
        return [self.bos_token_id] + body + [self.eos_token_id]

    def __call__(
        self,
        texts: Union[str, Sequence[str]],
        padding: bool = False,
        return_tensors: Optional[str] = None,
    ) -> Dict[str, object]:
        if isinstance(texts, str):
            return {"input_ids": self._ids(texts)}
        rows = [self._ids(t) for t in texts]
        width = max(len(r) for r in rows)
        ids = [r + [0] * (width - len(r)) for r in rows]
        attention = [[1] * len(r) + [0] * (width - len(r)) for r in rows]
        if return_tensors == "pt":
            return {
                "input_ids": torch.tensor(ids, dtype=torch.long),
                "attention_mask": torch.tensor(attention, dtype=torch.long),
            }
        return {"input_ids": ids, "attention_mask": attention}


def get_test_clip(seed: int = 0, context_length: int = 16) -> ClipEncoder:
    from transformers import CLIPConfig, CLIPModel

    vocab_size = 64
    config = CLIPConfig(
        text_config={
            "vocab_size": vocab_size,
            "hidden_size": 32,
            "intermediate_size": 37,
            "num_hidden_layers": 1,
            "num_attention_heads": 4,
            "max_position_embeddings": context_length,
            "pad_token_id": 0,
            "bos_token_id": vocab_size - 2,
            "eos_token_id": vocab_size - 1,
        },
        vision_config={
            "image_size": 32,
            "patch_size": 8,
            "hidden_size": 32,
            "intermediate_size": 37,
            "num_hidden_layers": 1,
            "num_attention_heads": 4,
        },
        projection_dim=16,
    )
    torch.manual_seed(seed)
    return ClipEncoder(CLIPModel(config), CharTokenizer(vocab_size), checkpoint_id="tiny-clip")


def get_test_vgg_features() -> nn.Sequential:
    """
    Thirty layers laid out like vgg19().features: taps at 11, 20 and 29 give
    256, 512 and 512 channels at 1/4, 1/8 and 1/16 of the input side.
    """
    layers: List[nn.Module] = [nn.Identity() for _ in range(30)]
    layers[0] = nn.Conv2d(3, 8, 3, padding=1)
    layers[1] = nn.ReLU()
    layers[2] = nn.MaxPool2d(2)
    layers[3] = nn.MaxPool2d(2)
    layers[4] = nn.Conv2d(8, 256, 1)
    layers[11] = nn.ReLU()
    layers[12] = nn.MaxPool2d(2)
    layers[13] = nn.Conv2d(256, 512, 1)
    layers[20] = nn.ReLU()
    layers[21] = nn.MaxPool2d(2)
    layers[22] = nn.Conv2d(512, 512, 1)
    layers[29] = nn.ReLU()
    return nn.Sequential(*layers)


def get_test_transfer_models(mapper_type: str = "s2k", seed: int = 0, key_regions: int = 2) -> TransferModels:
    torch.manual_seed(seed)
    return TransferModels(
        encoder=VggEncoder(get_test_vgg_features()),
        mapper=build_mapper(mapper_type, key_regions),
        decoder=Decoder(),
    )


def get_test_contrique(seed: int = 0) -> ContriqueModel:
    torch.manual_seed(seed)
    backbone = nn.Sequential(
        nn.Conv2d(3, 8, 3, stride=2), nn.ReLU(), nn.AdaptiveAvgPool2d(1)
    )
    return ContriqueModel(backbone=backbone, feature_dim=8)


def get_test_lpips() -> nn.Module:
    import lpips as lpips_lib

    return lpips_lib.LPIPS(net="alex", pretrained=False, pnet_rand=True, verbose=False).eval()


def random_image(seed: int = 0, size: int = TEST_RESOLUTION) -> ImagePlane:
    generator = torch.Generator().manual_seed(seed)
    return ImagePlane(torch.rand(3, size, size, generator=generator))


def gradient_image(size: int = TEST_RESOLUTION) -> ImagePlane:
    ramp = torch.linspace(0.0, 1.0, size)
    pixels = torch.stack(
        [
            ramp.view(1, -1).expand(size, size),
            ramp.view(-1, 1).expand(size, size),
            torch.full((size, size), 0.5),
        ]
    )
    return ImagePlane(pixels.contiguous())


def square_mask(size: int = TEST_RESOLUTION, margin: int = 16) -> BinaryMask:
    values = torch.zeros(size, size)
    values[margin : size - margin, margin : size - margin] = 1.0
    return BinaryMask(values)


def make_rep(image: ImagePlane, target: str = TARGET_FG, w_dim: int = 8) -> StyleRepresentation:
    return StyleRepresentation(
        image=image,
        latent=LatentVector(torch.zeros(1, w_dim), TEST_GENERATOR_ID),
        target=target,
    )


def write_test_image(image: ImagePlane, path: str, fmt: str = "PNG") -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    array = (image.to_numpy() * 255.0).round().clip(0, 255).astype(np.uint8)
    Image.fromarray(array, "RGB").save(path, format=fmt)
    return path


def write_test_mask(mask: BinaryMask, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    array = (mask.values.numpy() * 255).astype(np.uint8)
    Image.fromarray(array, "L").save(path, format="PNG")
    return path
