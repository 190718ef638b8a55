#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Salient-object stylization: encode the masked content and the style
representations with a fixed VGG19, map the content features onto the
style features with an attention mapper, and decode.
"""

import os
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision
from omegaconf import OmegaConf

from objmst.abstractions.feature_mapper import STYLE_POOLING_CONCAT, FeatureMapper
from objmst.data_model.constants import LAYER_TAGS, TARGET_FG
from objmst.data_model.exceptions import (
    DecoderUnavailable,
    EncoderUnavailable,
    LevelMismatch,
    ValidationError,
)
from objmst.data_model.features import AttentionMap, FeaturePyramid
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.data_model.job_spec import TransferArgs
from objmst.data_model.latent import StyleRepresentation
from objmst.operations.ingest import apply_mask, resize_plane
from objmst.operations.logger_core import get_logger
from objmst.operations.registry import get_mapper_from_type

logger = get_logger(name=__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
# Indices of relu3_1, relu4_1, relu5_1 in torchvision's vgg19().features
VGG_TAPS = {"relu3_1": 11, "relu4_1": 20, "relu5_1": 29}


class VggEncoder(nn.Module):
    """The first 30 layers of VGG19, tapped after relu3_1, relu4_1 and relu5_1"""

    def __init__(self, features: Optional[nn.Sequential] = None):
        super().__init__()
        if features is None:
            features = torchvision.models.vgg19(weights=None).features
        self.features = features[: VGG_TAPS["relu5_1"] + 1]
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.eval().requires_grad_(False)

    @staticmethod
    def load(path: str) -> "VggEncoder":
        """Load a torchvision vgg19 state dict (full model or `features` only)"""
        if not os.path.exists(path):
            raise EncoderUnavailable(f"No VGG19 weights at {path}")
        state = torch.load(path, map_location="cpu")
        model = torchvision.models.vgg19(weights=None)
        if any(key.startswith("features.") for key in state):
            state = {
                key[len("features.") :]: value
                for key, value in state.items()
                if key.startswith("features.")
            }
        model.features.load_state_dict(state)
        return VggEncoder(model.features)

    def forward(self, batch: torch.Tensor) -> List[torch.Tensor]:
        x = (batch - self.mean) / self.std
        taps = []
        for index, layer in enumerate(self.features):
            x = layer(x)
            if index in VGG_TAPS.values():
                taps.append(x)
        return taps


def _conv(in_channels: int, out_channels: int, relu: bool = True) -> List[nn.Module]:
    layers: List[nn.Module] = [
        nn.ReflectionPad2d((1, 1, 1, 1)),
        nn.Conv2d(in_channels, out_channels, (3, 3)),
    ]
    if relu:
        layers.append(nn.ReLU())
    return layers


class Decoder(nn.Module):
    """
    Attention-normalisation style decoder. relu5_1 is upsampled onto relu4_1
    and merged, decoded to the relu3_1 scale, concatenated with relu3_1 and
    decoded to RGB at four times that scale.
    """

    def __init__(self):
        super().__init__()
        self.merge_conv = nn.Sequential(*_conv(512, 512, relu=False))
        self.decoder_layer_1 = nn.Sequential(*_conv(512, 256), nn.Upsample(scale_factor=2, mode="nearest"))
        self.decoder_layer_2 = nn.Sequential(
            *_conv(512, 256),
            *_conv(256, 256),
            *_conv(256, 256),
            *_conv(256, 128),
            nn.Upsample(scale_factor=2, mode="nearest"),
            *_conv(128, 128),
            *_conv(128, 64),
            nn.Upsample(scale_factor=2, mode="nearest"),
            *_conv(64, 64),
            *_conv(64, 3, relu=False),
        )
        self.eval().requires_grad_(False)

    @staticmethod
    def load(path: str) -> "Decoder":
        if not os.path.exists(path):
            raise DecoderUnavailable(f"No decoder weights at {path}")
        decoder = Decoder()
        decoder.load_state_dict(torch.load(path, map_location="cpu"))
        return decoder.eval()

    def forward(
        self, relu3_1: torch.Tensor, relu4_1: torch.Tensor, relu5_1: torch.Tensor
    ) -> torch.Tensor:
        upsampled = F.interpolate(relu5_1, size=relu4_1.shape[-2:], mode="nearest")
        merged = self.merge_conv(relu4_1 + upsampled)
        x = self.decoder_layer_1(merged)
        if x.shape[-2:] != relu3_1.shape[-2:]:
            x = F.interpolate(x, size=relu3_1.shape[-2:], mode="nearest")
        return self.decoder_layer_2(torch.cat((x, relu3_1), dim=1))


@dataclass
class TransferModels:
    encoder: VggEncoder
    mapper: FeatureMapper
    decoder: Decoder

    def to(self, device: Union[str, torch.device]) -> "TransferModels":
        self.encoder.to(device)
        self.mapper.to(device)
        self.decoder.to(device)
        return self

    @property
    def device(self) -> torch.device:
        return self.encoder.mean.device


def build_mapper(
    mapper_type: str, key_regions: int = 4, weights_path: Optional[str] = None
) -> FeatureMapper:
    mapper_class = get_mapper_from_type(mapper_type)
    args = OmegaConf.structured(mapper_class.ArgsClass())
    if "key_regions" in args:
        args.key_regions = key_regions
    mapper = mapper_class(args)
    if weights_path is not None:
        mapper.load_weights(weights_path)
    return mapper


def extract_features(
    encoder: VggEncoder, image: Union[ImagePlane, List[ImagePlane]]
) -> FeaturePyramid:
    """F^l = Enc(image) at relu3_1, relu4_1, relu5_1; a list gives a batched pyramid"""
    images = image if isinstance(image, list) else [image]
    sizes = {im.size for im in images}
    if len(sizes) != 1:
        raise ValidationError(f"Batched images must share one size, got {sizes}")
    device = encoder.mean.device
    batch = torch.stack([im.pixels for im in images]).to(device)
    with torch.no_grad():
        taps = encoder(batch)
    return FeaturePyramid(dict(zip(LAYER_TAGS, taps)), images[0].size)


def _require_type(mapper: FeatureMapper, mapper_type: str) -> None:
    if mapper.MAPPER_TYPE != mapper_type:
        raise ValueError(f"Expected a {mapper_type} mapper, got {mapper.MAPPER_TYPE}")


def s2k_map(
    content_feats: FeaturePyramid,
    style_feats: FeaturePyramid,
    mapper: FeatureMapper,
    pooling: str = STYLE_POOLING_CONCAT,
) -> Tuple[FeaturePyramid, AttentionMap]:
    """F^l_CS = M_S2K(F^l_C, F^l_S), with the attention used at each level"""
    _require_type(mapper, "s2k")
    return mapper.map(content_feats, style_feats, pooling)


def a2a_map(
    content_feats: FeaturePyramid,
    style_feats: FeaturePyramid,
    mapper: FeatureMapper,
    pooling: str = STYLE_POOLING_CONCAT,
) -> Tuple[FeaturePyramid, AttentionMap]:
    _require_type(mapper, "a2a")
    return mapper.map(content_feats, style_feats, pooling)


def decode(decoder: Decoder, feats: FeaturePyramid) -> ImagePlane:
    """I'_CS = Dec({F^l_CS}), clamped to [0, 1]"""
    for tag in LAYER_TAGS:
        if tag not in feats.levels:
            raise LevelMismatch(f"Pyramid is missing level {tag}")
    expected_channels = {"relu3_1": 256, "relu4_1": 512, "relu5_1": 512}
    for tag, channels in expected_channels.items():
        if feats[tag].shape[1] != channels:
            raise LevelMismatch(
                f"Decoder expects {channels} channels at {tag}, got {feats[tag].shape[1]}"
            )
    device = next(decoder.parameters()).device
    with torch.no_grad():
        out = decoder(*(feats[tag][:1].to(device) for tag in LAYER_TAGS))
    if tuple(out.shape[-2:]) != tuple(feats.source_resolution):
        out = F.interpolate(out, size=feats.source_resolution, mode="bilinear", align_corners=False)
    return ImagePlane.from_batch(out.cpu())


def stylize_salient(
    content: ImagePlane,
    mask: BinaryMask,
    style_reps: List[StyleRepresentation],
    models: TransferModels,
    args: Optional[TransferArgs] = None,
) -> Tuple[ImagePlane, FeaturePyramid, AttentionMap]:
    """
    Stylize the salient object: features of I_C * M_C are mapped onto the
    features of the style reps (resized to the content frame) and decoded.
    The output depends on the content only through the masked content.
    Returns (I'_CS, mapped pyramid, attention).
    """
    if args is None:
        args = TransferArgs()
    if len(style_reps) == 0:
        raise ValidationError("stylize_salient needs at least one style representation")
    for rep in style_reps:
        if rep.target != TARGET_FG:
            raise ValidationError(f"Salient stylization got a {rep.target} style rep")
    masked = apply_mask(content, mask)
    content_feats = extract_features(models.encoder, masked)
    style_images = [resize_plane(rep.image, content.size) for rep in style_reps]
    style_feats = extract_features(models.encoder, style_images)
    mapped, attention = models.mapper.map(content_feats, style_feats, args.style_pooling)
    stylized = decode(models.decoder, mapped)
    if args.zero_outside_mask:
        stylized = apply_mask(stylized, mask)
    logger.debug(
        f"Stylized {content.size} salient region ({mask.area_fraction:.3f} of frame) "
        f"with {len(style_reps)} reps via {models.mapper.MAPPER_TYPE}"
    )
    return stylized, mapped, attention
