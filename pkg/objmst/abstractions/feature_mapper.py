#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar, Dict, Tuple, Type

import torch
import torch.nn as nn
from omegaconf import MISSING, DictConfig

from objmst.data_model.constants import LAYER_TAGS
from objmst.data_model.exceptions import CheckpointMissing, LevelMismatch
from objmst.data_model.features import AttentionMap, FeaturePyramid

LEVEL_CHANNELS = {"relu3_1": 256, "relu4_1": 512, "relu5_1": 512}
STYLE_POOLING_CONCAT = "concat"
STYLE_POOLING_PER_REP = "per_rep"


@dataclass
class FeatureMapperArgs:
    """Base class for arguments to configure feature mappers"""

    _mapper_type: str = MISSING
    key_dim_ratio: float = field(
        default=1.0,
        metadata={"help": "Query/key projection width as a fraction of the level width"},
    )


def calc_mean_std(feat: torch.Tensor, eps: float = 1e-5) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-channel mean and std of (N, C, H, W); population variance so 1x1 maps are defined"""
    n, c = feat.shape[:2]
    flat = feat.reshape(n, c, -1)
    var = flat.var(dim=2, unbiased=False) + eps
    return flat.mean(dim=2).view(n, c, 1, 1), var.sqrt().view(n, c, 1, 1)


def mean_variance_norm(feat: torch.Tensor) -> torch.Tensor:
    mean, std = calc_mean_std(feat)
    return (feat - mean) / std


class AttentionNorm(nn.Module):
    """
    Attention-weighted normalisation at one level: queries from the
    normalised content, keys from the normalised style, values from the raw
    style. Output is S * mvn(content) + M where M and S are the attention
    weighted mean and std of the values.
    """

    def __init__(self, channels: int, key_dim: int):
        super().__init__()
        self.f = nn.Conv2d(channels, key_dim, 1)
        self.g = nn.Conv2d(channels, key_dim, 1)
        self.h = nn.Conv2d(channels, channels, 1)

    def queries(self, content: torch.Tensor) -> torch.Tensor:
        """(1, Nq, Ck)"""
        return self.f(mean_variance_norm(content)).flatten(2).transpose(1, 2)

    def keys(self, style: torch.Tensor) -> torch.Tensor:
        """(1, Ck, N*Hs*Ws): keys of every style rep concatenated"""
        keys = self.g(mean_variance_norm(style)).flatten(2)
        return keys.permute(1, 0, 2).reshape(1, keys.shape[1], -1)

    def values(self, style: torch.Tensor) -> torch.Tensor:
        """(1, N*Hs*Ws, C)"""
        values = self.h(style).flatten(2)
        return values.permute(0, 2, 1).reshape(1, -1, values.shape[1])

    @staticmethod
    def transfer(
        content: torch.Tensor, attention: torch.Tensor, values: torch.Tensor
    ) -> torch.Tensor:
        mean = torch.bmm(attention, values)
        var = torch.bmm(attention, values ** 2) - mean ** 2
        std = torch.sqrt(var.clamp(min=0))
        mean = mean.transpose(1, 2).reshape(content.shape)
        std = std.transpose(1, 2).reshape(content.shape)
        return std * mean_variance_norm(content) + mean


class FeatureMapper(nn.Module, ABC):
    """
    Maps content features onto style features level by level. Holds one
    attention-normalisation block per encoder level; the subclass decides
    which style keys each content query may attend to.
    """

    ArgsClass: ClassVar[Type[FeatureMapperArgs]] = FeatureMapperArgs
    MAPPER_TYPE: str

    def __init__(self, args: DictConfig):
        super().__init__()
        self.args = args
        ratio = float(args.get("key_dim_ratio", 1.0))
        self.blocks = nn.ModuleDict(
            {
                tag: AttentionNorm(channels, max(1, int(channels * ratio)))
                for tag, channels in LEVEL_CHANNELS.items()
            }
        )
        self.eval().requires_grad_(False)

    def load_weights(self, path: str) -> "FeatureMapper":
        if not os.path.exists(path):
            raise CheckpointMissing(f"No {self.MAPPER_TYPE} mapper weights at {path}")
        self.load_state_dict(torch.load(path, map_location="cpu"))
        return self

    @abstractmethod
    def attention(
        self, content: FeaturePyramid, style: FeaturePyramid
    ) -> Tuple[Dict[str, torch.Tensor], Dict[str, str]]:
        """
        Per-level (1, Nq, Nk) attention over the concatenated keys of every
        style batch element, plus a description of the key layout
        """
        raise NotImplementedError()

    def _check(self, content: FeaturePyramid, style: FeaturePyramid) -> None:
        content.check_compatible(style)
        for tag in LAYER_TAGS:
            if content[tag].shape[1] != LEVEL_CHANNELS[tag]:
                raise LevelMismatch(
                    f"Level {tag} has {content[tag].shape[1]} channels, "
                    f"the mapper expects {LEVEL_CHANNELS[tag]}"
                )
            if content[tag].shape[0] != 1:
                raise LevelMismatch("Content pyramids must hold a single image")

    def _map_concat(
        self, content: FeaturePyramid, style: FeaturePyramid
    ) -> Tuple[FeaturePyramid, AttentionMap]:
        weights, layout = self.attention(content, style)
        levels = {}
        for tag in LAYER_TAGS:
            block = self.blocks[tag]
            levels[tag] = block.transfer(content[tag], weights[tag], block.values(style[tag]))
        return (
            FeaturePyramid(levels, content.source_resolution),
            AttentionMap(weights=weights, key_layout=layout),
        )

    def map(
        self,
        content: FeaturePyramid,
        style: FeaturePyramid,
        pooling: str = STYLE_POOLING_CONCAT,
    ) -> Tuple[FeaturePyramid, AttentionMap]:
        """
        With `concat` pooling one attention runs over the union of the keys
        of every style rep. With `per_rep` each rep is transferred on its own
        and the outputs averaged; the returned attention then spreads each
        row over all reps with weight 1/N each.
        """
        self._check(content, style)
        with torch.no_grad():
            if pooling == STYLE_POOLING_CONCAT:
                return self._map_concat(content, style)
            if pooling != STYLE_POOLING_PER_REP:
                raise ValueError(f"Unknown style pooling {pooling}")
            count = style[LAYER_TAGS[0]].shape[0]
            outputs = [self._map_concat(content, style.select(i)) for i in range(count)]
            levels = {
                tag: torch.stack([out[tag] for out, _ in outputs]).mean(dim=0)
                for tag in LAYER_TAGS
            }
            weights = {
                tag: torch.cat([att.weights[tag] for _, att in outputs], dim=-1) / count
                for tag in LAYER_TAGS
            }
            layout = {
                tag: f"per_rep x{count}: {outputs[0][1].key_layout[tag]}" for tag in LAYER_TAGS
            }
            return (
                FeaturePyramid(levels, content.source_resolution),
                AttentionMap(weights=weights, key_layout=layout),
            )
