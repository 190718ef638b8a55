#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, Iterator, List, Tuple

import numpy as np
import torch

from objmst.data_model.constants import LAYER_TAGS
from objmst.data_model.exceptions import LevelMismatch

# Debug dump layout, per level: 8-byte ascii layer tag (space padded), then
# C, H, W as little-endian uint32, then C*H*W row-major little-endian float32.
_TAG_BYTES = 8
_HEADER = struct.Struct("<8sIII")


class FeaturePyramid:
    """
    Encoder features at relu3_1, relu4_1 and relu5_1. Each level is a
    (B, C, H, W) tensor; B is 1 for a single image and N for a batch of
    style patches.
    """

    def __init__(
        self, levels: Dict[str, torch.Tensor], source_resolution: Tuple[int, int]
    ):
        if tuple(levels.keys()) != LAYER_TAGS:
            if set(levels.keys()) != set(LAYER_TAGS):
                raise LevelMismatch(
                    f"Pyramids need exactly levels {LAYER_TAGS}, got {list(levels)}"
                )
            levels = {tag: levels[tag] for tag in LAYER_TAGS}
        for tag, feat in levels.items():
            if feat.dim() != 4:
                raise LevelMismatch(f"Level {tag} must be (B, C, H, W)")
        self.levels = levels
        self.source_resolution = source_resolution

    def __getitem__(self, tag: str) -> torch.Tensor:
        return self.levels[tag]

    def __iter__(self) -> Iterator[str]:
        return iter(self.levels)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {tag: tuple(f.shape) for tag, f in self.levels.items()}

    def check_compatible(self, other: "FeaturePyramid") -> None:
        """Both pyramids came from the same encoder: equal channel counts"""
        for tag in LAYER_TAGS:
            if self[tag].shape[1] != other[tag].shape[1]:
                raise LevelMismatch(
                    f"Level {tag} channel counts differ: "
                    f"{self[tag].shape[1]} vs {other[tag].shape[1]}"
                )

    def equals(self, other: "FeaturePyramid") -> bool:
        return all(torch.equal(self[t], other[t]) for t in LAYER_TAGS)

    def select(self, index: int) -> "FeaturePyramid":
        """The pyramid of a single batch element"""
        return FeaturePyramid(
            {t: f[index : index + 1] for t, f in self.levels.items()},
            self.source_resolution,
        )

    def dump(self, fp: BinaryIO) -> None:
        """Write the first batch element in the documented binary layout"""
        for tag, feat in self.levels.items():
            c, h, w = feat.shape[1:]
            fp.write(_HEADER.pack(tag.encode("ascii").ljust(_TAG_BYTES), c, h, w))
            data = feat[0].detach().cpu().contiguous().numpy().astype("<f4")
            fp.write(data.tobytes(order="C"))

    @staticmethod
    def load(fp: BinaryIO, source_resolution: Tuple[int, int]) -> "FeaturePyramid":
        levels: Dict[str, torch.Tensor] = {}
        while True:
            header = fp.read(_HEADER.size)
            if len(header) == 0:
                break
            raw_tag, c, h, w = _HEADER.unpack(header)
            count = c * h * w
            data = np.frombuffer(fp.read(4 * count), dtype="<f4").reshape(1, c, h, w)
            levels[raw_tag.decode("ascii").strip()] = torch.from_numpy(data.copy())
        return FeaturePyramid(levels, source_resolution)


@dataclass
class AttentionMap:
    """
    Per-level attention weights, each (B, N_query, N_key), and a note on how
    the keys were laid out (dense positions or distributed regions).
    """

    weights: Dict[str, torch.Tensor] = field(default_factory=dict)
    key_layout: Dict[str, str] = field(default_factory=dict)

    def row_sums(self) -> Dict[str, torch.Tensor]:
        return {tag: w.sum(dim=-1) for tag, w in self.weights.items()}

    def is_row_stochastic(self, atol: float = 1e-5) -> bool:
        for w in self.weights.values():
            if bool((w < 0).any()):
                return False
            if not torch.allclose(
                w.sum(dim=-1), torch.ones_like(w.sum(dim=-1)), atol=atol
            ):
                return False
        return True

    def levels(self) -> List[str]:
        return list(self.weights.keys())
