#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass
from typing import Dict, Tuple

import torch

from objmst.abstractions.feature_mapper import FeatureMapper, FeatureMapperArgs
from objmst.data_model.constants import LAYER_TAGS
from objmst.data_model.features import FeaturePyramid
from objmst.operations.registry import register_objmst_abstraction

MAPPER_TYPE = "a2a"


@dataclass
class A2AMapperArgs(FeatureMapperArgs):
    _mapper_type: str = MAPPER_TYPE


@register_objmst_abstraction()
class A2AMapper(FeatureMapper):
    """Dense all-to-all attention: every content query sees every style key"""

    ArgsClass = A2AMapperArgs
    MAPPER_TYPE = MAPPER_TYPE

    def attention(
        self, content: FeaturePyramid, style: FeaturePyramid
    ) -> Tuple[Dict[str, torch.Tensor], Dict[str, str]]:
        weights = {}
        layout = {}
        for tag in LAYER_TAGS:
            block = self.blocks[tag]
            logits = torch.bmm(block.queries(content[tag]), block.keys(style[tag]))
            weights[tag] = torch.softmax(logits, dim=-1)
            layout[tag] = f"dense: {logits.shape[-1]} keys"
        return weights, layout
