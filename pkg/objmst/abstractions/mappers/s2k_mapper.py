#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field
from typing import Dict, Tuple

import torch

from objmst.abstractions.feature_mapper import FeatureMapper, FeatureMapperArgs
from objmst.data_model.constants import LAYER_TAGS
from objmst.data_model.features import FeaturePyramid
from objmst.operations.registry import register_objmst_abstraction

MAPPER_TYPE = "s2k"
COARSEST = LAYER_TAGS[-1]


@dataclass
class S2KMapperArgs(FeatureMapperArgs):
    _mapper_type: str = MAPPER_TYPE
    key_regions: int = field(
        default=4,
        metadata={
            "help": (
                "Distributed key regions per side of every style rep; also the "
                "content grid used for progressive region selection"
            )
        },
    )
    da_weight: float = field(
        default=0.5,
        metadata={
            "help": "Share of each attention row given to the distributed region keys"
        },
    )


def _grid_index(height: int, width: int, rows: int, cols: int) -> torch.Tensor:
    """Flat cell index of every position when (height, width) is cut into rows x cols"""
    row = torch.arange(height) * rows // height
    col = torch.arange(width) * cols // width
    return (row.view(-1, 1) * cols + col.view(1, -1)).flatten()


@register_objmst_abstraction()
class S2KMapper(FeatureMapper):
    """
    Salient-to-key attention. Style keys are pooled into distributed region
    keys; every content query attends to those regions (distributive
    attention). Working coarse to fine, each cell of a content grid picks
    the style region it matches best at the deepest level, and at every
    level queries of that cell attend point-wise only inside the chosen
    region (progressive attention). The two are mixed per row, so every row
    stays a distribution over the full key set.
    """

    ArgsClass = S2KMapperArgs
    MAPPER_TYPE = MAPPER_TYPE

    def _layout(self, content: FeaturePyramid, style: FeaturePyramid) -> Tuple[int, int, int, int]:
        regions = int(self.args.get("key_regions", 4))
        _, _, hs, ws = style[COARSEST].shape
        _, _, hc, wc = content[COARSEST].shape
        return min(regions, hs), min(regions, ws), min(regions, hc), min(regions, wc)

    def attention(
        self, content: FeaturePyramid, style: FeaturePyramid
    ) -> Tuple[Dict[str, torch.Tensor], Dict[str, str]]:
        da_weight = float(self.args.get("da_weight", 0.5))
        key_rows, key_cols, grid_rows, grid_cols = self._layout(content, style)
        regions_per_rep = key_rows * key_cols

        weights: Dict[str, torch.Tensor] = {}
        layout: Dict[str, str] = {}
        selection = None
        for tag in reversed(LAYER_TAGS):
            block = self.blocks[tag]
            count, _, hs, ws = style[tag].shape
            _, _, hc, wc = content[tag].shape
            device = content[tag].device

            queries = block.queries(content[tag])
            keys = block.keys(style[tag])
            per_rep = _grid_index(hs, ws, key_rows, key_cols)
            region_of_key = torch.cat(
                [per_rep + n * regions_per_rep for n in range(count)]
            ).to(device)
            membership = torch.nn.functional.one_hot(
                region_of_key, count * regions_per_rep
            ).to(keys.dtype)
            region_sizes = membership.sum(dim=0)
            region_keys = torch.matmul(keys, membership) / region_sizes

            distributive = torch.softmax(torch.bmm(queries, region_keys), dim=-1)

            cell_of_query = _grid_index(hc, wc, grid_rows, grid_cols).to(device)
            if selection is None:
                cells = torch.nn.functional.one_hot(
                    cell_of_query, grid_rows * grid_cols
                ).to(distributive.dtype)
                cell_scores = torch.matmul(cells.T, distributive[0]) / cells.sum(dim=0).view(-1, 1)
                selection = cell_scores.argmax(dim=-1)

            allowed = region_of_key.view(1, -1) == selection[cell_of_query].view(-1, 1)
            logits = torch.bmm(queries, keys).masked_fill(~allowed.unsqueeze(0), float("-inf"))
            progressive = torch.softmax(logits, dim=-1)

            spread = distributive[:, :, region_of_key] / region_sizes[region_of_key]
            weights[tag] = (1.0 - da_weight) * progressive + da_weight * spread
            layout[tag] = (
                f"distributed: {count} reps x {key_rows}x{key_cols} regions, "
                f"content grid {grid_rows}x{grid_cols}"
            )
        return {tag: weights[tag] for tag in LAYER_TAGS}, layout
