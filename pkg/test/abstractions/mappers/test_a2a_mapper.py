#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import unittest

import torch

from objmst.abstractions.mappers.a2a_mapper import A2AMapper
from objmst.abstractions.test.mapper_tester import FeatureMapperTests
from objmst.data_model.constants import LAYER_TAGS
from objmst.operations.transfer import build_mapper


class A2AMapperTests(FeatureMapperTests):
    MapperClass = A2AMapper

    def get_mapper(self) -> A2AMapper:
        return build_mapper("a2a")

    def test_layout_is_dense(self) -> None:
        _, attention = self.mapper.map(self.content, self.style)
        for tag in LAYER_TAGS:
            _, _, hs, ws = self.style[tag].shape
            self.assertEqual(attention.key_layout[tag], f"dense: {2 * hs * ws} keys")

    def test_shares_weight_layout_with_s2k(self) -> None:
        s2k = build_mapper("s2k")
        a2a_state = self.mapper.state_dict()
        self.assertEqual(set(a2a_state), set(s2k.state_dict()))
        for key, value in s2k.state_dict().items():
            self.assertEqual(tuple(value.shape), tuple(a2a_state[key].shape))

    def test_differs_from_s2k_with_equal_weights(self) -> None:
        s2k = build_mapper("s2k", key_regions=2)
        s2k.load_state_dict(self.mapper.state_dict())
        a2a_out, _ = self.mapper.map(self.content, self.style)
        s2k_out, _ = s2k.map(self.content, self.style)
        self.assertFalse(torch.allclose(a2a_out["relu3_1"], s2k_out["relu3_1"]))


if __name__ == "__main__":
    unittest.main()
