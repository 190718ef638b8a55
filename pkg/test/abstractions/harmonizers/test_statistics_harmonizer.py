#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import unittest

import torch

from objmst.abstractions.harmonizers.statistics_harmonizer import StatisticsHarmonizer
from objmst.abstractions.test.harmonizer_tester import HarmonizerTests
from objmst.abstractions.test.utils import random_image, square_mask
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.operations.harmonize import build_harmonizer, composite_over, mean_color_separation


class StatisticsHarmonizerTests(HarmonizerTests):
    HarmonizerClass = StatisticsHarmonizer

    def get_harmonizer(self) -> StatisticsHarmonizer:
        return build_harmonizer("statistics")

    def test_background_untouched(self) -> None:
        out = self.harmonizer.harmonize(self.composite.image, self.mask)
        outside = ~self.mask.values.bool()
        self.assertTrue(
            torch.equal(out.pixels[:, outside], self.composite.image.pixels[:, outside])
        )

    def test_reduces_color_separation(self) -> None:
        dark = ImagePlane(torch.full((3, 64, 64), 0.1))
        bright = ImagePlane(torch.full((3, 64, 64), 0.9))
        composite = composite_over(dark, bright, self.mask)
        out = self.harmonizer.harmonize(composite.image, self.mask)
        self.assertLess(
            mean_color_separation(out, self.mask),
            mean_color_separation(composite.image, self.mask),
        )

    def test_zero_strength_is_identity(self) -> None:
        harmonizer = build_harmonizer("statistics")
        harmonizer.args.strength = 0.0
        out = harmonizer.harmonize(self.composite.image, self.mask)
        self.assertTrue(torch.allclose(out.pixels, self.composite.image.pixels, atol=1e-5))

    def test_empty_regions_pass_through(self) -> None:
        image = random_image(4)
        for values in (torch.zeros(64, 64), torch.ones(64, 64)):
            out = self.harmonizer.harmonize(image, BinaryMask(values))
            self.assertTrue(out.equals(image))


if __name__ == "__main__":
    unittest.main()
