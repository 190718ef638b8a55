#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import unittest

import torch

from objmst.abstractions.test.utils import make_rep, random_image, square_mask
from objmst.data_model.constants import TARGET_BG, TARGET_FG
from objmst.data_model.exceptions import EmptyBgReps, HarmonizerUnavailable, ValidationError
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.operations.harmonize import (
    DEGRADED_TYPE,
    background_from_reps,
    build_harmonizer,
    composite_background,
    composite_over,
    feather,
    harmonize,
    source_of_pixel,
)
from objmst.operations.ingest import apply_mask


class _FailingHarmonizer:
    HARMONIZER_TYPE = "failing"

    def harmonize(self, image, mask):
        raise HarmonizerUnavailable("weights went away")


class TestComposite(unittest.TestCase):
    def setUp(self):
        self.fg = random_image(1)
        self.mask = square_mask()
        self.bg_reps = [make_rep(random_image(2), TARGET_BG), make_rep(random_image(3), TARGET_BG)]

    def test_pixels_partition_by_mask(self) -> None:
        composite = composite_background(self.fg, self.mask, self.bg_reps)
        background = background_from_reps(self.bg_reps, self.fg.size)
        inside = self.mask.values.bool()
        self.assertTrue(torch.equal(composite.image.pixels[:, inside], self.fg.pixels[:, inside]))
        self.assertTrue(
            torch.equal(composite.image.pixels[:, ~inside], background.pixels[:, ~inside])
        )

    def test_provenance(self) -> None:
        composite = composite_background(self.fg, self.mask, self.bg_reps)
        self.assertEqual(source_of_pixel(composite, 32, 32), "fg_stylized")
        self.assertEqual(source_of_pixel(composite, 0, 0), "bg_rep[0]")
        tiled = composite_background(self.fg, self.mask, self.bg_reps, fill="tile")
        self.assertEqual(source_of_pixel(tiled, 0, 0), "bg_reps[tile x2]")

    def test_all_ones_mask_is_foreground(self) -> None:
        composite = composite_background(self.fg, BinaryMask(torch.ones(64, 64)), self.bg_reps)
        self.assertTrue(composite.image.equals(self.fg))

    def test_all_zeros_mask_is_background(self) -> None:
        composite = composite_background(self.fg, BinaryMask(torch.zeros(64, 64)), self.bg_reps)
        self.assertTrue(composite.image.equals(background_from_reps(self.bg_reps, (64, 64))))

    def test_tile_uses_every_rep(self) -> None:
        reps = [make_rep(ImagePlane(torch.full((3, 64, 64), v)), TARGET_BG) for v in (0.2, 0.8)]
        background = background_from_reps(reps, (64, 64), fill="tile")
        self.assertAlmostEqual(float(background.pixels[0, 0, 0]), 0.2, places=5)
        self.assertAlmostEqual(float(background.pixels[0, 0, 63]), 0.8, places=5)
        self.assertAlmostEqual(float(background.pixels[0, 63, 0]), 0.2, places=5)

    def test_empty_bg_reps(self) -> None:
        with self.assertRaises(EmptyBgReps):
            composite_background(self.fg, self.mask, [])

    def test_fg_reps_rejected_as_background(self) -> None:
        with self.assertRaises(ValidationError):
            composite_background(self.fg, self.mask, [make_rep(random_image(2), TARGET_FG)])

    def test_unknown_fill(self) -> None:
        with self.assertRaises(ValidationError):
            composite_background(self.fg, self.mask, self.bg_reps, fill="mirror")

    def test_composite_over_keeps_sources(self) -> None:
        content = random_image(4)
        composite = composite_over(self.fg, content, self.mask)
        self.assertTrue(composite.foreground.equals(self.fg))
        self.assertTrue(composite.background.equals(content))


class TestFeather(unittest.TestCase):
    def setUp(self):
        self.mask = square_mask()
        self.composite = composite_over(
            ImagePlane(torch.ones(3, 64, 64)), ImagePlane(torch.zeros(3, 64, 64)), self.mask
        )

    def test_far_from_seam_unchanged(self) -> None:
        out = feather(self.composite, radius=3)
        self.assertTrue(torch.equal(out.pixels[:, 32, 32], self.composite.image.pixels[:, 32, 32]))
        self.assertTrue(torch.equal(out.pixels[:, 0, 0], self.composite.image.pixels[:, 0, 0]))

    def test_seam_is_softened_inside_the_mask(self) -> None:
        out = feather(self.composite, radius=3)
        inner = float(out.pixels[0, 32, 16])
        self.assertGreater(inner, 0.0)
        self.assertLess(inner, 1.0)

    def test_background_outside_mask_unchanged(self) -> None:
        out = feather(self.composite, radius=3)
        outside = ~self.mask.values.bool()
        self.assertTrue(
            torch.equal(out.pixels[:, outside], self.composite.image.pixels[:, outside])
        )

    def test_masked_foreground_leaves_no_dark_ring(self) -> None:
        flat = ImagePlane(torch.full((3, 64, 64), 0.8))
        composite = composite_over(apply_mask(flat, self.mask), flat, self.mask)
        out = feather(composite, radius=5)
        self.assertTrue(torch.allclose(out.pixels, flat.pixels, atol=1e-6))

    def test_zero_radius_is_hard(self) -> None:
        self.assertTrue(feather(self.composite, radius=0).equals(self.composite.image))


class TestHarmonize(unittest.TestCase):
    def setUp(self):
        self.composite = composite_background(
            random_image(1), square_mask(), [make_rep(random_image(2), TARGET_BG)]
        )

    def test_degraded_without_harmonizer(self) -> None:
        output = harmonize(self.composite, None, feather_radius=0)
        self.assertFalse(output.harmonized)
        self.assertEqual(output.harmonizer_type, DEGRADED_TYPE)
        self.assertTrue(output.image.equals(self.composite.image))

    def test_degraded_when_harmonizer_fails(self) -> None:
        output = harmonize(self.composite, _FailingHarmonizer(), feather_radius=0)
        self.assertFalse(output.harmonized)
        self.assertTrue(output.image.equals(self.composite.image))

    def test_statistics_harmonizer(self) -> None:
        output = harmonize(self.composite, build_harmonizer("statistics"))
        self.assertTrue(output.harmonized)
        self.assertEqual(output.harmonizer_type, "statistics")
        self.assertEqual(output.image.size, self.composite.image.size)

    def test_unknown_harmonizer(self) -> None:
        with self.assertRaises(NotImplementedError):
            build_harmonizer("photoshop")


if __name__ == "__main__":
    unittest.main()
