#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import itertools
import math
import unittest

import torch

from objmst.abstractions.test.utils import get_test_clip, random_image
from objmst.data_model.embedding import Direction, Embedding, LossConfig
from objmst.data_model.exceptions import (
    EXIT_VALIDATION,
    DegenerateDirection,
    EmptyText,
    SizeMismatch,
    TextTooLong,
    ValidationError,
)
from objmst.operations.clip_direction import (
    directional_loss_terms,
    masked_directional_loss,
    masked_image_direction,
    text_direction,
)


def _dirs(*rows):
    return [Direction(torch.tensor(r, dtype=torch.float64)) for r in rows]



def _cos(a, b) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


def _double_loop_loss(style, inputs, text, lambda_) -> float:
    """The loss written out term by term over python lists"""
    n = len(style)
    text_term = sum(1.0 - _cos(s, text) for s in style) / n
    image_term = 0.0
    for s in style:
        for i in inputs:
            image_term += 1.0 - _cos(s, i)
    return text_term + lambda_ * image_term / (n * len(inputs))


class TestMaskedDirectionalLoss(unittest.TestCase):
    def test_small_oracle(self) -> None:
        """Two style directions, one aligned and one orthogonal to the text"""
        style = _dirs([1.0, 0.0], [0.0, 1.0])
        inputs = _dirs([1.0, 0.0], [1.0, 0.0])
        text = Direction(torch.tensor([1.0, 0.0], dtype=torch.float64))
        cfg = LossConfig(lambda_=0.5, n_crop=2)
        # text term: (0 + 1) / 2; image term: (0 + 0 + 1 + 1) / 4
        loss = masked_directional_loss(style, inputs, text, cfg)
        self.assertAlmostEqual(float(loss), 0.5 + 0.5 * 0.5, places=12)

    def test_perfect_alignment_is_zero(self) -> None:
        style = _dirs([2.0, 1.0, 0.0], [4.0, 2.0, 0.0])
        text = Direction(torch.tensor([1.0, 0.5, 0.0], dtype=torch.float64))
        cfg = LossConfig(lambda_=1.0, n_crop=2)
        loss = masked_directional_loss(style, style, text, cfg)
        self.assertAlmostEqual(float(loss), 0.0, places=12)

    def test_opposite_directions_hit_upper_bound(self) -> None:
        style = _dirs([1.0, 0.0], [1.0, 0.0])
        opposite = _dirs([-1.0, 0.0], [-3.0, 0.0])
        text = Direction(torch.tensor([-2.0, 0.0], dtype=torch.float64))
        cfg = LossConfig(lambda_=1.5, n_crop=2)
        loss = masked_directional_loss(style, opposite, text, cfg)
        self.assertAlmostEqual(float(loss), 2.0 + 2.0 * 1.5, places=12)

    def test_lambda_zero_is_text_only(self) -> None:
        style = _dirs([1.0, 0.0], [0.6, 0.8])
        inputs = _dirs([-1.0, 0.0], [0.0, -1.0])
        text = Direction(torch.tensor([1.0, 0.0], dtype=torch.float64))
        total, text_term, image_term = directional_loss_terms(
            torch.stack([d.values for d in style]), text.values, torch.stack([d.values for d in inputs]), 0.0
        )
        self.assertEqual(float(total), float(text_term))
        self.assertEqual(float(image_term), 0.0)

    def test_loss_in_range_for_random_directions(self) -> None:
        generator = torch.Generator().manual_seed(3)
        cfg = LossConfig(lambda_=0.7, n_crop=8)
        for _ in range(10):
            style = [Direction(torch.randn(16, generator=generator)) for _ in range(8)]
            inputs = [Direction(torch.randn(16, generator=generator)) for _ in range(8)]
            text = Direction(torch.randn(16, generator=generator))
            loss = float(masked_directional_loss(style, inputs, text, cfg))
            self.assertGreaterEqual(loss, 0.0)
            self.assertLessEqual(loss, 2.0 + 2.0 * cfg.lambda_)

    def test_matches_double_loop_oracle(self) -> None:
        generator = torch.Generator().manual_seed(7)
        cases = list(itertools.product([1, 3, 16], [0.0, 0.7, 1.0]))
        for trial in range(200):
            n_crop, lambda_ = cases[trial % len(cases)]
            style = torch.randn(n_crop, 16, generator=generator, dtype=torch.float64)
            inputs = torch.randn(n_crop, 16, generator=generator, dtype=torch.float64)
            text = torch.randn(16, generator=generator, dtype=torch.float64)
            loss = masked_directional_loss(
                [Direction(s) for s in style],
                [Direction(i) for i in inputs],
                Direction(text),
                LossConfig(lambda_=lambda_, n_crop=n_crop),
            )
            expected = _double_loop_loss(style.tolist(), inputs.tolist(), text.tolist(), lambda_)
            self.assertAlmostEqual(float(loss), expected, delta=1e-6)

    def test_orthogonal_directions_give_one_plus_lambda(self) -> None:
        style = _dirs([1.0, 0.0, 0.0, 0.0], [0.6, 0.8, 0.0, 0.0])
        inputs = _dirs([0.0, 0.0, 0.0, 2.0], [0.0, 0.0, 0.0, -1.0])
        text = Direction(torch.tensor([0.0, 0.0, 3.0, 0.0], dtype=torch.float64))
        cfg = LossConfig(lambda_=0.7, n_crop=2)
        loss = masked_directional_loss(style, inputs, text, cfg)
        self.assertAlmostEqual(float(loss), 1.0 + 0.7, delta=1e-6)

    def test_invariant_to_scale_and_order(self) -> None:
        generator = torch.Generator().manual_seed(9)
        style = torch.randn(4, 16, generator=generator, dtype=torch.float64)
        inputs = torch.randn(4, 16, generator=generator, dtype=torch.float64)
        text = torch.randn(16, generator=generator, dtype=torch.float64)
        cfg = LossConfig(lambda_=0.7, n_crop=4)
        base = float(
            masked_directional_loss(
                [Direction(s) for s in style], [Direction(i) for i in inputs], Direction(text), cfg
            )
        )
        scales = torch.rand(4, 1, generator=generator, dtype=torch.float64) * 10.0 + 0.1
        scaled = float(
            masked_directional_loss(
                [Direction(s) for s in style * scales],
                [Direction(i) for i in inputs * scales.flip(0)],
                Direction(text * 3.5),
                cfg,
            )
        )
        self.assertAlmostEqual(scaled, base, places=12)
        permuted = float(
            masked_directional_loss(
                [Direction(s) for s in style[[2, 0, 3, 1]]],
                [Direction(i) for i in inputs[[3, 2, 1, 0]]],
                Direction(text),
                cfg,
            )
        )
        self.assertAlmostEqual(permuted, base, places=12)

    def test_gradient_matches_finite_differences(self) -> None:
        generator = torch.Generator().manual_seed(5)
        style = torch.randn(3, 16, generator=generator, dtype=torch.float64, requires_grad=True)
        text = torch.randn(16, generator=generator, dtype=torch.float64)
        inputs = torch.randn(3, 16, generator=generator, dtype=torch.float64)
        self.assertTrue(
            torch.autograd.gradcheck(
                lambda s: directional_loss_terms(s, text, inputs, 0.8)[0],
                (style,),
                atol=1e-7,
                rtol=1e-4,
            )
        )

    def test_length_mismatch(self) -> None:
        text = Direction(torch.tensor([1.0, 0.0]))
        with self.assertRaises(SizeMismatch):
            masked_directional_loss(
                _dirs([1.0, 0.0]), _dirs([1.0, 0.0], [0.0, 1.0]), text, LossConfig(n_crop=2)
            )

    def test_degenerate_direction(self) -> None:
        style = _dirs([0.0, 0.0], [1.0, 0.0])
        text = Direction(torch.tensor([1.0, 0.0], dtype=torch.float64))
        with self.assertRaises(DegenerateDirection):
            masked_directional_loss(style, style, text, LossConfig(n_crop=2))

    def test_epsilon_stabilises_degenerate_direction(self) -> None:
        style = _dirs([0.0, 0.0], [1.0, 0.0])
        text = Direction(torch.tensor([1.0, 0.0], dtype=torch.float64))
        cfg = LossConfig(n_crop=2, norm_epsilon=1e-8)
        self.assertTrue(torch.isfinite(masked_directional_loss(style, style, text, cfg)))

    def test_negative_lambda_rejected(self) -> None:
        with self.assertRaises(ValidationError):
            LossConfig(lambda_=-0.1)


class TestEmbedding(unittest.TestCase):
    def test_difference_is_direction(self) -> None:
        a = Embedding(torch.tensor([1.0, 2.0]))
        b = Embedding(torch.tensor([0.5, 2.0]))
        direction = a - b
        self.assertTrue(torch.equal(direction.values, torch.tensor([0.5, 0.0])))

    def test_rejects_non_finite(self) -> None:
        with self.assertRaises(ValidationError):
            Embedding(torch.tensor([1.0, float("nan")]))


class TestClipDirections(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.encoder = get_test_clip()

    def test_text_embeddings_are_unit_norm(self) -> None:
        embedding = self.encoder.encode_text("fire")
        self.assertAlmostEqual(embedding.norm, 1.0, places=5)

    def test_text_direction_from_source(self) -> None:
        direction = text_direction(self.encoder, "ice", LossConfig(source_text="a photo"))
        expected = self.encoder.encode_text("ice") - self.encoder.encode_text("a photo")
        self.assertTrue(torch.allclose(direction.values, expected.values, atol=1e-5))

    def test_same_text_as_source_is_degenerate(self) -> None:
        with self.assertRaises(DegenerateDirection):
            text_direction(self.encoder, "a photo", LossConfig(source_text="a photo"))

    def test_empty_text_rejected(self) -> None:
        with self.assertRaises(EmptyText) as context:
            text_direction(self.encoder, "   ")
        self.assertEqual(context.exception.exit_code, EXIT_VALIDATION)
        with self.assertRaises(EmptyText):
            self.encoder.encode_text("")

    def test_text_too_long(self) -> None:
        with self.assertRaises(TextTooLong):
            self.encoder.encode_text("a painting of a very long and winding road")

    def test_image_embedding_is_unit_norm_and_deterministic(self) -> None:
        image = random_image(4)
        first = self.encoder.encode_image(image)
        self.assertAlmostEqual(first.norm, 1.0, places=5)
        self.assertEqual(first.dim, 16)
        self.assertTrue(torch.equal(first.values, self.encoder.encode_image(image).values))
        self.assertAlmostEqual(self.encoder.cosine(first, first), 1.0, places=5)

    def test_image_direction(self) -> None:
        patch, reference = random_image(1), random_image(2)
        direction = masked_image_direction(self.encoder, patch, reference)
        self.assertEqual(direction.values.dim(), 1)
        with self.assertRaises(DegenerateDirection):
            masked_image_direction(self.encoder, patch, patch)

    def test_image_embedding_carries_gradient(self) -> None:
        batch = random_image(3).as_batch().clone().requires_grad_(True)
        self.encoder.embed_images_batch(batch).sum().backward()
        self.assertIsNotNone(batch.grad)
        self.assertTrue(bool(torch.isfinite(batch.grad).all()))


if __name__ == "__main__":
    unittest.main()
