#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.


from typing import List


class WeightsRole:
    ENCODER_TEXT = "encoder_text"
    ENCODER_IMAGE = "encoder_image"
    GENERATOR = "generator"
    VGG_ENCODER = "vgg_encoder"
    S2K_MAPPER = "s2k_mapper"
    DECODER = "decoder"
    HARMONIZER = "harmonizer"
    SEGMENTER = "segmenter"
    NIMA = "nima"
    CONTRIQUE = "contrique"
    LPIPS = "lpips"

    @staticmethod
    def valid() -> List[str]:
        """Return all roles a weights manifest may name"""
        return [
            WeightsRole.ENCODER_TEXT,
            WeightsRole.ENCODER_IMAGE,
            WeightsRole.GENERATOR,
            WeightsRole.VGG_ENCODER,
            WeightsRole.S2K_MAPPER,
            WeightsRole.DECODER,
            WeightsRole.HARMONIZER,
            WeightsRole.SEGMENTER,
            WeightsRole.NIMA,
            WeightsRole.CONTRIQUE,
            WeightsRole.LPIPS,
        ]

    @staticmethod
    def for_stylize() -> List[str]:
        """Roles needed to run a stylization job end to end"""
        return [
            WeightsRole.ENCODER_TEXT,
            WeightsRole.ENCODER_IMAGE,
            WeightsRole.GENERATOR,
            WeightsRole.VGG_ENCODER,
            WeightsRole.S2K_MAPPER,
            WeightsRole.DECODER,
        ]

    @staticmethod
    def for_metrics() -> List[str]:
        """Roles needed by the evaluation harness"""
        return [
            WeightsRole.ENCODER_TEXT,
            WeightsRole.ENCODER_IMAGE,
            WeightsRole.LPIPS,
            WeightsRole.NIMA,
            WeightsRole.CONTRIQUE,
        ]
