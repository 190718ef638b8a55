#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
This file contains any constants shared in the data model that
aren't more appropriately held in one of the object-focused files
"""

# Source text T_C that every text direction is measured from
DEFAULT_SOURCE_TEXT = "a photo"

WORKING_RESOLUTION = 512
MIN_IMAGE_SIDE = 32
MASK_THRESHOLD = 0.5
MIN_MASK_FRACTION = 0.01

# Feature pyramid layers, shallow to deep
LAYER_TAGS = ("relu3_1", "relu4_1", "relu5_1")

TARGET_FG = "fg"
TARGET_BG = "bg"
