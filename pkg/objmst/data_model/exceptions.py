#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

# Every error raised by objmst descends from ObjMSTError. The three family
# bases carry the exit code the cli returns when the error escapes a command.

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3
EXIT_WEIGHTS = 4


class ObjMSTError(Exception):
    """Base class for all objmst errors"""

    exit_code: int = EXIT_STAGE

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# Validation family


class ValidationError(ObjMSTError):
    """Inputs or configuration that can never work"""

    exit_code = EXIT_VALIDATION


class ImageFileNotFound(ValidationError):
    """Exception for an image or mask path that does not exist"""

    def __init__(self, path: str):
        super().__init__(f"No such image file: {path}")
        self.path = path


class UnsupportedFormat(ValidationError):
    """Exception for a file that is not a supported raster format"""

    def __init__(self, path: str, fmt: str):
        super().__init__(f"Unsupported image format {fmt} for {path}")
        self.path = path


class CorruptImage(ValidationError):
    """Exception for a file that claims a supported format but cannot be decoded"""

    def __init__(self, path: str, reason: str):
        super().__init__(f"Could not decode {path}: {reason}")
        self.path = path


class DimensionMismatch(ValidationError):
    """Exception for two planes that should share a height and width"""

    def __init__(self, expected, actual):
        super().__init__(f"Dimension mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class SizeMismatch(ValidationError):
    """Exception for direction lists whose lengths disagree with n_crop"""


class ImageTooSmall(ValidationError):
    """Exception for an image smaller than the requested patch or minimum size"""


class EmptyMask(ValidationError):
    """Exception for a mask without enough foreground to stylize"""


class TextTooLong(ValidationError):
    """Exception for a prompt that exceeds the text encoder context length"""

    def __init__(self, text: str, num_tokens: int, limit: int):
        super().__init__(
            f"Prompt uses {num_tokens} tokens, encoder context is {limit}: {text[:40]!r}"
        )
        self.num_tokens = num_tokens
        self.limit = limit


class EmptyText(ValidationError):
    """Exception for a prompt that is empty or only whitespace"""


class DegenerateDirection(ValidationError):
    """Exception for a zero embedding direction, whose cosine is undefined"""


class LatentShapeMismatch(ValidationError):
    """Exception for a latent that does not fit the loaded generator"""


class LevelMismatch(ValidationError):
    """Exception for feature pyramids with different or missing levels"""


class EmptyBgReps(ValidationError):
    """Exception for compositing without any background representation"""


class MissingReference(ValidationError):
    """Exception for full-reference scoring without a reference image"""


class ManifestMismatch(ValidationError):
    """Exception for a run output that has no entry in the reference manifest"""


class JobSpecError(ValidationError):
    """Exception for a JobSpec whose fields are inconsistent with its mode"""


# Stage family


class StageError(ObjMSTError):
    """A pipeline stage failed while running"""

    exit_code = EXIT_STAGE


class NonFiniteLoss(StageError):
    """Exception for an inversion whose loss became nan or inf"""

    def __init__(self, step: int, value: float, last_finite: float):
        super().__init__(
            f"Loss became non-finite ({value}) at step {step}; "
            f"last finite loss was {last_finite}"
        )
        self.step = step
        self.value = value
        self.last_finite = last_finite


class StageFailure(StageError):
    """Wraps any error escaping a pipeline stage, tagging the stage"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        if isinstance(cause, ObjMSTError):
            self.exit_code = cause.exit_code


# Weights family


class WeightsError(ObjMSTError):
    """Pretrained weights are missing, unverified or unloadable"""

    exit_code = EXIT_WEIGHTS


class DigestMismatch(WeightsError):
    """Exception for a checkpoint whose sha256 differs from its manifest entry"""

    def __init__(self, role: str, path: str, expected: str, actual: str):
        super().__init__(
            f"Refusing to load {role} from {path}: sha256 {actual} != manifest {expected}"
        )
        self.role = role
        self.expected = expected
        self.actual = actual


class DownloadFailed(WeightsError):
    """Exception for a checkpoint that could not be downloaded"""


class CheckpointMissing(WeightsError):
    """Exception for a role with no resolvable checkpoint"""


class EncoderUnavailable(WeightsError):
    """Exception for CLIP or VGG encoders that cannot be loaded"""


class GeneratorUnavailable(WeightsError):
    """Exception for a generator checkpoint that cannot be loaded"""


class DecoderUnavailable(WeightsError):
    """Exception for decoder weights that cannot be loaded"""


class HarmonizerUnavailable(WeightsError):
    """Exception for a harmonizer checkpoint that cannot be loaded"""


class SegmenterUnavailable(WeightsError):
    """Exception for a segmenter that cannot be loaded; supply a --mask file instead"""


class MetricUnavailable(WeightsError):
    """Exception for a metric model that cannot be loaded"""
