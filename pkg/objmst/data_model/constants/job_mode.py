#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.


from typing import List


class JobMode:
    TIST_SINGLE = "tist_single"
    TIST_DOUBLE = "tist_double"
    MMIST_SINGLE = "mmist_single"

    @staticmethod
    def valid() -> List[str]:
        """Return all valid job modes"""
        return [
            JobMode.TIST_SINGLE,
            JobMode.TIST_DOUBLE,
            JobMode.MMIST_SINGLE,
        ]

    @staticmethod
    def stylizes_background() -> List[str]:
        """Return the modes that run the surrounding-element branch"""
        return [JobMode.TIST_DOUBLE]


class AblationArm:
    LOSS_MASKED_VS_PLAIN = "loss_masked_vs_plain"
    ATTENTION_S2K_VS_A2A = "attention_s2k_vs_a2a"
    SINGLE_REP_BASELINE = "single_rep_baseline"

    @staticmethod
    def valid() -> List[str]:
        return [
            AblationArm.LOSS_MASKED_VS_PLAIN,
            AblationArm.ATTENTION_S2K_VS_A2A,
            AblationArm.SINGLE_REP_BASELINE,
        ]


class EvalMode:
    STYLE_REPS = "style_reps"
    STYLIZED = "stylized"

    @staticmethod
    def valid() -> List[str]:
        return [EvalMode.STYLE_REPS, EvalMode.STYLIZED]
