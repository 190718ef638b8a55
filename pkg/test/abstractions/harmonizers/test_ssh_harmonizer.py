#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import os
import shutil
import tempfile
import unittest

import torch
import torch.nn as nn

from objmst.abstractions.harmonizers.ssh_harmonizer import SSHHarmonizer
from objmst.abstractions.test.harmonizer_tester import HarmonizerTests
from objmst.data_model.exceptions import HarmonizerUnavailable
from objmst.operations.harmonize import build_harmonizer


class _PullTowardGray(nn.Module):
    """Scriptable stand-in with the harmonization network's call signature"""

    def forward(self, composite: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return composite * (1.0 - 0.5 * mask) + 0.25 * mask


class SSHHarmonizerTests(HarmonizerTests):
    HarmonizerClass = SSHHarmonizer

    @classmethod
    def setUpClass(cls):
        super(SSHHarmonizerTests, cls).setUpClass()
        cls.checkpoint_dir = tempfile.mkdtemp()
        cls.checkpoint = os.path.join(cls.checkpoint_dir, "ssh.pt")
        torch.jit.script(_PullTowardGray()).save(cls.checkpoint)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.checkpoint_dir, ignore_errors=True)
        super(SSHHarmonizerTests, cls).tearDownClass()

    def get_harmonizer(self) -> SSHHarmonizer:
        return build_harmonizer("ssh", self.checkpoint)

    def test_network_output_used(self) -> None:
        out = self.harmonizer.harmonize(self.composite.image, self.mask)
        inside = self.mask.values.bool()
        expected = self.composite.image.pixels[:, inside] * 0.5 + 0.25
        self.assertTrue(torch.allclose(out.pixels[:, inside], expected, atol=1e-6))
        self.assertTrue(
            torch.equal(out.pixels[:, ~inside], self.composite.image.pixels[:, ~inside])
        )

    def test_missing_checkpoint_unavailable(self) -> None:
        with self.assertRaises(HarmonizerUnavailable):
            build_harmonizer("ssh", os.path.join(self.checkpoint_dir, "absent.pt"))
        with self.assertRaises(HarmonizerUnavailable):
            build_harmonizer("ssh", None)

    def test_unloadable_checkpoint_unavailable(self) -> None:
        garbage = os.path.join(self.checkpoint_dir, "garbage.pt")
        with open(garbage, "wb") as garbage_file:
            garbage_file.write(b"not a torchscript archive")
        with self.assertRaises(HarmonizerUnavailable):
            build_harmonizer("ssh", garbage)


if __name__ == "__main__":
    unittest.main()
