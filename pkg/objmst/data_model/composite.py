#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field
from typing import Dict, Optional

from objmst.data_model.image import BinaryMask, ImagePlane


@dataclass
class Composite:
    """
    The pre-harmonization blend: inside the mask every pixel comes from the
    foreground source, outside it from the background source. The two full
    frame source layers are kept so the seam can be feathered later.
    """

    image: ImagePlane
    mask: BinaryMask
    provenance: Dict[str, str] = field(default_factory=dict)
    foreground: Optional[ImagePlane] = None
    background: Optional[ImagePlane] = None

    @property
    def fg_source(self) -> str:
        return self.provenance.get("fg_source", "")

    @property
    def bg_source(self) -> str:
        return self.provenance.get("bg_source", "")


@dataclass
class HarmonizedOutput:
    """Final output plus whether it went through a real harmonizer"""

    image: ImagePlane
    harmonized: bool
    harmonizer_type: str
