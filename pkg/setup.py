#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from setuptools import setup, find_packages
import os

here = os.path.abspath(os.path.dirname(__file__))

with open(os.path.join(here, "objmst", "VERSION")) as version_file:
    version = version_file.read().strip()

setup(
    name="objmst",
    version=version,
    packages=find_packages(include=["objmst", "objmst.*", "hydra_plugins.*"]),
    package_data={"objmst": ["VERSION"]},
    entry_points={"console_scripts": "objmst=objmst.client.cli:cli"},
)
