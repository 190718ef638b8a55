#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import os

from hydra.core.config_search_path import ConfigSearchPath
from hydra.plugins.search_path_plugin import SearchPathPlugin

from objmst.operations.config_handler import DEFAULT_CONFIG_FOLDER
from objmst.operations.utils import get_root_dir


class ObjMSTSearchPathPlugin(SearchPathPlugin):
    def manipulate_search_path(self, search_path: ConfigSearchPath) -> None:
        # Profiles shipped with the repo, then the user's own
        profile_path = os.path.join(get_root_dir(), "hydra_configs")
        profile_path_user = os.path.join(DEFAULT_CONFIG_FOLDER, "hydra_configs")

        search_path.append(provider="objmst-profiles", path=f"file://{profile_path}")
        search_path.append(
            provider="objmst-profiles-user", path=f"file://{profile_path_user}"
        )
