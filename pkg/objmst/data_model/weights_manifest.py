#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from objmst.data_model.constants.weights_role import WeightsRole
from objmst.data_model.exceptions import CheckpointMissing, ValidationError

HUB_PREFIX = "hf://"


@dataclass
class WeightsEntry:
    """
    One pinned checkpoint. `source_url` is an http(s) url for plain files,
    or `hf://<repo>@<revision>` for models resolved through the model hub,
    where the revision pins the snapshot instead of a file digest.
    """

    role: str
    checkpoint_id: str
    sha256: str = ""
    source_url: str = ""
    local_path: str = ""

    def __post_init__(self):
        if self.role not in WeightsRole.valid():
            raise ValidationError(
                f"Unknown weights role {self.role}, expected one of {WeightsRole.valid()}"
            )

    @property
    def is_hub_model(self) -> bool:
        return self.source_url.startswith(HUB_PREFIX)

    @property
    def hub_repo(self) -> str:
        """Repo id and revision of a hub entry"""
        assert self.is_hub_model, f"{self.role} is not a hub model"
        return self.source_url[len(HUB_PREFIX) :].split("@", 1)[0]

    @property
    def hub_revision(self) -> Optional[str]:
        assert self.is_hub_model, f"{self.role} is not a hub model"
        spec = self.source_url[len(HUB_PREFIX) :]
        return spec.split("@", 1)[1] if "@" in spec else None


@dataclass
class WeightsManifest:
    """The checkpoint for every role, resolved relative to a cache root"""

    entries: Dict[str, WeightsEntry] = field(default_factory=dict)
    root: str = ""

    def get(self, role: str) -> WeightsEntry:
        if role not in self.entries:
            raise CheckpointMissing(f"No weights manifest entry for role {role}")
        return self.entries[role]

    def has(self, role: str) -> bool:
        return role in self.entries

    def resolve_path(self, role: str) -> str:
        """Absolute path of a role's local file inside the cache root"""
        entry = self.get(role)
        local = entry.local_path or entry.checkpoint_id
        if os.path.isabs(local):
            return local
        return os.path.join(self.root, local)

    def roles(self) -> List[str]:
        return list(self.entries.keys())

    def to_dict(self) -> Dict[str, Any]:
        return {"entries": [asdict(e) for e in self.entries.values()]}

    @staticmethod
    def from_dict(data: Dict[str, Any], root: str = "") -> "WeightsManifest":
        entries = {}
        for raw in data.get("entries", []):
            entry = WeightsEntry(**raw)
            entries[entry.role] = entry
        return WeightsManifest(entries=entries, root=root)

    @staticmethod
    def load(path: str, root: Optional[str] = None) -> "WeightsManifest":
        with open(path, "r") as manifest_file:
            data = json.load(manifest_file)
        if root is None:
            root = os.path.dirname(os.path.abspath(path))
        return WeightsManifest.from_dict(data, root=root)

    def save(self, path: str) -> None:
        with open(path, "w") as manifest_file:
            json.dump(self.to_dict(), manifest_file, indent=2)
