#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Fetching and verifying pinned checkpoints. Files are checked against the
sha256 in the weights manifest before anything loads them; hub models are
pinned by revision instead.
"""

import hashlib
import os
from typing import Dict, List, Optional

import requests
from tqdm import tqdm

from objmst.data_model.exceptions import CheckpointMissing, DigestMismatch, DownloadFailed
from objmst.data_model.weights_manifest import WeightsEntry, WeightsManifest
from objmst.operations.config_handler import get_manifest_path, get_weights_dir
from objmst.operations.logger_core import get_logger
from objmst.operations.utils import atomic_write
from objmst.tools.misc import warn_once

logger = get_logger(name=__name__)

CHUNK_SIZE = 1 << 20
DOWNLOAD_RETRIES = 3
DOWNLOAD_TIMEOUT = 60


def sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as checkpoint_file:
        for chunk in iter(lambda: checkpoint_file.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def verify_file(entry: WeightsEntry, path: str) -> str:
    """Raise DigestMismatch unless the file at path matches the entry"""
    if not entry.sha256:
        warn_once(f"Weights for {entry.role} are not pinned by a digest")
        return path
    actual = sha256_of(path)
    if actual != entry.sha256.lower():
        raise DigestMismatch(entry.role, path, entry.sha256, actual)
    return path


def _download(url: str, path: str, retries: int = DOWNLOAD_RETRIES) -> None:
    last_error: Optional[Exception] = None
    for attempt in range(retries):
        try:
            with requests.get(url, stream=True, timeout=DOWNLOAD_TIMEOUT) as response:
                response.raise_for_status()
                total = int(response.headers.get("content-length", 0)) or None
                with atomic_write(path, "wb") as out_file, tqdm(
                    total=total,
                    unit="B",
                    unit_scale=True,
                    desc=os.path.basename(path),
                    leave=False,
                ) as progress:
                    for chunk in response.iter_content(chunk_size=CHUNK_SIZE):
                        if chunk:
                            out_file.write(chunk)
                            progress.update(len(chunk))
            return
        except (requests.RequestException, OSError) as e:
            last_error = e
            logger.warning(f"Download of {url} failed (attempt {attempt + 1}/{retries}): {e}")
    raise DownloadFailed(f"Could not download {url}: {last_error}")


def _fetch_hub(manifest: WeightsManifest, entry: WeightsEntry, offline: bool) -> str:
    from huggingface_hub import snapshot_download

    try:
        return snapshot_download(
            repo_id=entry.hub_repo,
            revision=entry.hub_revision,
            cache_dir=os.path.join(manifest.root, "hub"),
            local_files_only=offline,
        )
    except Exception as e:
        raise DownloadFailed(f"Could not fetch {entry.source_url}: {e}")


def fetch_role(manifest: WeightsManifest, role: str, offline: bool = False) -> str:
    """
    Local path of a verified checkpoint. A cached file is used only when its
    digest matches; a tampered cache is refused, never silently replaced.
    """
    entry = manifest.get(role)
    if entry.is_hub_model:
        return _fetch_hub(manifest, entry, offline)
    path = manifest.resolve_path(role)
    if os.path.exists(path):
        logger.debug(f"Cache hit for {role} at {path}")
        return verify_file(entry, path)
    if offline or not entry.source_url:
        raise CheckpointMissing(f"{role} is not cached at {path} and cannot be downloaded")
    logger.info(f"Downloading {role} from {entry.source_url}")
    _download(entry.source_url, path)
    try:
        return verify_file(entry, path)
    except DigestMismatch:
        os.unlink(path)
        raise


def fetch_weights(
    manifest: WeightsManifest, roles: Optional[List[str]] = None, offline: bool = False
) -> Dict[str, str]:
    """Verified local paths for the given roles (every role by default)"""
    if roles is None:
        roles = manifest.roles()
    return {role: fetch_role(manifest, role, offline=offline) for role in roles}


def load_default_manifest(weights_dir: Optional[str] = None) -> WeightsManifest:
    """The user's manifest, resolved against the weights cache root"""
    if weights_dir is None:
        weights_dir = get_weights_dir()
    path = get_manifest_path(weights_dir)
    if not os.path.exists(path):
        raise CheckpointMissing(
            f"No weights manifest at {path}; run `objmst fetch-weights --manifest ...`"
        )
    return WeightsManifest.load(path, root=weights_dir)

