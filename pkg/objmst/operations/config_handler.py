#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import os
import yaml
from typing import Dict, Any, Optional

CORE_SECTION = "core"
WEIGHTS_DIR_KEY = "weights_dir"
DEVICE_KEY = "device"
MANIFEST_KEY = "weights_manifest"

ENV_WEIGHTS_DIR = "OBJMST_WEIGHTS_DIR"
ENV_DEVICE = "OBJMST_DEVICE"
ENV_DETERMINISTIC = "OBJMST_DETERMINISTIC"

DEFAULT_CONFIG_FOLDER = os.path.expanduser("~/.objmst/")
DEFAULT_CONFIG_FILE = os.path.join(DEFAULT_CONFIG_FOLDER, "config.yml")
DEFAULT_WEIGHTS_DIR = os.path.join(DEFAULT_CONFIG_FOLDER, "weights")


def get_raw_config() -> str:
    """Returns the raw string config as written in the YAML config file"""
    if not os.path.exists(DEFAULT_CONFIG_FILE):
        return ""
    with open(DEFAULT_CONFIG_FILE, "r") as config_file:
        return config_file.read().strip()


def get_config() -> Dict[str, Any]:
    """Get the data out of the YAML config file"""
    return yaml.safe_load(get_raw_config()) or {}


def write_config(config_data: Dict[str, Any]):
    """Write the given dictionary to the config yaml"""
    init_config()
    with open(DEFAULT_CONFIG_FILE, "w") as config_file:
        config_file.write(yaml.dump(config_data))


def init_config() -> None:
    if not os.path.exists(DEFAULT_CONFIG_FOLDER):
        os.makedirs(DEFAULT_CONFIG_FOLDER, exist_ok=True)

    if not os.path.exists(DEFAULT_CONFIG_FILE):
        with open(DEFAULT_CONFIG_FILE, "w") as config_fp:
            config_fp.write(yaml.dump({CORE_SECTION: {}}))


def add_config_arg(section: str, key: str, value: Any) -> None:
    """Add an argument to the YAML config, overwriting existing"""
    config = get_config()
    if section not in config:
        config[section] = {}
    config[section][key] = value
    write_config(config)


def get_config_arg(section: str, key: str) -> Any:
    """Get an argument from the YAML config. Return None if it doesn't exist"""
    config = get_config()
    return (config.get(section) or {}).get(key, None)


def get_weights_dir() -> str:
    """Cache root for checkpoints: env var, then config file, then default"""
    from_env = os.environ.get(ENV_WEIGHTS_DIR)
    if from_env:
        return os.path.expanduser(from_env)
    from_config = get_config_arg(CORE_SECTION, WEIGHTS_DIR_KEY)
    if from_config:
        return os.path.expanduser(from_config)
    return DEFAULT_WEIGHTS_DIR


def get_device_tag() -> str:
    """Compute device tag: env var, then config file, then cuda if present"""
    from_env = os.environ.get(ENV_DEVICE)
    if from_env:
        return from_env
    from_config = get_config_arg(CORE_SECTION, DEVICE_KEY)
    if from_config:
        return from_config
    import torch

    return "cuda" if torch.cuda.is_available() else "cpu"


def deterministic_requested() -> bool:
    return os.environ.get(ENV_DETERMINISTIC, "0") == "1"


def get_manifest_path(weights_dir: Optional[str] = None) -> str:
    """The weights manifest: config file entry, else manifest.json in the cache root"""
    from_config = get_config_arg(CORE_SECTION, MANIFEST_KEY)
    if from_config:
        return os.path.expanduser(from_config)
    if weights_dir is None:
        weights_dir = get_weights_dir()
    return os.path.join(weights_dir, "manifest.json")
