#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import os
import tempfile
from contextlib import contextmanager
from dataclasses import Field, fields
from typing import Any, Dict, Iterator, List

import torch
from omegaconf import DictConfig, OmegaConf

from objmst.operations.config_handler import deterministic_requested, get_device_tag
from objmst.operations.logger_core import get_logger

logger = get_logger(name=__name__)

_MASK64 = (1 << 64) - 1


def get_root_dir() -> str:
    """Return the currently configured root objmst directory"""
    # This file is at ROOT/objmst/operations/utils.py
    return os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def get_data_dir() -> str:
    """Return the directory holding the shipped style sets and manifests"""
    return os.path.join(get_root_dir(), "data")


def splitmix64(state: int) -> int:
    """One splitmix64 output for the given 64-bit state"""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stage_seed(master_seed: int, stage: str) -> int:
    """
    Derive the seed of a named stage from the master seed. The stage name is
    folded in byte by byte through splitmix64, and the result is truncated to
    31 bits so it is a valid torch/numpy seed.
    """
    state = master_seed & _MASK64
    for byte in stage.encode("utf-8"):
        state = splitmix64(state ^ byte)
    return splitmix64(state) & 0x7FFFFFFF


def get_device() -> torch.device:
    return torch.device(get_device_tag())


def set_determinism(enabled: bool = None) -> bool:
    """
    Force deterministic kernels when requested (OBJMST_DETERMINISTIC=1 unless
    given explicitly). Returns whether determinism is on.
    """
    if enabled is None:
        enabled = deterministic_requested()
    if enabled:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False
        logger.debug("Deterministic kernels enabled")
    return enabled


@contextmanager
def atomic_write(path: str, mode: str = "w") -> Iterator[Any]:
    """
    Write to a temp file next to path, then rename over it. A failure part
    way leaves any previous file at path untouched.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(
        prefix=f".{os.path.basename(path)}.", suffix=".tmp", dir=directory
    )
    try:
        with os.fdopen(fd, mode) as tmp_file:
            yield tmp_file
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def get_dict_from_field(in_field: Field) -> Dict[str, Any]:
    """
    Extract all of the arguments from an argument group
    and return a dict mapping from argument dest to argument dict
    """
    found_type = "str"
    try:
        found_type = in_field.type.__name__
    except AttributeError:
        found_type = "unknown"
    return {
        "dest": in_field.name,
        "type": found_type,
        "default": in_field.default,
        "help": in_field.metadata.get("help"),
    }


def get_extra_argument_dicts(customizable_class: Any) -> List[Dict[str, Any]]:
    """
    Produce the argument dicts for the given customizable class
    (Segmenter, Harmonizer, FeatureMapper)
    """
    dict_fields = fields(customizable_class.ArgsClass)
    usable_fields = [f for f in dict_fields if not f.name.startswith("_")]
    parsed_fields = [get_dict_from_field(f) for f in usable_fields]
    help_text = (customizable_class.__doc__ or "").strip().split("\n")[0]
    return [{"desc": help_text, "args": {f["dest"]: f for f in parsed_fields}}]


def parse_arg_dict(customizable_class: Any, args: Dict[str, Any]) -> DictConfig:
    """
    Get the ArgsClass for a class, then parse the given args using
    it. Return the DictConfig of the finalized namespace.
    """
    return OmegaConf.structured(customizable_class.ArgsClass(**args))
