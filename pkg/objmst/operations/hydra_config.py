#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from dataclasses import dataclass, field
from typing import Any, List

from hydra.core.config_store import ConfigStoreWithProvider
from omegaconf import MISSING

from objmst.data_model.job_spec import JobSpec
from objmst.operations.logger_core import get_logger

logger = get_logger(name=__name__)

config = ConfigStoreWithProvider("objmst")


@dataclass
class BatchArgs:
    """Arguments for running many JobSpecs in one process"""

    jobs: List[str] = field(
        default_factory=list,
        metadata={"help": "JSON JobSpec files to run, each with its own out_dir"},
    )
    num_workers: int = field(
        default=1, metadata={"help": "Jobs run concurrently in a thread pool"}
    )
    out_root: str = field(
        default=MISSING,
        metadata={"help": "Root directory; each job writes to out_root/<job name>"},
    )


@dataclass
class ObjMSTConfig:
    job: JobSpec = field(default_factory=JobSpec)
    batch: BatchArgs = field(default_factory=BatchArgs)
    log_level: str = "info"


@dataclass
class RunScriptConfig:
    objmst: ObjMSTConfig = field(default_factory=ObjMSTConfig)


def register_abstraction_config(name: str, node: Any, abstraction_type: str):
    config.store(
        name=name,
        node=node,
        group=f"objmst/{abstraction_type}",
    )


def initialize_named_configs():
    """
    Register the core objmst configuration structure. Must be done in __init__
    """
    config.store(
        name="base_objmst_config",
        node=ObjMSTConfig,
        group="objmst",
    )


def register_script_config(name: str, module: Any):
    config.store(name=name, node=module)
