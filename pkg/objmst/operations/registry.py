#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import importlib
import os
from typing import TYPE_CHECKING, Dict, List, Type, Union

from objmst.operations.hydra_config import register_abstraction_config
from objmst.operations.utils import get_root_dir

if TYPE_CHECKING:
    from objmst.abstractions.feature_mapper import FeatureMapper
    from objmst.abstractions.harmonizer import Harmonizer
    from objmst.abstractions.segmenter import Segmenter


SEGMENTERS: Dict[str, Type["Segmenter"]] = {}
HARMONIZERS: Dict[str, Type["Harmonizer"]] = {}
MAPPERS: Dict[str, Type["FeatureMapper"]] = {}


def register_objmst_abstraction():
    """
    Decorator method for classes that extend an objmst abstraction, used
    to pull implementations out of anywhere that defines them.
    """

    def register_cls(
        base_class: Union[
            Type["Segmenter"], Type["Harmonizer"], Type["FeatureMapper"]
        ]
    ):
        from objmst.abstractions.feature_mapper import FeatureMapper
        from objmst.abstractions.harmonizer import Harmonizer
        from objmst.abstractions.segmenter import Segmenter

        if issubclass(base_class, Segmenter):
            name = base_class.SEGMENTER_TYPE
            SEGMENTERS[name] = base_class
            type_key = "segmenter"
        elif issubclass(base_class, Harmonizer):
            name = base_class.HARMONIZER_TYPE
            HARMONIZERS[name] = base_class
            type_key = "harmonizer"
        elif issubclass(base_class, FeatureMapper):
            name = base_class.MAPPER_TYPE
            MAPPERS[name] = base_class
            type_key = "mapper"
        else:
            raise AssertionError(
                f"Provided class {base_class} not a child of one of the objmst "
                "abstractions, expected one of Segmenter, Harmonizer, or FeatureMapper."
            )
        register_abstraction_config(
            name=name, node=base_class.ArgsClass, abstraction_type=type_key
        )
        return base_class

    return register_cls


def _import_by_suffix(package_dir: str, suffix: str) -> None:
    abstraction_root = os.path.join(get_root_dir(), "objmst", "abstractions", package_dir)
    for filename in sorted(os.listdir(abstraction_root)):
        if filename.endswith(f"{suffix}.py"):
            module_name = filename[: filename.find(".py")]
            importlib.import_module(f"objmst.abstractions.{package_dir}.{module_name}")


def fill_registries():
    """
    Ensure that all of the bundled implementations are registered
    """
    _import_by_suffix("segmenters", "segmenter")
    _import_by_suffix("harmonizers", "harmonizer")
    _import_by_suffix("mappers", "mapper")


def get_segmenter_from_type(segmenter_type: str) -> Type["Segmenter"]:
    """Return the segmenter class for the given string"""
    if segmenter_type in SEGMENTERS:
        return SEGMENTERS[segmenter_type]
    else:
        raise NotImplementedError(
            f"Missing segmenter type {segmenter_type}, is it registered?"
        )


def get_harmonizer_from_type(harmonizer_type: str) -> Type["Harmonizer"]:
    """Return the harmonizer class for the given string"""
    if harmonizer_type in HARMONIZERS:
        return HARMONIZERS[harmonizer_type]
    else:
        raise NotImplementedError(
            f"Missing harmonizer type {harmonizer_type}, is it registered?"
        )


def get_mapper_from_type(mapper_type: str) -> Type["FeatureMapper"]:
    """Return the feature mapper class for the given string"""
    if mapper_type in MAPPERS:
        return MAPPERS[mapper_type]
    else:
        raise NotImplementedError(
            f"Missing mapper type {mapper_type}, is it registered?"
        )


def get_valid_segmenter_types() -> List[str]:
    return list(SEGMENTERS.keys())


def get_valid_harmonizer_types() -> List[str]:
    return list(HARMONIZERS.keys())


def get_valid_mapper_types() -> List[str]:
    return list(MAPPERS.keys())
