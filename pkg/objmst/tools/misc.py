#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from typing import Optional, Set, Tuple

from objmst.operations.logger_core import current_run, get_logger

logger = get_logger(name=__name__)

_seen_logs: Set[Tuple[Optional[str], str]] = set()


def warn_once(msg: str) -> None:
    """
    Log a warning, but only once per job (once per process outside a job),
    so every run.log gets its own copy.

    :param str msg: Message to display
    """
    key = (current_run(), msg)
    if key not in _seen_logs:
        _seen_logs.add(key)
        logger.warning(msg)
