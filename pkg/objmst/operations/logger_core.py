#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import os
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Dict, Iterator, Optional

loggers: Dict[str, logging.Logger] = {}
global_log_level = logging.INFO

ROOT_LOGGER_NAME = "objmst"
RUN_LOG_FORMAT = "[%(asctime)s] {%(name)s} %(levelname)s - %(message)s"
RUN_LOG_DATEFMT = "%m-%d %H:%M:%S"

_active_run: ContextVar[Optional[str]] = ContextVar("objmst_active_run", default=None)


def set_objmst_log_level(verbose: Optional[bool] = None, level: Optional[str] = None):
    """
    Set the level every objmst logger uses, including ones already handed
    out by get_logger. `level` (a name like "debug") wins over `verbose`,
    which picks DEBUG or INFO. Loggers that need their own level afterwards
    can be fetched from `loggers` and set directly.
    """
    global global_log_level

    if verbose is None and level is None:
        raise ValueError("Must provide one of verbose or level")

    if level is not None:
        global_log_level = logging.getLevelName(level.upper())
    else:
        global_log_level = logging.DEBUG if verbose else logging.INFO

    logging.getLogger(ROOT_LOGGER_NAME).setLevel(global_log_level)
    for logger in loggers.values():
        logger.setLevel(global_log_level)


LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}


def get_logger(
    name: str,
    verbose: Optional[bool] = None,
    log_file: Optional[str] = None,
    level: Optional[str] = None,
) -> logging.Logger:
    """
    The logger for a module, created on first use and cached after.

    name: the module name (__name__)
    verbose: DEBUG if True, INFO if False; ignored when level is given
    log_file: also write this logger's records to the given path
    level: one of debug, info, warning, error, critical
    """
    if name in loggers:
        return loggers[name]

    logger = logging.getLogger(name)
    if level is not None:
        logger.setLevel(LEVELS[level.lower()])
    elif verbose is not None:
        logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    else:
        logger.setLevel(global_log_level)
    if log_file is not None:
        handler = logging.FileHandler(log_file)
        handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT, RUN_LOG_DATEFMT))
        logger.addHandler(handler)
    loggers[name] = logger
    return logger


def current_run() -> Optional[str]:
    """The run.log path of the job the calling context is running, if any"""
    return _active_run.get()


class _RunFilter(logging.Filter):
    """Passes only records emitted from inside one attach_run_log block"""

    def __init__(self, run_id: str):
        super().__init__()
        self.run_id = run_id

    def filter(self, record: logging.LogRecord) -> bool:
        return _active_run.get() == self.run_id


@contextmanager
def attach_run_log(out_dir: str) -> Iterator[str]:
    """
    Mirror the objmst log records of this job into out_dir/run.log while the
    block runs. The handler hangs off the package root logger and filters on
    the job's context, so jobs running on other threads stay out of it.
    """
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.abspath(os.path.join(out_dir, "run.log"))
    token = _active_run.set(log_path)
    handler = logging.FileHandler(log_path, mode="a")
    handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT, RUN_LOG_DATEFMT))
    handler.setLevel(logging.DEBUG)
    handler.addFilter(_RunFilter(log_path))
    root = logging.getLogger(ROOT_LOGGER_NAME)
    root.addHandler(handler)
    try:
        yield log_path
    finally:
        root.removeHandler(handler)
        handler.close()
        _active_run.reset(token)
