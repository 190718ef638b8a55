#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Run a batch of JSON job configs through the pipeline. The shared job
settings come from hydra (profiles under hydra_configs/), and every job
file is merged on top of them:

    python -m objmst.scripts.run_batch +profile=desk_scale \
        objmst.batch.out_root=/tmp/runs 'objmst.batch.jobs=[a.json,b.json]'
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List

import hydra
from omegaconf import DictConfig, OmegaConf

from objmst.data_model.exceptions import ObjMSTError
from objmst.data_model.job_spec import JobSpec
from objmst.operations.hydra_config import RunScriptConfig, register_script_config
from objmst.operations.logger_core import get_logger, set_objmst_log_level
from objmst.operations.operator import run_job

logger = get_logger(name=__name__)

register_script_config(name="batch_config", module=RunScriptConfig)


def job_spec_for(base: DictConfig, job_path: str, out_root: str) -> JobSpec:
    """The hydra job settings, overlaid with the job file, writing to out_root/<job name>"""
    with open(job_path, "r") as job_file:
        overlay = OmegaConf.create(json.load(job_file))
    merged = OmegaConf.merge(base, overlay)
    name = os.path.splitext(os.path.basename(job_path))[0]
    merged.out_dir = os.path.join(out_root, name)
    return JobSpec.from_config(merged)


def run_batch(base: DictConfig, jobs: List[str], out_root: str, num_workers: int) -> Dict[str, str]:
    """Status per job file: `ok` or the error that stopped it"""
    specs = {path: job_spec_for(base, path, out_root) for path in jobs}
    statuses: Dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=max(1, num_workers)) as pool:
        futures = {pool.submit(run_job, spec): path for path, spec in specs.items()}
        for future in as_completed(futures):
            path = futures[future]
            try:
                future.result()
                statuses[path] = "ok"
            except ObjMSTError as e:
                logger.error(f"Job {path} failed: {e}")
                statuses[path] = f"{type(e).__name__}: {e.message}"
    return statuses


@hydra.main(config_path=None, config_name="batch_config")
def main(cfg: DictConfig) -> None:
    set_objmst_log_level(level=cfg.objmst.log_level)
    batch = cfg.objmst.batch
    statuses = run_batch(cfg.objmst.job, list(batch.jobs), batch.out_root, batch.num_workers)
    failed = [p for p, s in statuses.items() if s != "ok"]
    logger.info(f"{len(statuses) - len(failed)} of {len(statuses)} jobs completed")
    for path in failed:
        logger.info(f"  {path}: {statuses[path]}")


if __name__ == "__main__":
    main()
