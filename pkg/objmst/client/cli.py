#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import functools
import json
import os

import click
from click_default_group import DefaultGroup

from objmst.data_model.constants.job_mode import AblationArm
from objmst.data_model.exceptions import ObjMSTError


def handle_errors(command):
    """Report objmst errors as one line on stderr and exit with the family code"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ObjMSTError as e:
            click.echo(f"{type(e).__name__}: {e.message}", err=True)
            raise SystemExit(e.exit_code)

    return wrapper


def job_options(command):
    """Flags that override fields of the JSON job config"""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None),
        click.option("--mode", type=str, default=None),
        click.option("--content", type=str, default=None),
        click.option("--mask", type=str, default=None),
        click.option("--style-text-fg", type=str, default=None),
        click.option("--style-text-bg", type=str, default=None),
        click.option("--style-image-fg", type=str, default=None),
        click.option("--style-image-bg", type=str, default=None),
        click.option("--bg-content", type=str, default=None),
        click.option("--bg-mask", type=str, default=None),
        click.option("-o", "--out", "out_dir", type=str, default=None),
        click.option("--seed", type=int, default=None),
        click.option("--steps", type=int, default=None),
        click.option("--lr", "learning_rate", type=float, default=None),
        click.option("--lambda", "lambda_", type=float, default=None),
        click.option("--n-crop", type=int, default=None),
        click.option("--count", type=int, default=None),
        click.option("--mapper", type=str, default=None),
        click.option("--harmonizer", type=str, default=None),
        click.option("--full-frame/--salient-only", default=None),
        click.option("--deterministic/--nondeterministic", default=None),
        click.option("-v", "--verbose", is_flag=True, default=False),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _load_spec(config_path, flags):
    from objmst.data_model.job_spec import JobSpec

    overrides = {
        "mode": flags.get("mode"),
        "content": flags.get("content"),
        "mask": flags.get("mask"),
        "style_text_fg": flags.get("style_text_fg"),
        "style_text_bg": flags.get("style_text_bg"),
        "style_image_fg": flags.get("style_image_fg"),
        "style_image_bg": flags.get("style_image_bg"),
        "bg_content": flags.get("bg_content"),
        "bg_mask": flags.get("bg_mask"),
        "out_dir": flags.get("out_dir"),
        "seed": flags.get("seed"),
        "full_frame": flags.get("full_frame"),
        "inversion.steps": flags.get("steps"),
        "inversion.learning_rate": flags.get("learning_rate"),
        "inversion.lambda_": flags.get("lambda_"),
        "inversion.n_crop": flags.get("n_crop"),
        "inversion.count": flags.get("count"),
        "transfer.mapper": flags.get("mapper"),
        "harmonize.harmonizer": flags.get("harmonizer"),
    }
    return JobSpec.load(config_path, overrides)


def _setup(verbose, deterministic=None):
    from objmst.operations.config_handler import ENV_DETERMINISTIC
    from objmst.operations.logger_core import set_objmst_log_level

    set_objmst_log_level(verbose=verbose)
    if deterministic is not None:
        os.environ[ENV_DETERMINISTIC] = "1" if deterministic else "0"


@click.group(cls=DefaultGroup, default="stylize")
def cli():
    pass


@cli.command("stylize")
@job_options
@handle_errors
def stylize(config_path, verbose, deterministic, **flags):
    """Run a full stylization job (inversion, transfer, harmonization)"""
    from objmst.operations.operator import run_job

    _setup(verbose, deterministic)
    spec = _load_spec(config_path, flags)
    result = run_job(spec, progress=True)
    click.echo(f"Wrote {os.path.join(result.out_dir, 'final.png')}")
    if result.harmonized is False:
        click.echo("Warning: the harmonizer was unavailable, final.png is un-harmonized")


@cli.command("segment")
@click.argument("content", type=click.Path(exists=True))
@click.option("-o", "--out", "out_path", type=str, required=True)
@click.option("--segmenter", "segmenter_type", type=str, default="sam")
@click.option(
    "--mask", "mask_path", type=click.Path(exists=True), default=None,
    help="Mask file for the mask_file segmenter",
)
@click.option("--resolution", type=int, default=512)
@click.option("-v", "--verbose", is_flag=True, default=False)
@handle_errors
def segment(content, out_path, segmenter_type, mask_path, resolution, verbose):
    """Write the salient-object mask of a content image"""
    from objmst.data_model.constants.weights_role import WeightsRole
    from objmst.operations.ingest import acquire_mask, load_image, save_mask
    from objmst.operations.operator import build_segmenter
    from objmst.operations.utils import get_device
    from objmst.operations.weights import fetch_role, load_default_manifest

    _setup(verbose)
    manifest = load_default_manifest()
    checkpoint = None
    if manifest.has(WeightsRole.SEGMENTER):
        checkpoint = fetch_role(manifest, WeightsRole.SEGMENTER)
    segmenter = build_segmenter(segmenter_type, checkpoint, str(get_device()), mask_path)
    image = load_image(content, resolution)
    mask = acquire_mask(image, segmenter)
    save_mask(mask, out_path)
    click.echo(f"Wrote {out_path} (foreground {mask.area_fraction:.3f} of the frame)")


@cli.command("invert")
@job_options
@click.option("--target", type=click.Choice(["fg", "bg"]), default="fg")
@click.option("--unmasked", is_flag=True, default=False, help="Use the unmasked baseline loss")
@handle_errors
def invert(config_path, verbose, deterministic, target, unmasked, **flags):
    """Produce style representations only"""
    from dataclasses import replace

    from objmst.data_model.constants.weights_role import WeightsRole
    from objmst.data_model.exceptions import ValidationError
    from objmst.operations.clip_direction import ClipEncoder
    from objmst.operations.ingest import acquire_mask, apply_mask, load_image
    from objmst.operations.inversion import (
        Generator,
        invert_multi,
        save_representation,
        unmasked_baseline_loss_mode,
    )
    from objmst.operations.utils import get_device, set_determinism, stage_seed
    from objmst.operations.weights import fetch_role, load_default_manifest

    _setup(verbose, deterministic)
    spec = _load_spec(config_path, flags)
    spec.validate()
    if spec.mask is None:
        raise ValidationError("invert needs --mask; run `objmst segment` first")
    set_determinism()
    device = get_device()
    manifest = load_default_manifest()
    clip = ClipEncoder.from_pretrained(fetch_role(manifest, WeightsRole.ENCODER_TEXT), device=device)
    generator = Generator.load(
        fetch_role(manifest, WeightsRole.GENERATOR),
        generator_id=manifest.get(WeightsRole.GENERATOR).checkpoint_id,
        device=device,
    )
    content = load_image(spec.content, spec.ingest.resolution)
    mask = acquire_mask(content, None, spec.mask, spec.ingest.mask_threshold)
    style_text = spec.style_text_fg if target == "fg" else spec.style_text_bg
    style_image_path = spec.style_image_fg if target == "fg" else spec.style_image_bg
    if not style_text:
        raise ValidationError(f"No style text given for target {target}")
    style_image = None
    if style_image_path:
        style_image = load_image(style_image_path, spec.ingest.resolution)
    cfg = replace(spec.inversion, seed=stage_seed(spec.seed, f"invert_{target}"))
    if unmasked:
        cfg = unmasked_baseline_loss_mode(cfg)
    reps = invert_multi(
        generator,
        clip,
        style_text,
        style_image,
        apply_mask(content, mask),
        cfg,
        target=target,
        source_text=spec.source_text,
        ingest_args=spec.ingest,
        progress=True,
    )
    for i, rep in enumerate(reps):
        save_representation(rep, spec.out_dir, f"{target}_{i}")
        click.echo(f"{target}_{i}: best loss {rep.best_loss:.4f} at step {rep.best_step}")


@cli.command("eval")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--mode", type=click.Choice(["style_reps", "stylized"]), default="stylized")
@click.option("--references", "references_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--out", "out_dir", type=str, required=True)
@click.option("--name", type=str, default="report")
@click.option("--workers", "num_workers", type=int, default=4)
@click.option("-v", "--verbose", is_flag=True, default=False)
@handle_errors
def evaluate(run_dir, mode, references_path, out_dir, name, num_workers, verbose):
    """Score a run directory and write a CSV and text table"""
    from objmst.operations.metrics import evaluate_table, format_table, load_references, write_report
    from objmst.operations.operator import load_metric_models

    _setup(verbose)
    if references_path is None:
        references_path = os.path.join(run_dir, "manifest.json")
    references = load_references(references_path)
    report = evaluate_table(run_dir, mode, references, load_metric_models(), num_workers)
    if len(report.per_image) == 0:
        click.echo(f"Warning: no {mode} outputs in {run_dir}")
        return
    paths = write_report(report, out_dir, name)
    click.echo(format_table(report))
    click.echo(f"\nWrote {paths['csv']}")


@cli.command("ablate")
@click.argument("arm", type=click.Choice(AblationArm.valid()))
@click.option("--style-set", "style_set_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--out", "out_root", type=str, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--steps", type=int, default=None)
@click.option("--count", type=int, default=None)
@click.option("--workers", "num_workers", type=int, default=4)
@click.option("-v", "--verbose", is_flag=True, default=False)
@handle_errors
def ablate(arm, style_set_path, config_path, out_root, seed, steps, count, num_workers, verbose):
    """Run an ablation arm over a style set and print the ordering verdicts"""
    from objmst.data_model.exceptions import ValidationError
    from objmst.data_model.job_spec import JobSpec
    from objmst.operations.metrics import format_verdicts
    from objmst.operations.operator import (
        MIN_STYLE_SET,
        load_metric_models,
        load_pipeline_models,
        load_style_set,
        run_ablation,
    )
    from objmst.operations.utils import get_data_dir

    _setup(verbose)
    if style_set_path is None:
        style_set_path = os.path.join(get_data_dir(), "style_sets", "desk_scale.json")
    style_set = load_style_set(style_set_path)
    if len(style_set) < MIN_STYLE_SET:
        raise ValidationError(f"Style sets need at least {MIN_STYLE_SET} entries")
    # The first entry stands in as the job; only the shared settings matter
    base = JobSpec.load(
        config_path,
        {
            "content": style_set[0].content,
            "style_text_fg": style_set[0].style_text,
            "mask": style_set[0].mask,
            "out_dir": out_root,
            "seed": seed,
            "inversion.steps": steps,
            "inversion.count": count,
        },
    )
    models = load_pipeline_models(base)
    result = run_ablation(
        arm, style_set, out_root, base, models, load_metric_models(), num_workers
    )
    click.echo(format_verdicts(result.verdicts))


@cli.command("fetch-weights")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None)
@click.option("--role", "roles", multiple=True, help="Only these roles (repeatable)")
@click.option("--offline", is_flag=True, default=False, help="Verify the cache without downloading")
@handle_errors
def fetch_weights(manifest_path, roles, offline):
    """Download and verify pinned checkpoints into the weights directory"""
    import shutil

    from tabulate import tabulate

    from objmst.data_model.weights_manifest import WeightsManifest
    from objmst.operations.config_handler import get_manifest_path, get_weights_dir
    from objmst.operations.weights import fetch_weights as fetch

    weights_dir = get_weights_dir()
    os.makedirs(weights_dir, exist_ok=True)
    if manifest_path is not None:
        installed = get_manifest_path(weights_dir)
        if os.path.abspath(manifest_path) != os.path.abspath(installed):
            shutil.copyfile(manifest_path, installed)
        manifest_path = installed
    else:
        manifest_path = get_manifest_path(weights_dir)
    manifest = WeightsManifest.load(manifest_path, root=weights_dir)
    paths = fetch(manifest, list(roles) or None, offline=offline)
    click.echo(tabulate(sorted(paths.items()), headers=["Role", "Path"]))


@cli.command("config")
@click.argument("identifier", type=(str), default=None, required=False)
@click.argument("value", type=(str), default=None, required=False)
def config(identifier, value):
    from objmst.operations.config_handler import (
        DEFAULT_CONFIG_FILE,
        add_config_arg,
        get_config_arg,
        get_raw_config,
    )

    if identifier is None and value is None:
        # If no args, show full config:
        click.echo(f"{DEFAULT_CONFIG_FILE}:\n")
        click.echo(get_raw_config())
        return

    if "." not in identifier:
        raise click.BadParameter(
            f"Identifier must be of format: <section>.<key>\nYou passed in: {identifier}"
        )
    [section, key] = identifier.split(".")

    if value is None:
        # Read mode:
        click.echo(get_config_arg(section, key))
    else:
        # Write mode:
        add_config_arg(section, key, value)
        click.echo(f"{identifier} succesfully updated to: {value}")


@cli.command("check")
@click.option("--offline/--online", default=True)
def check(offline):
    """Checks that every pinned checkpoint resolves and verifies"""
    from objmst.operations.weights import fetch_weights as fetch
    from objmst.operations.weights import load_default_manifest

    try:
        manifest = load_default_manifest()
        paths = fetch(manifest, offline=offline)
    except ObjMSTError as e:
        click.echo("Something went wrong.")
        click.echo(e)
        raise SystemExit(e.exit_code)
    click.echo(json.dumps(paths, indent=2))
    click.echo("objmst seems to be set up correctly.")


if __name__ == "__main__":
    cli()
