#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
The Operator composes the stages into complete runs: style inversion for
the salient object (and the surroundings in double-condition mode),
salient-object transfer, compositing and harmonization. It also runs the
ablation arms that compare loss and attention variants.
"""

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import torch
from omegaconf import OmegaConf

from objmst.abstractions.harmonizer import Harmonizer
from objmst.abstractions.segmenter import Segmenter
from objmst.data_model.composite import Composite
from objmst.data_model.constants import TARGET_BG, TARGET_FG
from objmst.data_model.constants.job_mode import AblationArm, EvalMode, JobMode
from objmst.data_model.constants.weights_role import WeightsRole
from objmst.data_model.exceptions import (
    JobSpecError,
    ObjMSTError,
    StageFailure,
    ValidationError,
    WeightsError,
)
from objmst.data_model.image import BinaryMask, ImagePlane
from objmst.data_model.job_spec import JobSpec
from objmst.data_model.latent import InversionConfig, StyleRepresentation
from objmst.data_model.metric_report import MetricReport
from objmst.data_model.weights_manifest import WeightsManifest
from objmst.operations.clip_direction import ClipEncoder
from objmst.operations.harmonize import (
    build_harmonizer,
    composite_background,
    composite_over,
    harmonize,
)
from objmst.operations.ingest import acquire_mask, apply_mask, load_image, save_image, save_mask
from objmst.operations.inversion import (
    Generator,
    invert_multi,
    save_representation,
    unmasked_baseline_loss_mode,
    unmasked_single_rep_mode,
)
from objmst.operations.logger_core import attach_run_log, get_logger
from objmst.operations.metrics import (
    ContriqueModel,
    MetricModels,
    ReferenceEntry,
    Verdict,
    build_lpips,
    build_nima,
    evaluate_table,
    format_verdicts,
    ordering_verdict,
    write_report,
)
from objmst.operations.registry import get_segmenter_from_type
from objmst.operations.transfer import (
    Decoder,
    TransferModels,
    VggEncoder,
    build_mapper,
    stylize_salient,
)
from objmst.operations.utils import atomic_write, get_device, set_determinism, stage_seed
from objmst.operations.weights import fetch_role, load_default_manifest

logger = get_logger(name=__name__)

MIN_STYLE_SET = 5


@dataclass
class PipelineModels:
    """Every network a run needs, loaded once and shared read-only"""

    clip: ClipEncoder
    generator: Generator
    transfer: TransferModels
    segmenter: Optional[Segmenter] = None
    harmonizer: Optional[Harmonizer] = None
    mapper_weights: Optional[str] = None
    digests: Dict[str, str] = field(default_factory=dict)


@dataclass
class RunResult:
    out_dir: str
    final: ImagePlane
    fg_stylized: ImagePlane
    mask: BinaryMask
    fg_reps: List[StyleRepresentation]
    bg_reps: List[StyleRepresentation] = field(default_factory=list)
    harmonized: Optional[bool] = None
    seeds: Dict[str, int] = field(default_factory=dict)


class _ManifestFetcher:
    """Fetches roles from a manifest, remembering the digest of each"""

    def __init__(self, manifest: WeightsManifest, offline: bool):
        self.manifest = manifest
        self.offline = offline
        self.digests: Dict[str, str] = {}

    def __call__(self, role: str) -> str:
        path = fetch_role(self.manifest, role, offline=self.offline)
        entry = self.manifest.get(role)
        if entry.is_hub_model:
            self.digests[role] = f"{entry.hub_repo}@{entry.hub_revision or 'unpinned'}"
        else:
            self.digests[role] = entry.sha256 or "unpinned"
        return path


def build_segmenter(
    segmenter_type: str,
    checkpoint: Optional[str] = None,
    device: str = "cpu",
    mask_path: Optional[str] = None,
) -> Segmenter:
    segmenter_class = get_segmenter_from_type(segmenter_type)
    args = OmegaConf.structured(segmenter_class.ArgsClass())
    if "mask_path" in {f.name for f in fields(segmenter_class.ArgsClass)}:
        if mask_path is None:
            raise JobSpecError(f"Segmenter {segmenter_type} needs a mask file; pass --mask")
        args.mask_path = mask_path
    if checkpoint is not None and "checkpoint" in args:
        args.checkpoint = checkpoint
    if "device" in args:
        args.device = device
    return segmenter_class(args)


def _needs_segmenter(spec: JobSpec) -> bool:
    if spec.mask is None and not spec.full_frame:
        return True
    return spec.mode == JobMode.TIST_DOUBLE and bool(spec.bg_content) and not spec.bg_mask


def load_pipeline_models(
    spec: JobSpec,
    manifest: Optional[WeightsManifest] = None,
    device: Optional[torch.device] = None,
    offline: bool = False,
) -> PipelineModels:
    """Resolve and load what the job's mode needs. The JobSpec is validated first."""
    spec.validate()
    if manifest is None:
        manifest = load_default_manifest()
    if device is None:
        device = get_device()
    fetch = _ManifestFetcher(manifest, offline)

    clip = ClipEncoder.from_pretrained(fetch(WeightsRole.ENCODER_TEXT), device=device)
    generator = Generator.load(
        fetch(WeightsRole.GENERATOR),
        generator_id=manifest.get(WeightsRole.GENERATOR).checkpoint_id,
        device=device,
    )
    mapper_weights = fetch(WeightsRole.S2K_MAPPER)
    transfer = TransferModels(
        encoder=VggEncoder.load(fetch(WeightsRole.VGG_ENCODER)),
        mapper=build_mapper(spec.transfer.mapper, spec.transfer.key_regions, mapper_weights),
        decoder=Decoder.load(fetch(WeightsRole.DECODER)),
    ).to(device)

    segmenter = None
    if _needs_segmenter(spec):
        try:
            checkpoint = fetch(WeightsRole.SEGMENTER) if manifest.has(WeightsRole.SEGMENTER) else None
            segmenter = build_segmenter(spec.segmenter, checkpoint, str(device), spec.mask)
        except WeightsError as e:
            logger.warning(f"Segmenter unavailable ({e}); a mask file will be required")

    harmonizer = None
    if spec.mode in JobMode.stylizes_background():
        try:
            checkpoint = None
            if spec.harmonize.harmonizer == "ssh":
                checkpoint = fetch(WeightsRole.HARMONIZER)
            harmonizer = build_harmonizer(spec.harmonize.harmonizer, checkpoint, str(device))
        except WeightsError as e:
            logger.warning(f"Harmonizer unavailable ({e}); outputs will be un-harmonized")

    return PipelineModels(
        clip=clip,
        generator=generator,
        transfer=transfer,
        segmenter=segmenter,
        harmonizer=harmonizer,
        mapper_weights=mapper_weights,
        digests=fetch.digests,
    )


def load_metric_models(
    manifest: Optional[WeightsManifest] = None,
    device: Optional[torch.device] = None,
    offline: bool = False,
) -> MetricModels:
    """Metric networks that resolve; the rest stay None and their columns are skipped"""
    if manifest is None:
        manifest = load_default_manifest()
    if device is None:
        device = get_device()
    fetch = _ManifestFetcher(manifest, offline)
    models = MetricModels()

    def optional(role: str) -> Optional[str]:
        return fetch(role) if manifest.has(role) else None

    try:
        models.clip = ClipEncoder.from_pretrained(fetch(WeightsRole.ENCODER_TEXT), device=device)
    except WeightsError as e:
        logger.warning(f"clipscore unavailable: {e}")
    try:
        models.lpips = build_lpips(model_path=optional(WeightsRole.LPIPS)).to(device)
    except WeightsError as e:
        logger.warning(f"lpips unavailable: {e}")
    try:
        models.nima = build_nima(str(device), model_path=optional(WeightsRole.NIMA))
    except WeightsError as e:
        logger.warning(f"nima unavailable: {e}")
    try:
        models.contrique = ContriqueModel.load(fetch(WeightsRole.CONTRIQUE)).to(device)
    except WeightsError as e:
        logger.warning(f"contrique unavailable: {e}")
    return models


@contextmanager
def _stage(name: str) -> Iterator[None]:
    logger.info(f"Stage {name}")
    try:
        yield
    except StageFailure:
        raise
    except (ObjMSTError, RuntimeError, OSError, ValueError) as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageFailure(name, e) from e


def _abspath(path: Optional[str]) -> Optional[str]:
    return None if path is None else os.path.abspath(path)


def _rep_reference(spec: JobSpec, name: str, target: str) -> Dict[str, Any]:
    return {
        "output": os.path.join("style_reps", f"{name}.png"),
        "method": "ours",
        "target": target,
        "content": _abspath(spec.content),
        "style_text_fg": spec.style_text_fg,
        "style_text_bg": spec.style_text_bg,
        "style_image_fg": _abspath(spec.style_image_fg),
        "style_image_bg": _abspath(spec.style_image_bg),
    }


def _write_run_manifest(out_dir: str, record: Dict[str, Any]) -> None:
    with atomic_write(os.path.join(out_dir, "manifest.json")) as manifest_file:
        json.dump(record, manifest_file, indent=2, sort_keys=True)


def _invert_target(
    spec: JobSpec,
    models: PipelineModels,
    target: str,
    masked_ref: ImagePlane,
    seed: int,
    progress: bool,
) -> List[StyleRepresentation]:
    if target == TARGET_FG:
        style_text, style_image_path = spec.style_text_fg, spec.style_image_fg
    else:
        style_text, style_image_path = spec.style_text_bg, spec.style_image_bg
    style_image = None
    if style_image_path:
        style_image = load_image(style_image_path, spec.ingest.resolution)
    return invert_multi(
        models.generator,
        models.clip,
        style_text,
        style_image,
        masked_ref,
        replace(spec.inversion, seed=seed),
        target=target,
        source_text=spec.source_text,
        ingest_args=spec.ingest,
        progress=progress,
    )


def _bg_masked_ref(spec: JobSpec, models: PipelineModels, fallback: ImagePlane) -> ImagePlane:
    """I'_C * M'_C of the second content image, or the salient content when none is given"""
    if not spec.bg_content:
        logger.warning(
            "No bg_content given; the surrounding inversion reuses the masked salient content"
        )
        return fallback
    bg_content = load_image(spec.bg_content, spec.ingest.resolution)
    bg_mask = acquire_mask(
        bg_content,
        models.segmenter,
        spec.bg_mask,
        spec.ingest.mask_threshold,
        spec.ingest.min_mask_fraction,
    )
    return apply_mask(bg_content, bg_mask)


def run_job(
    spec: JobSpec,
    models: Optional[PipelineModels] = None,
    manifest: Optional[WeightsManifest] = None,
    progress: bool = False,
) -> RunResult:
    """
    Run one job end to end, writing final.png, fg_stylized.png, mask.png,
    style_reps/, latents/, loss_curves/, manifest.json and run.log to
    spec.out_dir. Artifacts are written as their stage finishes, so a failed
    run keeps everything before the failing stage.
    """
    spec.validate()
    out_dir = spec.out_dir
    os.makedirs(out_dir, exist_ok=True)
    seeds = {
        "master": spec.seed,
        "invert_fg": stage_seed(spec.seed, "invert_fg"),
        "invert_bg": stage_seed(spec.seed, "invert_bg"),
        "torch": stage_seed(spec.seed, "torch"),
    }
    record: Dict[str, Any] = {
        "spec": spec.to_dict(),
        "seeds": seeds,
        "status": "running",
        "files": [],
        "outputs": [],
    }

    with attach_run_log(out_dir):
        logger.info(f"Job config: {json.dumps(record['spec'], sort_keys=True)}")
        logger.info(f"Stage seeds: {seeds}")
        record["deterministic"] = set_determinism()
        torch.manual_seed(seeds["torch"])
        try:
            if models is None:
                with _stage("load"):
                    models = load_pipeline_models(spec, manifest)
            record["checkpoints"] = dict(models.digests)
            record["generator_id"] = models.generator.generator_id
            logger.info(f"Checkpoints: {record['checkpoints']}")
            result = _run_stages(spec, models, seeds, record, progress)
            record["status"] = "complete"
            return result
        except StageFailure as e:
            record["status"] = f"failed at {e.stage}"
            raise
        finally:
            _write_run_manifest(out_dir, record)


def _run_stages(
    spec: JobSpec,
    models: PipelineModels,
    seeds: Dict[str, int],
    record: Dict[str, Any],
    progress: bool,
) -> RunResult:
    out_dir = spec.out_dir
    files: List[str] = record["files"]

    with _stage("ingest"):
        content = load_image(spec.content, spec.ingest.resolution)

    with _stage("segment"):
        if spec.full_frame:
            mask = BinaryMask(torch.ones(content.size))
        else:
            mask = acquire_mask(
                content,
                models.segmenter,
                spec.mask,
                spec.ingest.mask_threshold,
                spec.ingest.min_mask_fraction,
            )
        save_mask(mask, os.path.join(out_dir, "mask.png"))
        files.append("mask.png")
        masked_ref = apply_mask(content, mask)

    with _stage("invert_fg"):
        fg_reps = _invert_target(spec, models, TARGET_FG, masked_ref, seeds["invert_fg"], progress)
        for i, rep in enumerate(fg_reps):
            save_representation(rep, out_dir, f"fg_{i}")
            files.append(os.path.join("style_reps", f"fg_{i}.png"))
            record["outputs"].append(_rep_reference(spec, f"fg_{i}", TARGET_FG))

    bg_reps: List[StyleRepresentation] = []
    if spec.mode in JobMode.stylizes_background():
        with _stage("invert_bg"):
            bg_ref = _bg_masked_ref(spec, models, masked_ref)
            bg_reps = _invert_target(spec, models, TARGET_BG, bg_ref, seeds["invert_bg"], progress)
            for i, rep in enumerate(bg_reps):
                save_representation(rep, out_dir, f"bg_{i}")
                files.append(os.path.join("style_reps", f"bg_{i}.png"))
                record["outputs"].append(_rep_reference(spec, f"bg_{i}", TARGET_BG))

    with _stage("stylize"):
        fg_stylized, mapped, _ = stylize_salient(content, mask, fg_reps, models.transfer, spec.transfer)
        save_image(fg_stylized, os.path.join(out_dir, "fg_stylized.png"))
        files.append("fg_stylized.png")
        if spec.transfer.dump_pyramids:
            with atomic_write(os.path.join(out_dir, "pyramids", "mapped.bin"), "wb") as dump_file:
                mapped.dump(dump_file)

    harmonized: Optional[bool] = None
    if bg_reps:
        with _stage("composite"):
            composite = composite_background(fg_stylized, mask, bg_reps, spec.harmonize.bg_fill)
        with _stage("harmonize"):
            output = harmonize(composite, models.harmonizer, spec.harmonize.feather)
            final = output.image
            harmonized = output.harmonized
            record["harmonizer"] = output.harmonizer_type
    else:
        with _stage("composite"):
            # Single-condition runs leave the surroundings as they were
            composite = composite_over(
                fg_stylized, content, mask, {"fg_source": "fg_stylized", "bg_source": "content"}
            )
            final = composite.image
    record["harmonized"] = harmonized

    with _stage("write"):
        save_image(final, os.path.join(out_dir, "final.png"))
        files.append("final.png")
        record["outputs"].append(
            {
                "output": "final.png",
                "method": "ours",
                "target": TARGET_FG,
                "content": _abspath(spec.content),
                "mask": os.path.join(out_dir, "mask.png"),
                "style_text_fg": spec.style_text_fg,
                "style_text_bg": spec.style_text_bg,
                "style_image_fg": _abspath(spec.style_image_fg),
                "style_image_bg": _abspath(spec.style_image_bg),
            }
        )
    logger.info(f"Wrote {len(files)} artifacts to {out_dir}")
    return RunResult(
        out_dir=out_dir,
        final=final,
        fg_stylized=fg_stylized,
        mask=mask,
        fg_reps=fg_reps,
        bg_reps=bg_reps,
        harmonized=harmonized,
        seeds=seeds,
    )


@dataclass
class StyleSetEntry:
    """One content/style pairing of an ablation style set"""

    name: str
    content: str
    style_text: str
    mask: Optional[str] = None
    style_image: Optional[str] = None


def load_style_set(path: str) -> List[StyleSetEntry]:
    """A JSON list of entries; relative paths resolve against the file's folder"""
    with open(path, "r") as style_set_file:
        raw = json.load(style_set_file)
    root = os.path.dirname(os.path.abspath(path))

    def resolve(p: Optional[str]) -> Optional[str]:
        return p if p is None or os.path.isabs(p) else os.path.join(root, p)

    entries = []
    for item in raw:
        entry = StyleSetEntry(**item)
        entry.content = resolve(entry.content)
        entry.mask = resolve(entry.mask)
        entry.style_image = resolve(entry.style_image)
        entries.append(entry)
    return entries


@dataclass
class AblationResult:
    arm: str
    left_name: str
    right_name: str
    left: MetricReport
    right: MetricReport
    verdicts: List[Verdict]


ARM_SIDES = {
    AblationArm.LOSS_MASKED_VS_PLAIN: ("masked", "plain"),
    AblationArm.ATTENTION_S2K_VS_A2A: ("s2k", "a2a"),
    AblationArm.SINGLE_REP_BASELINE: ("ours", "baseline"),
}


def compare_arms(arm: str, left: MetricReport, right: MetricReport) -> List[Verdict]:
    """The ordering checks of an arm, left expected to win"""
    left_name, right_name = ARM_SIDES[arm]
    if arm in (AblationArm.LOSS_MASKED_VS_PLAIN, AblationArm.SINGLE_REP_BASELINE):
        checks = [
            ("text alignment", "clipscore_text", True),
            ("image alignment", "clipscore_image", True),
            ("distance to style image", "lpips", False),
        ]
    else:
        checks = [
            ("structure preserved", "lpips", False),
            ("text alignment", "clipscore_text", True),
        ]
    return [
        ordering_verdict(name, column, left, right, left_name, right_name, higher)
        for name, column, higher in checks
    ]


def _entry_spec(base: JobSpec, entry: StyleSetEntry, out_dir: str) -> JobSpec:
    mode = JobMode.MMIST_SINGLE if entry.style_image else JobMode.TIST_SINGLE
    return replace(
        base,
        mode=mode,
        content=entry.content,
        mask=entry.mask,
        style_text_fg=entry.style_text,
        style_text_bg=None,
        style_image_fg=entry.style_image,
        style_image_bg=None,
        out_dir=out_dir,
    )


LOSS_ARM_VARIANTS: Dict[str, Dict[str, Callable[[InversionConfig], InversionConfig]]] = {
    AblationArm.LOSS_MASKED_VS_PLAIN: {
        "masked": lambda cfg: cfg,
        "plain": unmasked_baseline_loss_mode,
    },
    AblationArm.SINGLE_REP_BASELINE: {
        "ours": lambda cfg: cfg,
        "baseline": unmasked_single_rep_mode,
    },
}


def _ablate_loss(
    arm: str, entries: List[StyleSetEntry], base: JobSpec, models: PipelineModels, arm_dir: str
) -> Tuple[List[ReferenceEntry], List[ReferenceEntry]]:
    """Invert every entry once per side of a loss arm; the sides differ only in InversionConfig"""
    left_name, right_name = ARM_SIDES[arm]
    refs: Dict[str, List[ReferenceEntry]] = {left_name: [], right_name: []}
    for entry in entries:
        spec = _entry_spec(base, entry, arm_dir)
        content = load_image(spec.content, spec.ingest.resolution)
        mask = acquire_mask(content, models.segmenter, spec.mask, spec.ingest.mask_threshold)
        masked_ref = apply_mask(content, mask)
        seed = stage_seed(spec.seed, "invert_fg")
        for side, variant_mode in LOSS_ARM_VARIANTS[arm].items():
            variant = replace(spec, inversion=variant_mode(spec.inversion))
            reps = _invert_target(variant, models, TARGET_FG, masked_ref, seed, False)
            for i, rep in enumerate(reps):
                save_representation(rep, os.path.join(arm_dir, side, entry.name), f"fg_{i}")
                refs[side].append(
                    ReferenceEntry(
                        output=os.path.join(entry.name, "style_reps", f"fg_{i}.png"),
                        method=side,
                        content=entry.content,
                        style_text_fg=entry.style_text,
                        style_image_fg=entry.style_image,
                    )
                )
    return refs[left_name], refs[right_name]


def _ablate_attention(
    entries: List[StyleSetEntry], base: JobSpec, models: PipelineModels, arm_dir: str
) -> Tuple[List[ReferenceEntry], List[ReferenceEntry]]:
    mappers = {
        side: build_mapper(side, base.transfer.key_regions, models.mapper_weights).to(
            models.transfer.device
        )
        for side in ("s2k", "a2a")
    }
    refs: Dict[str, List[ReferenceEntry]] = {"s2k": [], "a2a": []}
    for entry in entries:
        spec = _entry_spec(base, entry, arm_dir)
        content = load_image(spec.content, spec.ingest.resolution)
        mask = acquire_mask(content, models.segmenter, spec.mask, spec.ingest.mask_threshold)
        reps = _invert_target(
            spec, models, TARGET_FG, apply_mask(content, mask), stage_seed(spec.seed, "invert_fg"), False
        )
        for side, mapper in mappers.items():
            transfer = replace(models.transfer, mapper=mapper)
            stylized, _, _ = stylize_salient(
                content, mask, reps, transfer, replace(spec.transfer, mapper=side)
            )
            final = composite_over(stylized, content, mask).image
            save_image(final, os.path.join(arm_dir, side, entry.name, "final.png"))
            refs[side].append(
                ReferenceEntry(
                    output=os.path.join(entry.name, "final.png"),
                    method=side,
                    content=entry.content,
                    style_text_fg=entry.style_text,
                    style_image_fg=entry.style_image,
                )
            )
    return refs["s2k"], refs["a2a"]


def run_ablation(
    arm: str,
    style_set: List[StyleSetEntry],
    out_root: str,
    base_spec: JobSpec,
    models: PipelineModels,
    metric_models: MetricModels,
    num_workers: int = 4,
) -> AblationResult:
    """
    Run both sides of an ablation arm over the style set with identical
    seeds, score them and check the expected orderings. Reports and the
    verdict table are written under out_root/<arm>.
    """
    if arm not in AblationArm.valid():
        raise ValidationError(f"Unknown ablation arm {arm}, expected one of {AblationArm.valid()}")
    if len(style_set) < MIN_STYLE_SET:
        raise ValidationError(
            f"Ablations need at least {MIN_STYLE_SET} style set entries, got {len(style_set)}"
        )
    arm_dir = os.path.join(out_root, arm)
    left_name, right_name = ARM_SIDES[arm]
    set_determinism()

    if arm in LOSS_ARM_VARIANTS:
        mode = EvalMode.STYLE_REPS
        with _stage(f"ablate/{arm}"):
            left_refs, right_refs = _ablate_loss(arm, style_set, base_spec, models, arm_dir)
    else:
        mode = EvalMode.STYLIZED
        with _stage(f"ablate/{arm}"):
            left_refs, right_refs = _ablate_attention(style_set, base_spec, models, arm_dir)

    with _stage("evaluate"):
        left = evaluate_table(
            os.path.join(arm_dir, left_name), mode, left_refs, metric_models, num_workers
        )
        right = evaluate_table(
            os.path.join(arm_dir, right_name), mode, right_refs, metric_models, num_workers
        )
    verdicts = compare_arms(arm, left, right)
    write_report(left, arm_dir, left_name)
    write_report(right, arm_dir, right_name)
    with atomic_write(os.path.join(arm_dir, "verdicts.txt")) as verdict_file:
        verdict_file.write(format_verdicts(verdicts) + "\n")
    for verdict in verdicts:
        logger.info(
            f"[{arm}] {verdict.check}: {verdict.left}={verdict.left_value} "
            f"{verdict.right}={verdict.right_value} -> {verdict.holds}"
        )
    return AblationResult(arm, left_name, right_name, left, right, verdicts)
