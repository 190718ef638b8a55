#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Cross-modal latent inversion: optimise a W latent of a frozen generator so
that patches of its output follow the style text and style image directions.
"""

import csv
import json
import math
import os
import pickle
from dataclasses import replace
from typing import Any, List, Optional, Tuple

import torch
from tqdm import tqdm

from objmst.data_model.constants import DEFAULT_SOURCE_TEXT, TARGET_FG
from objmst.data_model.embedding import LossConfig
from objmst.data_model.exceptions import (
    GeneratorUnavailable,
    LatentShapeMismatch,
    NonFiniteLoss,
)
from objmst.data_model.image import ImagePlane
from objmst.data_model.job_spec import IngestArgs
from objmst.data_model.latent import (
    LATENT_INIT_MEAN_W,
    InversionConfig,
    LatentVector,
    LossRecord,
    StyleRepresentation,
)
from objmst.operations.clip_direction import (
    ClipEncoder,
    directional_loss_terms,
    text_direction,
)
from objmst.operations.ingest import crop_and_augment_batch, save_image
from objmst.operations.logger_core import get_logger
from objmst.operations.utils import atomic_write, stage_seed

logger = get_logger(name=__name__)

LOSS_CURVE_COLUMNS = ["step", "total", "text_term", "image_term"]
LR_RAMPDOWN_LENGTH = 0.25
LR_RAMPUP_LENGTH = 0.05
NOISE_RAMP_LENGTH = 0.75


class Generator:
    """
    A frozen StyleGAN-family generator: `mapping(z, c)` gives (N, num_ws,
    w_dim) and `synthesis(ws)` gives images in [-1, 1]. Latents handled here
    are single W vectors (1, w_dim) broadcast to every synthesis layer.
    """

    def __init__(self, module: Any, generator_id: str, w_avg_samples: int = 10000):
        for attr in ["z_dim", "w_dim", "num_ws", "mapping", "synthesis"]:
            if not hasattr(module, attr):
                raise GeneratorUnavailable(
                    f"Generator {generator_id} does not expose `{attr}`"
                )
        self.module = module.eval().requires_grad_(False)
        self.generator_id = generator_id
        self.w_avg_samples = w_avg_samples
        self._mean_w: Optional[torch.Tensor] = None

    @staticmethod
    def load(path: str, generator_id: Optional[str] = None, device="cpu") -> "Generator":
        """
        Load a StyleGAN3 network pickle (its `G_ema`; the stylegan3 sources must
        be importable) or a TorchScript export exposing the same attributes.
        """
        generator_id = generator_id or os.path.basename(path)
        if not os.path.exists(path):
            raise GeneratorUnavailable(f"No generator checkpoint at {path}")
        try:
            if path.endswith(".pkl"):
                with open(path, "rb") as pkl_file:
                    module = pickle.load(pkl_file)["G_ema"]
            else:
                module = torch.jit.load(path, map_location=device)
        except (ModuleNotFoundError, KeyError, RuntimeError, pickle.UnpicklingError) as e:
            raise GeneratorUnavailable(f"Could not load generator {path}: {e}")
        return Generator(module.to(device), generator_id)

    @property
    def device(self) -> torch.device:
        return next(self.module.parameters()).device

    @property
    def w_dim(self) -> int:
        return int(self.module.w_dim)

    def mean_w(self) -> torch.Tensor:
        """(1, w_dim) centre of W, from `mapping.w_avg` when the network tracks it"""
        if self._mean_w is None:
            w_avg = getattr(self.module.mapping, "w_avg", None)
            if w_avg is not None:
                self._mean_w = w_avg.detach().reshape(1, -1).float()
            else:
                z = torch.randn(
                    self.w_avg_samples,
                    self.module.z_dim,
                    generator=torch.Generator().manual_seed(123),
                ).to(self.device)
                with torch.no_grad():
                    ws = self.module.mapping(z, None)
                self._mean_w = ws[:, 0, :].mean(dim=0, keepdim=True).float()
        return self._mean_w

    def map_z(self, z: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.module.mapping(z.to(self.device), None)[:, 0, :]

    def synthesize(self, w: torch.Tensor) -> torch.Tensor:
        """(1, 3, H, W) in [0, 1] from a (1, w_dim) latent, differentiable in w"""
        ws = w.unsqueeze(1).repeat(1, int(self.module.num_ws), 1)
        images = self.module.synthesis(ws, noise_mode="const")
        return ((images + 1.0) / 2.0).clamp(0.0, 1.0)

    def check_latent(self, latent: LatentVector) -> None:
        if latent.shape != (1, self.w_dim):
            raise LatentShapeMismatch(
                f"Latent shape {latent.shape} does not match generator layout (1, {self.w_dim})"
            )
        if latent.generator_id != self.generator_id:
            logger.warning(
                f"Latent was produced by {latent.generator_id}, rendering with {self.generator_id}"
            )


def generate(generator: Generator, w: LatentVector) -> ImagePlane:
    """S = G(w), deterministic for fixed w and weights"""
    generator.check_latent(w)
    with torch.no_grad():
        batch = generator.synthesize(w.values.to(generator.device))
    return ImagePlane.from_batch(batch.cpu())


def _initial_latent(generator: Generator, cfg: InversionConfig) -> torch.Tensor:
    rng = torch.Generator().manual_seed(stage_seed(cfg.seed, "latent_init"))
    if cfg.latent_init == LATENT_INIT_MEAN_W:
        noise = torch.randn(1, generator.w_dim, generator=rng) * cfg.init_noise
        return generator.mean_w().cpu() + noise
    z = torch.randn(1, int(generator.module.z_dim), generator=rng)
    return generator.map_z(z).cpu().float()


def _learning_rate(cfg: InversionConfig, step: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    t = step / cfg.steps
    ramp = min(1.0, (1.0 - t) / LR_RAMPDOWN_LENGTH)
    ramp = 0.5 - 0.5 * math.cos(ramp * math.pi)
    ramp = ramp * min(1.0, t / LR_RAMPUP_LENGTH)
    return cfg.learning_rate * ramp


def _noise_scale(cfg: InversionConfig, step: int) -> float:
    if cfg.noise_ramp <= 0:
        return 0.0
    t = step / cfg.steps
    return cfg.noise_ramp * max(0.0, 1.0 - t / NOISE_RAMP_LENGTH) ** 2


def loss_targets(
    encoder: ClipEncoder,
    style_text: str,
    masked_ref: ImagePlane,
    cfg: InversionConfig,
    loss_cfg: LossConfig,
) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
    """
    The text direction dT and the embedding subtracted from every image
    patch. Both loss variants are directional in text; the unmasked
    baseline drops only the masked-reference subtraction (reference None).
    """
    text_target = text_direction(encoder, style_text, loss_cfg).values.to(encoder.device)
    if not cfg.masked:
        return text_target, None
    with torch.no_grad():
        reference = encoder.embed_images_batch(masked_ref.as_batch())
    return text_target, reference


def invert(
    generator: Generator,
    encoder: ClipEncoder,
    style_text: str,
    style_image: Optional[ImagePlane],
    masked_ref: ImagePlane,
    cfg: InversionConfig,
    target: str = TARGET_FG,
    source_text: str = DEFAULT_SOURCE_TEXT,
    ingest_args: Optional[IngestArgs] = None,
    progress: bool = False,
) -> StyleRepresentation:
    """
    w* = argmin_w L over cfg.steps Adam steps. Fresh crops of G(w) and of the
    style image are drawn every step from a generator seeded by (seed, step).
    Returns the best-seen iterate, rendered with `generate`.

    Without a style image only the text term is optimised. With cfg.masked
    False the unmasked baseline loss is used: the same text direction, with
    raw patch embeddings in place of patch minus masked-reference directions.
    """
    cfg.validate()
    if ingest_args is None:
        ingest_args = IngestArgs()
    device = encoder.device
    loss_cfg = LossConfig(lambda_=cfg.lambda_, source_text=source_text, n_crop=cfg.n_crop)

    text_target, reference = loss_targets(encoder, style_text, masked_ref, cfg, loss_cfg)
    style_batch = None if style_image is None else style_image.as_batch().to(device)

    w_init = _initial_latent(generator, cfg)
    w_opt = w_init.clone().to(generator.device).requires_grad_(True)
    optimizer = torch.optim.Adam([w_opt], betas=(0.9, 0.999), lr=cfg.learning_rate)

    trajectory: List[LossRecord] = []
    best_loss = math.inf
    best_w = w_init.clone()
    best_step = 0
    last_finite = math.nan

    steps = tqdm(range(cfg.steps), disable=not progress, desc=f"invert[{target}]")
    for step in steps:
        rng = torch.Generator().manual_seed(stage_seed(cfg.seed, f"crops/{step}"))
        for param_group in optimizer.param_groups:
            param_group["lr"] = _learning_rate(cfg, step)

        w_in = w_opt
        noise_scale = _noise_scale(cfg, step)
        if noise_scale > 0:
            w_in = w_opt + torch.randn(w_opt.shape, generator=rng).to(w_opt.device) * noise_scale
        synth = generator.synthesize(w_in)
        if cfg.resolution > 0 and synth.shape[-1] != cfg.resolution:
            synth = torch.nn.functional.interpolate(
                synth, size=(cfg.resolution, cfg.resolution), mode="bilinear", align_corners=False
            )
        synth_patches, _ = crop_and_augment_batch(synth, cfg.n_crop, rng, ingest_args)
        style_dirs = encoder.embed_images_batch(synth_patches)

        input_dirs = None
        if style_batch is not None:
            with torch.no_grad():
                style_patches, _ = crop_and_augment_batch(
                    style_batch, cfg.n_crop, rng, ingest_args
                )
                input_dirs = encoder.embed_images_batch(style_patches)
        if reference is not None:
            style_dirs = style_dirs - reference
            if input_dirs is not None:
                input_dirs = input_dirs - reference

        total, text_term, image_term = directional_loss_terms(
            style_dirs, text_target, input_dirs, cfg.lambda_
        )
        value = float(total.detach())
        if not math.isfinite(value):
            raise NonFiniteLoss(step, value, last_finite)
        last_finite = value
        trajectory.append(
            LossRecord(step, value, float(text_term.detach()), float(image_term.detach()))
        )
        if value < best_loss:
            best_loss = value
            best_w = w_opt.detach().cpu().clone()
            best_step = step
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            logger.debug(
                f"[{target} seed={cfg.seed}] step {step}: loss {value:.6f} "
                f"(text {trajectory[-1].text_term:.6f}, image {trajectory[-1].image_term:.6f})"
            )
        steps.set_postfix(loss=f"{value:.4f}")

        optimizer.zero_grad(set_to_none=True)
        total.backward()
        optimizer.step()

    improved = True
    if len(trajectory) > 1 and trajectory[-1].total >= trajectory[0].total:
        improved = False
        logger.warning(
            f"Inversion for {style_text!r} ({target}, seed {cfg.seed}) did not improve: "
            f"final loss {trajectory[-1].total:.6f} >= initial {trajectory[0].total:.6f}; "
            f"returning the best-seen iterate from step {best_step}"
        )

    latent = LatentVector(best_w, generator.generator_id)
    return StyleRepresentation(
        image=generate(generator, latent),
        latent=latent,
        target=target,
        trajectory=trajectory,
        best_step=best_step,
        improved=improved,
        seed=cfg.seed,
    )


def invert_multi(
    generator: Generator,
    encoder: ClipEncoder,
    style_text: str,
    style_image: Optional[ImagePlane],
    masked_ref: ImagePlane,
    cfg: InversionConfig,
    count: Optional[int] = None,
    **invert_kwargs: Any,
) -> List[StyleRepresentation]:
    """count independent inversions with seeds seed, seed + 1, ..."""
    count = cfg.count if count is None else count
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [
        invert(
            generator,
            encoder,
            style_text,
            style_image,
            masked_ref,
            replace(cfg, seed=cfg.seed + i),
            **invert_kwargs,
        )
        for i in range(count)
    ]


def unmasked_baseline_loss_mode(cfg: InversionConfig) -> InversionConfig:
    """The same inversion without masked-reference subtraction"""
    return replace(cfg, masked=False)


def unmasked_single_rep_mode(cfg: InversionConfig) -> InversionConfig:
    """Baseline for style-representation tables: unmasked loss, one rep per style"""
    return replace(cfg, masked=False, count=1)


def write_loss_curve(trajectory: List[LossRecord], path: str) -> str:
    with atomic_write(path, "w") as curve_file:
        writer = csv.writer(curve_file)
        writer.writerow(LOSS_CURVE_COLUMNS)
        for record in trajectory:
            writer.writerow(
                [record.step, repr(record.total), repr(record.text_term), repr(record.image_term)]
            )
    return path


def read_loss_curve(path: str) -> List[LossRecord]:
    with open(path, "r") as curve_file:
        return [
            LossRecord(
                int(row["step"]),
                float(row["total"]),
                float(row["text_term"]),
                float(row["image_term"]),
            )
            for row in csv.DictReader(curve_file)
        ]


def save_representation(rep: StyleRepresentation, out_dir: str, name: str) -> None:
    """style_reps/<name>.png, latents/<name>.json and loss_curves/<name>.csv under out_dir"""
    save_image(rep.image, os.path.join(out_dir, "style_reps", f"{name}.png"))
    with atomic_write(os.path.join(out_dir, "latents", f"{name}.json")) as latent_file:
        json.dump(rep.latent.to_dict(), latent_file)
    write_loss_curve(rep.trajectory, os.path.join(out_dir, "loss_curves", f"{name}.csv"))


def load_latent(path: str) -> LatentVector:
    with open(path, "r") as latent_file:
        return LatentVector.from_dict(json.load(latent_file))


def loss_ratio(rep: StyleRepresentation) -> float:
    """best loss over initial loss"""
    if len(rep.trajectory) == 0:
        return float("nan")
    return rep.best_loss / rep.trajectory[0].total
