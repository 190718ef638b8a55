#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Frozen CLIP text/image encoders and the masked directional loss.

Directions are differences of embeddings: the text direction runs from the
source text to the style text, image directions run from the masked content
image to a patch. The loss rewards style patches whose direction agrees with
the text direction and with the style-image patch directions.
"""

from typing import List, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from objmst.data_model.embedding import (
    DEGENERATE_NORM,
    Direction,
    Embedding,
    LossConfig,
)
from objmst.data_model.exceptions import (
    DegenerateDirection,
    EmptyText,
    EncoderUnavailable,
    SizeMismatch,
    TextTooLong,
)
from objmst.data_model.image import ImagePlane
from objmst.operations.logger_core import get_logger

logger = get_logger(name=__name__)

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


def _features(output) -> torch.Tensor:
    # Newer transformers releases wrap projected features in a model output
    if isinstance(output, torch.Tensor):
        return output
    return output.pooler_output


class ClipEncoder:
    """
    A CLIP model and tokenizer behind one handle. Embeddings are L2
    normalised; weights are frozen and the handle is read-only after load.
    """

    def __init__(self, model, tokenizer, checkpoint_id: str = "clip"):
        self.model = model.eval().requires_grad_(False)
        self.tokenizer = tokenizer
        self.checkpoint_id = checkpoint_id
        self.context_length = int(model.config.text_config.max_position_embeddings)
        self.image_size = int(model.config.vision_config.image_size)

    @staticmethod
    def from_pretrained(
        name_or_path: str,
        revision: Optional[str] = None,
        device: Union[str, torch.device] = "cpu",
    ) -> "ClipEncoder":
        from transformers import CLIPModel, CLIPTokenizer

        try:
            model = CLIPModel.from_pretrained(name_or_path, revision=revision)
            tokenizer = CLIPTokenizer.from_pretrained(name_or_path, revision=revision)
        except (OSError, ValueError) as e:
            raise EncoderUnavailable(f"Could not load CLIP from {name_or_path}: {e}")
        logger.info(f"Loaded CLIP encoders from {name_or_path}@{revision}")
        return ClipEncoder(model.to(device), tokenizer, checkpoint_id=name_or_path)

    @property
    def device(self) -> torch.device:
        return next(self.model.parameters()).device

    def _tokenize(self, texts: Sequence[str]):
        for text in texts:
            if len(text.strip()) == 0:
                raise EmptyText("Cannot encode an empty text")
            num_tokens = len(self.tokenizer(text)["input_ids"])
            if num_tokens > self.context_length:
                raise TextTooLong(text, num_tokens, self.context_length)
        tokens = self.tokenizer(list(texts), padding=True, return_tensors="pt")
        return {k: v.to(self.device) for k, v in tokens.items()}

    def embed_texts(self, texts: Sequence[str]) -> torch.Tensor:
        """(N, d) normalised text embeddings"""
        tokens = self._tokenize(texts)
        with torch.no_grad():
            feats = _features(
                self.model.get_text_features(
                    input_ids=tokens["input_ids"],
                    attention_mask=tokens.get("attention_mask"),
                )
            )
        return F.normalize(feats.double(), dim=-1).float()

    def preprocess(self, batch: torch.Tensor) -> torch.Tensor:
        """Differentiable resize and CLIP normalisation of a (N, 3, H, W) batch in [0, 1]"""
        if tuple(batch.shape[-2:]) != (self.image_size, self.image_size):
            batch = F.interpolate(
                batch,
                size=(self.image_size, self.image_size),
                mode="bicubic",
                align_corners=False,
            )
        mean = torch.tensor(CLIP_MEAN, device=batch.device).view(1, 3, 1, 1)
        std = torch.tensor(CLIP_STD, device=batch.device).view(1, 3, 1, 1)
        return (batch - mean) / std

    def embed_images_batch(self, batch: torch.Tensor) -> torch.Tensor:
        """
        (N, d) normalised image embeddings, carrying gradients back to batch.
        Normalisation runs in double precision.
        """
        pixel_values = self.preprocess(batch.to(self.device))
        feats = _features(self.model.get_image_features(pixel_values=pixel_values))
        return F.normalize(feats.double(), dim=-1)

    def encode_text(self, text: str) -> Embedding:
        return Embedding(self.embed_texts([text])[0])

    def encode_image(self, image: ImagePlane) -> Embedding:
        with torch.no_grad():
            feats = self.embed_images_batch(image.as_batch())
        return Embedding(feats[0].float())

    def cosine(self, a: Embedding, b: Embedding) -> float:
        return a.cosine(b)


def text_direction(
    encoder: ClipEncoder, style_text: str, cfg: Optional[LossConfig] = None
) -> Direction:
    """E_T(style_text) - E_T(source_text)"""
    if cfg is None:
        cfg = LossConfig()
    if len(style_text.strip()) == 0:
        raise EmptyText("style_text must be nonempty")
    both = encoder.embed_texts([style_text, cfg.source_text])
    direction = Embedding(both[0]) - Embedding(both[1])
    if cfg.norm_epsilon <= 0:
        direction.require_nondegenerate(f"text ({style_text!r} vs {cfg.source_text!r})")
    return direction


def masked_image_direction(
    encoder: ClipEncoder, patch: ImagePlane, masked_ref: ImagePlane
) -> Direction:
    """E_I(patch) - E_I(masked_ref), masked_ref being a masked content image"""
    direction = encoder.encode_image(patch) - encoder.encode_image(masked_ref)
    return direction.require_nondegenerate("image")


def _unit_rows(values: torch.Tensor, epsilon: float, what: str) -> torch.Tensor:
    norms = values.norm(dim=-1, keepdim=True)
    if epsilon > 0:
        return values / (norms + epsilon)
    if bool((norms <= DEGENERATE_NORM).any()):
        raise DegenerateDirection(f"A {what} direction is zero; its cosine is undefined")
    return values / norms


def directional_loss_terms(
    style_dirs: torch.Tensor,
    text_dir: torch.Tensor,
    input_dirs: Optional[torch.Tensor],
    lambda_: float,
    norm_epsilon: float = 0.0,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Tensor form of the masked directional loss over style_dirs (N, d),
    text_dir (d,) and input_dirs (M, d). Returns (total, text_term,
    image_term) as double scalars. With input_dirs None the image term is
    zero, which is the text-only form.
    """
    style_unit = _unit_rows(style_dirs.double(), norm_epsilon, "style patch")
    text_unit = _unit_rows(text_dir.double().unsqueeze(0), norm_epsilon, "text")[0]
    text_term = (1.0 - style_unit @ text_unit).mean()
    if input_dirs is None or lambda_ == 0:
        image_term = torch.zeros((), dtype=torch.float64, device=style_dirs.device)
    else:
        input_unit = _unit_rows(input_dirs.double(), norm_epsilon, "input patch")
        image_term = (1.0 - style_unit @ input_unit.T).mean()
    total = text_term + lambda_ * image_term
    return total, text_term, image_term


def _stack(directions: List[Direction]) -> torch.Tensor:
    return torch.stack([d.values for d in directions])


def masked_directional_loss_terms(
    style_patch_dirs: List[Direction],
    input_patch_dirs: List[Direction],
    text_dir: Direction,
    cfg: LossConfig,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    if len(style_patch_dirs) != cfg.n_crop or len(input_patch_dirs) != cfg.n_crop:
        raise SizeMismatch(
            f"Expected {cfg.n_crop} style and input directions, got "
            f"{len(style_patch_dirs)} and {len(input_patch_dirs)}"
        )
    return directional_loss_terms(
        _stack(style_patch_dirs),
        text_dir.values,
        _stack(input_patch_dirs),
        cfg.lambda_,
        cfg.norm_epsilon,
    )


def masked_directional_loss(
    style_patch_dirs: List[Direction],
    input_patch_dirs: List[Direction],
    text_dir: Direction,
    cfg: LossConfig,
) -> torch.Tensor:
    """
    (1/N) sum_j (1 - cos(dS_j, dT)) + lambda (1/N^2) sum_j sum_k (1 - cos(dS_j, dI_k)),
    a scalar in [0, 2 + 2 lambda], differentiable in the style directions.
    """
    total, _, _ = masked_directional_loss_terms(
        style_patch_dirs, input_patch_dirs, text_dir, cfg
    )
    return total
