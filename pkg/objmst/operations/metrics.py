#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""
Alignment, perceptual and aesthetic metrics, and the harness that scores a
run directory into a MetricReport.
"""

import glob
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, List, Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision
from tabulate import tabulate

from objmst.data_model.constants import TARGET_BG
from objmst.data_model.constants.job_mode import EvalMode
from objmst.data_model.exceptions import (
    EncoderUnavailable,
    ManifestMismatch,
    MetricUnavailable,
    MissingReference,
    ValidationError,
)
from objmst.data_model.image import ImagePlane
from objmst.data_model.metric_report import METRIC_COLUMNS, MetricReport, MetricRow
from objmst.operations.clip_direction import ClipEncoder
from objmst.operations.ingest import load_image, resize_plane
from objmst.operations.logger_core import get_logger
from objmst.operations.utils import atomic_write
from objmst.tools.misc import warn_once

logger = get_logger(name=__name__)

NIMA_MIN, NIMA_MAX = 1.0, 10.0
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# Column headers of the rendered tables
COLUMN_TITLES = {
    "clipscore_text": "<T_S,S>",
    "clipscore_image": "<I_S,S>",
    "clipscore_mean": "Mean",
    "lpips": "LPIPS",
    "nima": "Nima",
    "contrique_fr": "Contrique (FR)",
    "contrique_nr": "Contrique (NR)",
}


def clipscore(
    image: ImagePlane, reference: Union[str, ImagePlane], encoder: Optional[ClipEncoder]
) -> float:
    """Raw cosine between the CLIP embeddings of image and a text or image reference"""
    if encoder is None:
        raise EncoderUnavailable("clipscore needs the CLIP encoders")
    image_embedding = encoder.encode_image(image)
    if isinstance(reference, str):
        reference_embedding = encoder.encode_text(reference)
    else:
        reference_embedding = encoder.encode_image(reference)
    return encoder.cosine(image_embedding, reference_embedding)


def build_lpips(net: str = "alex", model_path: Optional[str] = None) -> nn.Module:
    import lpips as lpips_lib

    try:
        model = lpips_lib.LPIPS(net=net, model_path=model_path, verbose=False)
    except (OSError, RuntimeError) as e:
        raise MetricUnavailable(f"Could not build LPIPS ({net}): {e}")
    return model.eval().requires_grad_(False)


def lpips(image: ImagePlane, reference: ImagePlane, model: Optional[nn.Module]) -> float:
    """
    Perceptual distance, zero for identical inputs. The reference is resized
    to the image first when their sizes differ.
    """
    if model is None:
        raise MetricUnavailable("lpips needs the perceptual-metric network")
    if reference.size != image.size:
        reference = resize_plane(reference, image.size)
    device = next(model.parameters()).device
    with torch.no_grad():
        # LPIPS takes inputs in [-1, 1]
        distance = model(
            image.as_batch(device) * 2.0 - 1.0, reference.as_batch(device) * 2.0 - 1.0
        )
    return max(0.0, float(distance.flatten()[0]))


def build_nima(device: str = "cpu", model_path: Optional[str] = None) -> nn.Module:
    import pyiqa

    kwargs: Dict[str, Any] = {}
    if model_path is not None:
        kwargs["pretrained_model_path"] = model_path
    try:
        return pyiqa.create_metric("nima", device=torch.device(device), **kwargs)
    except (OSError, RuntimeError, ValueError) as e:
        raise MetricUnavailable(f"Could not build NIMA: {e}")


def nima(image: ImagePlane, model: Optional[Callable[[torch.Tensor], torch.Tensor]]) -> float:
    """
    Mean of the predicted 10-bin opinion distribution. Models may return
    the distribution itself or its mean; either way the score is held to
    [1, 10].
    """
    if model is None:
        raise MetricUnavailable("nima needs the aesthetic predictor")
    with torch.no_grad():
        out = model(image.as_batch()).detach().float().cpu()
    if out.dim() == 2 and out.shape[-1] == 10:
        bins = torch.arange(1, 11, dtype=out.dtype)
        score = float((torch.softmax(out[0], dim=-1) * bins).sum())
    else:
        score = float(out.flatten()[0])
    return min(NIMA_MAX, max(NIMA_MIN, score))


class ContriqueModel(nn.Module):
    """
    Contrastive quality features from a ResNet-50 trunk, taken at full and
    half scale, with a linear regressor on top. NR scores regress the
    features directly; FR scores regress the absolute feature difference to
    the reference.
    """

    def __init__(self, backbone: Optional[nn.Module] = None, feature_dim: int = 2048):
        super().__init__()
        if backbone is None:
            resnet = torchvision.models.resnet50(weights=None)
            backbone = nn.Sequential(*list(resnet.children())[:-1])
        self.encoder = backbone
        self.feature_dim = feature_dim
        self.regressor = nn.Linear(2 * feature_dim, 1)
        self.eval().requires_grad_(False)

    @staticmethod
    def load(path: str) -> "ContriqueModel":
        if not os.path.exists(path):
            raise MetricUnavailable(f"No Contrique weights at {path}")
        model = ContriqueModel()
        model.load_state_dict(torch.load(path, map_location="cpu"))
        return model.eval()

    def features(self, batch: torch.Tensor) -> torch.Tensor:
        half = F.interpolate(batch, scale_factor=0.5, mode="bilinear", align_corners=False)
        full_feats = self.encoder(batch).flatten(1)
        half_feats = self.encoder(half).flatten(1)
        return torch.cat((full_feats, half_feats), dim=1)

    def forward(self, batch: torch.Tensor, reference: Optional[torch.Tensor] = None) -> torch.Tensor:
        feats = self.features(batch)
        if reference is not None:
            feats = torch.abs(self.features(reference) - feats)
        return self.regressor(feats)


def contrique(
    image: ImagePlane,
    reference: Optional[ImagePlane] = None,
    model: Optional[ContriqueModel] = None,
    full_reference: bool = False,
) -> float:
    """Quality score, reference-relative when full_reference is set"""
    if model is None:
        raise MetricUnavailable("contrique needs the quality model")
    if full_reference and reference is None:
        raise MissingReference("Contrique FR mode needs a reference image")
    device = next(model.parameters()).device
    ref_batch = None
    if full_reference:
        if reference.size != image.size:
            reference = resize_plane(reference, image.size)
        ref_batch = reference.as_batch(device)
    with torch.no_grad():
        score = model(image.as_batch(device), ref_batch)
    return float(score.flatten()[0])


@dataclass
class MetricModels:
    """The read-only networks the harness scores with; any may be absent"""

    clip: Optional[ClipEncoder] = None
    lpips: Optional[nn.Module] = None
    nima: Optional[Callable[[torch.Tensor], torch.Tensor]] = None
    contrique: Optional[ContriqueModel] = None


@dataclass
class ReferenceEntry:
    """Links one output image to the inputs it should be scored against"""

    output: str
    method: str = "ours"
    target: str = "fg"
    content: Optional[str] = None
    mask: Optional[str] = None
    style_text_fg: Optional[str] = None
    style_text_bg: Optional[str] = None
    style_image_fg: Optional[str] = None
    style_image_bg: Optional[str] = None

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "ReferenceEntry":
        known = {f.name for f in fields(ReferenceEntry)}
        if "output" not in data:
            raise ManifestMismatch(f"Reference entry without an output: {data}")
        return ReferenceEntry(**{k: v for k, v in data.items() if k in known})

    @property
    def style_text(self) -> Optional[str]:
        return self.style_text_bg if self.target == TARGET_BG else self.style_text_fg

    @property
    def style_image(self) -> Optional[str]:
        return self.style_image_bg if self.target == TARGET_BG else self.style_image_fg


def load_references(path: str) -> List[ReferenceEntry]:
    """A JSON list of entries, or a run manifest holding them under `outputs`"""
    with open(path, "r") as references_file:
        data = json.load(references_file)
    if isinstance(data, dict):
        data = data.get("outputs", [])
    return [ReferenceEntry.from_dict(entry) for entry in data]


def find_outputs(run_dir: str, mode: str) -> List[str]:
    """
    Outputs the harness expects a reference for, relative to run_dir: images
    in `style_reps/` folders for style_reps mode, `final.png` files and
    images in `outputs/` folders for stylized mode.
    """
    if mode == EvalMode.STYLE_REPS:
        patterns = [os.path.join("**", "style_reps", "*")]
    else:
        patterns = [os.path.join("**", "final.png"), os.path.join("**", "outputs", "*")]
    found = set()
    for pattern in patterns:
        for path in glob.glob(os.path.join(run_dir, pattern), recursive=True):
            if path.lower().endswith(IMAGE_SUFFIXES):
                found.add(os.path.relpath(path, run_dir))
    return sorted(found)


def _resolve(run_dir: str, path: Optional[str]) -> Optional[str]:
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(run_dir, path)


def _try(metric: str, fn: Callable[[], float]) -> Optional[float]:
    try:
        return fn()
    except (MetricUnavailable, EncoderUnavailable) as e:
        warn_once(f"Skipping {metric}: {e}")
        return None


def score_output(
    run_dir: str, entry: ReferenceEntry, mode: str, models: MetricModels
) -> MetricRow:
    """Every metric the mode's protocol asks for, for one output"""
    image = load_image(_resolve(run_dir, entry.output), resolution=None)
    row = MetricRow(image_id=entry.output, method=entry.method, mode=mode)
    style_image = None
    if entry.style_image is not None:
        style_image = load_image(_resolve(run_dir, entry.style_image), resolution=None)
    if entry.style_text:
        row.clipscore_text = _try(
            "clipscore", lambda: clipscore(image, entry.style_text, models.clip)
        )
    if style_image is not None:
        row.clipscore_image = _try(
            "clipscore", lambda: clipscore(image, style_image, models.clip)
        )

    if mode == EvalMode.STYLE_REPS:
        if style_image is not None:
            row.lpips = _try("lpips", lambda: lpips(image, style_image, models.lpips))
        return row

    content = None
    if entry.content is not None:
        content = load_image(_resolve(run_dir, entry.content), resolution=None)
        row.lpips = _try("lpips", lambda: lpips(image, content, models.lpips))
        row.contrique_fr = _try(
            "contrique",
            lambda: contrique(image, content, models.contrique, full_reference=True),
        )
    row.nima = _try("nima", lambda: nima(image, models.nima))
    row.contrique_nr = _try("contrique", lambda: contrique(image, None, models.contrique))
    return row


def evaluate_table(
    run_dir: str,
    mode: str,
    references: List[ReferenceEntry],
    models: MetricModels,
    num_workers: int = 4,
) -> MetricReport:
    """
    Score every output of run_dir against its reference entry. Every output
    found on disk needs an entry and every entry needs its output. Nothing in
    run_dir is written.
    """
    if mode not in EvalMode.valid():
        raise ValidationError(f"Unknown eval mode {mode}, expected one of {EvalMode.valid()}")
    on_disk = find_outputs(run_dir, mode)
    if len(on_disk) == 0:
        logger.warning(f"No {mode} outputs found in {run_dir}, the report is empty")
        return MetricReport(per_image=[], mode=mode)

    by_output = {os.path.normpath(e.output): e for e in references}
    unreferenced = [p for p in on_disk if os.path.normpath(p) not in by_output]
    if unreferenced:
        raise ManifestMismatch(f"Outputs without a reference entry: {unreferenced}")
    missing = [
        e.output for e in references if not os.path.exists(_resolve(run_dir, e.output))
    ]
    if missing:
        raise ManifestMismatch(f"Reference entries whose output is missing: {missing}")
    wanted = [by_output[os.path.normpath(p)] for p in on_disk]

    with ThreadPoolExecutor(max_workers=max(1, num_workers)) as pool:
        rows = list(pool.map(lambda e: score_output(run_dir, e, mode, models), wanted))
    report = MetricReport(per_image=rows, mode=mode)
    if not report.is_finite():
        raise ValidationError("A metric came out non-finite")
    logger.info(f"Scored {len(rows)} {mode} outputs over methods {report.methods()}")
    return report


def clipscore_mean(means: Dict[str, Optional[float]]) -> Optional[float]:
    """Arithmetic mean of the two clipscore columns, when both exist"""
    text, image = means.get("clipscore_text"), means.get("clipscore_image")
    if text is None or image is None:
        return None
    return (text + image) / 2.0


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def format_table(report: MetricReport) -> str:
    """
    Style-rep reports list methods as rows; stylized-output reports list
    metrics as rows and methods as columns.
    """
    aggregate = report.aggregate
    if report.mode == EvalMode.STYLE_REPS:
        columns = ["clipscore_text", "clipscore_image", "clipscore_mean", "lpips"]
        rows = []
        for method, means in aggregate.items():
            values = dict(means, clipscore_mean=clipscore_mean(means))
            rows.append([method] + [_fmt(values[c]) for c in columns])
        headers = ["Method"] + [COLUMN_TITLES[c] for c in columns]
        return tabulate(rows, headers=headers, tablefmt="github")
    methods = list(aggregate.keys())
    rows = []
    for column in METRIC_COLUMNS:
        values = [aggregate[m][column] for m in methods]
        if all(v is None for v in values):
            continue
        rows.append([COLUMN_TITLES[column]] + [_fmt(v) for v in values])
    return tabulate(rows, headers=["Metric"] + methods, tablefmt="github")


def write_report(report: MetricReport, out_dir: str, name: str = "report") -> Dict[str, str]:
    """CSV is the canonical output; the text table is derived from it"""
    csv_path = os.path.join(out_dir, f"{name}.csv")
    table_path = os.path.join(out_dir, f"{name}.txt")
    with atomic_write(csv_path, "w") as csv_file:
        report.write_csv(csv_file)
    with atomic_write(table_path, "w") as table_file:
        table_file.write(format_table(report) + "\n")
    return {"csv": csv_path, "table": table_path}


@dataclass
class Verdict:
    """One ordering check between two report aggregates"""

    check: str
    column: str
    left: str
    right: str
    left_value: Optional[float]
    right_value: Optional[float]
    holds: Optional[bool]

    @property
    def difference(self) -> Optional[float]:
        if self.left_value is None or self.right_value is None:
            return None
        return self.left_value - self.right_value


def _method_mean(report: MetricReport, column: str) -> Optional[float]:
    values = [getattr(r, column) for r in report.per_image if getattr(r, column) is not None]
    return math.fsum(values) / len(values) if values else None


def ordering_verdict(
    check: str,
    column: str,
    left: MetricReport,
    right: MetricReport,
    left_name: str,
    right_name: str,
    higher_is_better: bool = True,
) -> Verdict:
    """Whether the left report beats the right on the column mean"""
    left_value, right_value = _method_mean(left, column), _method_mean(right, column)
    holds = None
    if left_value is not None and right_value is not None:
        holds = left_value > right_value if higher_is_better else left_value < right_value
    return Verdict(check, column, left_name, right_name, left_value, right_value, holds)


def format_verdicts(verdicts: List[Verdict]) -> str:
    rows = []
    for v in verdicts:
        outcome = "n/a" if v.holds is None else ("holds" if v.holds else "fails")
        rows.append(
            [v.check, COLUMN_TITLES.get(v.column, v.column), f"{v.left} vs {v.right}",
             _fmt(v.left_value), _fmt(v.right_value), outcome]
        )
    return tabulate(
        rows, headers=["Check", "Metric", "Arms", "Left", "Right", "Verdict"], tablefmt="github"
    )
