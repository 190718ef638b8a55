#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.


import json
import os
import shutil
import tempfile
import unittest
from dataclasses import replace
from unittest.mock import patch

import torch

from objmst.abstractions.test.utils import (
    TEST_INGEST_ARGS,
    get_test_clip,
    get_test_generator,
    get_test_lpips,
    get_test_transfer_models,
    gradient_image,
    random_image,
    square_mask,
    write_test_image,
    write_test_mask,
)
from objmst.data_model.constants.job_mode import AblationArm, JobMode
from objmst.data_model.exceptions import StageFailure, ValidationError
from objmst.data_model.image import BinaryMask
from objmst.data_model.job_spec import JobSpec
from objmst.data_model.latent import InversionConfig
from objmst.data_model.metric_report import MetricReport, MetricRow
from objmst.operations.harmonize import build_harmonizer
from objmst.operations.ingest import load_image
from objmst.operations.metrics import MetricModels
from objmst.operations.operator import (
    PipelineModels,
    compare_arms,
    load_style_set,
    run_ablation,
    run_job,
)

TEST_INVERSION = InversionConfig(steps=2, n_crop=2, count=2, log_every=1)


class OperatorTestBase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.models = PipelineModels(
            clip=get_test_clip(),
            generator=get_test_generator(),
            transfer=get_test_transfer_models(),
            harmonizer=build_harmonizer("statistics"),
            digests={"generator": "toy"},
        )

    def setUp(self):
        self.data_dir = tempfile.mkdtemp()
        self.out_dir = os.path.join(self.data_dir, "run")
        self.content_path = write_test_image(
            random_image(1), os.path.join(self.data_dir, "content.png")
        )
        self.mask_path = write_test_mask(square_mask(), os.path.join(self.data_dir, "mask.png"))

    def tearDown(self):
        shutil.rmtree(self.data_dir)

    def get_spec(self, **kwargs) -> JobSpec:
        base = dict(
            content=self.content_path,
            mask=self.mask_path,
            style_text_fg="fire",
            out_dir=self.out_dir,
            inversion=replace(TEST_INVERSION),
            ingest=replace(TEST_INGEST_ARGS),
        )
        base.update(kwargs)
        return JobSpec(**base)

    def read_manifest(self):
        with open(os.path.join(self.out_dir, "manifest.json")) as manifest_file:
            return json.load(manifest_file)


class TestRunJob(OperatorTestBase):
    def test_single_condition(self) -> None:
        result = run_job(self.get_spec(), models=self.models)
        for artifact in [
            "final.png",
            "fg_stylized.png",
            "mask.png",
            "run.log",
            "manifest.json",
            os.path.join("style_reps", "fg_0.png"),
            os.path.join("style_reps", "fg_1.png"),
            os.path.join("latents", "fg_0.json"),
            os.path.join("loss_curves", "fg_1.csv"),
        ]:
            self.assertTrue(os.path.exists(os.path.join(self.out_dir, artifact)), artifact)
        self.assertEqual(len(result.fg_reps), 2)
        self.assertEqual(result.bg_reps, [])
        self.assertIsNone(result.harmonized)

        # surroundings are the untouched content
        content = load_image(self.content_path, TEST_INGEST_ARGS.resolution)
        outside = ~result.mask.values.bool()
        self.assertTrue(torch.equal(result.final.pixels[:, outside], content.pixels[:, outside]))

        manifest = self.read_manifest()
        self.assertEqual(manifest["status"], "complete")
        self.assertEqual(manifest["seeds"]["master"], 0)
        self.assertEqual(manifest["checkpoints"], {"generator": "toy"})
        outputs = [entry["output"] for entry in manifest["outputs"]]
        self.assertEqual(
            outputs,
            [os.path.join("style_reps", "fg_0.png"), os.path.join("style_reps", "fg_1.png"), "final.png"],
        )
        self.assertIn("final.png", manifest["files"])

    def test_same_seed_same_output(self) -> None:
        first = run_job(self.get_spec(seed=3), models=self.models)
        second_dir = os.path.join(self.data_dir, "again")
        second = run_job(self.get_spec(seed=3, out_dir=second_dir), models=self.models)
        self.assertTrue(first.final.equals(second.final))
        self.assertEqual(first.seeds, second.seeds)

    def test_multimodal(self) -> None:
        style_path = write_test_image(gradient_image(), os.path.join(self.data_dir, "style.png"))
        result = run_job(
            self.get_spec(mode=JobMode.MMIST_SINGLE, style_image_fg=style_path), models=self.models
        )
        self.assertEqual(len(result.fg_reps), 2)
        self.assertGreater(result.fg_reps[0].trajectory[0].image_term, 0.0)

    def test_double_condition(self) -> None:
        result = run_job(
            self.get_spec(mode=JobMode.TIST_DOUBLE, style_text_bg="ice"), models=self.models
        )
        self.assertEqual(len(result.bg_reps), 2)
        self.assertTrue(result.harmonized)
        self.assertTrue(os.path.exists(os.path.join(self.out_dir, "style_reps", "bg_1.png")))
        manifest = self.read_manifest()
        self.assertEqual(manifest["harmonizer"], "statistics")
        self.assertTrue(manifest["harmonized"])
        targets = [entry["target"] for entry in manifest["outputs"]]
        self.assertEqual(targets.count("bg"), 2)

    def test_double_condition_with_bg_content(self) -> None:
        bg_path = write_test_image(random_image(5), os.path.join(self.data_dir, "bg.png"))
        result = run_job(
            self.get_spec(
                mode=JobMode.TIST_DOUBLE,
                style_text_bg="ice",
                bg_content=bg_path,
                bg_mask=self.mask_path,
            ),
            models=self.models,
        )
        self.assertEqual(len(result.bg_reps), 2)

    def test_double_condition_without_harmonizer(self) -> None:
        models = replace(self.models, harmonizer=None)
        result = run_job(
            self.get_spec(mode=JobMode.TIST_DOUBLE, style_text_bg="ice"), models=models
        )
        self.assertFalse(result.harmonized)
        manifest = self.read_manifest()
        self.assertEqual(manifest["status"], "complete")
        self.assertEqual(manifest["harmonizer"], "none")
        self.assertFalse(manifest["harmonized"])

    def test_full_frame(self) -> None:
        result = run_job(self.get_spec(mask=None, full_frame=True), models=self.models)
        self.assertTrue(torch.equal(result.mask.values, torch.ones(64, 64)))

    def test_invalid_spec_writes_nothing(self) -> None:
        with self.assertRaises(ValidationError):
            run_job(self.get_spec(mode=JobMode.TIST_DOUBLE), models=self.models)
        self.assertFalse(os.path.exists(self.out_dir))

    def test_missing_content(self) -> None:
        spec = self.get_spec(content=os.path.join(self.data_dir, "absent.png"))
        with self.assertRaises(StageFailure) as context:
            run_job(spec, models=self.models)
        self.assertEqual(context.exception.stage, "ingest")
        self.assertEqual(self.read_manifest()["status"], "failed at ingest")

    def test_empty_mask(self) -> None:
        empty = write_test_mask(BinaryMask(torch.zeros(64, 64)), os.path.join(self.data_dir, "empty.png"))
        with self.assertRaises(StageFailure) as context:
            run_job(self.get_spec(mask=empty), models=self.models)
        self.assertEqual(context.exception.stage, "segment")

    def test_failure_keeps_earlier_artifacts(self) -> None:
        with patch(
            "objmst.operations.operator.stylize_salient", side_effect=RuntimeError("out of memory")
        ):
            with self.assertRaises(StageFailure) as context:
                run_job(self.get_spec(), models=self.models)
        self.assertEqual(context.exception.stage, "stylize")
        self.assertTrue(os.path.exists(os.path.join(self.out_dir, "mask.png")))
        self.assertTrue(os.path.exists(os.path.join(self.out_dir, "style_reps", "fg_1.png")))
        self.assertFalse(os.path.exists(os.path.join(self.out_dir, "final.png")))
        manifest = self.read_manifest()
        self.assertEqual(manifest["status"], "failed at stylize")
        self.assertEqual(len(manifest["outputs"]), 2)


class TestAblation(OperatorTestBase):
    def setUp(self):
        super().setUp()
        entries = []
        for i in range(5):
            write_test_image(random_image(10 + i), os.path.join(self.data_dir, "images", f"c{i}.png"))
            entries.append(
                {
                    "name": f"entry_{i}",
                    "content": os.path.join("images", f"c{i}.png"),
                    "mask": "mask.png",
                    "style_text": "fire",
                }
            )
        self.style_set_path = os.path.join(self.data_dir, "style_set.json")
        with open(self.style_set_path, "w") as style_set_file:
            json.dump(entries, style_set_file)
        self.base_spec = self.get_spec(
            inversion=InversionConfig(steps=1, n_crop=1, count=1)
        )
        self.metric_models = MetricModels(clip=self.models.clip, lpips=get_test_lpips())

    def test_load_style_set(self) -> None:
        entries = load_style_set(self.style_set_path)
        self.assertEqual(len(entries), 5)
        self.assertEqual(entries[0].content, os.path.join(self.data_dir, "images", "c0.png"))
        self.assertEqual(entries[0].mask, os.path.join(self.data_dir, "mask.png"))
        self.assertIsNone(entries[0].style_image)

    def test_shipped_style_set(self) -> None:
        from objmst.operations.utils import get_data_dir

        entries = load_style_set(os.path.join(get_data_dir(), "style_sets", "desk_scale.json"))
        self.assertGreaterEqual(len(entries), 5)
        self.assertEqual(len({e.name for e in entries}), len(entries))

    def test_style_set_too_small(self) -> None:
        entries = load_style_set(self.style_set_path)[:4]
        with self.assertRaises(ValidationError):
            run_ablation(
                AblationArm.LOSS_MASKED_VS_PLAIN,
                entries,
                self.out_dir,
                self.base_spec,
                self.models,
                self.metric_models,
            )

    def test_unknown_arm(self) -> None:
        with self.assertRaises(ValidationError):
            run_ablation(
                "depth",
                load_style_set(self.style_set_path),
                self.out_dir,
                self.base_spec,
                self.models,
                self.metric_models,
            )

    def test_loss_arm(self) -> None:
        result = run_ablation(
            AblationArm.LOSS_MASKED_VS_PLAIN,
            load_style_set(self.style_set_path),
            self.out_dir,
            self.base_spec,
            self.models,
            self.metric_models,
            num_workers=1,
        )
        self.assertEqual((result.left_name, result.right_name), ("masked", "plain"))
        self.assertEqual(len(result.left.per_image), 5)
        self.assertEqual(len(result.right.per_image), 5)
        self.assertEqual(len(result.verdicts), 3)
        arm_dir = os.path.join(self.out_dir, AblationArm.LOSS_MASKED_VS_PLAIN)
        for name in ("masked.csv", "plain.csv", "verdicts.txt"):
            self.assertTrue(os.path.exists(os.path.join(arm_dir, name)), name)

    def test_single_rep_baseline_arm(self) -> None:
        base = replace(self.base_spec, inversion=InversionConfig(steps=1, n_crop=1, count=2))
        result = run_ablation(
            AblationArm.SINGLE_REP_BASELINE,
            load_style_set(self.style_set_path),
            self.out_dir,
            base,
            self.models,
            self.metric_models,
            num_workers=1,
        )
        self.assertEqual((result.left_name, result.right_name), ("ours", "baseline"))
        # two representations per entry against the baseline's one
        self.assertEqual(len(result.left.per_image), 10)
        self.assertEqual(len(result.right.per_image), 5)
        self.assertEqual(
            [v.check for v in result.verdicts],
            ["text alignment", "image alignment", "distance to style image"],
        )
        arm_dir = os.path.join(self.out_dir, AblationArm.SINGLE_REP_BASELINE)
        baseline_reps = os.path.join(arm_dir, "baseline", "entry_0", "style_reps")
        self.assertTrue(os.path.exists(os.path.join(baseline_reps, "fg_0.png")))
        self.assertFalse(os.path.exists(os.path.join(baseline_reps, "fg_1.png")))
        for name in ("ours.csv", "baseline.csv", "verdicts.txt"):
            self.assertTrue(os.path.exists(os.path.join(arm_dir, name)), name)

    def test_attention_arm(self) -> None:
        result = run_ablation(
            AblationArm.ATTENTION_S2K_VS_A2A,
            load_style_set(self.style_set_path),
            self.out_dir,
            self.base_spec,
            self.models,
            self.metric_models,
            num_workers=1,
        )
        self.assertEqual((result.left_name, result.right_name), ("s2k", "a2a"))
        self.assertEqual(len(result.left.per_image), 5)
        self.assertIsNotNone(result.left.per_image[0].lpips)
        self.assertIsNotNone(result.left.per_image[0].clipscore_text)


class TestCompareArms(unittest.TestCase):
    def _report(self, **values) -> MetricReport:
        return MetricReport(
            per_image=[MetricRow(image_id="a.png", method="m", mode="style_reps", **values)],
            mode="style_reps",
        )

    def test_masked_wins(self) -> None:
        left = self._report(clipscore_text=0.3, clipscore_image=0.6, lpips=0.2)
        right = self._report(clipscore_text=0.2, clipscore_image=0.5, lpips=0.4)
        verdicts = compare_arms(AblationArm.LOSS_MASKED_VS_PLAIN, left, right)
        self.assertEqual([v.holds for v in verdicts], [True, True, True])
        self.assertEqual(verdicts[0].left, "masked")

    def test_single_rep_sides(self) -> None:
        left = self._report(clipscore_text=0.3, clipscore_image=0.5, lpips=0.3)
        right = self._report(clipscore_text=0.25, clipscore_image=0.55, lpips=0.4)
        verdicts = compare_arms(AblationArm.SINGLE_REP_BASELINE, left, right)
        self.assertEqual([v.holds for v in verdicts], [True, False, True])
        self.assertEqual((verdicts[0].left, verdicts[0].right), ("ours", "baseline"))

    def test_attention_sides(self) -> None:
        left = self._report(clipscore_text=0.2, lpips=0.5)
        right = self._report(clipscore_text=0.3, lpips=0.4)
        verdicts = compare_arms(AblationArm.ATTENTION_S2K_VS_A2A, left, right)
        self.assertEqual([v.holds for v in verdicts], [False, False])
        self.assertEqual((verdicts[0].left, verdicts[0].right), ("s2k", "a2a"))


if __name__ == "__main__":
    unittest.main()
