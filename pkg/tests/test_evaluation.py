"""
Tests for single-observation evaluation
"""

import math

import numpy as np
import pytest

from probeseg.actsel import ActionProposal
from probeseg.evaluation import (
    METRIC_NAMES,
    aggregate_reports,
    evaluate,
    evaluate_detections,
    format_aggregate,
    format_percent,
    format_report,
    gt_instances,
    proposals_to_detections,
    random_proposals,
)
from probeseg.metrics import Detection, ImageResult, Instance, bbox_of
from probeseg.microworld import GroundTruthInstance


def _gt(mask: np.ndarray, reachable: bool = True, mass_class: int = 1) -> GroundTruthInstance:
    return GroundTruthInstance(
        object_id=1,
        shape="box",
        mask=mask,
        bbox=bbox_of(mask),
        mass_class=mass_class,
        reachable=reachable,
    )


def _square(size: int, r0: int, r1: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=bool)
    mask[r0:r1, r0:r1] = True
    return mask


def _perfect_result() -> ImageResult:
    mask = _square(10, 2, 6)
    return ImageResult(
        detections=[Detection(mask=mask, bbox=bbox_of(mask), confidence=0.9, mass_class=1)],
        instances=[Instance(mask=mask, bbox=bbox_of(mask), mass_class=1)],
    )


class TestGroundTruth:
    def test_pools_reachable_instances(self):
        instances = gt_instances([_gt(_square(30, 3, 12), mass_class=2)])
        assert len(instances) == 1
        assert instances[0].mask.shape == (10, 10)
        assert instances[0].bbox == (1, 1, 4, 4)
        assert instances[0].mass_class == 2

    def test_unreachable_dropped(self):
        assert gt_instances([_gt(_square(30, 3, 12), reachable=False)]) == []

    def test_vanishing_instance_dropped(self):
        tiny = np.zeros((30, 30), dtype=bool)
        tiny[4, 4] = True
        assert gt_instances([_gt(tiny)]) == []


class TestDetections:
    def test_proposals_become_detections(self):
        mask = _square(10, 0, 3)
        proposals = [
            ActionProposal(point=(1, 1), force_class=2, mask=mask, score=0.0),
            ActionProposal(point=(5, 5), force_class=0, mask=np.zeros_like(mask), score=3.0),
        ]
        detections = proposals_to_detections(proposals)
        assert len(detections) == 1
        assert detections[0].confidence == pytest.approx(0.5)
        assert detections[0].mass_class == 2
        assert detections[0].bbox == (0, 0, 3, 3)

    def test_random_proposals(self):
        first = random_proposals(20, np.random.default_rng(5), size=30)
        second = random_proposals(20, np.random.default_rng(5), size=30)
        assert len(first) == 20
        for a, b in zip(first, second):
            assert a.bbox == b.bbox and a.confidence == b.confidence
        for d in first:
            r0, c0, r1, c1 = d.bbox
            assert 0 <= r0 and r1 <= 30 and 0 <= c0 and c1 <= 30
            assert r1 - r0 >= 3 and c1 - c0 >= 3
            assert bbox_of(d.mask) == d.bbox
            assert 0 <= d.mass_class < 3


class TestReports:
    def test_perfect_detections(self):
        report = evaluate_detections([_perfect_result()])
        for name in METRIC_NAMES:
            assert report.metric(name) == pytest.approx(1.0)
        assert (report.locations, report.detections, report.instances) == (1, 1, 1)

    def test_aggregate_mean_and_std(self):
        good = evaluate_detections([_perfect_result()])
        empty = evaluate_detections([ImageResult(instances=_perfect_result().instances)])
        aggregate = aggregate_reports([good, empty])
        assert aggregate.runs == 2
        assert aggregate.mean["mask_ap50"] == pytest.approx(0.5)
        assert aggregate.std["mask_ap50"] == pytest.approx(0.5)
        assert math.isnan(aggregate.mean["mass_accuracy"])

    def test_aggregate_needs_reports(self):
        with pytest.raises(ValueError):
            aggregate_reports([])

    def test_format_report(self):
        text = format_report(evaluate_detections([_perfect_result()]), title="ckpt")
        assert text.startswith("ckpt\n====\n")
        assert "Mask AP50" in text
        assert "100.00" in text
        assert "(n=1)" in text

    def test_format_marks_undefined_metrics(self):
        report = evaluate_detections([ImageResult(instances=_perfect_result().instances)])
        assert "n/a" in format_report(report)

    @pytest.mark.parametrize(
        "value,width,expected",
        [(0.5, 0, "50.00"), (1.0, 6, "100.00"), (0.0123, 6, "  1.23"), (math.nan, 6, "   n/a")],
    )
    def test_format_percent(self, value, width, expected):
        assert format_percent(value, width) == expected

    def test_format_aggregate(self):
        report = evaluate_detections([_perfect_result()])
        text = format_aggregate(aggregate_reports([report, report]), title="two runs")
        assert "runs 2" in text
        assert "run 1" in text


class TestEvaluate:
    def test_requires_model_or_baseline(self, make_box_scene):
        with pytest.raises(ValueError):
            evaluate(None, [make_box_scene()])
        with pytest.raises(ValueError, match="baseline"):
            evaluate(None, [make_box_scene()], baseline="uniform")

    def test_random_baseline_sees_reachable_box(self, make_box_scene):
        report = evaluate(None, [make_box_scene()], baseline="random", seed=3)
        assert report.locations == 1
        assert report.instances == 1
        assert report.detections == 10
        again = evaluate(None, [make_box_scene()], baseline="random", seed=3)
        assert format_report(again) == format_report(report)

    def test_model_evaluation_is_deterministic(self, make_box_scene, tiny_model):
        scenes = [make_box_scene()]
        first = evaluate(tiny_model, scenes, theta=-10.0, seed=1)
        second = evaluate(tiny_model, scenes, theta=-10.0, seed=1)
        assert first.locations == 1
        assert format_report(first) == format_report(second)
