"""
Single-observation evaluation: proposals from one frame, scored against reachable ground truth.

Nothing here pushes objects; the world is only rendered.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from probeseg.actsel import ActionProposal, select_actions
from probeseg.imaging import POOL_FACTOR, majority_downsample
from probeseg.metrics import (
    MASS_CLASSES,
    Detection,
    ImageResult,
    Instance,
    average_precision,
    bbox_of,
    mass_metrics,
    mean_average_precision,
)
from probeseg.microworld import (
    DEFAULT_REACH,
    MASS_CLASS_NAMES,
    Episode,
    GroundTruthInstance,
    SceneSpec,
)
from probeseg.predictor import Predictor, forward

logger = logging.getLogger(__name__)

DEFAULT_PROPOSALS = 10
BASELINES = ("random",)

METRIC_NAMES = (
    "bbox_ap50",
    "bbox_ap",
    "mask_ap50",
    "mask_ap",
    "mass_accuracy",
    "mass_bbox_ap50",
)


@dataclass
class MetricsReport:
    bbox_ap50: float
    bbox_ap: float
    mask_ap50: float
    mask_ap: float
    mass_accuracy: float
    mass_bbox_ap50: float
    confusion: list[list[float]]
    counts: list[list[int]]
    locations: int = 0
    detections: int = 0
    instances: int = 0

    def metric(self, name: str) -> float:
        return float(getattr(self, name))

    def to_dict(self) -> dict[str, Any]:
        return {
            "bbox_ap50": self.bbox_ap50,
            "bbox_ap": self.bbox_ap,
            "mask_ap50": self.mask_ap50,
            "mask_ap": self.mask_ap,
            "mass_accuracy": self.mass_accuracy,
            "mass_bbox_ap50": self.mass_bbox_ap50,
            "confusion": self.confusion,
            "counts": self.counts,
            "locations": self.locations,
            "detections": self.detections,
            "instances": self.instances,
        }


def gt_instances(ground_truth: Sequence[GroundTruthInstance]) -> list[Instance]:
    """Reachable instances at output resolution; instances that vanish when pooled are dropped."""
    instances = []
    for gt in ground_truth:
        if not gt.reachable:
            continue
        mask = majority_downsample(gt.mask, POOL_FACTOR)
        box = bbox_of(mask)
        if box is None:
            continue
        instances.append(Instance(mask=mask, bbox=box, mass_class=gt.mass_class))
    return instances


def proposals_to_detections(proposals: Sequence[ActionProposal]) -> list[Detection]:
    """Confidence is the sigmoid of the seed score; mass class is the seed's force class."""
    detections = []
    for p in proposals:
        box = bbox_of(p.mask)
        if box is None:
            continue
        detections.append(
            Detection(mask=p.mask, bbox=box, confidence=p.confidence, mass_class=p.force_class)
        )
    return detections


def random_proposals(n: int, rng: np.random.Generator, size: int = 100) -> list[Detection]:
    """Random rectangles with random confidences and mass classes."""
    detections = []
    for _ in range(n):
        h, w = (int(v) for v in rng.integers(3, size // 3 + 1, size=2))
        r = int(rng.integers(0, size - h + 1))
        c = int(rng.integers(0, size - w + 1))
        mask = np.zeros((size, size), dtype=bool)
        mask[r : r + h, c : c + w] = True
        detections.append(
            Detection(
                mask=mask,
                bbox=(r, c, r + h, c + w),
                confidence=float(rng.uniform()),
                mass_class=int(rng.integers(MASS_CLASSES)),
            )
        )
    return detections


def evaluate_detections(results: Sequence[ImageResult]) -> MetricsReport:
    mass = mass_metrics(results)
    return MetricsReport(
        bbox_ap50=average_precision(results, 0.5, "bbox"),
        bbox_ap=mean_average_precision(results, "bbox"),
        mask_ap50=average_precision(results, 0.5, "mask"),
        mask_ap=mean_average_precision(results, "mask"),
        mass_accuracy=mass.accuracy,
        mass_bbox_ap50=mass.ap50_mass_bbox,
        confusion=mass.confusion.tolist(),
        counts=mass.counts.tolist(),
        locations=len(results),
        detections=sum(len(r.detections) for r in results),
        instances=sum(len(r.instances) for r in results),
    )


def evaluate(
    model: Predictor | None,
    scenes: Sequence[SceneSpec],
    theta: float = 0.0,
    n: int = DEFAULT_PROPOSALS,
    seed: int = 0,
    baseline: str | None = None,
    panels_dir: Path | None = None,
    noise: bool = True,
    reach: float = DEFAULT_REACH,
    reach_shape: str = "sphere",
    view: int | None = None,
) -> MetricsReport:
    """
    Score proposals at every spawn point of every scene.

    With ``baseline="random"`` the model is not consulted and random rectangles are scored
    instead. Results depend only on the arguments.
    """
    if baseline is not None and baseline not in BASELINES:
        raise ValueError(f"Unknown baseline: {baseline!r}")
    if model is None and baseline is None:
        raise ValueError("evaluate needs a model or a baseline")
    if view is None:
        view = model.config.input_size if model is not None else 300

    results: list[ImageResult] = []
    for i, scene in enumerate(scenes):
        for spawn in range(len(scene.spawns)):
            ss = np.random.SeedSequence([seed, i, spawn])
            noise_seed, baseline_seed = ss.spawn(2)
            env = Episode(
                scene=scene,
                spawn=spawn,
                noise=noise,
                noise_seed=int(noise_seed.generate_state(1)[0]),
                reach=reach,
                reach_shape=reach_shape,
                view=view,
            )
            rgb, depth = env.observe()
            instances = gt_instances(env.ground_truth())
            if baseline == "random":
                rng = np.random.default_rng(baseline_seed)
                detections = random_proposals(n, rng, view // POOL_FACTOR)
            else:
                assert model is not None
                out = forward(model, rgb, depth, mode="eval").outputs(0)
                proposals = select_actions(out, n, theta)
                detections = proposals_to_detections(proposals)
                if panels_dir is not None:
                    from probeseg.panels import save_prediction_panel

                    save_prediction_panel(
                        Path(panels_dir) / f"scene{scene.seed:05d}_spawn{spawn}.png",
                        rgb,
                        out,
                        proposals,
                        [inst.mask for inst in instances],
                    )
            results.append(ImageResult(detections=detections, instances=instances))
        logger.debug(f"Evaluated scene {scene.seed} ({i + 1}/{len(scenes)})")

    report = evaluate_detections(results)
    logger.info(
        f"Evaluated {report.locations} locations: mask AP50 {report.mask_ap50:.4f}, "
        f"bbox AP50 {report.bbox_ap50:.4f}, mass accuracy {report.mass_accuracy:.4f}"
    )
    return report


@dataclass(frozen=True)
class AggregateReport:
    """Mean and standard deviation of each metric over several runs."""

    mean: dict[str, float]
    std: dict[str, float]
    runs: int
    reports: list[MetricsReport] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "std": self.std,
            "runs": self.runs,
            "reports": [r.to_dict() for r in self.reports],
        }


def aggregate_reports(reports: Sequence[MetricsReport]) -> AggregateReport:
    if not reports:
        raise ValueError("No reports to aggregate")
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name in METRIC_NAMES:
        values = np.array([r.metric(name) for r in reports], dtype=np.float64)
        mean[name] = float(np.mean(values))
        std[name] = float(np.std(values))
    return AggregateReport(mean=mean, std=std, runs=len(reports), reports=list(reports))


def format_percent(value: float, width: int = 0) -> str:
    """``value`` as a percentage with two decimals; NaN shows as n/a."""
    if np.isnan(value):
        return "n/a".rjust(width)
    return f"{100 * value:{width}.2f}" if width else f"{100 * value:.2f}"


def format_report(report: MetricsReport, title: str = "") -> str:
    """Plain-text report: segmentation table, mass table and confusion matrix."""
    pct = {name: format_percent(report.metric(name)) for name in METRIC_NAMES}
    lines = []
    if title:
        lines += [title, "=" * len(title), ""]
    lines += [
        f"locations {report.locations}  detections {report.detections}  "
        f"instances {report.instances}",
        "",
        "Segmentation      BBox AP50  BBox AP  Mask AP50  Mask AP",
        f"                  {pct['bbox_ap50']:>9}  {pct['bbox_ap']:>7}  "
        f"{pct['mask_ap50']:>9}  {pct['mask_ap']:>7}",
        "",
        "Mass              Accuracy  Mass&BBox AP50",
        f"                  {pct['mass_accuracy']:>8}  {pct['mass_bbox_ap50']:>14}",
        "",
        "Confusion (rows: ground truth, columns: prediction)",
        "          " + "".join(f"{name:>9}" for name in MASS_CLASS_NAMES),
    ]
    for name, row, counts in zip(MASS_CLASS_NAMES, report.confusion, report.counts):
        cells = "".join(f"{v:9.2f}" for v in row)
        lines.append(f"{name:<10}{cells}   (n={sum(counts)})")
    return "\n".join(lines) + "\n"


def format_aggregate(aggregate: AggregateReport, title: str = "") -> str:
    lines = []
    if title:
        lines += [title, "=" * len(title), ""]
    lines.append(f"runs {aggregate.runs}")
    lines.append("")
    for name in METRIC_NAMES:
        mean, std = format_percent(aggregate.mean[name], 6), format_percent(aggregate.std[name], 6)
        lines.append(f"{name:<16} {mean} +- {std}")
    lines.append("")
    for i, report in enumerate(aggregate.reports):
        lines.append(format_report(report, title=f"run {i}"))
    return "\n".join(lines)
