"""
Command workflows behind the probeseg CLI.

Each ``_handle_*`` function does the work of one command and reports through an
:class:`~probeseg.output.OutputFormatter`; argument parsing and error-to-exit-code mapping
stay in ``probeseg.cli``. Handlers never modify the scene files or checkpoints they read.
"""

from __future__ import annotations

import json as _json
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from probeseg import __version__
from probeseg.actsel import select_actions
from probeseg.checkpoint import load_model
from probeseg.config import RunConfig
from probeseg.evaluation import (
    DEFAULT_PROPOSALS,
    aggregate_reports,
    evaluate,
    format_aggregate,
    format_report,
)
from probeseg.exceptions import CheckpointError, ConfigError, ShapeMismatchError
from probeseg.imaging import decode_depth, decode_rgb, encode_depth, encode_mask, encode_rgb
from probeseg.membank import stats_from_snapshot
from probeseg.microworld import (
    Episode,
    generate_scene,
    load_scene,
    load_scene_set,
    save_scene,
)
from probeseg.output import OutputFormatter, json_safe, proposal_to_dict
from probeseg.predictor import forward
from probeseg.selfsup import smoothed_success, superpixels, supervise
from probeseg.store import atomic_write_text, write_json
from probeseg.trainer import Trainer

logger = logging.getLogger(__name__)


def json_dumps(data: Any) -> str:
    return _json.dumps(json_safe(data), indent=2, sort_keys=True)


def parse_point(text: str) -> tuple[int, int]:
    """'row,col' to a tuple."""
    try:
        row, col = (int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"Point must be 'row,col', got {text!r}")
    return row, col


def _handle_gen_scenes(
    formatter: OutputFormatter,
    split: str,
    count: int,
    seed: int,
    out_dir: Path,
    roles: Sequence[str],
    layout: str,
    texture_amplitude: float,
) -> dict[str, Any]:
    written: dict[str, list[str]] = {}
    for role in roles:
        paths = []
        for s in range(seed, seed + count):
            scene = generate_scene(s, split, role, layout, texture_amplitude=texture_amplitude)
            path = out_dir / role / f"scene_{s:05d}.scene"
            save_scene(scene, path)
            paths.append(str(path))
        written[role] = paths
        logger.info(f"Wrote {len(paths)} {role} scenes to {out_dir / role}")
    summary = {
        "split": split,
        "layout": layout,
        "count": count,
        "seed": seed,
        "out_dir": str(out_dir),
        "scenes": written,
    }
    atomic_write_text(out_dir / "version.txt", f"probeseg {__version__}\n")
    formatter.output_success(
        f"Generated {count} scene(s) per role ({', '.join(roles)}) in {out_dir}"
    )
    return summary


def _handle_render(
    formatter: OutputFormatter,
    scene_path: Path,
    spawn: int,
    out_prefix: Path,
    view: int,
    noise_seed: int,
    push: tuple[int, int] | None,
    force: float,
    direction: int,
) -> dict[str, Any]:
    """Render a scene view; with ``push``, also the view after one push at that input point."""
    scene = load_scene(scene_path)
    env = Episode(scene=scene, spawn=spawn, noise_seed=noise_seed, view=view)
    rgb, depth = env.observe()
    files = {
        "rgb": f"{out_prefix}_rgb.png",
        "depth": f"{out_prefix}_depth.png",
    }
    encode_rgb(rgb, Path(files["rgb"]))
    encode_depth(depth, Path(files["depth"]))
    result: dict[str, Any] = {"scene": str(scene_path), "spawn": spawn, "files": files}
    if push is not None:
        outcome = env.push(push, force, direction)
        after, _ = env.observe()
        files["after"] = f"{out_prefix}_after.png"
        encode_rgb(after, Path(files["after"]))
        result["push"] = {
            "point": list(push),
            "force": force,
            "direction": direction,
            "moved": outcome.moved,
            "object_id": outcome.object_id,
            "cells": outcome.cells,
            "reason": outcome.reason,
        }
    formatter.output_success(f"Rendered {scene_path} spawn {spawn} to {out_prefix}_*.png")
    return result


def _handle_train(
    formatter: OutputFormatter,
    config_file: Path | None,
    out_dir: Path,
    overrides: dict[str, Any],
    jobs: int | None,
    deterministic: bool,
    dump_grads: Path | None,
    progress: bool,
) -> dict[str, Any]:
    run_config = RunConfig(config_file, overrides)
    train_config = run_config.train
    logger.info(f"Effective configuration: {run_config!r}")
    trainer = Trainer(
        train_config,
        out_dir,
        jobs=jobs,
        deterministic=deterministic,
        dump_grads=dump_grads,
    )
    summary = trainer.run(progress=progress)
    formatter.output_success(
        f"Trained {summary.steps} steps over {summary.locations} locations; "
        f"final checkpoint {summary.final_checkpoint}"
    )
    return summary.to_dict()


def _handle_eval(
    formatter: OutputFormatter,
    checkpoints: Sequence[Path],
    scenes_dir: Path,
    out: Path | None,
    panels_dir: Path | None,
    baseline: str | None,
    theta: float,
    n: int = DEFAULT_PROPOSALS,
    seed: int = 0,
    noise: bool = True,
) -> dict[str, Any]:
    scenes = load_scene_set(scenes_dir)
    if baseline is not None:
        report = evaluate(None, scenes, theta, n, seed, baseline=baseline)
        formatter.output_report(report, title=f"Baseline: {baseline}")
        if out is not None:
            atomic_write_text(out, format_report(report, title=f"baseline {baseline}"))
        return report.to_dict()
    if not checkpoints:
        raise ConfigError("eval needs at least one --ckpt or a --baseline")

    reports = []
    for ckpt_path in checkpoints:
        model, ckpt = load_model(ckpt_path)
        reach = float(ckpt.config.get("train", {}).get("arm_length", 1.5))
        reach_shape = str(ckpt.config.get("train", {}).get("reach_shape", "sphere"))
        panels = panels_dir
        if panels_dir is not None and len(checkpoints) > 1:
            panels = Path(panels_dir) / Path(ckpt_path).stem
        report = evaluate(
            model,
            scenes,
            theta,
            n,
            seed,
            panels_dir=panels,
            noise=noise,
            reach=reach,
            reach_shape=reach_shape,
        )
        reports.append(report)
        formatter.output_report(report, title=f"Evaluation: {ckpt_path} (step {ckpt.step})")

    if len(reports) == 1:
        text = format_report(reports[0], title=str(checkpoints[0]))
        result = reports[0].to_dict()
    else:
        aggregate = aggregate_reports(reports)
        formatter.output_aggregate(aggregate)
        text = format_aggregate(aggregate, title=f"{len(reports)} checkpoints")
        result = aggregate.to_dict()
    if out is not None:
        atomic_write_text(out, text)
        logger.info(f"Wrote report {out}")
    return result


def _handle_infer(
    formatter: OutputFormatter,
    ckpt_path: Path,
    image: Path,
    depth_path: Path,
    out_panel: Path | None,
    out_json: Path | None,
    theta: float,
    n: int,
) -> list[dict[str, Any]]:
    model, _ckpt = load_model(ckpt_path)
    rgb = decode_rgb(image)
    depth = decode_depth(depth_path)
    size = model.config.input_size
    if rgb.shape[:2] != (size, size) or depth.shape != (size, size):
        raise ShapeMismatchError(
            f"Checkpoint expects {size}x{size} inputs",
            details=f"image {rgb.shape[:2]}, depth {depth.shape}",
        )
    out = forward(model, rgb, depth, mode="eval").outputs(0)
    proposals = select_actions(out, n, theta)
    rows = [proposal_to_dict(p) for p in proposals]
    if out_panel is not None:
        from probeseg.panels import save_prediction_panel

        save_prediction_panel(out_panel, rgb, out, proposals)
    if out_json is not None:
        write_json(out_json, {"checkpoint": str(ckpt_path), "image": str(image), "proposals": rows})
    formatter.output_proposals(proposals)
    return rows


def _handle_selfsup_debug(
    formatter: OutputFormatter,
    before_path: Path,
    after_path: Path,
    point: tuple[int, int],
    out_prefix: Path | None,
    out_panel: Path | None,
    use_superpixels: bool,
) -> dict[str, Any]:
    before = decode_rgb(before_path)
    after = decode_rgb(after_path)
    labels = superpixels(before) if use_superpixels else None
    result = supervise(before, after, point, labels, use_superpixels)
    if out_prefix is None:
        out_prefix = before_path.with_name(f"{before_path.stem}_selfsup")
    files = {
        "change": f"{out_prefix}_B.png",
        "mask": f"{out_prefix}_Bplus.png",
        "report": f"{out_prefix}_report.txt",
    }
    encode_mask(result.change, Path(files["change"]))
    encode_mask(result.mask, Path(files["mask"]))
    if out_panel is not None:
        from probeseg.panels import save_selfsup_panel

        save_selfsup_panel(out_panel, before, after, result, point, labels)
        files["panel"] = str(out_panel)

    row, col = point
    verdict = {
        "point": list(point),
        "successful": result.successful,
        "change_pixels": int(result.change.sum()),
        "mask_pixels": int(result.mask.sum()),
        "kernel_mass": float(smoothed_success(result.mask)[row, col]),
        "superpixels": use_superpixels,
        "files": files,
    }
    report = [
        f"before: {before_path}",
        f"after: {after_path}",
        f"point: {row},{col}",
        f"superpixels: {'on' if use_superpixels else 'off'}",
        f"|B|: {verdict['change_pixels']}",
        f"|B+|: {verdict['mask_pixels']}",
        f"kernel mass at point: {verdict['kernel_mass']:.4f}",
        f"verdict: {'successful' if result.successful else 'unsuccessful'}",
    ]
    atomic_write_text(Path(files["report"]), "\n".join(report) + "\n")
    formatter.output_info(
        f"{'successful' if result.successful else 'unsuccessful'}: |B|={verdict['change_pixels']} "
        f"|B+|={verdict['mask_pixels']} at {point}"
    )
    formatter.output_success(f"Wrote {out_prefix}_B.png, _Bplus.png and _report.txt")
    return verdict


def _handle_bank_stats(formatter: OutputFormatter, run_dir: Path) -> dict[str, Any]:
    path = Path(run_dir) / "bank_snapshot.json"
    if not path.exists():
        raise CheckpointError(f"No bank snapshot in '{run_dir}'", details=f"expected {path}")
    try:
        snapshot = _json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Cannot read bank snapshot {path}", details=str(e))
    stats = stats_from_snapshot(snapshot)
    formatter.output_bank_stats(stats, source=str(path))

    result = stats.to_dict()
    metrics = Path(run_dir) / "metrics.jsonl"
    if metrics.exists():
        lines = [ln for ln in metrics.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if lines:
            result["last_cycle"] = _json.loads(lines[-1])
            formatter.output_info(
                f"Last cycle: step {result['last_cycle'].get('step')}, "
                f"K={result['last_cycle'].get('k')}"
            )
    return result

