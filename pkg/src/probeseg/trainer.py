"""
Interactive self-supervised training loop.

Each location: observe once, pick greedy and random interactions on that frame, run the
force escalation for every interaction while the world state accumulates, and store the
frame with all resulting records in the memory bank. Every cycle collects a fixed number
of locations with a frozen parameter snapshot, then takes K gradient steps on batches
sampled from the bank.
"""

from __future__ import annotations

import copy
import logging
import math
import os
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import torch
from numpy.typing import NDArray
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeRemainingColumn

from probeseg.actsel import random_actions, select_actions
from probeseg.checkpoint import save_checkpoint
from probeseg.config import TrainConfig
from probeseg.headgrads import embed_grad, force_grad, score_grad, targets_for
from probeseg.imaging import POOL_FACTOR, BinaryMask, Grid, ImageRGB, LabelMap, majority_downsample
from probeseg.logger import run_log
from probeseg.membank import Bank, BankEntry
from probeseg.microworld import (
    DIRECTIONS,
    Episode,
    Role,
    SceneSpec,
    generate_scene,
    load_scene_set,
)
from probeseg.predictor import (
    ModelConfig,
    Predictor,
    adam_step,
    backward,
    build_model,
    forward,
    gradient_norm,
    make_optimizer,
)
from probeseg.records import Feedback, InteractionRecord
from probeseg.selfsup import superpixels, supervise
from probeseg.store import append_jsonl, atomic_write_text, write_json

logger = logging.getLogger(__name__)

FORCE_CLASSES = 3


class Phase(str, Enum):
    SEGMENTATION = "segmentation"
    JOINT = "joint"


@dataclass(frozen=True)
class PhaseSchedule:
    phase: Phase
    greedy: int
    random: int
    locations: int
    k_start: int
    k_end: int
    locations_per_cycle: int

    @property
    def cycles(self) -> int:
        return math.ceil(self.locations / self.locations_per_cycle)

    @property
    def trains_force(self) -> bool:
        return self.phase is Phase.JOINT


def phase_schedules(config: TrainConfig) -> list[PhaseSchedule]:
    """The configured phases in training order."""
    schedules = []
    for name in config.phases:
        phase = Phase(name)
        if phase is Phase.SEGMENTATION:
            schedules.append(
                PhaseSchedule(
                    phase,
                    config.seg_greedy,
                    config.seg_random,
                    config.seg_locations,
                    config.seg_k_start,
                    config.seg_k_end,
                    config.locations_per_cycle,
                )
            )
        else:
            schedules.append(
                PhaseSchedule(
                    phase,
                    config.joint_greedy,
                    config.joint_random,
                    config.joint_locations,
                    config.joint_k_start,
                    config.joint_k_end,
                    config.locations_per_cycle,
                )
            )
    return schedules


def k_schedule(cycle: int, cycles: int, k_start: int, k_end: int) -> int:
    """Batches per cycle, linear in the cycle index from ``k_start`` to ``k_end``."""
    if cycles <= 1:
        return k_start
    return int(round(k_start + (k_end - k_start) * cycle / (cycles - 1)))


# --- force escalation -----------------------------------------------------


@dataclass(frozen=True)
class EscalationFeedback:
    """Result of one interaction. ``frame`` is the last observation, for the next interaction."""

    feedback: Feedback
    forces: tuple[float, ...]
    moving_force: float | None
    mask: BinaryMask | None
    frame: ImageRGB


def escalation_steps(r: int) -> list[tuple[int, Feedback]]:
    """(force class to apply, verdict if it causes a change) in application order."""
    if r not in range(FORCE_CLASSES):
        raise ValueError(f"Force class must be 0..2, got {r}")
    steps = []
    if r > 0:
        steps.append((r - 1, Feedback.TOO_LARGE))
    steps.append((r, Feedback.CORRECT))
    if r < FORCE_CLASSES - 1:
        steps.append((FORCE_CLASSES - 1, Feedback.TOO_SMALL))
    return steps


def escalate(
    env: Episode,
    point: tuple[int, int],
    r: int,
    direction: int,
    forces: Sequence[float],
    frame: ImageRGB,
    labels: LabelMap | None = None,
    use_superpixels: bool = True,
    oracle_masks: Mapping[int, BinaryMask] | None = None,
) -> EscalationFeedback:
    """
    Push at output point ``point`` with escalating force until something changes.

    ``frame`` is the observation just before this interaction. Each step is judged by
    self-supervision against the previous frame, or, with ``oracle_masks``, by whether the
    world actually moved; the oracle's mask is the object's mask in the location's first frame.
    """
    if not 0 <= direction < len(DIRECTIONS):
        raise ValueError(f"Direction index must be in 0..7, got {direction}")
    target = (POOL_FACTOR * point[0] + 1, POOL_FACTOR * point[1] + 1)
    applied: list[float] = []
    for k, verdict in escalation_steps(r):
        outcome = env.push(target, forces[k], direction)
        applied.append(forces[k])
        after, _ = env.observe()
        if oracle_masks is not None:
            successful = outcome.moved
            mask = None
            if successful:
                mask = oracle_masks.get(outcome.object_id)  # type: ignore[arg-type]
                if mask is None:
                    h, w = frame.shape[:2]
                    mask = np.zeros((h // POOL_FACTOR, w // POOL_FACTOR), dtype=bool)
        else:
            result = supervise(frame, after, point, labels, use_superpixels)
            successful, mask = result.successful, result.mask
        frame = after
        if successful:
            logger.debug(f"Escalation at {point} r={r}: {verdict.value} at {forces[k]} N")
            return EscalationFeedback(verdict, tuple(applied), forces[k], mask, frame)
    return EscalationFeedback(Feedback.UNSUCCESSFUL, tuple(applied), None, None, frame)


# --- rollouts -------------------------------------------------------------


@dataclass(frozen=True)
class LocationTask:
    scene: SceneSpec
    spawn: int
    seed: np.random.SeedSequence
    greedy: int
    random: int


Action = tuple[tuple[int, int], int, bool]


def _oracle_actions(
    env: Episode,
    greedy: list[Action],
    m: NDArray[np.float64],
    rng: np.random.Generator,
) -> list[Action]:
    """
    At most one model-chosen point per object plus one sampled point on each missed object.

    Points off objects stay in as hard negatives.
    """
    reachable = {
        gt.object_id: majority_downsample(gt.mask, POOL_FACTOR)
        for gt in env.ground_truth()
        if gt.reachable
    }
    kept: list[Action] = []
    seen: set[int] = set()
    for point, k, flag in greedy:
        ident = env.object_at((POOL_FACTOR * point[0] + 1, POOL_FACTOR * point[1] + 1))
        if ident is not None:
            if ident in seen:
                continue
            seen.add(ident)
        kept.append((point, k, flag))
    for ident, mask in sorted(reachable.items()):
        if ident in seen or not mask.any():
            continue
        cells = np.argwhere(mask)
        r, c = (int(v) for v in cells[rng.integers(len(cells))])
        kept.append(((r, c), int(np.argmax(m[:, r, c])), True))
    return kept


def run_location(
    env: Episode,
    model: Predictor,
    config: TrainConfig,
    n_greedy: int,
    n_random: int,
    rng: np.random.Generator,
) -> BankEntry:
    """Collect every interaction record of one location into a bank entry."""
    rgb, depth = env.observe()
    out = forward(model, rgb, depth, mode="eval").outputs(0)
    size = out.s.shape[0]

    actions: list[Action] = [
        (p.point, p.force_class, True) for p in select_actions(out, n_greedy, config.theta)
    ]
    if config.oracle_interactions:
        actions = _oracle_actions(env, actions, out.m, rng)
    actions += [(p, k, False) for p, k in random_actions(n_random, rng, size)]

    oracle = None
    labels = None
    if config.oracle_masks:
        oracle = {
            gt.object_id: majority_downsample(gt.mask, POOL_FACTOR) for gt in env.ground_truth()
        }
    elif config.superpixels:
        labels = superpixels(rgb)

    records = []
    frame = rgb
    for point, k, is_greedy in actions:
        direction = int(rng.integers(len(DIRECTIONS)))
        result = escalate(
            env,
            point,
            k,
            direction,
            config.forces,
            frame,
            labels=labels,
            use_superpixels=config.superpixels,
            oracle_masks=oracle,
        )
        frame = result.frame
        records.append(
            InteractionRecord(
                point=point,
                force_class=k,
                feedback=result.feedback,
                mask=result.mask,
                direction=direction,
                greedy=is_greedy,
            )
        )
    return BankEntry(
        records=tuple(records),
        rgb=rgb,
        depth=depth,
        source=f"{env.scene.seed}:{env.spawn}",
    )


def _rollout(task: LocationTask, model: Predictor, config: TrainConfig) -> BankEntry:
    noise_seed, action_seed = task.seed.spawn(2)
    env = Episode(
        scene=task.scene,
        spawn=task.spawn,
        noise=config.noise,
        noise_seed=int(noise_seed.generate_state(1)[0]),
        reach=config.arm_length,
        reach_shape=config.reach_shape,
        view=model.config.input_size,
    )
    rng = np.random.default_rng(action_seed)
    return run_location(env, model, config, task.greedy, task.random, rng)


# --- gradient steps -------------------------------------------------------


@dataclass(frozen=True)
class StepResult:
    grad_norm: float
    score_grad: float
    force_grad: float
    embed_grad: float
    mean_priority: float
    head_grads: tuple[Grid, NDArray[np.float64], NDArray[np.float64]] = field(repr=False)


def train_step(
    model: Predictor,
    optimizer: torch.optim.Optimizer,
    bank: Bank,
    batch_size: int,
    rng: np.random.Generator,
    train_force: bool = True,
    prioritized: bool = True,
) -> StepResult:
    """Sample a batch, refresh its priorities, inject head gradients and take one Adam step."""
    batch = bank.sample_batch(batch_size, rng, prioritized)
    images = [entry.image() for entry in batch]
    fp = forward(model, [im[0] for im in images], [im[1] for im in images], mode="train")

    g_s = np.zeros(tuple(fp.s.shape))
    g_m = np.zeros(tuple(fp.m.shape))
    g_e = np.zeros(tuple(fp.e.shape))
    for i, entry in enumerate(batch):
        out = fp.outputs(i)
        Bank.update_priority(entry, Bank.score(entry, out.e))
        maps = targets_for(entry.records, out.s.shape)
        g_s[i] = score_grad(out.s, maps.fg, maps.bg)
        if train_force:
            g_m[i] = force_grad(out.m, maps.ft)
        g_e[i] = embed_grad(out.e, entry.masks)

    grads = backward(fp, g_s, g_m, g_e)
    norm = gradient_norm(grads)
    adam_step(optimizer)
    return StepResult(
        grad_norm=norm,
        score_grad=float(np.abs(g_s).mean()),
        force_grad=float(np.abs(g_m).mean()),
        embed_grad=float(np.abs(g_e).mean()),
        mean_priority=float(np.mean([entry.priority for entry in batch])),
        head_grads=(g_s[0], g_m[0], g_e[0]),
    )


# --- full run -------------------------------------------------------------


@dataclass
class TrainSummary:
    out_dir: Path
    steps: int = 0
    locations: int = 0
    checkpoints: list[Path] = field(default_factory=list)
    final_checkpoint: Path | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "out_dir": str(self.out_dir),
            "steps": self.steps,
            "locations": self.locations,
            "checkpoints": [str(p) for p in self.checkpoints],
            "final_checkpoint": str(self.final_checkpoint) if self.final_checkpoint else None,
        }


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 2) - 1)


def training_scenes(config: TrainConfig) -> list[SceneSpec]:
    if config.scenes_dir:
        return load_scene_set(Path(config.scenes_dir))
    return [
        generate_scene(
            seed,
            config.split,
            Role.TRAIN,
            config.layout,
            texture_amplitude=config.texture_amplitude,
        )
        for seed in range(config.scenes)
    ]


def model_config_for(name: str) -> ModelConfig:
    return ModelConfig.tiny() if name == "tiny" else ModelConfig()


def write_run_files(out_dir: Path, config: TrainConfig) -> None:
    """Effective config, seed and code version for provenance."""
    from probeseg import __version__

    atomic_write_text(out_dir / "run_config.txt", config.to_text())
    atomic_write_text(out_dir / "seed.txt", f"{config.seed}\n")
    atomic_write_text(out_dir / "version.txt", f"probeseg {__version__}\n")


class Trainer:
    """Owns the model, optimizer and bank; rollout workers only read parameter snapshots."""

    def __init__(
        self,
        config: TrainConfig,
        out_dir: Path,
        jobs: int | None = None,
        deterministic: bool = False,
        dump_grads: Path | None = None,
        scenes: Sequence[SceneSpec] | None = None,
    ) -> None:
        config.validate()
        self.config = config
        self.out_dir = Path(out_dir)
        self.jobs = 1 if deterministic else (jobs or config.jobs or default_jobs())
        self.deterministic = deterministic
        self.dump_grads = Path(dump_grads) if dump_grads else None
        self.scenes = list(scenes) if scenes is not None else training_scenes(config)
        if not self.scenes:
            raise ValueError("No training scenes")

        self.model = build_model(model_config_for(config.model), seed=config.seed)
        self.optimizer = make_optimizer(self.model, config.lr, config.weight_decay)
        self.bank = Bank(
            config.bank_capacity, spill_dir=self.out_dir / "bank" if config.spill_images else None
        )
        self.sample_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
        self.summary = TrainSummary(out_dir=self.out_dir)
        self._location_index = 0

    # rollouts

    def _tasks(self, count: int, schedule: PhaseSchedule, phase_index: int) -> list[LocationTask]:
        tasks = []
        for _ in range(count):
            seed = np.random.SeedSequence([self.config.seed, phase_index, self._location_index])
            pick = np.random.default_rng(seed.spawn(1)[0])
            scene = self.scenes[int(pick.integers(len(self.scenes)))]
            tasks.append(
                LocationTask(
                    scene=scene,
                    spawn=int(pick.integers(len(scene.spawns))),
                    seed=seed,
                    greedy=schedule.greedy,
                    random=schedule.random,
                )
            )
            self._location_index += 1
        return tasks

    def collect(
        self,
        count: int,
        schedule: PhaseSchedule,
        phase_index: int,
        advance: Callable[[int], None] | None = None,
    ) -> int:
        """Roll out ``count`` locations with a frozen snapshot and insert them in order."""
        tasks = self._tasks(count, schedule, phase_index)
        snapshot = copy.deepcopy(self.model).eval()
        successful = 0
        if self.jobs == 1:
            entries = (_rollout(t, snapshot, self.config) for t in tasks)
            for entry in entries:
                successful += len(entry.masks)
                self.bank.insert(entry)
                if advance:
                    advance(1)
        else:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                for entry in pool.map(lambda t: _rollout(t, snapshot, self.config), tasks):
                    successful += len(entry.masks)
                    self.bank.insert(entry)
                    if advance:
                        advance(1)
        self.summary.locations += count
        return successful

    # checkpoints

    def _checkpoint_config(self) -> dict[str, Any]:
        return {"train": self.config.to_dict()}

    def save(self, name: str) -> Path:
        path = save_checkpoint(
            self.out_dir / name,
            self.model,
            self.optimizer,
            self.summary.steps,
            self._checkpoint_config(),
        )
        self.summary.checkpoints.append(path)
        return path

    def _dump(self, result: StepResult, phase: Phase, cycle: int) -> None:
        assert self.dump_grads is not None
        from probeseg.panels import save_gradient_heatmaps

        save_gradient_heatmaps(
            self.dump_grads / f"{phase.value}_cycle{cycle:05d}.png", *result.head_grads
        )

    def run(self, progress: bool = False) -> TrainSummary:
        """Run every phase; the run directory also receives train.log."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with run_log(self.out_dir / "train.log"):
            return self._run(progress)

    def _run(self, progress: bool) -> TrainSummary:
        config = self.config
        write_run_files(self.out_dir, config)
        if self.deterministic:
            torch.use_deterministic_algorithms(True)
        schedules = phase_schedules(config)
        total = config.initial_fill + sum(s.locations for s in schedules)
        logger.info(
            f"Training on {len(self.scenes)} scenes: {total} locations, "
            f"{len(schedules)} phase(s), {self.jobs} rollout worker(s)"
        )

        with Progress(
            TextColumn("[bold blue]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TimeRemainingColumn(),
            disable=not progress,
        ) as bar:
            task = bar.add_task("Initial fill", total=total)

            def advance(n: int) -> None:
                bar.update(task, advance=n)

            self.collect(config.initial_fill, schedules[0], 0, advance)
            logger.info(f"Initial fill done: bank holds {len(self.bank)} entries")

            cycle_counter = 0
            for phase_index, schedule in enumerate(schedules):
                remaining = schedule.locations
                for cycle in range(schedule.cycles):
                    label = f"{schedule.phase.value} {cycle + 1}/{schedule.cycles}"
                    bar.update(task, description=label)
                    count = min(schedule.locations_per_cycle, remaining)
                    remaining -= count
                    successful = self.collect(count, schedule, phase_index, advance)
                    k = k_schedule(cycle, schedule.cycles, schedule.k_start, schedule.k_end)
                    results = []
                    for b in range(k):
                        result = train_step(
                            self.model,
                            self.optimizer,
                            self.bank,
                            config.batch_size,
                            self.sample_rng,
                            train_force=schedule.trains_force,
                            prioritized=config.prioritized,
                        )
                        self.summary.steps += 1
                        results.append(result)
                        if b == 0 and self.dump_grads is not None:
                            self._dump(result, schedule.phase, cycle)

                    self._log_cycle(schedule.phase, cycle, k, count, successful, results)
                    write_json(self.out_dir / "bank_snapshot.json", self.bank.snapshot())
                    cycle_counter += 1
                    if cycle_counter % config.checkpoint_every == 0:
                        self.save(f"step_{self.summary.steps:08d}.ckpt")

        self.summary.final_checkpoint = self.save("final.ckpt")
        write_json(self.out_dir / "bank_snapshot.json", self.bank.snapshot())
        logger.info(
            f"Training finished: {self.summary.steps} steps over {self.summary.locations} locations"
        )
        return self.summary

    def _log_cycle(
        self,
        phase: Phase,
        cycle: int,
        k: int,
        locations: int,
        successful: int,
        results: list[StepResult],
    ) -> None:
        stats = self.bank.stats()
        record = {
            "phase": phase.value,
            "cycle": cycle,
            "step": self.summary.steps,
            "locations": self.summary.locations,
            "k": k,
            "bank_size": stats.size,
            "mean_priority": stats.mean_priority,
            "successful_interactions": successful,
            "grad_norm": float(np.mean([r.grad_norm for r in results])),
            "score_grad": float(np.mean([r.score_grad for r in results])),
            "force_grad": float(np.mean([r.force_grad for r in results])),
            "embed_grad": float(np.mean([r.embed_grad for r in results])),
        }
        append_jsonl(self.out_dir / "metrics.jsonl", record)
        logger.info(
            f"[{phase.value}] cycle {cycle}: {locations} locations, {successful} successful "
            f"interactions, K={k}, bank={stats.size}, grad norm {record['grad_norm']:.4g}"
        )


def train(
    config: TrainConfig,
    out_dir: Path,
    jobs: int | None = None,
    deterministic: bool = False,
    dump_grads: Path | None = None,
    progress: bool = False,
) -> TrainSummary:
    return Trainer(config, out_dir, jobs, deterministic, dump_grads).run(progress=progress)
