"""
Unit tests for the training schedule, rollouts and gradient steps
"""

import dataclasses

import numpy as np
import pytest

from probeseg.config import PRESETS, TrainConfig
from probeseg.membank import Bank, BankEntry
from probeseg.microworld import Episode
from probeseg.predictor import make_optimizer
from probeseg.records import Feedback, InteractionRecord
from probeseg.trainer import (
    Phase,
    Trainer,
    escalation_steps,
    k_schedule,
    phase_schedules,
    run_location,
    train_step,
)

SMOKE = TrainConfig(**{**PRESETS["smoke"], "preset": "smoke"})


class TestSchedules:
    @pytest.mark.parametrize(
        "cycle,cycles,expected",
        [(0, 11, 5), (5, 11, 10), (10, 11, 15), (0, 1, 5)],
    )
    def test_k_grows_linearly(self, cycle, cycles, expected):
        assert k_schedule(cycle, cycles, 5, 15) == expected

    def test_phases_in_order(self):
        schedules = phase_schedules(SMOKE)
        assert [s.phase for s in schedules] == [Phase.SEGMENTATION, Phase.JOINT]
        assert [s.cycles for s in schedules] == [4, 2]
        assert [s.trains_force for s in schedules] == [False, True]
        assert (schedules[1].greedy, schedules[1].random) == (2, 2)

    def test_single_phase(self):
        config = TrainConfig(phases=("joint",))
        assert [s.phase for s in phase_schedules(config)] == [Phase.JOINT]

    def test_partial_last_cycle(self):
        config = TrainConfig(seg_locations=100, locations_per_cycle=70)
        assert phase_schedules(config)[0].cycles == 2


class TestEscalationSteps:
    @pytest.mark.parametrize(
        "r,expected",
        [
            (0, [(0, Feedback.CORRECT), (2, Feedback.TOO_SMALL)]),
            (1, [(0, Feedback.TOO_LARGE), (1, Feedback.CORRECT), (2, Feedback.TOO_SMALL)]),
            (2, [(1, Feedback.TOO_LARGE), (2, Feedback.CORRECT)]),
        ],
    )
    def test_order(self, r, expected):
        assert escalation_steps(r) == expected

    def test_invalid_class(self):
        with pytest.raises(ValueError):
            escalation_steps(3)


class TestRunLocation:
    def test_greedy_then_random(self, make_box_scene, tiny_model):
        env = Episode(scene=make_box_scene(), noise=False, view=tiny_model.config.input_size)
        entry = run_location(env, tiny_model, SMOKE, 2, 3, np.random.default_rng(0))
        flags = [rec.greedy for rec in entry.records]
        assert flags.count(False) == 3
        assert flags == sorted(flags, reverse=True)
        assert entry.rgb.shape == (48, 48, 3)
        assert entry.source == "0:0"
        assert env.pushes >= len(entry.records)
        for rec in entry.records:
            assert (rec.mask is not None) == rec.successful

    def test_reproducible(self, make_box_scene, tiny_model):
        entries = []
        for _ in range(2):
            env = Episode(scene=make_box_scene(), noise=False, view=48)
            entries.append(run_location(env, tiny_model, SMOKE, 2, 2, np.random.default_rng(7)))
        first, second = entries
        assert [(r.point, r.force_class, r.feedback) for r in first.records] == [
            (r.point, r.force_class, r.feedback) for r in second.records
        ]

    def test_oracle_masks_need_no_superpixels(self, make_box_scene, tiny_model, monkeypatch):
        def fail(_frame):
            raise AssertionError("superpixels computed with oracle masks")

        monkeypatch.setattr("probeseg.trainer.superpixels", fail)
        config = dataclasses.replace(SMOKE, oracle="oracle_masks", theta=-1e9)
        env = Episode(scene=make_box_scene(), noise=False, view=48)
        entry = run_location(env, tiny_model, config, 1, 4, np.random.default_rng(1))
        assert len(entry.records) == 5


class TestTrainStep:
    def _bank(self, rng) -> Bank:
        bank = Bank(capacity=8)
        mask = np.zeros((16, 16), dtype=bool)
        mask[4:8, 4:8] = True
        for _ in range(4):
            records = (
                InteractionRecord((5, 5), 1, Feedback.CORRECT, mask=mask),
                InteractionRecord((12, 12), 0, Feedback.UNSUCCESSFUL),
            )
            rgb = rng.uniform(size=(48, 48, 3))
            bank.insert(BankEntry(records=records, rgb=rgb, depth=np.ones((48, 48))))
        return bank

    def test_step_updates_priorities(self, tiny_model, rng):
        bank = self._bank(rng)
        optimizer = make_optimizer(tiny_model, 5e-4, 1e-4)
        result = train_step(tiny_model, optimizer, bank, 4, rng)
        assert np.isfinite(result.grad_norm) and result.grad_norm > 0
        assert result.score_grad > 0 and result.force_grad > 0
        assert not any(entry.fresh for entry in bank.entries)
        assert result.head_grads[0].shape == (16, 16)

    def test_segmentation_phase_leaves_force_head(self, tiny_model, rng):
        bank = self._bank(rng)
        optimizer = make_optimizer(tiny_model, 5e-4, 1e-4)
        result = train_step(tiny_model, optimizer, bank, 2, rng, train_force=False)
        assert result.force_grad == 0.0
        assert not result.head_grads[1].any()


class TestTrainer:
    def test_deterministic_is_single_worker(self, tmp_path, make_box_scene):
        trainer = Trainer(SMOKE, tmp_path, jobs=4, deterministic=True, scenes=[make_box_scene()])
        assert trainer.jobs == 1

    def test_needs_scenes(self, tmp_path):
        with pytest.raises(ValueError):
            Trainer(SMOKE, tmp_path, scenes=[])

    def test_generates_scenes(self, tmp_path):
        config = dataclasses.replace(SMOKE, scenes=2)
        trainer = Trainer(config, tmp_path, jobs=1)
        assert [s.seed for s in trainer.scenes] == [0, 1]
        assert all(s.layout == "trivial" for s in trainer.scenes)
