"""
Tests for the prioritized memory bank
"""

import numpy as np
import pytest
from scipy.stats import chisquare

from probeseg.exceptions import BankSampleError, CheckpointError
from probeseg.membank import (
    FRESH_PRIORITY,
    Bank,
    BankEntry,
    priority,
    stats_from_snapshot,
)
from probeseg.records import Feedback, InteractionRecord


def _entry(mask=None, with_image=False) -> BankEntry:
    feedback = Feedback.CORRECT if mask is not None else Feedback.UNSUCCESSFUL
    records = (InteractionRecord((1, 1), 0, feedback, mask=mask),)
    if not with_image:
        return BankEntry(records=records)
    return BankEntry(records=records, rgb=np.full((6, 6, 3), 0.25), depth=np.ones((6, 6)))


class TestPriority:
    @pytest.mark.parametrize(
        "score,expected", [(0.5, 0.02), (0.0, 0.27), (1.0, 0.27), (0.75, 0.0825)]
    )
    def test_values(self, score, expected):
        assert priority(score) == pytest.approx(expected)

    def test_update_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Bank.update_priority(_entry(), 1.5)

    def test_update_clears_fresh(self):
        entry = _entry()
        Bank.update_priority(entry, 0.0)
        assert not entry.fresh
        assert entry.priority == pytest.approx(0.27)


class TestInsert:
    def test_new_entries_are_fresh(self):
        bank = Bank(capacity=4)
        entry = bank.insert(_entry())
        assert entry.fresh
        assert entry.priority == FRESH_PRIORITY
        assert entry.index == 0
        assert bank.insert(_entry()).index == 1

    def test_oldest_evicted_first(self):
        bank = Bank(capacity=2)
        for _ in range(3):
            bank.insert(_entry())
        assert len(bank) == 2
        assert [e.index for e in bank.entries] == [1, 2]
        assert bank.inserted == 3

    def test_reinsert_resets_priority(self):
        bank = Bank(capacity=2)
        entry = _entry()
        entry.priority, entry.fresh = 0.1, False
        assert bank.insert(entry).priority == FRESH_PRIORITY

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            Bank(capacity=0)

    def test_spilled_images(self, tmp_path):
        bank = Bank(capacity=1, spill_dir=tmp_path)
        first = bank.insert(_entry(with_image=True))
        assert first.rgb is None and first.spill_path.exists()
        rgb, depth = first.image()
        assert rgb.shape == (6, 6, 3) and depth.shape == (6, 6)
        bank.insert(_entry(with_image=True))
        assert not first.spill_path.exists()

    def test_entry_without_image(self):
        with pytest.raises(BankSampleError):
            _entry().image()


class TestSampling:
    def test_distinct_entries(self, rng):
        bank = Bank(capacity=10)
        for _ in range(10):
            bank.insert(_entry())
        batch = bank.sample_batch(10, rng)
        assert sorted(e.index for e in batch) == list(range(10))

    def test_underflow(self, rng):
        bank = Bank(capacity=4)
        with pytest.raises(BankSampleError, match="empty"):
            bank.sample_batch(1, rng)
        bank.insert(_entry())
        with pytest.raises(BankSampleError):
            bank.sample_batch(2, rng)

    @staticmethod
    def _first_draw_counts(bank, rng, prioritized=True, draws=100_000):
        position = {id(e): i for i, e in enumerate(bank.entries)}
        counts = np.zeros(len(bank), dtype=np.int64)
        for _ in range(draws):
            counts[position[id(bank.sample_batch(3, rng, prioritized)[0])]] += 1
        return counts

    def test_first_draw_proportional_to_priority(self):
        bank = Bank(capacity=5)
        entries = [bank.insert(_entry()) for _ in range(5)]
        for entry, score in zip(entries, [0.0, 0.1, 0.3, 0.5, 0.8]):
            Bank.update_priority(entry, score)
        weights = np.array([e.priority for e in entries])
        counts = self._first_draw_counts(bank, np.random.default_rng(11))
        expected = counts.sum() * weights / weights.sum()
        assert chisquare(counts, expected).pvalue > 0.01

    def test_equal_priorities_draw_uniformly(self):
        bank = Bank(capacity=5)
        for _ in range(5):
            bank.insert(_entry())
        counts = self._first_draw_counts(bank, np.random.default_rng(12))
        assert chisquare(counts).pvalue > 0.01

    def test_uniform_when_not_prioritized(self):
        bank = Bank(capacity=5)
        entries = [bank.insert(_entry()) for _ in range(5)]
        for entry, score in zip(entries, [0.0, 0.1, 0.3, 0.5, 0.8]):
            Bank.update_priority(entry, score)
        counts = self._first_draw_counts(bank, np.random.default_rng(13), prioritized=False)
        assert chisquare(counts).pvalue > 0.01


class TestScore:
    def test_no_masks_scores_half(self):
        assert Bank.score(_entry(), np.zeros((2, 4, 4))) == 0.5

    def test_separated_embedding_scores_one(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[:2, :2] = True
        e = np.where(mask, 0.0, 5.0)[None].repeat(2, axis=0)
        assert Bank.score(_entry(mask), e) == pytest.approx(1.0)

    def test_worst_mask_wins(self):
        good = np.zeros((4, 4), dtype=bool)
        good[:2, :2] = True
        bad = np.zeros((4, 4), dtype=bool)
        bad[3, 3] = True
        entry = BankEntry(
            records=(
                InteractionRecord((0, 0), 0, Feedback.CORRECT, mask=good),
                InteractionRecord((3, 3), 0, Feedback.CORRECT, mask=bad),
            )
        )
        e = np.where(good, 0.0, 5.0)[None]
        # bad mask predicts all 12 off-box cells
        assert Bank.score(entry, e) == pytest.approx(1 / 12)

    def test_collapsed_embedding_scores_low(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[:2, :2] = True
        assert Bank.score(_entry(mask), np.zeros((2, 4, 4))) == pytest.approx(0.25)


class TestStats:
    def test_snapshot_reproduces_stats(self):
        bank = Bank(capacity=5)
        for k in range(4):
            entry = bank.insert(_entry())
            if k % 2:
                Bank.update_priority(entry, k / 4)
        stats = bank.stats()
        assert stats.size == 4
        assert stats.fresh == 2
        assert sum(stats.histogram) == 2
        assert stats_from_snapshot(bank.snapshot()) == stats

    def test_age_quartiles(self):
        bank = Bank(capacity=5)
        for _ in range(5):
            bank.insert(_entry())
        assert bank.stats().age_quartiles == [0.0, 1.0, 2.0, 3.0, 4.0]

    def test_unknown_snapshot_version(self):
        with pytest.raises(CheckpointError):
            stats_from_snapshot({"version": 99, "entries": []})
