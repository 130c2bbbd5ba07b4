"""
Fixed-capacity replay memory with score-based priorities.

Each entry is one location: its first frame and every interaction record made there.
New entries start "fresh" at priority 0.5. Every time an entry goes through a forward
pass its priority becomes ``(score - 0.5)**2 + 0.02``, where the score is the worst IoU
between a supervision mask and the mask the embeddings currently predict for it. Medium
scores are therefore sampled least.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from probeseg.exceptions import BankSampleError, CheckpointError, FileWriteError
from probeseg.headgrads import mask_distances
from probeseg.imaging import BinaryMask, DepthMap, ImageRGB
from probeseg.metrics import mask_iou
from probeseg.records import InteractionRecord

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 20000
FRESH_PRIORITY = 0.5
PRIORITY_FLOOR = 0.02
PRIORITY_CEILING = 0.27
EMPTY_SCORE = 0.5
SNAPSHOT_VERSION = 1


def priority(score: float) -> float:
    return (score - 0.5) ** 2 + PRIORITY_FLOOR


@dataclass
class BankEntry:
    records: tuple[InteractionRecord, ...]
    rgb: ImageRGB | None = None
    depth: DepthMap | None = None
    priority: float = FRESH_PRIORITY
    index: int = -1
    fresh: bool = True
    source: str = ""
    spill_path: Path | None = None

    @property
    def masks(self) -> list[BinaryMask]:
        return [
            rec.mask for rec in self.records if rec.successful and rec.mask is not None
        ]

    def image(self) -> tuple[ImageRGB, DepthMap]:
        if self.rgb is not None and self.depth is not None:
            return self.rgb, self.depth
        if self.spill_path is None:
            raise BankSampleError(f"Bank entry {self.index} has no image")
        with np.load(self.spill_path) as data:
            return data["rgb"], data["depth"]


@dataclass(frozen=True)
class BankStats:
    size: int
    capacity: int
    inserted: int
    fresh: int
    mean_priority: float
    histogram: list[int]
    bin_edges: list[float]
    age_quartiles: list[float]

    @classmethod
    def from_arrays(
        cls,
        priorities: NDArray[np.float64],
        fresh: NDArray[np.bool_],
        ages: NDArray[np.int64],
        capacity: int,
        inserted: int,
    ) -> BankStats:
        counts, edges = np.histogram(
            priorities[~fresh], bins=5, range=(PRIORITY_FLOOR, PRIORITY_CEILING)
        )
        quartiles = (
            np.percentile(ages, [0, 25, 50, 75, 100]).tolist() if ages.size else []
        )
        return cls(
            size=int(priorities.size),
            capacity=capacity,
            inserted=inserted,
            fresh=int(np.count_nonzero(fresh)),
            mean_priority=float(priorities.mean()) if priorities.size else 0.0,
            histogram=[int(c) for c in counts],
            bin_edges=[float(e) for e in edges],
            age_quartiles=[float(q) for q in quartiles],
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "size": self.size,
            "capacity": self.capacity,
            "inserted": self.inserted,
            "fresh": self.fresh,
            "mean_priority": self.mean_priority,
            "histogram": self.histogram,
            "bin_edges": self.bin_edges,
            "age_quartiles": self.age_quartiles,
        }


class Bank:
    """
    Oldest-first eviction, priority-proportional sampling without replacement.

    Only the trainer thread touches a bank; rollout workers hand their entries over.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, spill_dir: Path | None = None) -> None:
        if capacity < 1:
            raise ValueError(f"Bank capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.spill_dir = Path(spill_dir) if spill_dir else None
        self.entries: deque[BankEntry] = deque()
        self.inserted = 0

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, entry: BankEntry) -> BankEntry:
        entry.priority = FRESH_PRIORITY
        entry.fresh = True
        entry.index = self.inserted
        self.inserted += 1
        if self.spill_dir is not None and entry.rgb is not None:
            self._spill(entry)
        if len(self.entries) == self.capacity:
            self._evict(self.entries.popleft())
        self.entries.append(entry)
        return entry

    def _spill(self, entry: BankEntry) -> None:
        assert self.spill_dir is not None
        path = self.spill_dir / f"entry_{entry.index:08d}.npz"
        try:
            self.spill_dir.mkdir(parents=True, exist_ok=True)
            np.savez(path, rgb=entry.rgb, depth=entry.depth)
        except OSError as e:
            raise FileWriteError(f"Cannot spill bank entry to {path}", details=str(e))
        entry.spill_path = path
        entry.rgb = entry.depth = None

    def _evict(self, entry: BankEntry) -> None:
        logger.debug(f"Evicting bank entry {entry.index}")
        if entry.spill_path is not None:
            entry.spill_path.unlink(missing_ok=True)

    @staticmethod
    def score(entry: BankEntry, e: NDArray[np.float64]) -> float:
        """Minimum IoU between each supervision mask and its predicted mask (d < 1)."""
        masks = [m for m in entry.masks if m.any()]
        if not masks:
            return EMPTY_SCORE
        return min(mask_iou(mask_distances(e, m) < 1.0, m) for m in masks)

    @staticmethod
    def update_priority(entry: BankEntry, score: float) -> None:
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"Score must be in [0, 1], got {score}")
        entry.priority = priority(score)
        entry.fresh = False

    def sample_batch(
        self, n: int, rng: np.random.Generator, prioritized: bool = True
    ) -> list[BankEntry]:
        """
        ``n`` distinct entries; the first is drawn with probability proportional to priority.

        Sampling is sequential weighted draws with removal. No importance weights are
        returned or applied. With ``prioritized`` off, draws are uniform.
        """
        size = len(self.entries)
        if size == 0:
            raise BankSampleError("Cannot sample from an empty memory bank")
        if n > size:
            raise BankSampleError(
                f"Requested {n} entries from a bank of {size}", details="lower the batch size"
            )
        p = None
        if prioritized:
            weights = np.fromiter((e.priority for e in self.entries), dtype=np.float64, count=size)
            p = weights / weights.sum()
        picks = rng.choice(size, size=n, replace=False, p=p)
        return [self.entries[int(i)] for i in picks]

    def stats(self) -> BankStats:
        return BankStats.from_arrays(
            np.array([e.priority for e in self.entries], dtype=np.float64),
            np.array([e.fresh for e in self.entries], dtype=bool),
            np.array([self.inserted - 1 - e.index for e in self.entries], dtype=np.int64),
            self.capacity,
            self.inserted,
        )

    def snapshot(self) -> dict[str, Any]:
        """Priorities and bookkeeping of every entry; images are not included."""
        return {
            "version": SNAPSHOT_VERSION,
            "capacity": self.capacity,
            "inserted": self.inserted,
            "entries": [
                {
                    "index": e.index,
                    "priority": e.priority,
                    "fresh": e.fresh,
                    "records": len(e.records),
                    "masks": len(e.masks),
                    "source": e.source,
                }
                for e in self.entries
            ],
        }


def stats_from_snapshot(snapshot: dict[str, Any]) -> BankStats:
    if snapshot.get("version") != SNAPSHOT_VERSION:
        raise CheckpointError(
            "Unsupported bank snapshot", details=f"version {snapshot.get('version')!r}"
        )
    entries: Sequence[dict[str, Any]] = snapshot.get("entries", [])
    inserted = int(snapshot.get("inserted", len(entries)))
    return BankStats.from_arrays(
        np.array([float(e["priority"]) for e in entries], dtype=np.float64),
        np.array([bool(e["fresh"]) for e in entries], dtype=bool),
        np.array([inserted - 1 - int(e["index"]) for e in entries], dtype=np.int64),
        int(snapshot.get("capacity", DEFAULT_CAPACITY)),
        inserted,
    )
