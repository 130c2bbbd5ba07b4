"""
Interaction records shared by the trainer, the target builders and the memory bank.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from probeseg.imaging import BinaryMask


class Feedback(str, Enum):
    """Outcome of one force escalation relative to the predicted force class."""

    CORRECT = "correct"
    TOO_SMALL = "too_small"
    TOO_LARGE = "too_large"
    UNSUCCESSFUL = "unsuccessful"

    @property
    def successful(self) -> bool:
        return self is not Feedback.UNSUCCESSFUL


@dataclass(frozen=True)
class InteractionRecord:
    """
    One interaction at an output-resolution point.

    Successful records carry the supervision mask B+ of the first escalation step that
    changed the view; unsuccessful ones only contribute their point as background.
    """

    point: tuple[int, int]
    force_class: int
    feedback: Feedback
    mask: BinaryMask | None = None
    direction: int = 0
    greedy: bool = True

    @property
    def successful(self) -> bool:
        return self.feedback.successful
