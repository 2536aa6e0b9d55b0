"""Cyclic cosine learning-rate schedule for snapshot ensembling."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LrSchedule:
    alpha0: float = 1e-2
    alpha_min: float = 1e-8
    total_epochs: int = 320
    cycles: int = 8

    def __post_init__(self):
        if self.cycles < 1 or self.total_epochs % self.cycles:
            raise ValueError(f"{self.total_epochs} epochs cannot be split into {self.cycles} equal cycles")
        if not self.alpha0 > self.alpha_min > 0:
            raise ValueError("need alpha0 > alpha_min > 0")
        if self.cycle_len < 2:
            raise ValueError("each cycle needs at least two epochs")

    @property
    def cycle_len(self) -> int:
        return self.total_epochs // self.cycles

    def snapshot_epochs(self) -> list[int]:
        """Epochs at the bottom of each cycle, where snapshots are saved."""
        return [(c + 1) * self.cycle_len - 1 for c in range(self.cycles)]


def cyclic_lr(epoch: int, sched: LrSchedule = LrSchedule()) -> float:
    """Learning rate for a 0-based ``epoch``.

    Cosine-anneals from ``alpha0`` on the first epoch of each cycle down to
    exactly ``alpha_min`` on its last epoch, then restarts.
    """
    if not 0 <= epoch < sched.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {sched.total_epochs})")
    e = epoch % sched.cycle_len
    cos_term = (1.0 + math.cos(math.pi * e / (sched.cycle_len - 1))) / 2.0
    return sched.alpha_min + (sched.alpha0 - sched.alpha_min) * cos_term


def schedule_table(sched: LrSchedule = LrSchedule()) -> list[tuple[int, float]]:
    return [(e, cyclic_lr(e, sched)) for e in range(sched.total_epochs)]
