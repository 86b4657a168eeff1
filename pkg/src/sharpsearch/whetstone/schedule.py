"""Scheduled and adaptive sharpeners.

Epochs are 0-based.  Group ``g`` (input side first) starts sharpening at
``sh_st + g * (sh_du + sh_int)`` and reaches full sharpness ``sh_du``
epochs later.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SharpeningSchedule:
    start: int
    duration: int
    intermission: int

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("sharpening duration must be at least 1 epoch")
        if self.start < 0 or self.intermission < 0:
            raise ValueError("start and intermission must be non-negative")

    def group_start(self, g: int) -> int:
        return self.start + g * (self.duration + self.intermission)

    def group_end(self, g: int) -> int:
        """First epoch at which group ``g`` is fully sharp."""
        return self.group_start(g) + self.duration


def schedule_sharpness(schedule: SharpeningSchedule, epoch: int, group_count: int) -> np.ndarray:
    if group_count < 1:
        raise ValueError("group_count must be >= 1")
    starts = np.array([schedule.group_start(g) for g in range(group_count)], dtype=float)
    return np.clip((epoch - starts) / schedule.duration, 0.0, 1.0)


@dataclass(frozen=True)
class ScheduleVerdict:
    complete: bool
    first_unfinished: int | None = None
    finish_epoch: int = 0

    def __str__(self):
        if self.complete:
            return f"schedule complete (last group sharp at epoch {self.finish_epoch})"
        return f"schedule incomplete: group {self.first_unfinished}"


def validate_schedule(schedule: SharpeningSchedule, group_count: int, total_epochs: int) -> ScheduleVerdict:
    """Complete iff the last group's end epoch fits inside ``total_epochs``."""
    finish = schedule.group_end(group_count - 1)
    if finish <= total_epochs:
        return ScheduleVerdict(True, None, finish)
    first = next(g for g in range(group_count) if schedule.group_end(g) > total_epochs)
    return ScheduleVerdict(False, first, finish)


@dataclass
class AdaptiveSharpener:
    """Advance the current group by ``1/duration`` per epoch unless the
    training loss rose by more than ``threshold`` (relative)."""

    group_count: int
    duration: int = 5
    threshold: float = 0.05
    start: int = 0
    eps: float = 1e-12
    sharpness: np.ndarray = field(init=False)
    previous_loss: float | None = field(default=None, init=False)

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be at least 1")
        self.sharpness = np.zeros(self.group_count)

    @property
    def current_group(self) -> int | None:
        open_groups = np.flatnonzero(self.sharpness < 1.0)
        return int(open_groups[0]) if open_groups.size else None

    @property
    def done(self) -> bool:
        return self.current_group is None

    def decide(self, latest_loss: float) -> str:
        prev = self.previous_loss
        if prev is None:
            return "advance"
        change = (latest_loss - prev) / max(prev, self.eps)
        return "pause" if change > self.threshold else "advance"

    def step(self, latest_loss: float, epoch: int | None = None) -> str:
        """Record the epoch's loss; returns ``"advance"`` or ``"pause"``."""
        if not np.isfinite(latest_loss):
            raise ValueError("loss must be finite")
        action = self.decide(latest_loss)
        self.previous_loss = float(latest_loss)
        if epoch is not None and epoch < self.start:
            return "pause"
        g = self.current_group
        if action == "advance" and g is not None:
            self.sharpness[g] = min(1.0, self.sharpness[g] + 1.0 / self.duration)
            if 1.0 - self.sharpness[g] < 1e-9:
                self.sharpness[g] = 1.0
        return action


def adaptive_sharpener_step(state: AdaptiveSharpener, latest_loss: float) -> str:
    return state.step(latest_loss)
