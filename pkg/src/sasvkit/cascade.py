"""Two-stage cascades: a hard gate on one system followed by the other system.

The first stage accepts a trial when its score reaches the dev-set EER
threshold of that system's own task.  Accepted trials keep the raw
second-stage score; rejected trials get the floor score ``epsilon``, by
default the minimum second-stage score seen on the dev set, so they rank at
or below every accepted trial.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .metrics import CM, SV, Task, task_eer
from .trials import ScoredTrials, ScoreSet


class CascadeOrder(enum.Enum):
    ASV_THEN_CM = "asv-cm"
    CM_THEN_ASV = "cm-asv"

    @property
    def gate_task(self) -> Task:
        return SV if self is CascadeOrder.ASV_THEN_CM else CM


@dataclass(frozen=True)
class CascadeConfig:
    order: CascadeOrder
    threshold: float
    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.threshold) and math.isfinite(self.epsilon)):
            raise ValueError("cascade threshold and epsilon must be finite")

    @classmethod
    def from_dev(
        cls,
        order: CascadeOrder,
        dev: ScoredTrials,
        sv_column: str,
        cm_column: str,
        epsilon: float | None = None,
    ) -> "CascadeConfig":
        """Derive the gate threshold and floor score from dev data.

        An explicit ``epsilon`` must not exceed the dev minimum of the
        second-stage system.
        """
        first, second = (sv_column, cm_column)
        if order is CascadeOrder.CM_THEN_ASV:
            first, second = second, first
        threshold = dev_threshold(dev, first, order.gate_task)
        floor = dev_min_score(dev.column(second))
        if epsilon is None:
            epsilon = floor
        elif epsilon > floor:
            raise ValueError(
                f"epsilon {epsilon!r} exceeds the minimum dev score {floor!r} of {second!r}"
            )
        return cls(order, threshold, float(epsilon))


def dev_threshold(dev: ScoredTrials, column: str, task: Task) -> float:
    return task_eer(dev, column, task).threshold


def dev_min_score(dev_scores: ScoreSet) -> float:
    if len(dev_scores) == 0:
        raise ValueError(f"{dev_scores.system_name}: no dev scores")
    return float(dev_scores.values().min())


def run_cascade(config: CascadeConfig, first: ScoreSet, second: ScoreSet, name: str = "cascade") -> ScoreSet:
    if set(first.entries) != set(second.entries):
        raise ValueError(f"{first.system_name} and {second.system_name} cover different trials")
    out = {}
    for key, gate in first.entries.items():
        out[key] = second.entries[key] if gate >= config.threshold else config.epsilon
    return ScoreSet(name, out)


def cascade_scores(config: CascadeConfig, sv: ScoreSet, cm: ScoreSet, name: str | None = None) -> ScoreSet:
    """Run the cascade with stages assigned from ``config.order``."""
    name = name or f"cascade-{config.order.value}"
    if config.order is CascadeOrder.ASV_THEN_CM:
        return run_cascade(config, sv, cm, name)
    return run_cascade(config, cm, sv, name)


def accepted_mask(config: CascadeConfig, first: ScoreSet) -> np.ndarray:
    return first.values() >= config.threshold
