"""Equal error rates for the SV, SPF and SASV tasks.

A trial is accepted when ``score >= threshold``.  The EER is read off the
(FAR, FRR) operating-point curve obtained by sweeping the threshold over the
distinct pooled scores; when no operating point has FAR == FRR exactly, the
curve is linearly interpolated between the last point with FAR > FRR and the
first with FAR < FRR, and the threshold is interpolated the same way.  This
interpolation rule is a choice of this package; challenge toolkits differ in
how they resolve the crossing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .trials import LabelKind, ScoredTrials


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_positive: int
    n_negative: int

    @property
    def percent(self) -> float:
        return 100.0 * self.eer


@dataclass(frozen=True)
class Task:
    """Which trial kinds count as positives and negatives; others are ignored."""

    name: str
    positive: frozenset[LabelKind]
    negative: frozenset[LabelKind]

    def split(self, data: ScoredTrials, column: str) -> tuple[np.ndarray, np.ndarray]:
        scores = data.scores(column)
        kinds = data.kinds()
        pos = np.array([k in self.positive for k in kinds], dtype=bool)
        neg = np.array([k in self.negative for k in kinds], dtype=bool)
        return scores[pos], scores[neg]

    def targets(self, kinds: Iterable[LabelKind]) -> np.ndarray:
        """1.0 for positives, 0.0 for negatives, NaN for ignored trials."""
        out = []
        for k in kinds:
            out.append(1.0 if k in self.positive else 0.0 if k in self.negative else np.nan)
        return np.array(out, dtype=np.float64)


_T, _N, _S = LabelKind.TARGET, LabelKind.NONTARGET, LabelKind.SPOOF

SV = Task("SV", frozenset({_T}), frozenset({_N}))
SPF = Task("SPF", frozenset({_T}), frozenset({_S}))
SASV = Task("SASV", frozenset({_T}), frozenset({_N, _S}))
# Countermeasure gate: the CM is speaker-agnostic, so nontargets are bonafide.
CM = Task("CM", frozenset({_T, _N}), frozenset({_S}))

TASKS = {t.name: t for t in (SV, SPF, SASV, CM)}


def _as_scores(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise MetricError(f"no {what} scores")
    if not np.all(np.isfinite(arr)):
        raise MetricError(f"non-finite {what} score")
    return arr


def compute_eer(positive, negative) -> EerResult:
    pos = np.sort(_as_scores(positive, "positive"))
    neg = np.sort(_as_scores(negative, "negative"))
    n_pos, n_neg = pos.size, neg.size

    thresholds = np.unique(np.concatenate([pos, neg]))
    # Integer error counts at each threshold, plus a final point above every
    # score (everything rejected) that shares the top threshold value.
    miss = np.append(np.searchsorted(pos, thresholds, side="left"), n_pos)
    fa = np.append(n_neg - np.searchsorted(neg, thresholds, side="left"), 0)
    thresholds = np.append(thresholds, thresholds[-1])

    # sign of FAR - FRR, kept exact by cross-multiplying the counts
    gap = fa * n_pos - miss * n_neg
    k = int(np.argmax(gap <= 0))
    if gap[k] == 0:
        return EerResult(float(fa[k] / n_neg), float(thresholds[k]), n_pos, n_neg)

    # gap[0] = n_pos * n_neg > 0, so k >= 1 here
    j = k - 1
    alpha = gap[j] / (gap[j] - gap[k])
    far_j, far_k = fa[j] / n_neg, fa[k] / n_neg
    eer = far_j + alpha * (far_k - far_j)
    threshold = thresholds[j] + alpha * (thresholds[k] - thresholds[j])
    return EerResult(float(eer), float(threshold), n_pos, n_neg)


def task_eer(data: ScoredTrials, column: str, task: Task) -> EerResult:
    pos, neg = task.split(data, column)
    if pos.size == 0 or neg.size == 0:
        raise MetricError(
            f"{task.name}-EER on {column!r} needs both classes "
            f"(got {pos.size} positive, {neg.size} negative trials)"
        )
    return compute_eer(pos, neg)


def sv_eer(data: ScoredTrials, column: str) -> EerResult:
    return task_eer(data, column, SV)


def spf_eer(data: ScoredTrials, column: str) -> EerResult:
    return task_eer(data, column, SPF)


def sasv_eer(data: ScoredTrials, column: str) -> EerResult:
    return task_eer(data, column, SASV)


def eer_report(data: ScoredTrials, column: str) -> dict[str, EerResult]:
    """SV-, SPF- and SASV-EER of one score column, keyed by task name."""
    return {t.name: task_eer(data, column, t) for t in (SV, SPF, SASV)}
