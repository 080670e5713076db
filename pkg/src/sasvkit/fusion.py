"""Parallel score fusion: raw sum, sigmoid product and logistic calibration."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import SASV, Task
from .trials import ScoredTrials, ScoreSet

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MAX_ITER = 10_000
WEIGHT_NORM_CAP = 1e4


class KeyMismatchError(ValueError):
    pass


class CalibrationWarning(UserWarning):
    pass


@dataclass
class FusionModel:
    bias: float
    weights: list[float]
    trained_prior: float = 0.5
    systems: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.bias = float(self.bias)
        self.weights = [float(w) for w in self.weights]
        if not all(math.isfinite(w) for w in [self.bias, *self.weights]):
            raise ValueError("fusion model parameters must be finite")
        if not 0.0 < self.trained_prior < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.trained_prior}")
        if self.systems and len(self.systems) != len(self.weights):
            raise ValueError("one system name per weight expected")

    def to_json(self) -> str:
        payload = {
            "bias": self.bias,
            "weights": self.weights,
            "prior": self.trained_prior,
            "systems": self.systems,
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FusionModel":
        raw = json.loads(text)
        return cls(raw["bias"], raw["weights"], raw["prior"], raw.get("systems", []))


@dataclass
class CalibrationTrace:
    """Diagnostics of a calibration run."""

    objective: list[float]
    grad_norm: float
    iterations: int
    converged: bool
    separable: bool = False


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # evaluate exp only on non-positive arguments to avoid overflow
    ez = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def _check_keys(scoresets: Sequence[ScoreSet]) -> list:
    if not scoresets:
        raise ValueError("at least one score set is required")
    keys = list(scoresets[0].entries)
    ref = set(keys)
    for s in scoresets[1:]:
        if set(s.entries) != ref:
            diff = ref.symmetric_difference(s.entries)
            raise KeyMismatchError(
                f"{s.system_name} and {scoresets[0].system_name} differ on {len(diff)} keys"
            )
    return keys


def _stack(scoresets: Sequence[ScoreSet]) -> tuple[list, np.ndarray]:
    keys = _check_keys(scoresets)
    mat = np.array([[s.entries[k] for s in scoresets] for k in keys], dtype=np.float64)
    return keys, mat.reshape(len(keys), len(scoresets))


def sigmoid_normalize(scores: ScoreSet) -> ScoreSet:
    keys = scores.keys()
    return ScoreSet.from_arrays(scores.system_name, keys, sigmoid(scores.values()))


def fuse_sum(scoresets: Sequence[ScoreSet], name: str = "sum") -> ScoreSet:
    keys, mat = _stack(scoresets)
    out = mat[:, 0].copy()
    for j in range(1, mat.shape[1]):
        out += mat[:, j]
    return ScoreSet.from_arrays(name, keys, out)


def fuse_product_sigmoid(scoresets: Sequence[ScoreSet], name: str = "sigmoid-product") -> ScoreSet:
    keys, mat = _stack(scoresets)
    probs = sigmoid(mat)
    # fixed left-to-right product so results are reproducible bit for bit
    out = probs[:, 0].copy()
    for j in range(1, probs.shape[1]):
        out *= probs[:, j]
    return ScoreSet.from_arrays(name, keys, out)


def apply_fusion_model(model: FusionModel, scoresets: Sequence[ScoreSet], name: str = "calibrated") -> ScoreSet:
    if len(scoresets) != len(model.weights):
        raise ValueError(
            f"model fuses {len(model.weights)} systems, got {len(scoresets)} score sets"
        )
    keys, mat = _stack(scoresets)
    return ScoreSet.from_arrays(name, keys, _affine(mat, np.array(model.weights), model.bias))


def _affine(mat: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    out = np.full(mat.shape[0], b, dtype=np.float64)
    for j in range(mat.shape[1]):
        out += w[j] * mat[:, j]
    return out


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def calibration_objective(params: np.ndarray, pos: np.ndarray, neg: np.ndarray, prior: float) -> float:
    """Prior-weighted logistic loss of the affine fusion ``params = [bias, *weights]``.

    Positives are penalised by ``log(1 + exp(-(llr + logit(prior))))`` and
    negatives by ``log(1 + exp(llr + logit(prior)))``, each class averaged and
    weighted by ``prior`` and ``1 - prior``.
    """
    return _objective_and_grad(params, pos, neg, prior)[0]


def _objective_and_grad(params, pos, neg, prior, want_hessian=False):
    off = _logit(prior)
    b, w = params[0], params[1:]
    zp = _affine(pos, w, b) + off
    zn = _affine(neg, w, b) + off
    cp, cn = prior / len(pos), (1.0 - prior) / len(neg)
    obj = cp * np.logaddexp(0.0, -zp).sum() + cn * np.logaddexp(0.0, zn).sum()

    # d/dz of the two per-trial terms
    rp = -cp * sigmoid(-zp)
    rn = cn * sigmoid(zn)
    xp = np.column_stack([np.ones(len(pos)), pos])
    xn = np.column_stack([np.ones(len(neg)), neg])
    grad = xp.T @ rp + xn.T @ rn
    if not want_hessian:
        return obj, grad, None
    sp = sigmoid(zp)
    sn = sigmoid(zn)
    hess = (xp * (cp * sp * (1 - sp))[:, None]).T @ xp + (xn * (cn * sn * (1 - sn))[:, None]).T @ xn
    return obj, grad, hess


def fit_linear_calibration(
    data: ScoredTrials,
    positive_rule: Task = SASV,
    prior: float = 0.5,
    columns: Sequence[str] | None = None,
) -> tuple[FusionModel, CalibrationTrace]:
    """Train bias and weights of an LLR-producing affine fusion.

    The objective is convex.  Iterates follow damped Newton steps (minimum
    norm solution of the 1+k dimensional Newton system, gradient step as
    fallback) with Armijo backtracking, so every accepted step lowers the
    objective.  Stops when the gradient norm is at most ``GRAD_TOL``; the
    iteration cap and the weight-norm cap (hit on separable data) both stop
    early with a :class:`CalibrationWarning`.
    """
    if not 0.0 < prior < 1.0:
        raise ValueError(f"prior must lie in (0, 1), got {prior}")
    columns = list(columns) if columns is not None else data.names
    if not columns:
        raise ValueError("no score columns to calibrate")
    mat = np.column_stack([data.scores(c) for c in columns])
    if not np.all(np.isfinite(mat)):
        raise ValueError("non-finite scores")
    target = positive_rule.targets(data.kinds())
    pos, neg = mat[target == 1.0], mat[target == 0.0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError(
            f"calibration needs both classes (got {len(pos)} positive, {len(neg)} negative)"
        )

    params = np.zeros(1 + len(columns))
    obj, grad, hess = _objective_and_grad(params, pos, neg, prior, want_hessian=True)
    history = [float(obj)]
    separable = False
    it = 0
    while np.linalg.norm(grad) > GRAD_TOL and it < MAX_ITER:
        step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)) or grad @ step >= 0:
            step = -grad
        slope = grad @ step
        t = 1.0
        while t >= 1e-20:
            cand = params + t * step
            c_obj, c_grad, c_hess = _objective_and_grad(cand, pos, neg, prior, want_hessian=True)
            if c_obj <= obj + 1e-4 * t * slope and c_obj <= obj:
                break
            t *= 0.5
        else:
            # no representable decrease left along the step
            break
        it += 1
        params, obj, grad, hess = cand, c_obj, c_grad, c_hess
        history.append(float(obj))
        if np.linalg.norm(params[1:]) > WEIGHT_NORM_CAP:
            separable = True
            break

    gnorm = float(np.linalg.norm(grad))
    converged = gnorm <= GRAD_TOL
    if not separable:
        # The loss has no finite minimiser once the fused scores split the
        # classes perfectly; the tiny gradient there is not convergence.
        w, b = params[1:], params[0]
        separable = bool(_affine(pos, w, b).min() > _affine(neg, w, b).max())
    if separable:
        warnings.warn(
            "classes are linearly separable: calibration weights are unbounded",
            CalibrationWarning,
            stacklevel=2,
        )
    elif not converged:
        warnings.warn(
            f"calibration stopped after {it} iterations with gradient norm {gnorm:.3g}",
            CalibrationWarning,
            stacklevel=2,
        )
    logger.debug("calibration: %d iterations, objective %.6g, |grad| %.3g", it, obj, gnorm)
    model = FusionModel(params[0], params[1:].tolist(), prior, list(columns))
    return model, CalibrationTrace(history, gnorm, it, converged, separable)
