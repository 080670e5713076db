"""Deterministic minibatch training of the toy encoder.

Minibatch Adam (or plain gradient descent) on the combined loss, with the
step size decayed once per epoch.  Updates use the batch gradient divided by
the batch size.  Plain gradient descent is kept for comparison: the pairwise
one-class term is stiff at the batch sizes used here, and at step sizes
small enough to keep it stable the head barely learns.

Parameter initialisation and shuffling draw from separate seeded streams,
so training from a given encoder replays exactly the shuffles a
from-scratch run with the same seed would use.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingDataset
from .encoder import ToyEncoder, run
from .ersa import ErsaState, compute_centers, ersa_rng, sample_ersa
from .losses import loss_and_grad

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    batch_size: int = 64
    epochs: int = 60
    lr: float = 0.01
    lr_decay: float = 0.98
    optimizer: str = "adam"
    seed: int = 0
    hidden: int = 16
    emb_dim: int = 8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.batch_size < 1 or (self.lam > 0 and self.batch_size < 2):
            raise ValueError("batch_size must be >= 2 when the one-class loss is enabled")
        if self.epochs < 0 or self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("invalid epochs / learning-rate schedule")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** epoch


@dataclass
class TrainResult:
    encoder: ToyEncoder
    losses: list[float] = field(default_factory=list)  # summed loss per epoch
    state: ErsaState | None = None
    injected_per_batch: list[int] = field(default_factory=list)


class _Adam:
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            step = (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            params[name] = params[name] - lr * step


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init = np.random.default_rng([seed, 0])
    shuffle = np.random.default_rng([seed, 1])
    return init, shuffle


def _check_dataset(dataset: EmbeddingDataset) -> None:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    bona = dataset.is_bonafide
    if bona.all() or not bona.any():
        raise ValueError("training needs both bonafide and spoof records")


def _run_epochs(encoder, dataset, config, on_batch=None, on_epoch=None) -> TrainResult:
    _, shuffle = _streams(config.seed)
    enc = encoder.copy()
    result = TrainResult(enc)
    adam = _Adam(enc.params) if config.optimizer == "adam" else None
    n = len(dataset)
    for epoch in range(config.epochs):
        order = shuffle.permutation(n)
        lr = config.lr_at(epoch)
        total = 0.0
        for it, start in enumerate(range(0, n, config.batch_size)):
            batch = dataset[order[start:start + config.batch_size]]
            injected = on_batch(enc, batch, epoch, it) if on_batch else None
            loss, grads = loss_and_grad(enc, batch, config.lam, injected)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch {it}")
            if injected is not None:
                result.injected_per_batch.append(len(injected))
            grads = {k: g / len(batch) for k, g in grads.items()}
            if adam is not None:
                adam.step(enc.params, grads, lr)
            else:
                for name, g in grads.items():
                    enc.params[name] = enc.params[name] - lr * g
            total += loss
        result.losses.append(total)
        logger.debug("epoch %d: loss %.6g", epoch, total)
        if on_epoch:
            on_epoch(enc, epoch)
    for name, value in enc.params.items():
        if not np.all(np.isfinite(value)):
            raise TrainingDiverged(f"parameter {name} became non-finite")
    return result


def train(dataset: EmbeddingDataset, config: TrainConfig, encoder: ToyEncoder | None = None) -> TrainResult:
    """Train on ``dataset``; a fresh encoder is drawn from ``config.seed`` unless given."""
    _check_dataset(dataset)
    if encoder is None:
        init, _ = _streams(config.seed)
        d_aux = 0 if dataset.aux is None else dataset.aux.shape[1]
        encoder = ToyEncoder.initialize(dataset.dim, config.hidden, config.emb_dim, init, d_aux)
    return _run_epochs(encoder, dataset, config)


def finetune_ersa(
    encoder: ToyEncoder,
    dataset: EmbeddingDataset,
    state: ErsaState,
    config: TrainConfig,
) -> TrainResult:
    """Fine-tune with spoof embeddings sampled around the boundary centres.

    Each batch first folds its own embeddings into the running class
    centres, then receives ``samples_per_center`` draws per boundary centre
    at the embedding level (head-only gradients).  Every
    ``state.update_period_epochs`` epochs the centres and covariances are
    recomputed over the whole dataset.
    """
    _check_dataset(dataset)
    st = state.copy()
    holder = {"state": st}

    def on_batch(enc, batch, epoch, it):
        cur = holder["state"]
        if cur.samples_per_center == 0:
            return None
        emb = run(enc, batch.features, batch.aux).embedding
        cur.update_centers(emb, batch.labels)
        samples, _ = sample_ersa(cur, ersa_rng(config.seed, epoch, it))
        return samples

    def on_epoch(enc, epoch):
        cur = holder["state"]
        if (epoch + 1) % cur.update_period_epochs == 0:
            holder["state"] = compute_centers(enc, dataset, cur.samples_per_center, cur.update_period_epochs)

    result = _run_epochs(encoder, dataset, config, on_batch, on_epoch)
    result.state = holder["state"]
    return result


def select_bonafide_subset(encoder: ToyEncoder, dataset: EmbeddingDataset, threshold: float) -> EmbeddingDataset:
    """Records the encoder scores as bonafide with probability >= ``threshold``."""
    if len(dataset) == 0:
        return dataset
    prob = run(encoder, dataset.features, dataset.aux).prob
    return dataset[np.flatnonzero(prob >= threshold)]


def bonafide_scatter(encoder: ToyEncoder, dataset: EmbeddingDataset) -> float:
    """Mean squared distance of bonafide embeddings to their centroid."""
    emb = run(encoder, dataset.features, dataset.aux).embedding[dataset.is_bonafide]
    if len(emb) == 0:
        raise ValueError("no bonafide records")
    return float(np.mean(np.sum((emb - emb.mean(axis=0)) ** 2, axis=1)))


def cm_scores(encoder: ToyEncoder, dataset: EmbeddingDataset) -> np.ndarray:
    """Countermeasure scores (head logits, higher = more bonafide)."""
    return run(encoder, dataset.features, dataset.aux).logit
