"""Embedding random sampling augmentation (ERSA) state and sampling.

Boundary centres sit halfway between the bonafide centre and each spoof-type
centre.  Fine-tuning draws spoof-labelled embeddings from a Gaussian around
every boundary centre, with that spoof type's covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BONAFIDE, EmbeddingDataset
from .encoder import ToyEncoder, run

COV_REG = 1e-6


@dataclass
class ErsaState:
    bonafide_center: np.ndarray
    spoof_centers: dict[str, np.ndarray]
    spoof_covariances: dict[str, np.ndarray]
    samples_per_center: int = 2
    update_period_epochs: int = 5
    # running-mean weights of the centres since the last full recomputation
    bonafide_count: int = 0
    spoof_counts: dict[str, int] = field(default_factory=dict)
    _chol: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.samples_per_center < 0:
            raise ValueError("samples_per_center must be >= 0")
        if self.update_period_epochs < 1:
            raise ValueError("update_period_epochs must be >= 1")
        if set(self.spoof_centers) != set(self.spoof_covariances):
            raise ValueError("one covariance per spoof centre expected")
        self._chol = {}

    @property
    def spoof_types(self) -> list[str]:
        return sorted(self.spoof_centers)

    @property
    def boundary_centers(self) -> dict[str, np.ndarray]:
        return {t: (self.bonafide_center + self.spoof_centers[t]) / 2 for t in self.spoof_types}

    def cholesky(self, spoof_type: str) -> np.ndarray:
        if spoof_type not in self._chol:
            self._chol[spoof_type] = np.linalg.cholesky(self.spoof_covariances[spoof_type])
        return self._chol[spoof_type]

    def update_centers(self, embeddings: np.ndarray, labels) -> None:
        """Fold one iteration's embeddings into the running class means."""
        labels = np.asarray(labels)
        bona = labels == BONAFIDE
        if bona.any():
            self.bonafide_center, self.bonafide_count = _fold(
                self.bonafide_center, self.bonafide_count, embeddings[bona])
        for t in self.spoof_types:
            mask = labels == t
            if mask.any():
                self.spoof_centers[t], self.spoof_counts[t] = _fold(
                    self.spoof_centers[t], self.spoof_counts.get(t, 0), embeddings[mask])

    def copy(self) -> "ErsaState":
        return ErsaState(
            self.bonafide_center.copy(),
            {t: v.copy() for t, v in self.spoof_centers.items()},
            {t: v.copy() for t, v in self.spoof_covariances.items()},
            self.samples_per_center,
            self.update_period_epochs,
            self.bonafide_count,
            dict(self.spoof_counts),
        )


def _fold(mean: np.ndarray, count: int, new: np.ndarray) -> tuple[np.ndarray, int]:
    total = count + len(new)
    return (mean * count + new.sum(axis=0)) / total, total


def compute_centers(
    encoder: ToyEncoder,
    dataset: EmbeddingDataset,
    samples_per_center: int = 2,
    update_period_epochs: int = 5,
) -> ErsaState:
    emb = run(encoder, dataset.features, dataset.aux).embedding
    return centers_from_embeddings(emb, dataset.labels, samples_per_center, update_period_epochs)


def centers_from_embeddings(emb, labels, samples_per_center=2, update_period_epochs=5) -> ErsaState:
    """Class means and regularised per-spoof-type covariances of ``emb``."""
    emb = np.atleast_2d(np.asarray(emb, dtype=np.float64))
    labels = np.asarray(labels)
    bona = labels == BONAFIDE
    if not bona.any():
        raise ValueError("no bonafide embeddings to centre on")
    d = emb.shape[1]
    centers, covs, counts = {}, {}, {}
    for t in sorted(set(labels[~bona].tolist())):
        pts = emb[labels == t]
        centers[t] = pts.mean(axis=0)
        # Bessel-corrected; a single point has no spread beyond the regulariser
        cov = np.cov(pts, rowvar=False, ddof=1).reshape(d, d) if len(pts) > 1 else np.zeros((d, d))
        covs[t] = cov + COV_REG * np.eye(d)
        counts[t] = len(pts)
    if not centers:
        raise ValueError("no spoof embeddings to centre on")
    return ErsaState(
        emb[bona].mean(axis=0), centers, covs,
        samples_per_center, update_period_epochs,
        int(bona.sum()), counts,
    )


def sample_ersa(state: ErsaState, rng: np.random.Generator) -> tuple[np.ndarray, list[str]]:
    """Draw ``samples_per_center`` embeddings around every boundary centre.

    Centres are visited in sorted spoof-type order.  Returns the samples as
    a (n_types * samples_per_center, d_emb) array and the spoof type each
    sample was drawn for; all of them are spoof-labelled.
    """
    k = state.samples_per_center
    d = state.bonafide_center.shape[0]
    out, kinds = [], []
    for t, mu in state.boundary_centers.items():
        z = rng.standard_normal((k, d))
        out.append(mu + z @ state.cholesky(t).T)
        kinds.extend([t] * k)
    if not out:
        return np.empty((0, d)), []
    return np.concatenate(out, axis=0), kinds


def ersa_rng(seed: int, epoch: int, iteration: int) -> np.random.Generator:
    """Counter-based generator: draws depend only on (seed, epoch, iteration).

    The indices occupy the upper counter words of a Philox stream keyed by
    the seed, so streams of different iterations never overlap.
    """
    counter = np.array([0, 0, epoch, iteration], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))
