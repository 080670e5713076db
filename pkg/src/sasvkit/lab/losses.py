"""Binary cross-entropy, one-class confusion loss and their gradients.

The one-class confusion loss sums squared Euclidean distances over *ordered*
pairs of bonafide embeddings, so each unordered pair counts twice.  It is
evaluated through the centroid identity
``sum_{i != j} |e_i - e_j|^2 = 2 n sum_i |e_i - mean|^2``, whose gradient
with respect to ``e_k`` is ``4 n (e_k - mean)``.
"""

from __future__ import annotations

import numpy as np

from .data import EmbeddingDataset
from .encoder import ToyEncoder, run, sigmoid

P_CLAMP = 1e-12


def bce_loss(probabilities, labels) -> float:
    p = np.clip(np.asarray(probabilities, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def occl_loss(bonafide_embeddings) -> float:
    e = np.asarray(bonafide_embeddings, dtype=np.float64)
    n = len(e)
    if n < 2:
        return 0.0
    centered = e - e.mean(axis=0)
    return float(2.0 * n * np.sum(centered * centered))


def _occl_grad(e: np.ndarray) -> np.ndarray:
    n = len(e)
    if n == 0:
        return np.zeros_like(e)
    return 4.0 * n * (e - e.mean(axis=0))


def _bce_dlogit(prob: np.ndarray, y: np.ndarray) -> np.ndarray:
    # zero where the clamp is active, matching the clamped loss value
    live = (prob > P_CLAMP) & (prob < 1.0 - P_CLAMP)
    return np.where(live, prob - y, 0.0)


def combined_loss(batch: EmbeddingDataset, encoder: ToyEncoder, lam: float) -> float:
    cache = run(encoder, batch.features, batch.aux)
    bona = batch.is_bonafide
    return bce_loss(cache.prob, batch.y) + lam * occl_loss(cache.embedding[bona])


def objective(
    encoder: ToyEncoder,
    batch: EmbeddingDataset,
    lam: float,
    injected: np.ndarray | None = None,
) -> float:
    """Combined loss plus the BCE of injected spoof embeddings, no gradients."""
    loss = combined_loss(batch, encoder, lam)
    if injected is not None and len(injected):
        g = np.atleast_2d(np.asarray(injected, dtype=np.float64))
        loss += bce_loss(sigmoid(g @ encoder.params["w"] + encoder.params["c"]), np.zeros(len(g)))
    return loss


def loss_and_grad(
    encoder: ToyEncoder,
    batch: EmbeddingDataset,
    lam: float,
    injected: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Combined loss and its gradient for every encoder parameter.

    ``injected`` holds extra spoof-labelled embeddings that enter at the
    head: they add BCE terms whose gradient reaches only ``w`` and ``c``.
    """
    p = encoder.params
    cache = run(encoder, batch.features, batch.aux)
    y = batch.y
    bona = batch.is_bonafide
    loss = bce_loss(cache.prob, y) + lam * occl_loss(cache.embedding[bona])

    dz = _bce_dlogit(cache.prob, y)
    d_emb = np.outer(dz, p["w"])
    if lam:
        d_emb[bona] += lam * _occl_grad(cache.embedding[bona])
    grads = {
        "w": cache.embedding.T @ dz,
        "c": np.array(dz.sum()),
    }

    if injected is not None and len(injected):
        g = np.atleast_2d(np.asarray(injected, dtype=np.float64))
        pg = sigmoid(g @ p["w"] + p["c"])
        zeros = np.zeros(len(g))
        loss += bce_loss(pg, zeros)
        dzg = _bce_dlogit(pg, zeros)
        grads["w"] = grads["w"] + g.T @ dzg
        grads["c"] = grads["c"] + dzg.sum()

    d_base = d_emb
    if encoder.has_aux:
        grads["A2"] = cache.joint_mid.T @ d_emb
        grads["a2"] = d_emb.sum(axis=0)
        d_mid = d_emb @ p["A2"].T
        grads["A1"] = cache.joint_in.T @ d_mid
        grads["a1"] = d_mid.sum(axis=0)
        d_base = d_mid @ p["A1"][: encoder.d_emb].T

    grads["W2"] = cache.hidden.T @ d_base
    grads["b2"] = d_base.sum(axis=0)
    d_pre = (d_base @ p["W2"].T) * (1.0 - cache.hidden ** 2)
    grads["W1"] = cache.features.T @ d_pre
    grads["b1"] = d_pre.sum(axis=0)
    return float(loss), {name: grads[name] for name in encoder.names}


def gradient_check(
    encoder: ToyEncoder,
    batch: EmbeddingDataset,
    lam: float,
    injected: np.ndarray | None = None,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per parameter is ``|a - n| / max(|a|, |n|, 1e-6)``; the
    floor keeps exactly-zero gradients from dividing by zero.
    """
    if encoder.n_params > 500:
        raise ValueError(f"gradient check is for small encoders (<= 500 parameters), got {encoder.n_params}")
    _, grads = loss_and_grad(encoder, batch, lam, injected)
    analytic = np.concatenate([np.ravel(grads[n]) for n in encoder.names])
    probe = encoder.copy()
    theta = encoder.flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + step
        probe.set_flat(bumped)
        up = objective(probe, batch, lam, injected)
        bumped[i] = theta[i] - step
        probe.set_flat(bumped)
        down = objective(probe, batch, lam, injected)
        numeric[i] = (up - down) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))
