"""Synthetic Gaussian-cluster data for the embedding lab and cascade fixtures."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ..trials import LabelKind, ScoreSet, Trial, TrialLabel
from .data import BONAFIDE, EmbeddingDataset


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 8
    n_bonafide: int = 300
    n_per_type: int = 60
    n_types: int = 6
    radius: float = 6.0
    spread: float = 1.0
    seed: int = 0


def spoof_type_names(n: int, start: int = 1) -> list[str]:
    return [f"A{i:02d}" for i in range(start, start + n)]


def cluster_means(config: SynthConfig) -> dict[str, np.ndarray]:
    """Bonafide mean at the origin, spoof means at ``radius`` in random directions."""
    rng = np.random.default_rng([config.seed, 100])
    means = {BONAFIDE: np.zeros(config.dim)}
    for name in spoof_type_names(config.n_types):
        v = rng.standard_normal(config.dim)
        means[name] = config.radius * v / np.linalg.norm(v)
    return means


def sample_clusters(means: dict[str, np.ndarray], counts: dict[str, int], spread: float,
                    rng: np.random.Generator) -> EmbeddingDataset:
    rows, labels = [], []
    for label in means:
        k = counts.get(label, 0)
        rows.append(means[label] + spread * rng.standard_normal((k, len(means[label]))))
        labels.extend([label] * k)
    return EmbeddingDataset(np.concatenate(rows), labels)


def make_cm_dataset(config: SynthConfig, part: int = 0) -> EmbeddingDataset:
    """Labelled CM training records; ``part`` selects an independent draw."""
    means = cluster_means(config)
    counts = {lab: config.n_per_type for lab in means}
    counts[BONAFIDE] = config.n_bonafide
    return sample_clusters(means, counts, config.spread, np.random.default_rng([config.seed, 200, part]))


def between(a: np.ndarray, b: np.ndarray, frac: float) -> np.ndarray:
    return a + frac * (b - a)


@dataclass(frozen=True)
class TrialFixtureConfig:
    n_speakers: int = 20
    n_target: int = 200
    n_nontarget: int = 400
    n_spoof: int = 240
    sv_target: float = 4.0
    sv_nontarget: float = -4.0
    sv_spoof: float = 3.0
    sv_spread: float = 1.0
    unseen_types: int = 0


def make_trial_fixture(cm: SynthConfig, trials_cfg: TrialFixtureConfig, part: str):
    """Trials, SV scores and CM test-utterance features for one partition.

    Spoofed trials imitate the enrolled speaker, so their SV scores sit near
    the target scores.  ``unseen_types`` extra spoof clusters are placed
    halfway between the bonafide mean and a seen spoof mean.
    """
    rng = np.random.default_rng([cm.seed, 300, zlib.crc32(part.encode())])
    means = cluster_means(cm)
    seen = spoof_type_names(cm.n_types)
    attack_means = {t: means[t] for t in seen}
    for i, name in enumerate(spoof_type_names(trials_cfg.unseen_types, start=cm.n_types + 1)):
        attack_means[name] = between(means[BONAFIDE], means[seen[i % len(seen)]], 0.5)
    attacks = sorted(attack_means)

    spk = [f"spk{i:03d}" for i in range(trials_cfg.n_speakers)]
    trials, sv, utt_rows, utt_labels, utt_ids = [], [], [], [], []
    plan = ([LabelKind.TARGET] * trials_cfg.n_target
            + [LabelKind.NONTARGET] * trials_cfg.n_nontarget
            + [LabelKind.SPOOF] * trials_cfg.n_spoof)
    sv_mean = {
        LabelKind.TARGET: trials_cfg.sv_target,
        LabelKind.NONTARGET: trials_cfg.sv_nontarget,
        LabelKind.SPOOF: trials_cfg.sv_spoof,
    }
    for i, kind in enumerate(plan):
        enroll = spk[i % len(spk)]
        utt = f"{part}_{i:05d}"
        if kind is LabelKind.SPOOF:
            attack = attacks[i % len(attacks)]
            label = TrialLabel(kind, attack)
            center = attack_means[attack]
            utt_labels.append(attack)
        else:
            label = TrialLabel(kind)
            center = means[BONAFIDE]
            utt_labels.append(BONAFIDE)
        utt_rows.append(center + cm.spread * rng.standard_normal(cm.dim))
        utt_ids.append(utt)
        trials.append(Trial(enroll, utt, label))
        sv.append(sv_mean[kind] + trials_cfg.sv_spread * rng.standard_normal())
    sv_scores = ScoreSet.from_arrays("sv", [t.key for t in trials], sv)
    utterances = EmbeddingDataset(np.array(utt_rows), utt_labels, ids=utt_ids)
    return trials, sv_scores, utterances
