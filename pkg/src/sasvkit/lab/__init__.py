"""Desk-scale countermeasure embedding lab."""

from .data import BONAFIDE, EmbeddingDataset, EmbeddingRecord, format_dataset, parse_dataset
from .encoder import ToyEncoder, forward, forward_with_aux
from .ersa import ErsaState, compute_centers, ersa_rng, sample_ersa
from .losses import bce_loss, combined_loss, gradient_check, loss_and_grad, occl_loss
from .training import (
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    bonafide_scatter,
    cm_scores,
    finetune_ersa,
    select_bonafide_subset,
    train,
)

__all__ = [
    "BONAFIDE", "EmbeddingDataset", "EmbeddingRecord", "format_dataset", "parse_dataset",
    "ToyEncoder", "forward", "forward_with_aux",
    "ErsaState", "compute_centers", "ersa_rng", "sample_ersa",
    "bce_loss", "combined_loss", "gradient_check", "loss_and_grad", "occl_loss",
    "TrainConfig", "TrainingDiverged", "TrainResult", "bonafide_scatter", "cm_scores",
    "finetune_ersa", "select_bonafide_subset", "train",
]
