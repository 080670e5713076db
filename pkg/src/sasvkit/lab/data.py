"""Labelled embedding datasets and their text format.

One record per line: a label token (``bonafide`` or ``spoof:<type>``)
followed by the feature values.  Utterance files used for scoring trials
prefix each line with an utterance id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

BONAFIDE = "bonafide"


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingRecord:
    features: np.ndarray
    label: str  # BONAFIDE or a spoof type

    @property
    def is_bonafide(self) -> bool:
        return self.label == BONAFIDE


def label_token(label: str) -> str:
    return BONAFIDE if label == BONAFIDE else f"spoof:{label}"


def parse_label(token: str) -> str:
    if token == BONAFIDE:
        return BONAFIDE
    if token.startswith("spoof:") and len(token) > len("spoof:"):
        kind = token[len("spoof:"):]
        if kind == BONAFIDE:
            raise ValueError("'bonafide' is not a valid spoof type")
        return kind
    raise ValueError(f"unknown record label {token!r}")


class EmbeddingDataset:
    """Feature matrix with one label per row and optional ids / aux embeddings."""

    def __init__(self, features, labels: Sequence[str], aux=None, ids: Sequence[str] | None = None):
        self.features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        self.labels = tuple(labels)
        if self.features.shape[0] != len(self.labels):
            raise ValueError("one label per feature row expected")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite features")
        self.aux = None if aux is None else np.atleast_2d(np.asarray(aux, dtype=np.float64))
        if self.aux is not None and self.aux.shape[0] != len(self.labels):
            raise ValueError("one aux row per record expected")
        self.ids = None if ids is None else tuple(ids)
        if self.ids is not None and len(self.ids) != len(self.labels):
            raise ValueError("one id per record expected")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, idx) -> "EmbeddingDataset":
        idx = np.arange(len(self))[idx]
        idx = np.atleast_1d(idx)
        return EmbeddingDataset(
            self.features[idx],
            [self.labels[i] for i in idx],
            None if self.aux is None else self.aux[idx],
            None if self.ids is None else [self.ids[i] for i in idx],
        )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_bonafide(self) -> np.ndarray:
        return np.array([lab == BONAFIDE for lab in self.labels], dtype=bool)

    @property
    def y(self) -> np.ndarray:
        return self.is_bonafide.astype(np.float64)

    @property
    def spoof_types(self) -> list[str]:
        return sorted({lab for lab in self.labels if lab != BONAFIDE})

    def records(self) -> list[EmbeddingRecord]:
        return [EmbeddingRecord(f, lab) for f, lab in zip(self.features, self.labels)]

    @classmethod
    def from_records(cls, records: Iterable[EmbeddingRecord]) -> "EmbeddingDataset":
        records = list(records)
        if not records:
            raise ValueError("no records")
        return cls(np.stack([r.features for r in records]), [r.label for r in records])

    def with_aux(self, aux) -> "EmbeddingDataset":
        return EmbeddingDataset(self.features, self.labels, aux, self.ids)


def parse_dataset(text: str, with_ids: bool = False) -> EmbeddingDataset:
    rows, labels, ids = [], [], []
    width = None
    skip = 2 if with_ids else 1
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) <= skip:
            raise DatasetFormatError(f"line {line_no}: no feature values")
        try:
            label = parse_label(fields[skip - 1])
            values = [float(v) for v in fields[skip:]]
        except ValueError as exc:
            raise DatasetFormatError(f"line {line_no}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise DatasetFormatError(f"line {line_no}: non-finite feature")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DatasetFormatError(f"line {line_no}: expected {width} features, got {len(values)}")
        if with_ids:
            ids.append(fields[0])
        rows.append(values)
        labels.append(label)
    if not rows:
        raise DatasetFormatError("empty dataset")
    if with_ids and len(set(ids)) != len(ids):
        raise DatasetFormatError("duplicate utterance ids")
    return EmbeddingDataset(np.array(rows), labels, ids=ids if with_ids else None)


def format_dataset(data: EmbeddingDataset, with_ids: bool = False) -> str:
    if with_ids and data.ids is None:
        raise ValueError("dataset has no ids")
    out = []
    for i, (row, lab) in enumerate(zip(data.features, data.labels)):
        values = " ".join(repr(float(v)) for v in row)
        prefix = f"{data.ids[i]} " if with_ids else ""
        out.append(f"{prefix}{label_token(lab)} {values}\n")
    return "".join(out)
