"""Trial protocols and per-system score files.

Both file formats are plain UTF-8 text with one whitespace-separated record
per line.  Trial lines carry ``enroll_id test_id label`` where the label is
``target``, ``nontarget``, ``spoof`` or ``spoof:<type>``; score lines carry
``enroll_id test_id score``.
"""

from __future__ import annotations

import enum
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO, Union

import numpy as np

Key = tuple[str, str]
TextSource = Union[str, TextIO, Iterable[str]]

MAX_REPORTED_MISSING = 10


class TrialFormatError(ValueError):
    """A trial or score line could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DuplicateKeyError(TrialFormatError):
    pass


class MissingScoresError(ValueError):
    """Raised by :func:`join` when a score set does not cover every trial."""

    def __init__(self, missing: Mapping[str, Sequence[Key]]):
        self.missing = {name: list(keys) for name, keys in missing.items()}
        parts = []
        for name, keys in self.missing.items():
            shown = ", ".join(f"{e} {t}" for e, t in keys[:MAX_REPORTED_MISSING])
            more = len(keys) - MAX_REPORTED_MISSING
            suffix = f" (+{more} more)" if more > 0 else ""
            parts.append(f"{name}: {len(keys)} missing [{shown}]{suffix}")
        super().__init__("missing scores; " + "; ".join(parts))


class ExtraScoresWarning(UserWarning):
    pass


class LabelKind(enum.Enum):
    TARGET = "target"
    NONTARGET = "nontarget"
    SPOOF = "spoof"


@dataclass(frozen=True)
class TrialLabel:
    # Official protocols collapse all attacks into one "spoof" label, so an
    # untyped spoof (spoof_type None) is legal.
    kind: LabelKind
    spoof_type: str | None = None

    def __post_init__(self):
        if self.kind is not LabelKind.SPOOF and self.spoof_type is not None:
            raise ValueError(f"spoof_type given for a {self.kind.value} label")
        if self.spoof_type is not None and (
            not self.spoof_type or any(c.isspace() for c in self.spoof_type)
        ):
            raise ValueError(f"invalid spoof type {self.spoof_type!r}")

    @classmethod
    def parse(cls, token: str) -> "TrialLabel":
        if token == "target":
            return cls(LabelKind.TARGET)
        if token == "nontarget":
            return cls(LabelKind.NONTARGET)
        if token == "spoof":
            return cls(LabelKind.SPOOF)
        if token.startswith("spoof:") and len(token) > len("spoof:"):
            return cls(LabelKind.SPOOF, token[len("spoof:"):])
        raise ValueError(f"unknown label token {token!r}")

    def token(self) -> str:
        if self.spoof_type is not None:
            return f"spoof:{self.spoof_type}"
        return self.kind.value


TARGET = TrialLabel(LabelKind.TARGET)
NONTARGET = TrialLabel(LabelKind.NONTARGET)


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: TrialLabel

    @property
    def key(self) -> Key:
        return (self.enroll_id, self.test_id)


@dataclass
class ScoreSet:
    """Scores of one system, keyed by ``(enroll_id, test_id)``."""

    system_name: str
    entries: dict[Key, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, value in self.entries.items():
            if not math.isfinite(value):
                raise ValueError(f"{self.system_name}: non-finite score {value!r} for {key}")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: Key) -> float:
        return self.entries[key]

    def keys(self) -> list[Key]:
        return list(self.entries)

    def values(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=np.float64, count=len(self.entries))

    @classmethod
    def from_arrays(cls, system_name: str, keys: Sequence[Key], values) -> "ScoreSet":
        values = np.asarray(values, dtype=np.float64)
        if len(keys) != len(values):
            raise ValueError("keys and values differ in length")
        return cls(system_name, {k: float(v) for k, v in zip(keys, values)})


@dataclass
class ScoredTrials:
    """Trials joined with one or more score columns, aligned by trial order."""

    trials: list[Trial]
    columns: list[ScoreSet]

    def __post_init__(self):
        names = [c.system_name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate system names in columns: {names}")

    @property
    def names(self) -> list[str]:
        return [c.system_name for c in self.columns]

    @property
    def keys(self) -> list[Key]:
        return [t.key for t in self.trials]

    def column(self, name: str) -> ScoreSet:
        for c in self.columns:
            if c.system_name == name:
                return c
        raise KeyError(f"no score column named {name!r}; have {self.names}")

    def scores(self, name: str) -> np.ndarray:
        col = self.column(name)
        return np.array([col.entries[t.key] for t in self.trials], dtype=np.float64)

    def kinds(self) -> list[LabelKind]:
        return [t.label.kind for t in self.trials]

    def score_matrix(self) -> np.ndarray:
        """Scores as an (n_trials, n_columns) array."""
        if not self.columns:
            return np.empty((len(self.trials), 0))
        return np.column_stack([self.scores(n) for n in self.names])


def _lines(source: TextSource) -> Iterable[str]:
    if isinstance(source, str):
        return source.splitlines()
    return source


def parse_trial_list(source: TextSource) -> list[Trial]:
    trials: list[Trial] = []
    seen: dict[Key, int] = {}
    for line_no, line in enumerate(_lines(source), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 3:
            raise TrialFormatError(f"expected 3 fields, got {len(fields)}", line_no)
        enroll_id, test_id, token = fields
        try:
            label = TrialLabel.parse(token)
        except ValueError as exc:
            raise TrialFormatError(str(exc), line_no) from None
        key = (enroll_id, test_id)
        if key in seen:
            raise DuplicateKeyError(
                f"duplicate trial {enroll_id} {test_id} (first on line {seen[key]})", line_no
            )
        seen[key] = line_no
        trials.append(Trial(enroll_id, test_id, label))
    return trials


def parse_score_file(source: TextSource, system_name: str) -> ScoreSet:
    entries: dict[Key, float] = {}
    first_seen: dict[Key, int] = {}
    for line_no, line in enumerate(_lines(source), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 3:
            raise TrialFormatError(f"expected 3 fields, got {len(fields)}", line_no)
        enroll_id, test_id, raw = fields
        try:
            score = float(raw)
        except ValueError:
            raise TrialFormatError(f"non-numeric score {raw!r}", line_no) from None
        if not math.isfinite(score):
            raise TrialFormatError(f"non-finite score {raw!r}", line_no)
        key = (enroll_id, test_id)
        if key in entries:
            raise DuplicateKeyError(
                f"duplicate score for {enroll_id} {test_id} (first on line {first_seen[key]})",
                line_no,
            )
        first_seen[key] = line_no
        entries[key] = score
    return ScoreSet(system_name, entries)


def format_trial_list(trials: Iterable[Trial]) -> str:
    return "".join(f"{t.enroll_id} {t.test_id} {t.label.token()}\n" for t in trials)


def format_score_file(scores: ScoreSet, order: Iterable[Key] | None = None) -> str:
    # repr() is the shortest round-tripping decimal form of a double
    keys = scores.entries.keys() if order is None else order
    return "".join(f"{e} {t} {scores.entries[(e, t)]!r}\n" for e, t in keys)


def join(trials: Sequence[Trial], scoresets: Sequence[ScoreSet]) -> ScoredTrials:
    """Align every score set to ``trials``.

    Entries with no matching trial are dropped with an
    :class:`ExtraScoresWarning`; trials without a score raise
    :class:`MissingScoresError`.
    """
    keys = [t.key for t in trials]
    key_set = set(keys)
    if len(key_set) != len(keys):
        raise DuplicateKeyError("duplicate trials passed to join")
    missing: dict[str, list[Key]] = {}
    columns = []
    for s in scoresets:
        absent = [k for k in keys if k not in s.entries]
        if absent:
            missing[s.system_name] = absent
            continue
        extra = len(s.entries) - len(keys)
        if extra:
            warnings.warn(
                f"{s.system_name}: {extra} score entries have no matching trial and were ignored",
                ExtraScoresWarning,
                stacklevel=2,
            )
        columns.append(ScoreSet(s.system_name, {k: s.entries[k] for k in keys}))
    if missing:
        raise MissingScoresError(missing)
    return ScoredTrials(list(trials), columns)


def read_text(path: str) -> str:
    """Read a UTF-8 file, with ``-`` meaning standard input."""
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()
