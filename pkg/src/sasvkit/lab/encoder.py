"""A small feed-forward countermeasure encoder with a logistic head.

The base path maps features through one tanh hidden layer to a linear
embedding.  An optional auxiliary path concatenates the embedding with an
external (speaker) embedding and passes the result through two affine
layers, producing the joint embedding seen by the head; it starts as the
identity on the embedding coordinates and zero on the auxiliary ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BASE_PARAMS = ("W1", "b1", "W2", "b2")
AUX_PARAMS = ("A1", "a1", "A2", "a2")
HEAD_PARAMS = ("w", "c")
FORMAT_TAG = "toy-encoder v1"


def sigmoid(z):
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


@dataclass
class ToyEncoder:
    d_in: int
    hidden: int
    d_emb: int
    d_aux: int = 0
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.shapes()
        if not self.params:
            self.params = {name: np.zeros(shape) for name, shape in expected.items()}
        if set(self.params) != set(expected):
            raise ValueError(f"parameter names {sorted(self.params)} != {sorted(expected)}")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite parameters")
            self.params[name] = arr

    @property
    def has_aux(self) -> bool:
        return self.d_aux > 0

    @property
    def names(self) -> tuple[str, ...]:
        return BASE_PARAMS + (AUX_PARAMS if self.has_aux else ()) + HEAD_PARAMS

    def shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {
            "W1": (self.d_in, self.hidden),
            "b1": (self.hidden,),
            "W2": (self.hidden, self.d_emb),
            "b2": (self.d_emb,),
        }
        if self.has_aux:
            shapes.update({
                "A1": (self.d_emb + self.d_aux, self.d_emb),
                "a1": (self.d_emb,),
                "A2": (self.d_emb, self.d_emb),
                "a2": (self.d_emb,),
            })
        shapes.update({"w": (self.d_emb,), "c": ()})
        return {n: shapes[n] for n in self.names}

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())

    @classmethod
    def initialize(cls, d_in: int, hidden: int, d_emb: int, rng: np.random.Generator, d_aux: int = 0) -> "ToyEncoder":
        enc = cls(d_in, hidden, d_emb)
        enc.params["W1"] = rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, hidden))
        enc.params["W2"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, d_emb))
        enc.params["w"] = rng.normal(0.0, 1.0 / np.sqrt(d_emb), d_emb)
        return enc.with_aux(d_aux) if d_aux else enc

    def with_aux(self, d_aux: int) -> "ToyEncoder":
        """Copy with an identity-initialised auxiliary path of width ``d_aux``."""
        if d_aux <= 0:
            raise ValueError("d_aux must be positive")
        params = {k: v.copy() for k, v in self.params.items() if k not in AUX_PARAMS}
        a1 = np.zeros((self.d_emb + d_aux, self.d_emb))
        a1[: self.d_emb] = np.eye(self.d_emb)
        params.update({
            "A1": a1,
            "a1": np.zeros(self.d_emb),
            "A2": np.eye(self.d_emb),
            "a2": np.zeros(self.d_emb),
        })
        return ToyEncoder(self.d_in, self.hidden, self.d_emb, d_aux, params)

    def copy(self) -> "ToyEncoder":
        return ToyEncoder(self.d_in, self.hidden, self.d_emb, self.d_aux,
                          {k: v.copy() for k, v in self.params.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.params[n]) for n in self.names])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for name, shape in self.shapes().items():
            size = int(np.prod(shape))
            self.params[name] = np.asarray(vec[pos:pos + size], dtype=np.float64).reshape(shape).copy()
            pos += size
        if pos != len(vec):
            raise ValueError(f"expected {pos} values, got {len(vec)}")

    def to_text(self) -> str:
        lines = [FORMAT_TAG, f"dims {self.d_in} {self.hidden} {self.d_emb} {self.d_aux}"]
        for name, shape in self.shapes().items():
            arr = self.params[name]
            mat = arr.reshape(1, -1) if arr.ndim < 2 else arr
            rows, cols = (1, arr.size) if arr.ndim < 2 else shape
            lines.append(f"param {name} {rows} {cols}")
            lines.extend(" ".join(repr(float(x)) for x in row) for row in mat)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ToyEncoder":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != FORMAT_TAG:
            raise ValueError(f"not a {FORMAT_TAG!r} file")
        head = lines[1].split()
        if head[0] != "dims" or len(head) != 5:
            raise ValueError("malformed dims line")
        enc = cls(*(int(x) for x in head[1:]))
        shapes = enc.shapes()
        i = 2
        while i < len(lines):
            tag, name, rows, cols = lines[i].split()
            if tag != "param" or name not in shapes:
                raise ValueError(f"unexpected block header {lines[i]!r}")
            rows, cols = int(rows), int(cols)
            block = [[float(x) for x in ln.split()] for ln in lines[i + 1:i + 1 + rows]]
            if len(block) != rows or any(len(r) != cols for r in block):
                raise ValueError(f"block {name}: expected {rows}x{cols} values")
            enc.params[name] = np.array(block, dtype=np.float64).reshape(shapes[name])
            i += 1 + rows
        enc.__post_init__()
        return enc


@dataclass
class ForwardCache:
    features: np.ndarray
    hidden: np.ndarray
    base: np.ndarray
    joint_in: np.ndarray | None
    joint_mid: np.ndarray | None
    embedding: np.ndarray
    logit: np.ndarray
    prob: np.ndarray


def run(encoder: ToyEncoder, features, aux=None) -> ForwardCache:
    """Batched forward pass keeping intermediates for backpropagation."""
    p = encoder.params
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != encoder.d_in:
        raise ValueError(f"expected {encoder.d_in} features, got {x.shape[1]}")
    h = np.tanh(x @ p["W1"] + p["b1"])
    base = h @ p["W2"] + p["b2"]
    joint_in = joint_mid = None
    emb = base
    if encoder.has_aux:
        if aux is None:
            raise ValueError("encoder has an auxiliary path; pass aux embeddings")
        a = np.atleast_2d(np.asarray(aux, dtype=np.float64))
        if a.shape != (x.shape[0], encoder.d_aux):
            raise ValueError(f"aux must have shape ({x.shape[0]}, {encoder.d_aux}), got {a.shape}")
        joint_in = np.concatenate([base, a], axis=1)
        joint_mid = joint_in @ p["A1"] + p["a1"]
        emb = joint_mid @ p["A2"] + p["a2"]
    elif aux is not None:
        raise ValueError("encoder has no auxiliary path")
    z = emb @ p["w"] + p["c"]
    return ForwardCache(x, h, base, joint_in, joint_mid, emb, z, sigmoid(z))


def forward(encoder: ToyEncoder, features):
    """Embedding and bonafide probability; a single vector gives unbatched output."""
    cache = run(encoder, features)
    if np.ndim(features) == 1:
        return cache.embedding[0], float(cache.prob[0])
    return cache.embedding, cache.prob


def forward_with_aux(encoder: ToyEncoder, features, aux_embedding):
    if not encoder.has_aux:
        raise ValueError("encoder has no auxiliary path configured")
    cache = run(encoder, features, aux_embedding)
    if np.ndim(features) == 1:
        return cache.embedding[0], float(cache.prob[0])
    return cache.embedding, cache.prob
