"""Model parameters, scoring functions, exact-softmax and objective oracles, serialization."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from numba import njit

from .checkins import TemporalState


class Variant(Enum):
    SEER = "seer"
    T_SEER = "t-seer"
    GT_SEER = "gt-seer"

    @property
    def temporal(self) -> bool:
        return self is not Variant.SEER

    @classmethod
    def parse(cls, text) -> "Variant":
        if isinstance(text, cls):
            return text
        norm = str(text).strip().lower().replace("_", "-")
        for v in cls:
            if v.value == norm:
                return v
        raise ValueError(f"unknown variant {text!r}; expected one of {[v.value for v in cls]}")


_VARIANT_CODES = {Variant.SEER: 0, Variant.T_SEER: 1, Variant.GT_SEER: 2}


def default_beta(variant: Variant, alpha: float = 0.05) -> float:
    """beta/alpha = 1 for SEER and T-SEER, 0.25 for GT-SEER (more pairs per check-in)."""
    return alpha * (0.25 if variant is Variant.GT_SEER else 1.0)


@dataclass
class HyperParams:
    d: int = 50
    k: int = 3
    h: int = 5
    m: int = 10
    alpha: float = 0.05
    beta: float | None = None
    s: float = 10.0
    epochs: int = 20
    variant: Variant = Variant.GT_SEER
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        if self.beta is None:
            self.beta = default_beta(self.variant, self.alpha)
        for name in ("d", "k", "h", "m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.variant is Variant.GT_SEER and not self.s > 0:
            raise ValueError("GT-SEER needs a positive distance threshold")

    def as_dict(self) -> dict:
        return {"variant": self.variant.value, "d": self.d, "k": self.k, "h": self.h, "m": self.m,
                "alpha": self.alpha, "beta": self.beta, "s": self.s, "epochs": self.epochs,
                "seed": self.seed}


@njit(cache=True, nogil=True)
def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True, nogil=True)
def log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@dataclass
class ModelParams:
    """All learnable state.

    ``L_out`` is the skip-gram output layer, used only during training.  ``T``
    has one row per temporal state (WEEKDAY, WEEKEND).
    """

    U: np.ndarray
    L_in: np.ndarray
    L_out: np.ndarray
    T: np.ndarray
    variant: Variant = Variant.SEER
    user_ids: list[str] = field(default_factory=list)
    poi_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        d = self.U.shape[1]
        if self.L_in.shape != self.L_out.shape or self.L_in.shape[1] != d or self.T.shape != (2, d):
            raise ValueError("inconsistent parameter shapes")

    @property
    def n_users(self) -> int:
        return self.U.shape[0]

    @property
    def n_pois(self) -> int:
        return self.L_in.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.U.copy(), self.L_in.copy(), self.L_out.copy(), self.T.copy(),
                           self.variant, list(self.user_ids), list(self.poi_ids))

    def _check(self, user=None, poi=None):
        if user is not None and not 0 <= user < self.n_users:
            raise IndexError(f"user index {user} out of range")
        if poi is not None and not 0 <= poi < self.n_pois:
            raise IndexError(f"POI index {poi} out of range")

    def scores(self, user: int, state=TemporalState.WEEKDAY) -> np.ndarray:
        """Preference score of ``user`` for every POI under this model's variant."""
        self._check(user)
        u = self.U[user]
        out = self.L_in @ u
        if self.variant.temporal:
            out = out + float(u @ self.T[int(state)])
        return out

    def equals(self, other: "ModelParams") -> bool:
        return (self.variant is other.variant and self.user_ids == other.user_ids
                and self.poi_ids == other.poi_ids
                and all(np.array_equal(a, b) for a, b in zip(self.matrices(), other.matrices())))

    def matrices(self):
        return self.U, self.L_in, self.L_out, self.T


def init_params(n_users: int, n_pois: int, d: int, rng: np.random.Generator,
                variant: Variant = Variant.SEER) -> ModelParams:
    """Every entry i.i.d. uniform on [-0.5/d, 0.5/d]; drawn in the order U, L_in, L_out, T."""
    if min(n_users, n_pois, d) < 1:
        raise ValueError("dimensions must be >= 1")
    bound = 0.5 / d
    U = rng.uniform(-bound, bound, size=(n_users, d))
    L_in = rng.uniform(-bound, bound, size=(n_pois, d))
    L_out = rng.uniform(-bound, bound, size=(n_pois, d))
    T = rng.uniform(-bound, bound, size=(2, d))
    return ModelParams(U, L_in, L_out, T, variant)


def preference_score(params: ModelParams, user: int, poi: int) -> float:
    params._check(user, poi)
    return float(params.U[user] @ params.L_in[poi])


def temporal_preference_score(params: ModelParams, user: int, state, poi: int) -> float:
    """Inner product of the doubled user vector with the POI-plus-state concatenation."""
    params._check(user, poi)
    u = params.U[user]
    return float(u @ params.L_in[poi] + u @ params.T[int(state)])


def pair_probability(params: ModelParams, user: int, poi_i: int, poi_n: int) -> float:
    """Probability that ``user`` prefers ``poi_i`` over ``poi_n``."""
    return sigmoid(preference_score(params, user, poi_i) - preference_score(params, user, poi_n))


def context_softmax_oracle(params: ModelParams, target: int, context: int, state=None) -> float:
    """Exact softmax probability of ``context`` given ``target`` (and optional state).

    Normalizes over every POI as a candidate context.  Test-scale only.
    """
    params._check(poi=target)
    params._check(poi=context)
    query = params.L_in[target]
    if state is not None:
        query = query + params.T[int(state)]
    logits = params.L_out @ query
    top = logits.max()
    return float(np.exp(logits[context] - top) / np.exp(logits - top).sum())


@dataclass
class MaterializedSample:
    """A frozen draw of training terms, so the objective is a deterministic function.

    ``context_terms`` entries are ``(target, context, state, negatives)``;
    ``preference_terms`` entries are ``(user, preferred, dominated)``.
    """

    context_terms: list[tuple[int, int, int, tuple[int, ...]]] = field(default_factory=list)
    preference_terms: list[tuple[int, int, int]] = field(default_factory=list)


def objective_oracle(params: ModelParams, sample: MaterializedSample, alpha: float, beta: float,
                     temporal: bool) -> float:
    """alpha * (skip-gram negative-sampling terms) + beta * (pairwise log-likelihood).

    This is the function the SGD updates ascend, term by term.
    """
    emb = []
    for target, context, state, negatives in sample.context_terms:
        query = params.L_in[target] + (params.T[state] if temporal else 0.0)
        emb.append(log_sigmoid(float(params.L_out[context] @ query)))
        for neg in negatives:
            emb.append(log_sigmoid(-float(params.L_out[neg] @ query)))
    pref = [log_sigmoid(float(params.U[u] @ (params.L_in[i] - params.L_in[n])))
            for u, i, n in sample.preference_terms]
    return alpha * math.fsum(emb) + beta * math.fsum(pref)


# ---------------------------------------------------------------- serialization

MAGIC = b"GTSEER\x00\x01"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQQQB")


class ModelFormatError(ValueError):
    pass


def _pack_ids(ids: Sequence[str]) -> bytes:
    parts = [struct.pack("<Q", len(ids))]
    for s in ids:
        raw = s.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def dumps_model(params: ModelParams) -> bytes:
    n_users, n_pois, d = params.n_users, params.n_pois, params.d
    user_ids = params.user_ids or [str(i) for i in range(n_users)]
    poi_ids = params.poi_ids or [str(i) for i in range(n_pois)]
    if len(user_ids) != n_users or len(poi_ids) != n_pois:
        raise ModelFormatError("id tables do not match matrix shapes")
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, n_users, n_pois, d, _VARIANT_CODES[params.variant])]
    for mat in params.matrices():
        parts.append(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    parts.append(_pack_ids(user_ids))
    parts.append(_pack_ids(poi_ids))
    return b"".join(parts)


def loads_model(blob: bytes) -> ModelParams:
    if len(blob) < _HEADER.size:
        raise ModelFormatError("truncated header")
    magic, version, n_users, n_pois, d, code = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ModelFormatError("bad magic; not a model file")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    variant = {c: v for v, c in _VARIANT_CODES.items()}.get(code)
    if variant is None:
        raise ModelFormatError(f"unknown variant code {code}")
    pos = _HEADER.size
    mats = []
    for rows in (n_users, n_pois, n_pois, 2):
        nbytes = rows * d * 8
        if pos + nbytes > len(blob):
            raise ModelFormatError("truncated matrix block")
        mats.append(np.frombuffer(blob, dtype="<f8", count=rows * d, offset=pos)
                    .reshape(rows, d).astype(np.float64))
        pos += nbytes

    def read_ids(pos):
        (count,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        ids = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            ids.append(blob[pos:pos + n].decode("utf-8"))
            pos += n
        return ids, pos

    try:
        user_ids, pos = read_ids(pos)
        poi_ids, pos = read_ids(pos)
    except struct.error as exc:
        raise ModelFormatError("truncated id table") from exc
    if pos != len(blob) or len(user_ids) != n_users or len(poi_ids) != n_pois:
        raise ModelFormatError("id tables do not match header")
    return ModelParams(*mats, variant=variant, user_ids=user_ids, poi_ids=poi_ids)


def save_model(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(params))


def load_model(path) -> ModelParams:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
