"""Top-N recommendation, P@N / R@N evaluation, and reference baselines.

Candidates for a user are all POIs minus the ones checked in during
training.  Test visits to POIs already seen in training are dropped from the
visited set, and users left with nothing to find are skipped and counted.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Protocol, Sequence

import numpy as np

from .checkins import Dataset, TemporalState
from .model import HyperParams, ModelParams, Variant

DEFAULT_NS = (1, 5, 10, 20)


class Scorer(Protocol):
    n_pois: int

    def scores(self, user: int, state=TemporalState.WEEKDAY) -> np.ndarray: ...


@dataclass
class RecommendationList:
    user: int
    temporal_state: TemporalState
    pois: list[int]
    scores: list[float]


def recommend_top_n(scorer: Scorer, user: int, temporal_state, n: int,
                    exclude: Iterable[int] = ()) -> RecommendationList:
    """Highest-scoring ``n`` POIs outside ``exclude``; ties go to the lower index."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = np.asarray(scorer.scores(user, temporal_state), dtype=np.float64)
    mask = np.ones(len(scores), dtype=bool)
    excl = np.fromiter(exclude, dtype=np.int64)
    mask[excl] = False
    pool = np.flatnonzero(mask)
    if pool.size == 0:
        raise ValueError(f"user {user} has no candidate POIs left")
    # stable sort on negated scores keeps ascending index among equal scores
    ranked = pool[np.argsort(-scores[pool], kind="stable")][:n]
    return RecommendationList(user, TemporalState(int(temporal_state)), ranked.tolist(),
                              scores[ranked].tolist())


def precision_at_n(recommended: Sequence[int], visited: Iterable[int], n: int) -> float:
    if len(recommended) > n:
        raise ValueError("recommendation list longer than n")
    return len(set(recommended) & set(visited)) / n


def recall_at_n(recommended: Sequence[int], visited: Iterable[int], n: int) -> float | None:
    """Recall of the list; ``None`` when there is nothing to recall (user is skipped)."""
    visited = set(visited)
    if not visited:
        return None
    if len(recommended) > n:
        raise ValueError("recommendation list longer than n")
    return len(set(recommended) & visited) / len(visited)


@dataclass
class EvalReport:
    ns: tuple[int, ...]
    precision: dict[int, float]
    recall: dict[int, float]
    users_evaluated: int
    users_skipped: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "N", "value"])
        for n in self.ns:
            w.writerow(["precision", n, repr(self.precision[n])])
        for n in self.ns:
            w.writerow(["recall", n, repr(self.recall[n])])
        w.writerow(["users_evaluated", "", self.users_evaluated])
        w.writerow(["users_skipped", "", self.users_skipped])
        return buf.getvalue()


def comparison_table(reports: dict[str, EvalReport]) -> str:
    """Model x metric CSV, one row per model, columns P@N then R@N."""
    ns = sorted({n for r in reports.values() for n in r.ns})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + [f"P@{n}" for n in ns] + [f"R@{n}" for n in ns])
    for name, r in reports.items():
        w.writerow([name] + [f"{r.precision.get(n, float('nan')):.6f}" for n in ns]
                   + [f"{r.recall.get(n, float('nan')):.6f}" for n in ns])
    return buf.getvalue()


def evaluate(scorer: Scorer, train: Dataset, test: Dataset, ns: Sequence[int] = DEFAULT_NS,
             temporal_state=TemporalState.WEEKDAY) -> EvalReport:
    """Average P@N and R@N over users with a non-empty visited set.

    Scores do not depend on the temporal state for these models, so each user
    is evaluated once.
    """
    ns = tuple(sorted(set(int(n) for n in ns)))
    if not ns or ns[0] < 1:
        raise ValueError("N values must be >= 1")
    if train.poi_index != test.poi_index or train.user_index != test.user_index:
        raise ValueError("train and test use different index spaces")
    if scorer.n_pois != train.n_pois:
        raise ValueError("scorer and data use different POI index spaces")
    top = ns[-1]
    hits_p = {n: [] for n in ns}
    hits_r = {n: [] for n in ns}
    skipped = 0
    for user in range(train.n_users):
        seen = train.user_pois[user]
        visited = set(test.user_pois[user].tolist()) - set(seen.tolist())
        if not visited:
            skipped += 1
            continue
        rec = recommend_top_n(scorer, user, temporal_state, top, seen).pois
        for n in ns:
            hits_p[n].append(precision_at_n(rec[:n], visited, n))
            hits_r[n].append(recall_at_n(rec[:n], visited, n))
    evaluated = train.n_users - skipped
    mean = lambda xs: float(np.mean(xs)) if xs else 0.0
    return EvalReport(ns, {n: mean(hits_p[n]) for n in ns}, {n: mean(hits_r[n]) for n in ns},
                      evaluated, skipped)


class BaselineKind(Enum):
    POPULARITY = "popularity"
    RANDOM = "random"
    BPR_EQUIV = "bpr"


@dataclass
class PopularityScorer:
    counts: np.ndarray

    @property
    def n_pois(self) -> int:
        return len(self.counts)

    def scores(self, user, state=TemporalState.WEEKDAY):
        return np.asarray(self.counts, dtype=np.float64)


@dataclass
class RandomScorer:
    """Uniform random scores, fixed per (seed, user) regardless of call order."""

    n_pois: int
    seed: int = 0

    def scores(self, user, state=TemporalState.WEEKDAY):
        return np.random.default_rng([self.seed, int(user)]).random(self.n_pois)


def baseline_scores(kind, train: Dataset, hyper: HyperParams | None = None, seed: int = 0) -> Scorer:
    """Build a reference scorer.

    BPR_EQUIV trains a SEER model with the embedding weight set to zero, which
    leaves only the pairwise-ranking updates.
    """
    kind = BaselineKind(kind) if not isinstance(kind, BaselineKind) else kind
    if kind is BaselineKind.POPULARITY:
        return PopularityScorer(train.checkin_counts.copy())
    if kind is BaselineKind.RANDOM:
        return RandomScorer(train.n_pois, seed)
    from .trainer import train as fit
    base = hyper or HyperParams(variant=Variant.SEER, seed=seed)
    params, _ = fit(train, replace(base, variant=Variant.SEER, alpha=0.0))
    return params
