import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoseer.checkins import Checkin, Dataset, TemporalState, chronological_split
from geoseer.evaluation import (BaselineKind, EvalReport, PopularityScorer, RandomScorer, baseline_scores,
                                comparison_table, evaluate, precision_at_n, recall_at_n, recommend_top_n)
from geoseer.model import HyperParams, ModelParams, Variant, init_params
from geoseer.synth import SynthConfig, generate
from geoseer.trainer import train

from helpers import tiny_dataset


class TableScorer:
    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)
        self.n_pois = self.table.shape[1]

    def scores(self, user, state=TemporalState.WEEKDAY):
        return self.table[user]


# ---------------------------------------------------------------- single-list metrics

def test_metric_examples():
    assert precision_at_n([1, 2, 3], {7, 8}, 5) == 0.0
    assert precision_at_n([1, 2, 3, 4, 5], {2, 5, 9}, 5) == 0.4
    assert recall_at_n([1, 2, 3], {1, 3}, 5) == 1.0
    assert recall_at_n([1, 2, 3], {3, 7, 8, 9}, 3) == 0.25
    assert recall_at_n([1], set(), 3) is None
    with pytest.raises(ValueError):
        precision_at_n([1, 2, 3], {1}, 2)


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 30), unique=True, max_size=10), st.sets(st.integers(0, 30), max_size=12),
       st.integers(1, 10))
def test_metrics_match_brute_force(rec, visited, n):
    rec = rec[:n]
    hits = sum(1 for r in rec if r in visited)
    assert precision_at_n(rec, visited, n) == hits / n
    assert precision_at_n(rec, visited, n) * n == pytest.approx(hits)
    if visited:
        assert recall_at_n(rec, visited, n) == hits / len(visited)
        assert 0.0 <= recall_at_n(rec, visited, n) <= 1.0


@given(st.lists(st.integers(0, 40), unique=True, min_size=1, max_size=20), st.sets(st.integers(0, 40), min_size=1))
def test_recall_monotone_in_n(ranking, visited):
    vals = [recall_at_n(ranking[:n], visited, n) for n in range(1, len(ranking) + 1)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- recommendation lists

def test_recommend_clips_to_pool():
    s = TableScorer([[0.1, 0.9, 0.5, 0.3]])
    rec = recommend_top_n(s, 0, TemporalState.WEEKDAY, 5, exclude=[3])
    assert rec.pois == [1, 2, 0] and rec.scores == [0.9, 0.5, 0.1]


def test_recommend_ties_by_index():
    rec = recommend_top_n(TableScorer([np.zeros(6)]), 0, TemporalState.WEEKEND, 4, exclude=[1])
    assert rec.pois == [0, 2, 3, 4]


def test_recommend_errors():
    with pytest.raises(ValueError):
        recommend_top_n(TableScorer([[1.0, 2.0]]), 0, 0, 3, exclude=[0, 1])
    with pytest.raises(ValueError):
        recommend_top_n(TableScorer([[1.0, 2.0]]), 0, 0, 0)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=25), st.data())
def test_recommend_invariants(scores, data):
    exclude = data.draw(st.sets(st.integers(0, len(scores) - 1), max_size=len(scores) - 1))
    n = data.draw(st.integers(1, 30))
    rec = recommend_top_n(TableScorer([scores]), 0, 0, n, exclude)
    assert len(rec.pois) == min(n, len(scores) - len(exclude))
    assert not set(rec.pois) & exclude and len(set(rec.pois)) == len(rec.pois)
    assert all(a >= b for a, b in zip(rec.scores, rec.scores[1:]))
    brute = sorted((j for j in range(len(scores)) if j not in exclude), key=lambda j: (-scores[j], j))[:n]
    assert rec.pois == brute


def test_temporal_model_lists_identical_across_states():
    p = init_params(4, 30, 6, np.random.default_rng(0), Variant.T_SEER)
    p.T *= 100
    for u in range(4):
        a = recommend_top_n(p, u, TemporalState.WEEKDAY, 20, [u])
        b = recommend_top_n(p, u, TemporalState.WEEKEND, 20, [u])
        assert a.pois == b.pois


# ---------------------------------------------------------------- evaluate

@pytest.fixture(scope="module")
def split():
    ds = tiny_dataset(users=30, pois=60, clusters=4, days=40, seed=2)
    return chronological_split(ds, 0.8)


def brute_evaluate(table, train, test, ns):
    p, r, skipped = {n: [] for n in ns}, {n: [] for n in ns}, 0
    for u in range(train.n_users):
        seen = {c.poi_id for c in train.checkins if c.user_id == train.user_ids[u]}
        visited = {c.poi_id for c in test.checkins if c.user_id == train.user_ids[u]} - seen
        if not visited:
            skipped += 1
            continue
        order = sorted((j for j in range(train.n_pois) if train.poi_ids[j] not in seen),
                       key=lambda j: (-table[u][j], j))
        for n in ns:
            top = {train.poi_ids[j] for j in order[:n]}
            p[n].append(len(top & visited) / n)
            r[n].append(len(top & visited) / len(visited))
    return {n: sum(v) / len(v) for n, v in p.items()}, {n: sum(v) / len(v) for n, v in r.items()}, skipped


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_evaluate_matches_brute_force(split, seed):
    train_ds, test_ds = split
    table = np.random.default_rng(seed).integers(0, 4, (train_ds.n_users, train_ds.n_pois)).astype(float)
    rep = evaluate(TableScorer(table), train_ds, test_ds, (1, 5, 10))
    bp, br, skipped = brute_evaluate(table, train_ds, test_ds, (1, 5, 10))
    assert rep.precision == pytest.approx(bp, rel=1e-12) and rep.recall == pytest.approx(br, rel=1e-12)
    assert rep.users_skipped == skipped
    assert rep.users_evaluated + rep.users_skipped == train_ds.n_users


def test_oracle_model_has_full_recall(split):
    train_ds, test_ds = split
    table = np.zeros((train_ds.n_users, train_ds.n_pois))
    for u in range(train_ds.n_users):
        table[u, list(test_ds.user_pois[u])] = 1.0
    rep = evaluate(TableScorer(table), train_ds, test_ds, (20,))
    max_visited = max(len(set(test_ds.user_pois[u]) - set(train_ds.user_pois[u])) for u in range(train_ds.n_users))
    assert max_visited <= 20
    assert rep.recall[20] == 1.0


def test_skipped_users_counted():
    cks = [Checkin("a", "p", 0, 0, 1), Checkin("a", "q", 0, 0, 2), Checkin("a", "p", 0, 0, 3),
           Checkin("b", "q", 0, 0, 1), Checkin("b", "r", 0, 0, 2)]
    tr, te = chronological_split(Dataset.from_checkins(cks), 0.5)
    rep = evaluate(TableScorer(np.zeros((2, 3))), tr, te, (1,))
    # a revisits p (seen in train) so a is skipped; b finds r
    assert (rep.users_evaluated, rep.users_skipped) == (1, 1)


def test_evaluate_rejects_mismatched_spaces(split):
    train_ds, test_ds = split
    with pytest.raises(ValueError):
        evaluate(TableScorer(np.zeros((train_ds.n_users, 3))), train_ds, test_ds)
    with pytest.raises(ValueError):
        evaluate(TableScorer(np.zeros((train_ds.n_users, train_ds.n_pois))), train_ds, test_ds, (0,))


def test_relabeling_invariance(split):
    train_ds, test_ds = split
    table = np.random.default_rng(0).normal(size=(train_ds.n_users, train_ds.n_pois))
    rep = evaluate(TableScorer(table), train_ds, test_ds)
    perm = {pid: f"x{j}" for j, pid in enumerate(reversed(train_ds.poi_ids))}

    def relabel(ds):
        return [Checkin(c.user_id, perm[c.poi_id], c.lat, c.lon, c.timestamp) for c in ds.checkins]

    new_index = {perm[pid]: j for j, pid in enumerate(reversed(train_ds.poi_ids))}
    tr2 = Dataset.from_checkins(relabel(train_ds), poi_index=new_index, user_index=train_ds.user_index)
    te2 = Dataset.from_checkins(relabel(test_ds), poi_index=new_index, user_index=train_ds.user_index)
    cols = [train_ds.poi_index[pid] for pid in reversed(train_ds.poi_ids)]
    rep2 = evaluate(TableScorer(table[:, cols]), tr2, te2)
    assert rep2.precision == pytest.approx(rep.precision, rel=1e-12)
    assert rep2.recall == pytest.approx(rep.recall, rel=1e-12)


def test_report_csv_and_table():
    rep = EvalReport((1, 5), {1: 0.5, 5: 0.2}, {1: 0.1, 5: 0.3}, 10, 2)
    rows = rep.to_csv().strip().split("\n")
    assert rows[0] == "metric,N,value" and rows[1] == "precision,1,0.5" and rows[-1] == "users_skipped,,2"
    table = comparison_table({"A": rep, "B": rep})
    assert table.split("\n")[0] == "model,P@1,P@5,R@1,R@5"
    assert table.split("\n")[1].startswith("A,0.500000")


# ---------------------------------------------------------------- baselines

def test_popularity_ranks_most_checked_first(split):
    train_ds, _ = split
    s = baseline_scores(BaselineKind.POPULARITY, train_ds)
    top = int(np.argmax(train_ds.checkin_counts))
    assert recommend_top_n(s, 3, 0, 1).pois == [top]
    assert isinstance(s, PopularityScorer)


def test_random_baseline_reproducible():
    a = RandomScorer(50, seed=4)
    b = RandomScorer(50, seed=4)
    assert recommend_top_n(a, 2, 0, 10).pois == recommend_top_n(b, 2, 0, 10).pois
    assert not np.array_equal(a.scores(1), a.scores(2))
    assert baseline_scores("random", tiny_dataset(), seed=3).seed == 3


def test_bpr_equivalent_keeps_output_layer(split):
    train_ds, _ = split
    hyper = HyperParams(d=8, epochs=2, seed=6, variant=Variant.SEER)
    p = baseline_scores(BaselineKind.BPR_EQUIV, train_ds, hyper)
    ref = init_params(train_ds.n_users, train_ds.n_pois, 8, np.random.default_rng(6))
    assert np.array_equal(p.L_out, ref.L_out)
    assert not np.array_equal(p.L_in, ref.L_in)


def test_random_model_matches_hypergeometric_expectation():
    corpus = generate(SynthConfig(seed=5, activity=0.2))
    train_ds, test_ds = chronological_split(Dataset.from_checkins(corpus.checkins), 0.8)
    rep = evaluate(RandomScorer(train_ds.n_pois, seed=1), train_ds, test_ds, (5,))
    n = 5
    means, variances = [], []
    for u in range(train_ds.n_users):
        seen = set(train_ds.user_pois[u].tolist())
        k = len(set(test_ds.user_pois[u].tolist()) - seen)
        if not k:
            continue
        big_n = train_ds.n_pois - len(seen)
        means.append(k / big_n)
        var_hits = n * (k / big_n) * (1 - k / big_n) * (big_n - n) / (big_n - 1)
        variances.append(var_hits / n ** 2)
    expected = sum(means) / len(means)
    sd = math.sqrt(sum(variances)) / len(means)
    assert len(means) == rep.users_evaluated
    assert abs(rep.precision[5] - expected) <= 3 * sd
