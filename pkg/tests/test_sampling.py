import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoseer.checkins import Checkin, Dataset, DaySequence, TemporalState
from geoseer.model import Variant
from geoseer.sampling import (ContextPair, SamplingError, build_noise_table, build_preference_pairs,
                              extract_context_pairs, sample_embedding_negatives, sample_preference_candidates)


def within_3_sigma(count, n, p):
    sd = math.sqrt(n * p * (1 - p))
    return abs(count - n * p) <= 3 * sd + 1e-9


# ---------------------------------------------------------------- noise table

def test_noise_table_symmetric():
    t = build_noise_table([1, 1])
    assert t.probs.tolist() == [0.5, 0.5]


def test_noise_table_power_oracle():
    with mpmath.workdps(30):
        expected = float(mpmath.mpf(8) ** 0.75 / (mpmath.mpf(8) ** 0.75 + 1))
    t = build_noise_table([8, 1])
    assert expected == pytest.approx(0.8263, abs=1e-4)
    assert t.probs[0] == pytest.approx(expected, rel=1e-14)


def test_noise_table_power_zero_uniform_over_seen():
    t = build_noise_table([5, 0, 2, 9], power=0.0)
    assert t.probs.tolist() == pytest.approx([1 / 3, 0, 1 / 3, 1 / 3])


def test_noise_table_all_zero():
    with pytest.raises(SamplingError):
        build_noise_table([0, 0])


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=50).filter(any))
def test_noise_table_cdf_properties(counts):
    t = build_noise_table(counts)
    assert np.all(np.diff(t.cdf) >= 0)
    assert t.cdf[-1] == 1.0
    assert t.probs.sum() == pytest.approx(1.0)
    assert np.all(t.probs[np.asarray(counts) == 0] == 0)


# ---------------------------------------------------------------- negatives

def test_negatives_exclude_sequence_and_follow_distribution():
    counts = np.array([1, 2, 3, 8, 0, 5])
    t = build_noise_table(counts)
    seq = [2, 5]
    draws = sample_embedding_negatives(seq, 30000, t, np.random.default_rng(1))
    assert not np.isin(draws, seq).any() and not (draws == 4).any()
    w = np.where(counts > 0, counts ** 0.75, 0.0)
    w[seq] = 0
    p = w / w.sum()
    hist = np.bincount(draws, minlength=len(counts))
    for j in range(len(counts)):
        assert within_3_sigma(hist[j], len(draws), p[j])


def test_negatives_accept_day_sequence():
    t = build_noise_table([1, 1, 1])
    seq = DaySequence("u", 0, TemporalState.WEEKDAY, ("a", "b"))
    draws = sample_embedding_negatives(seq, 20, t, np.random.default_rng(0), poi_index={"a": 0, "b": 1, "c": 2})
    assert set(draws.tolist()) == {2}


def test_negatives_forced_outcome_and_zero():
    t = build_noise_table([4, 1])
    assert sample_embedding_negatives([0], 25, t, np.random.default_rng(0)).tolist() == [1] * 25
    assert len(sample_embedding_negatives([0], 0, t, np.random.default_rng(0))) == 0


def test_negatives_no_eligible_poi():
    t = build_noise_table([3, 0, 4])
    with pytest.raises(SamplingError):
        sample_embedding_negatives([0, 2], 1, t, np.random.default_rng(0))


def test_negatives_deterministic():
    t = build_noise_table(np.arange(1, 20))
    a = sample_embedding_negatives([3], 50, t, np.random.default_rng(7))
    b = sample_embedding_negatives([3], 50, t, np.random.default_rng(7))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- context windows

def _brute_pairs(n, k):
    return sum(1 for i in range(n) for j in range(n) if i != j and abs(i - j) <= k)


def test_context_pairs_k1():
    got = {(p.target, p.context) for p in extract_context_pairs([1, 2, 3], 1)}
    assert got == {(1, 2), (2, 1), (2, 3), (3, 2)}


def test_context_pairs_singleton_and_length_five():
    assert extract_context_pairs([4], 3) == []
    # per target position the clipped window holds 2, 3, 4, 3, 2 contexts
    assert len(extract_context_pairs(list(range(5)), 2)) == 14 == _brute_pairs(5, 2)


def test_context_pairs_carry_sequence_state():
    seq = DaySequence("u", 3, TemporalState.WEEKEND, ("a", "b"))
    pairs = extract_context_pairs(seq, 1, poi_index={"a": 0, "b": 1})
    assert pairs == [ContextPair(0, 1, TemporalState.WEEKEND), ContextPair(1, 0, TemporalState.WEEKEND)]


@given(st.integers(0, 30), st.integers(1, 10))
def test_context_pair_count_matches_enumeration(n, k):
    pairs = extract_context_pairs(list(range(n)), k)
    assert len(pairs) == _brute_pairs(n, k)
    assert all(0 < abs(p.target - p.context) <= k for p in pairs)


# ---------------------------------------------------------------- candidates

def _dataset(visits, extra_pois=()):
    cks = [Checkin(u, p, 0.0, 0.0, i) for i, (u, p) in enumerate(visits)]
    cks += [Checkin("zz", p, 0.0, 0.0, 10_000) for p in extra_pois]
    return Dataset.from_checkins(cks)


def test_candidates_uniform_over_unchecked():
    ds = _dataset([("u", "p0"), ("u", "p3")], extra_pois=[f"p{i}" for i in range(6)])
    user = ds.user_index["u"]
    checked = set(ds.user_pois[user].tolist())
    draws = sample_preference_candidates(user, 20000, ds, np.random.default_rng(3))
    assert not set(draws.tolist()) & checked
    hist = np.bincount(draws, minlength=ds.n_pois)
    free = [j for j in range(ds.n_pois) if j not in checked]
    for j in free:
        assert within_3_sigma(hist[j], len(draws), 1 / len(free))


def test_candidates_single_unchecked():
    ds = _dataset([("u", "a"), ("u", "b"), ("v", "c")])
    draws = sample_preference_candidates(ds.user_index["u"], 5, ds, np.random.default_rng(0))
    assert draws.tolist() == [ds.poi_index["c"]] * 5


def test_candidates_user_checked_everything():
    ds = _dataset([("u", "a"), ("u", "b"), ("v", "b")])
    with pytest.raises(SamplingError):
        sample_preference_candidates(ds.user_index["u"], 1, ds, np.random.default_rng(0))


@settings(max_examples=50)
@given(st.sets(st.integers(0, 29), min_size=1, max_size=29), st.integers(0, 2 ** 32 - 1))
def test_candidates_never_checked(checked, seed):
    visits = [("u", f"p{j}") for j in sorted(checked)] + [("v", f"p{j}") for j in range(30)]
    ds = _dataset(visits)
    user = ds.user_index["u"]
    draws = sample_preference_candidates(user, 40, ds, np.random.default_rng(seed))
    assert not np.isin(draws, ds.user_pois[user]).any()


# ---------------------------------------------------------------- preference pairs

COORDS = np.array([[0.0, 0.0], [0.0, 0.01], [0.0, 0.02], [0.0, 5.0], [0.0, 6.0]])


def test_flat_pairs():
    out = build_preference_pairs(0, 7, [1, 3, 4], Variant.SEER)
    assert [(t.user, t.preferred, t.dominated) for t in out] == [(7, 0, 1), (7, 0, 3), (7, 0, 4)]


def test_geo_pairs_two_near_one_far():
    out = build_preference_pairs(0, 7, [1, 2, 3], Variant.GT_SEER, s=10.0, coords=COORDS)
    got = {(t.preferred, t.dominated) for t in out}
    assert got == {(0, 1), (0, 2), (1, 3), (2, 3)} and len(out) == 4


def test_geo_pairs_all_far_is_empty():
    assert build_preference_pairs(0, 7, [3, 4], Variant.GT_SEER, s=10.0, coords=COORDS) == []


def test_geo_pairs_all_near_only_first_relation():
    out = build_preference_pairs(0, 7, [1, 2], Variant.GT_SEER, s=10.0, coords=COORDS)
    assert [(t.preferred, t.dominated) for t in out] == [(0, 1), (0, 2)]


def test_geo_infinite_threshold_equals_flat():
    cands = [1, 3, 4, 3]
    assert (build_preference_pairs(0, 1, cands, Variant.GT_SEER, s=np.inf, coords=COORDS)
            == build_preference_pairs(0, 1, cands, Variant.T_SEER))


def test_geo_needs_coordinates():
    with pytest.raises(ValueError):
        build_preference_pairs(0, 1, [1], Variant.GT_SEER, s=1.0)


def _brute_geo(poi, cands, s, coords):
    from geoseer.geo import haversine_km
    near = [c for c in cands if haversine_km(*coords[poi], *coords[c]) <= s]
    far = [c for c in cands if haversine_km(*coords[poi], *coords[c]) > s]
    return [(poi, c) for c in near] + [(a, b) for a, b in itertools.product(near, far)]


@given(st.lists(st.integers(1, 4), max_size=12), st.floats(0.5, 800))
def test_geo_pairs_match_brute_force_and_bound(cands, s):
    out = build_preference_pairs(0, 2, cands, Variant.GT_SEER, s=s, coords=COORDS)
    assert [(t.preferred, t.dominated) for t in out] == _brute_geo(0, cands, s, COORDS)
    m = len(cands)
    assert len(out) <= m + m * m / 4
