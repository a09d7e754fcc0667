import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoseer.checkins import (TemporalState, day_key, format_checkin, parse_checkin_log, segment_sequences,
                              temporal_state)
from geoseer.geo import haversine_km
from geoseer.synth import SynthConfig, SynthConfigError, generate


def small(**kw):
    base = dict(users=30, pois=60, clusters=4, days=28, seed=1)
    base.update(kw)
    return SynthConfig(**base)


def test_deterministic_given_seed():
    assert generate(small()).checkins == generate(small()).checkins
    assert generate(small()).checkins != generate(small(seed=2)).checkins


def test_noise_free_sequences_stay_in_one_cluster():
    corpus = generate(small(noise=0.0))
    for seq in segment_sequences(corpus.checkins):
        clusters = {corpus.poi_cluster[p] for p in seq.pois}
        assert len(clusters) == 1
        owner = corpus.weekend_cluster if seq.temporal_state is TemporalState.WEEKEND else corpus.weekday_cluster
        assert clusters == {owner[seq.user_id]}


def test_weekday_never_uses_weekend_clusters():
    corpus = generate(small(noise=0.0))
    weekend_clusters = set(corpus.weekend_cluster.values())
    for seq in segment_sequences(corpus.checkins):
        if seq.temporal_state is TemporalState.WEEKDAY:
            assert not {corpus.poi_cluster[p] for p in seq.pois} & weekend_clusters


def test_sequence_lengths_and_distinct_pois():
    corpus = generate(small(noise=0.0))
    for seq in segment_sequences(corpus.checkins):
        assert 2 <= len(seq.pois) <= 5
        assert len(set(seq.pois)) == len(seq.pois)


def test_noise_rate_close_to_setting():
    corpus = generate(small(noise=0.3, users=80, days=60))
    flags = np.array(corpus.noise_flags)
    sd = np.sqrt(0.3 * 0.7 / len(flags))
    assert abs(flags.mean() - 0.3) <= 3 * sd


def test_log_roundtrip_is_lossless():
    corpus = generate(small())
    text = "".join(format_checkin(c) + "\n" for c in corpus.checkins).encode()
    assert parse_checkin_log(io.BytesIO(text), strict=True) == corpus.checkins


def test_cluster_geometry():
    cfg = small()
    corpus = generate(cfg)
    pts = corpus.poi_coords
    for a in list(pts)[:20]:
        for b in list(pts)[:20]:
            d = haversine_km(*pts[a], *pts[b])
            if corpus.poi_cluster[a] == corpus.poi_cluster[b]:
                assert d <= 2 * cfg.radius_km + 0.01
            else:
                assert d >= cfg.spacing_km - 2 * cfg.radius_km - 0.01


def test_days_span_and_temporal_split():
    cfg = small(days=14, activity=1.0)
    corpus = generate(cfg)
    keys = {day_key(c.timestamp) for c in corpus.checkins}
    assert len(keys) == 14
    assert {temporal_state(k) for k in keys} == {TemporalState.WEEKDAY, TemporalState.WEEKEND}


@pytest.mark.parametrize("kw", [dict(users=0), dict(pois=10, clusters=4), dict(radius_km=25.0),
                                dict(noise=1.5), dict(activity=0.0)])
def test_invalid_configs(kw):
    with pytest.raises(SynthConfigError):
        generate(small(**kw))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 6), st.floats(0, 1))
def test_every_checkin_valid_and_time_ordered_per_day(seed, clusters, noise):
    corpus = generate(SynthConfig(users=6, pois=5 * clusters + 3, clusters=clusters, days=10,
                                  noise=noise, seed=seed))
    assert len(corpus.noise_flags) == len(corpus.checkins)
    for seq in segment_sequences(corpus.checkins):
        assert len(seq.pois) >= 1
