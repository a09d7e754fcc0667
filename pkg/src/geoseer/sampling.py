"""Negative sampling, candidate sampling, context windows and preference pairs.

The ``_``-prefixed helpers are numba-compiled and shared with the training
kernel, so the public functions and the trainer draw from one code path.
They take a ``numpy.random.Generator``; numba advances the same underlying
bit generator state as numpy would.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .checkins import Dataset, DaySequence, TemporalState
from .geo import haversine_km
from .model import Variant


class SamplingError(RuntimeError):
    """No eligible item to sample from."""


@dataclass(frozen=True)
class NoiseTable:
    probs: np.ndarray
    cdf: np.ndarray


@dataclass(frozen=True)
class PreferenceTuple:
    user: int
    preferred: int
    dominated: int


@dataclass(frozen=True)
class ContextPair:
    target: int
    context: int
    temporal_state: TemporalState


def build_noise_table(checkin_counts, power: float = 0.75) -> NoiseTable:
    counts = np.asarray(checkin_counts, dtype=np.float64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValueError("counts must be a 1-d array of non-negative values")
    weights = np.where(counts > 0, counts ** power, 0.0)
    total = weights.sum()
    if not total > 0:
        raise SamplingError("noise table needs at least one non-zero count")
    probs = weights / total
    cdf = np.cumsum(probs)
    # the tail must be exactly 1 so every uniform draw in [0, 1) lands
    cdf[cdf >= cdf[np.nonzero(probs)[0][-1]]] = 1.0
    return NoiseTable(probs, cdf)


@njit(cache=True, nogil=True)
def _contains(arr, start, end, value):
    for j in range(start, end):
        if arr[j] == value:
            return True
    return False


@njit(cache=True, nogil=True)
def _draw_negative(cdf, seq, start, end, rng):
    """One noise-table draw, rejection-resampled until it is outside seq[start:end]."""
    while True:
        x = np.searchsorted(cdf, rng.random(), side="right")
        if not _contains(seq, start, end, x):
            return x


@njit(cache=True, nogil=True)
def _draw_unchecked(n_pois, checked, start, end, rng):
    """Uniform draw from [0, n_pois) minus the sorted slice checked[start:end]."""
    r = rng.integers(0, n_pois - (end - start))
    for j in range(start, end):
        if checked[j] <= r:
            r += 1
        else:
            break
    return r


@njit(cache=True, nogil=True)
def _fill_preference_pairs(poi, cands, geo, s, coords, pref_out, dom_out):
    """Write preference pairs for one check-in into the output buffers.

    Flat mode: (poi > c) for every candidate.  Geo mode: (poi > ne) for each
    neighboring candidate, then (ne > nn) for every neighboring x
    non-neighboring combination.  Returns the number of pairs written.
    """
    n = 0
    if not geo:
        for c in cands:
            pref_out[n] = poi
            dom_out[n] = c
            n += 1
        return n
    near = np.empty(cands.shape[0], dtype=np.bool_)
    lat, lon = coords[poi, 0], coords[poi, 1]
    for j in range(cands.shape[0]):
        c = cands[j]
        near[j] = haversine_km(lat, lon, coords[c, 0], coords[c, 1]) <= s
    for j in range(cands.shape[0]):
        if near[j]:
            pref_out[n] = poi
            dom_out[n] = cands[j]
            n += 1
    for a in range(cands.shape[0]):
        if not near[a]:
            continue
        for b in range(cands.shape[0]):
            if not near[b]:
                pref_out[n] = cands[a]
                dom_out[n] = cands[b]
                n += 1
    return n


def _sequence_members(sequence, poi_index=None) -> np.ndarray:
    if isinstance(sequence, DaySequence):
        if poi_index is None:
            raise ValueError("a DaySequence needs poi_index to map ids to dense indices")
        return np.array([poi_index[p] for p in sequence.pois], dtype=np.int64)
    return np.asarray(sequence, dtype=np.int64)


def sample_embedding_negatives(sequence, h: int, table: NoiseTable, rng: np.random.Generator,
                               poi_index=None) -> np.ndarray:
    """``h`` noise-table draws, none of which is a member of ``sequence``.

    ``sequence`` is either dense POI indices or a :class:`DaySequence` plus
    ``poi_index``.
    """
    members = _sequence_members(sequence, poi_index)
    if h <= 0:
        return np.zeros(0, dtype=np.int64)
    outside = table.probs.copy()
    outside[members] = 0.0
    if not outside.sum() > 0:
        raise SamplingError("every POI with noise mass is inside the sequence")
    return np.array([_draw_negative(table.cdf, members, 0, len(members), rng) for _ in range(h)],
                    dtype=np.int64)


def extract_context_pairs(sequence, k: int, temporal_state=TemporalState.WEEKDAY,
                          poi_index=None) -> list[ContextPair]:
    if k < 1:
        raise ValueError("window must be >= 1")
    if isinstance(sequence, DaySequence):
        temporal_state = sequence.temporal_state
        pois = list(sequence.pois) if poi_index is None else [poi_index[p] for p in sequence.pois]
    else:
        pois = [int(p) for p in sequence]
    n = len(pois)
    return [ContextPair(pois[i], pois[j], temporal_state)
            for i in range(n)
            for j in range(max(0, i - k), min(n, i + k + 1)) if j != i]


def sample_preference_candidates(user: int, m: int, dataset: Dataset, rng: np.random.Generator) -> np.ndarray:
    """``m`` uniform draws, with replacement, from POIs the user has not checked in."""
    checked = dataset.user_pois[user]
    if len(checked) >= dataset.n_pois:
        raise SamplingError(f"user {user} has checked in at every POI")
    return np.array([_draw_unchecked(dataset.n_pois, checked, 0, len(checked), rng) for _ in range(m)],
                    dtype=np.int64)


def build_preference_pairs(poi: int, user: int, candidates, variant: Variant,
                           s: float = np.inf, coords=None) -> list[PreferenceTuple]:
    cands = np.asarray(candidates, dtype=np.int64)
    geo = variant is Variant.GT_SEER
    if geo and coords is None:
        raise ValueError("GT-SEER pairs need POI coordinates")
    coords = np.asarray(coords, dtype=np.float64) if geo else np.zeros((1, 2))
    size = len(cands) + len(cands) ** 2
    pref = np.empty(size, dtype=np.int64)
    dom = np.empty(size, dtype=np.int64)
    n = _fill_preference_pairs(poi, cands, geo, float(s), coords, pref, dom)
    return [PreferenceTuple(user, int(pref[j]), int(dom[j])) for j in range(n)]
