"""Joint SGD over the skip-gram and pairwise-preference objectives.

One pass over a check-in ``<u, l_i>`` does, in order:

1. for each context POI within ``k`` positions: one context update, then
   ``h`` negative updates against noise-table draws outside the sequence;
2. ``m`` uniform draws of POIs the user never checked in, turned into
   preference pairs (flat, or geo-discriminated for GT-SEER), each followed
   by one preference update.

All update rules read pre-update values on their right-hand sides, so every
step is exactly ``weight * gradient`` of its objective term.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .checkins import Dataset
from .model import (HyperParams, MaterializedSample, ModelParams, Variant, init_params,
                    log_sigmoid, objective_oracle, save_model, sigmoid)
from .sampling import (SamplingError, _draw_negative, _draw_unchecked, _fill_preference_pairs,
                       build_noise_table, build_preference_pairs, extract_context_pairs,
                       sample_embedding_negatives, sample_preference_candidates)

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


class TrainingDivergedError(RuntimeError):
    pass


@njit(cache=True, nogil=True)
def context_update(L_in, L_out, T, target, context, state, alpha, temporal):
    """Ascend alpha * log sigma(l'_c . (l_i + t_s)); returns the pre-update log-sigmoid."""
    d = L_in.shape[1]
    x = 0.0
    for j in range(d):
        q = L_in[target, j] + (T[state, j] if temporal else 0.0)
        x += L_out[context, j] * q
    g = alpha * (1.0 - sigmoid(x))
    for j in range(d):
        li = L_in[target, j]
        ts = T[state, j] if temporal else 0.0
        lc = L_out[context, j]
        L_in[target, j] = li + g * lc
        if temporal:
            T[state, j] = ts + g * lc
        L_out[context, j] = lc + g * (li + ts)
    return log_sigmoid(x)


@njit(cache=True, nogil=True)
def negative_update(L_in, L_out, T, target, negative, state, alpha, temporal):
    """Ascend alpha * log sigma(-l'_k . (l_i + t_s)); returns the pre-update log-sigmoid."""
    d = L_in.shape[1]
    x = 0.0
    for j in range(d):
        q = L_in[target, j] + (T[state, j] if temporal else 0.0)
        x += L_out[negative, j] * q
    g = alpha * sigmoid(x)
    for j in range(d):
        li = L_in[target, j]
        ts = T[state, j] if temporal else 0.0
        lk = L_out[negative, j]
        L_in[target, j] = li - g * lk
        if temporal:
            T[state, j] = ts - g * lk
        L_out[negative, j] = lk - g * (li + ts)
    return log_sigmoid(-x)


@njit(cache=True, nogil=True)
def preference_update(U, L_in, user, preferred, dominated, beta):
    """Ascend beta * log sigma(u . (l_i - l_n)); returns the pre-update log-sigmoid."""
    d = U.shape[1]
    x = 0.0
    for j in range(d):
        x += U[user, j] * (L_in[preferred, j] - L_in[dominated, j])
    g = beta * (1.0 - sigmoid(x))
    for j in range(d):
        u = U[user, j]
        a = L_in[preferred, j]
        b = L_in[dominated, j]
        U[user, j] = u + g * (a - b)
        L_in[preferred, j] = a + g * u
        L_in[dominated, j] = b - g * u
    return log_sigmoid(x)


@njit(cache=True, nogil=True)
def _run_epoch(U, L_in, L_out, T, seq_ptr, seq_pois, seq_users, seq_states, order,
               chk_ptr, chk_pois, cdf, coords, k, h, m, alpha, beta, s, temporal, geo,
               rng, counts):
    """One pass over the sequences listed in ``order``.

    ``counts`` accumulates (context, negative, preference) update counts.
    Returns the summed weighted log-sigmoid of every term visited, evaluated
    just before its update.
    """
    n_pois = L_in.shape[0]
    cands = np.empty(m, dtype=np.int64)
    pref = np.empty(m + m * m, dtype=np.int64)
    dom = np.empty(m + m * m, dtype=np.int64)
    emb_obj = 0.0
    pref_obj = 0.0
    for q in range(order.shape[0]):
        sq = order[q]
        start = seq_ptr[sq]
        end = seq_ptr[sq + 1]
        user = seq_users[sq]
        state = seq_states[sq]
        for p in range(start, end):
            target = seq_pois[p]
            if alpha != 0.0:
                lo = max(start, p - k)
                hi = min(end, p + k + 1)
                for c in range(lo, hi):
                    if c == p:
                        continue
                    emb_obj += context_update(L_in, L_out, T, target, seq_pois[c], state, alpha, temporal)
                    counts[0] += 1
                    for _ in range(h):
                        neg = _draw_negative(cdf, seq_pois, start, end, rng)
                        emb_obj += negative_update(L_in, L_out, T, target, neg, state, alpha, temporal)
                        counts[1] += 1
            if m > 0:
                for j in range(m):
                    cands[j] = _draw_unchecked(n_pois, chk_pois, chk_ptr[user], chk_ptr[user + 1], rng)
                n = _fill_preference_pairs(target, cands, geo, s, coords, pref, dom)
                for j in range(n):
                    pref_obj += preference_update(U, L_in, user, pref[j], dom[j], beta)
                counts[2] += n
    return alpha * emb_obj + beta * pref_obj


@dataclass
class TrainReport:
    epochs_run: int = 0
    objective: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    epoch_times: list[float] = field(default_factory=list)
    context_updates: int = 0
    negative_updates: int = 0
    preference_updates: int = 0
    threads: int = 1

    def to_text(self) -> str:
        lines = [f"epochs_run={self.epochs_run}",
                 f"wall_time_s={self.wall_time:.6f}",
                 f"threads={self.threads}",
                 f"context_updates={self.context_updates}",
                 f"negative_updates={self.negative_updates}",
                 f"preference_updates={self.preference_updates}"]
        lines += [f"objective_epoch_{i + 1}={v:.10g}" for i, v in enumerate(self.objective)]
        return "\n".join(lines) + "\n"


def _check_finite(params: ModelParams, epoch: int) -> None:
    for name, mat in zip(("U", "L_in", "L_out", "T"), params.matrices()):
        bad = ~np.isfinite(mat)
        big = np.abs(np.where(bad, 0.0, mat)).max(initial=0.0)
        if bad.any() or big > DIVERGENCE_LIMIT:
            raise TrainingDivergedError(
                f"epoch {epoch}: matrix {name} diverged "
                f"({int(bad.sum())} non-finite entries, max |entry| {big:.3g}); "
                "lower alpha/beta")


def _validate_sampling(dataset: Dataset, hyper: HyperParams, n_positive: int) -> None:
    if hyper.alpha > 0:
        for seq in dataset.sequences:
            if len(seq.pois) > 1 and len(set(seq.pois)) >= n_positive:
                raise SamplingError(f"no negative POI available outside a sequence of {seq.user_id}")
    for u, checked in enumerate(dataset.user_pois):
        if len(checked) >= dataset.n_pois:
            raise SamplingError(f"user {dataset.user_ids[u]} has checked in at every POI")


def train(dataset: Dataset, hyper: HyperParams, threads: int = 1, init: ModelParams | None = None,
          checkpoint_every: int = 0, checkpoint_path=None) -> tuple[ModelParams, TrainReport]:
    """Learn U, L_in, L_out and T on ``dataset`` (the training split).

    ``threads > 1`` switches to lock-free parallel updates: sequences are
    split across workers that write shared parameters without
    synchronization.  That mode is not reproducible bit-for-bit.
    """
    if not dataset.checkins:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(hyper.seed)
    params = init_params(dataset.n_users, dataset.n_pois, hyper.d, rng, hyper.variant)
    if init is not None:
        params.U[:], params.L_in[:], params.L_out[:], params.T[:] = init.matrices()
    params.user_ids = list(dataset.user_ids)
    params.poi_ids = list(dataset.poi_ids)

    table = build_noise_table(dataset.checkin_counts)
    _validate_sampling(dataset, hyper, int(np.count_nonzero(table.probs)))
    seq_ptr, seq_pois, seq_users, seq_states = dataset.sequence_arrays()
    chk_ptr, chk_pois = dataset.checked_arrays()
    geo = hyper.variant is Variant.GT_SEER
    coords = np.ascontiguousarray(dataset.poi_coords, dtype=np.float64)
    if geo and np.isnan(coords).any():
        raise ValueError("GT-SEER needs coordinates for every POI in the index")

    report = TrainReport(threads=threads)
    t_start = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(seq_ptr) - 1).astype(np.int64)
        counts = np.zeros(3, dtype=np.int64)
        common = (seq_ptr, seq_pois, seq_users, seq_states)
        tail = (chk_ptr, chk_pois, table.cdf, coords, hyper.k, hyper.h, hyper.m,
                float(hyper.alpha), float(hyper.beta), float(hyper.s),
                hyper.variant.temporal, geo)
        if threads <= 1:
            obj = _run_epoch(*params.matrices(), *common, order, *tail, rng, counts)
        else:
            chunks = np.array_split(order, threads)
            streams = rng.spawn(threads)
            per_counts = [np.zeros(3, dtype=np.int64) for _ in range(threads)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(_run_epoch, *params.matrices(), *common, chunk, *tail, g, c)
                           for chunk, g, c in zip(chunks, streams, per_counts)]
                obj = sum(f.result() for f in futures)
            counts = sum(per_counts)
        report.objective.append(float(obj))
        report.context_updates += int(counts[0])
        report.negative_updates += int(counts[1])
        report.preference_updates += int(counts[2])
        report.epochs_run = epoch
        report.epoch_times.append(time.perf_counter() - t0)
        _check_finite(params, epoch)
        log.info("epoch %d objective %.6g (%.2fs)", epoch, obj, report.epoch_times[-1])
        if checkpoint_every and checkpoint_path and epoch % checkpoint_every == 0:
            save_model(params, checkpoint_path)
    report.wall_time = time.perf_counter() - t_start
    return params, report


def expected_update_counts(dataset: Dataset, hyper: HyperParams) -> tuple[int, int, int | None]:
    """Per-epoch (context, negative, preference) update totals.

    Preference totals are only fixed for the flat-pair variants; GT-SEER's
    depends on how candidates classify, so ``None`` is returned there.
    """
    contexts = 0
    if hyper.alpha != 0:
        for seq in dataset.sequences:
            n = len(seq.pois)
            contexts += sum(min(n, i + hyper.k + 1) - max(0, i - hyper.k) - 1 for i in range(n))
    prefs = None if hyper.variant is Variant.GT_SEER else hyper.m * len(dataset.checkins)
    return contexts, contexts * hyper.h, prefs


def materialize_sample(dataset: Dataset, hyper: HyperParams, rng: np.random.Generator) -> MaterializedSample:
    """Draw one epoch's worth of terms through the public sampling functions.

    Used to pin the stochastic parts of the objective for gradient checks.
    """
    table = build_noise_table(dataset.checkin_counts)
    sample = MaterializedSample()
    for seq in dataset.sequences:
        members = np.array([dataset.poi_index[p] for p in seq.pois], dtype=np.int64)
        user = dataset.user_index[seq.user_id]
        for pair in extract_context_pairs(members, hyper.k, seq.temporal_state):
            negs = sample_embedding_negatives(members, hyper.h, table, rng)
            sample.context_terms.append((pair.target, pair.context, int(seq.temporal_state),
                                         tuple(int(x) for x in negs)))
        for poi in members:
            cands = sample_preference_candidates(user, hyper.m, dataset, rng)
            for t in build_preference_pairs(int(poi), user, cands, hyper.variant, hyper.s,
                                            dataset.poi_coords):
                sample.preference_terms.append((t.user, t.preferred, t.dominated))
    return sample


def apply_sample(params: ModelParams, sample: MaterializedSample, alpha: float, beta: float,
                 temporal: bool) -> None:
    """Apply every update in ``sample`` once, in order."""
    U, L_in, L_out, T = params.matrices()
    for target, context, state, negatives in sample.context_terms:
        context_update(L_in, L_out, T, target, context, state, alpha, temporal)
        for neg in negatives:
            negative_update(L_in, L_out, T, target, neg, state, alpha, temporal)
    for u, i, n in sample.preference_terms:
        preference_update(U, L_in, u, i, n, beta)


def analytic_gradient(params: ModelParams, sample: MaterializedSample, alpha: float, beta: float,
                      temporal: bool) -> list[np.ndarray]:
    """Sum of the update-rule steps of every term, each taken from the same point.

    Matches the gradient of :func:`objective_oracle`.
    """
    grads = [np.zeros_like(m) for m in params.matrices()]

    def accumulate(step):
        trial = params.copy()
        step(trial)
        for g, new, old in zip(grads, trial.matrices(), params.matrices()):
            g += new - old

    for target, context, state, negatives in sample.context_terms:
        accumulate(lambda p: context_update(p.L_in, p.L_out, p.T, target, context, state, alpha, temporal))
        for neg in negatives:
            accumulate(lambda p: negative_update(p.L_in, p.L_out, p.T, target, neg, state, alpha, temporal))
    for u, i, n in sample.preference_terms:
        accumulate(lambda p: preference_update(p.U, p.L_in, u, i, n, beta))
    return grads


def finite_difference_gradient(params: ModelParams, sample: MaterializedSample, alpha: float,
                               beta: float, temporal: bool, step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of :func:`objective_oracle` for every parameter entry."""
    probe = params.copy()
    grads = []
    for mat in probe.matrices():
        g = np.zeros_like(mat)
        for idx in np.ndindex(mat.shape):
            orig = mat[idx]
            mat[idx] = orig + step
            up = objective_oracle(probe, sample, alpha, beta, temporal)
            mat[idx] = orig - step
            down = objective_oracle(probe, sample, alpha, beta, temporal)
            mat[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads
