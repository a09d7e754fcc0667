"""Planted-structure comparison of SEER variants against baselines, and a scaling probe."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .checkins import Dataset, chronological_split, filter_dataset
from .evaluation import DEFAULT_NS, BaselineKind, EvalReport, baseline_scores, evaluate
from .model import HyperParams, Variant, default_beta
from .synth import SynthConfig, generate
from .trainer import train

MODELS = ("BPR_EQUIV", "SEER", "T-SEER", "GT-SEER", "POPULARITY", "RANDOM")


def prepare(cfg: SynthConfig, min_users_per_poi: int = 5, min_checkins_per_user: int = 10,
            ratio: float = 0.8) -> tuple[Dataset, Dataset]:
    corpus = generate(cfg)
    kept = filter_dataset(corpus.checkins, min_users_per_poi, min_checkins_per_user)
    return chronological_split(Dataset.from_checkins(kept), ratio)


def run_models(train_ds: Dataset, test_ds: Dataset, seed: int, base: HyperParams | None = None,
               ns=DEFAULT_NS, models=MODELS) -> dict[str, EvalReport]:
    """Train and evaluate each named model once; beta follows the per-variant default."""
    base = base or HyperParams()
    out = {}
    for name in models:
        if name in ("SEER", "T-SEER", "GT-SEER"):
            variant = Variant.parse(name)
            hyper = replace(base, variant=variant, beta=default_beta(variant, base.alpha), seed=seed)
            scorer, _ = train(train_ds, hyper)
        elif name == "BPR_EQUIV":
            hyper = replace(base, variant=Variant.SEER, beta=default_beta(Variant.SEER, base.alpha), seed=seed)
            scorer = baseline_scores(BaselineKind.BPR_EQUIV, train_ds, hyper)
        else:
            scorer = baseline_scores(BaselineKind[name], train_ds, seed=seed)
        out[name] = evaluate(scorer, train_ds, test_ds, ns)
    return out


@dataclass
class Comparison:
    seeds: tuple[int, ...]
    per_seed: dict[str, list[EvalReport]]
    wall_time: float

    def mean(self, name: str, metric: str = "recall", n: int = 10) -> float:
        return float(np.mean([getattr(r, metric)[n] for r in self.per_seed[name]]))

    def mean_report(self, name: str) -> EvalReport:
        reps = self.per_seed[name]
        ns = reps[0].ns
        return EvalReport(ns, {n: self.mean(name, "precision", n) for n in ns},
                          {n: self.mean(name, "recall", n) for n in ns},
                          reps[0].users_evaluated, reps[0].users_skipped)


def planted_comparison(cfg: SynthConfig | None = None, seeds=range(5), base: HyperParams | None = None,
                       models=MODELS, ns=DEFAULT_NS) -> Comparison:
    """One fixed corpus, every model trained once per seed."""
    t0 = time.perf_counter()
    train_ds, test_ds = prepare(cfg or SynthConfig())
    per_seed: dict[str, list[EvalReport]] = {m: [] for m in models}
    for seed in seeds:
        for name, rep in run_models(train_ds, test_ds, seed, base, ns, models).items():
            per_seed[name].append(rep)
    return Comparison(tuple(seeds), per_seed, time.perf_counter() - t0)


def epoch_seconds(dataset: Dataset, hyper: HyperParams, epochs: int = 3) -> float:
    """Fastest single-threaded epoch over a short run (the first call also warms the JIT cache)."""
    _, report = train(dataset, replace(hyper, epochs=epochs))
    return min(report.epoch_times)
