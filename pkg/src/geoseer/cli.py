"""Command-line front end: synth, analyze, train, evaluate, recommend.

Settings resolve as command-line flag > ``--config`` file (``key=value``
lines) > built-in default.  Exit codes: 0 ok, 1 usage, 2 unreadable input,
3 no data after filtering, 4 training diverged, 5 model/data index
mismatch, 6 unknown user.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checkins as ck
from .evaluation import (DEFAULT_NS, BaselineKind, baseline_scores, comparison_table, evaluate,
                         recommend_top_n)
from .model import HyperParams, ModelFormatError, Variant, default_beta, load_model, save_model
from .synth import SynthConfig, SynthConfigError, generate
from .trainer import TrainingDivergedError, train

EXIT_USAGE, EXIT_INPUT, EXIT_EMPTY, EXIT_DIVERGED, EXIT_MISMATCH, EXIT_UNKNOWN_USER = 1, 2, 3, 4, 5, 6


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Effective settings for one invocation, after defaults and config file."""

    subcommand: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def echo(self) -> str:
        lines = [f"# subcommand={self.subcommand}"]
        lines += [f"# {k}={v}" for k, v in sorted(self.values.items()) if k != "config"]
        return "\n".join(lines) + "\n"

    def hyper(self) -> HyperParams:
        variant = Variant.parse(self.variant)
        beta = self.beta if self.beta is not None else default_beta(variant, self.alpha)
        return HyperParams(d=self.dim, k=self.window, h=self.negatives, m=self.candidates,
                           alpha=self.alpha, beta=beta, s=self.distance_km, epochs=self.epochs,
                           variant=variant, seed=self.seed)


def _ns(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad N list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("N values must be positive integers")
    return values


def _optional_float(text):
    return None if str(text).lower() in ("", "none", "auto") else float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


_SYNTH_FLAGS = {"users": int, "pois": int, "clusters": int, "days": int, "noise": float,
                "activity": float, "radius_km": float, "spacing_km": float, "zipf": float,
                "user_jitter": float, "typed_regions": _bool, "seed": int}

DEFAULTS = {
    "synth": dict(output=None, **{f.name: f.default for f in fields(SynthConfig) if f.name in _SYNTH_FLAGS}),
    "analyze": dict(input=None, output_dir=None, n_random_pairs=5000, seed=0),
    "train": dict(input=None, model=None, report=None, train_log=None, test_log=None,
                  train_ratio=0.8, variant="gt-seer", dim=50, window=3, negatives=5, candidates=10,
                  alpha=0.05, beta=None, distance_km=10.0, epochs=20, seed=0, threads=1,
                  checkpoint_every=0),
    "evaluate": dict(model=None, train=None, test=None, ns=DEFAULT_NS, output=None, table=None,
                     baseline=[], seed=0),
    "recommend": dict(model=None, train=None, user=[], top=10, state="weekday"),
}
_DATA_DEFAULTS = dict(tz_offset=0.0, strict=False, min_users_per_poi=5, min_checkins_per_user=10)
for _cmd in ("analyze", "train"):
    DEFAULTS[_cmd].update(_DATA_DEFAULTS)
for _cmd in ("evaluate", "recommend"):
    DEFAULTS[_cmd].update(tz_offset=0.0, strict=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geoseer", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def add(name, help):
        p = sub.add_parser(name, help=help, argument_default=S)
        p.add_argument("--config", help="key=value settings file; flags override it")
        return p

    def data_flags(p, filtering=True):
        p.add_argument("--tz-offset", type=float, help="hours east of UTC used to cut days")
        p.add_argument("--strict", action="store_const", const=True, help="abort on malformed lines")
        if filtering:
            p.add_argument("--min-users-per-poi", type=int)
            p.add_argument("--min-checkins-per-user", type=int)

    p = add("synth", "write a synthetic check-in log with planted structure")
    p.add_argument("--output", required=True)
    for name, typ in _SYNTH_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ)

    p = add("analyze", "sequence correlation report and day/hour histogram")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--n-random-pairs", type=int)
    p.add_argument("--seed", type=int)
    data_flags(p)

    p = add("train", "fit a SEER / T-SEER / GT-SEER model")
    p.add_argument("--input", required=True, help="check-in log (filtered and split here)")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--report")
    p.add_argument("--train-log")
    p.add_argument("--test-log")
    p.add_argument("--train-ratio", type=float, help="per-user chronological split; 1 disables it")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=_optional_float)
    p.add_argument("--distance-km", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--checkpoint-every", type=int)
    data_flags(p)

    p = add("evaluate", "precision and recall at N")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ns", type=_ns)
    p.add_argument("--output", help="metric,N,value CSV; stdout when omitted")
    p.add_argument("--table", help="model x metric CSV including any --baseline")
    p.add_argument("--baseline", action="append", choices=[k.value for k in BaselineKind])
    p.add_argument("--seed", type=int)
    data_flags(p, filtering=False)

    p = add("recommend", "top-N POIs for given users")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True, help="training log; its POIs are excluded per user")
    p.add_argument("--user", action="append", required=True)
    p.add_argument("-n", "--top", type=int)
    p.add_argument("--state", choices=["weekday", "weekend"])
    data_flags(p, filtering=False)
    return parser


def _read_config_file(path, subparser_actions) -> dict:
    types = {a.dest: a.type for a in subparser_actions}
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read config file: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(EXIT_USAGE, f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise CliError(EXIT_USAGE, f"{path}:{n}: unknown setting {key!r}")
        conv = types[key]
        try:
            out[key] = conv(value) if conv else value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CliError(EXIT_USAGE, f"{path}:{n}: {exc}") from exc
    return out


def resolve(argv=None) -> tuple[RunConfig, bool]:
    parser = build_parser()
    ns = parser.parse_args(argv)
    given = vars(ns).copy()
    cmd = given.pop("subcommand")
    verbose = given.pop("verbose", False)
    values = dict(DEFAULTS[cmd])
    if given.get("config"):
        sub_actions = parser._subparsers._group_actions[0].choices[cmd]._actions
        values.update(_read_config_file(given["config"], sub_actions))
    values.update(given)
    if cmd == "train" and values["beta"] is None:
        try:
            values["beta"] = default_beta(Variant.parse(values["variant"]), values["alpha"])
        except ValueError as exc:
            raise CliError(EXIT_USAGE, str(exc)) from exc
    return RunConfig(cmd, values), verbose


# ------------------------------------------------------------------ commands

def _load_log(path, strict):
    try:
        return ck.read_checkin_log(path, strict=strict)
    except (OSError, UnicodeDecodeError, ck.CheckinFormatError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc}") from exc


def _load_filtered(cfg: RunConfig) -> ck.Dataset:
    rows = _load_log(cfg.input, cfg.strict)
    kept = ck.filter_dataset(rows, cfg.min_users_per_poi, cfg.min_checkins_per_user)
    if not kept:
        raise CliError(EXIT_EMPTY, "no data after filtering")
    try:
        return ck.Dataset.from_checkins(kept, cfg.tz_offset)
    except ck.CheckinFormatError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _load_model(path):
    try:
        return load_model(path)
    except (OSError, ModelFormatError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read model {path}: {exc}") from exc


def _dataset_for_model(params, path, cfg) -> ck.Dataset:
    rows = _load_log(path, cfg.strict)
    try:
        return ck.Dataset.from_checkins(rows, cfg.tz_offset,
                                        {u: i for i, u in enumerate(params.user_ids)},
                                        {p: i for i, p in enumerate(params.poi_ids)})
    except ck.IndexSpaceError as exc:
        raise CliError(EXIT_MISMATCH, f"{path} does not match the model's index space: {exc}") from exc
    except ck.CheckinFormatError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def cmd_synth(cfg: RunConfig, out) -> None:
    scfg = SynthConfig(**{name: cfg.values[name] for name in _SYNTH_FLAGS})
    try:
        corpus = generate(scfg)
    except SynthConfigError as exc:
        raise CliError(EXIT_USAGE, f"config error: {exc}") from exc
    ck.write_checkin_log(corpus.checkins, cfg.output)
    out.write(f"wrote {len(corpus.checkins)} check-ins to {cfg.output}\n")


def cmd_analyze(cfg: RunConfig, out) -> None:
    ds = _load_filtered(cfg)
    report = ck.sequence_pair_correlation_report(ds, cfg.n_random_pairs, np.random.default_rng(cfg.seed))
    hist = ck.day_hour_histogram(ds.checkins, cfg.tz_offset)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "correlation.txt").write_text(report.to_text(), encoding="utf-8")
    (outdir / "histogram.csv").write_text(ck.histogram_to_csv(hist), encoding="utf-8")
    out.write(report.to_text())


def cmd_train(cfg: RunConfig, out) -> None:
    try:
        hyper = cfg.hyper()
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc
    ds = _load_filtered(cfg)
    model_path = Path(cfg.model)
    if cfg.train_ratio >= 1.0:
        train_ds, test_ds = ds, None
    else:
        try:
            train_ds, test_ds = ck.chronological_split(ds, cfg.train_ratio)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, str(exc)) from exc
    train_log = cfg.train_log or str(model_path.with_suffix(".train.tsv"))
    ck.write_checkin_log(train_ds.checkins, train_log)
    if test_ds is not None:
        ck.write_checkin_log(test_ds.checkins, cfg.test_log or str(model_path.with_suffix(".test.tsv")))
    if cfg.threads > 1:
        sys.stderr.write(f"note: {cfg.threads} threads with lock-free updates; results are not reproducible\n")
    try:
        params, report = train(train_ds, hyper, threads=cfg.threads,
                               checkpoint_every=cfg.checkpoint_every, checkpoint_path=model_path)
    except TrainingDivergedError as exc:
        raise CliError(EXIT_DIVERGED, f"training diverged: {exc}") from exc
    save_model(params, model_path)
    text = report.to_text()
    Path(cfg.report or str(model_path) + ".report.txt").write_text(text, encoding="utf-8")
    out.write(text)


def cmd_evaluate(cfg: RunConfig, out) -> None:
    params = _load_model(cfg.model)
    train_ds = _dataset_for_model(params, cfg.train, cfg)
    test_ds = _dataset_for_model(params, cfg.test, cfg)
    report = evaluate(params, train_ds, test_ds, cfg.ns)
    text = report.to_csv()
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if cfg.table:
        reports = {Path(cfg.model).stem: report}
        for name in cfg.baseline:
            kind = BaselineKind(name)
            if kind is BaselineKind.BPR_EQUIV:
                raise CliError(EXIT_USAGE, "train the BPR-equivalent model with --alpha 0 instead")
            reports[name] = evaluate(baseline_scores(kind, train_ds, seed=cfg.seed), train_ds, test_ds, cfg.ns)
        Path(cfg.table).write_text(comparison_table(reports), encoding="utf-8")


def cmd_recommend(cfg: RunConfig, out) -> None:
    if cfg.top < 1:
        raise CliError(EXIT_USAGE, "--top must be >= 1")
    params = _load_model(cfg.model)
    train_ds = _dataset_for_model(params, cfg.train, cfg)
    state = ck.TemporalState[cfg.state.upper()]
    index = {u: i for i, u in enumerate(params.user_ids)}
    unknown = [u for u in cfg.user if u not in index]
    if unknown:
        raise CliError(EXIT_UNKNOWN_USER, f"unknown user id(s): {', '.join(unknown)}")
    for user_id in cfg.user:
        u = index[user_id]
        try:
            rec = recommend_top_n(params, u, state, cfg.top, train_ds.user_pois[u])
        except ValueError as exc:
            raise CliError(EXIT_USAGE, str(exc)) from exc
        out.write(f"user {user_id} ({cfg.state})\n")
        for rank, (p, score) in enumerate(zip(rec.pois, rec.scores), 1):
            out.write(f"{rank}\t{params.poi_ids[p]}\t{score:.6f}\n")
        out.write("\n")


COMMANDS = {"synth": cmd_synth, "analyze": cmd_analyze, "train": cmd_train,
            "evaluate": cmd_evaluate, "recommend": cmd_recommend}


def main(argv=None) -> int:
    try:
        cfg, verbose = resolve(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliError as exc:
        sys.stderr.write(f"geoseer: {exc}\n")
        return exc.code
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sys.stderr.write(cfg.echo())
    try:
        COMMANDS[cfg.subcommand](cfg, sys.stdout)
    except CliError as exc:
        sys.stderr.write(f"geoseer: {exc}\n")
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
