"""Command-line interface.

Subcommands mirror the library pipeline: ``generate`` a benchmark, ``train``
one model, ``evaluate`` methods under blocked cross-validation, ``stream``
alerts from a trained bundle, ``explain`` one alert, fuse multi-horizon alert
logs into ``ttf`` bounds, and re-render a saved evaluation with ``report``.

Common behaviour:

* ``--config FILE`` reads ``key=value`` lines (``#`` comments allowed);
  explicit command-line flags override file values.
* all randomness derives from ``--seed`` (default 42).
* output locations are never silently overwritten; pass ``--force``.
* exit codes: 0 success, 1 usage error, 2 data/model error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .alerting import (AlertPolicy, active_spans, is_active, stream,
                       ttf_bound, tune_thresholds)
from .bundles import load_bundle, load_bundle_with_thresholds, save_bundle
from .evalharness import (DEFAULT_METHODS, DEFAULT_N_BLOCKS, EvalReport, fit_method,
                          fold_plan, KNOWN_METHODS, percent_of_best, radar_values,
                          run_cv, write_report)
from .explain import shapley_attribution
from .features import featurize
from .model import LossConfig, TrainConfig, fit_val_split
from .synthgen import GenConfig, GeneratedBenchmark, generate
from .types import LabelMatrices
from .alerting import AlertEvent

DEFAULT_HORIZON = 120


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_config(path) -> dict:
    """Parse a key=value config file."""
    out: dict = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if "," in value:
                out[key] = tuple(_coerce(v.strip()) for v in value.split(","))
            else:
                out[key] = _coerce(value)
    return out


def _resolve(args, key: str, config: dict, default):
    """Precedence: explicit flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _policy_from(config: dict, args) -> AlertPolicy:
    return AlertPolicy(
        fp_budget_per_day=float(_resolve(args, "fp_budget_per_day", config, 1.0)),
        cooldown=int(_resolve(args, "cooldown", config, 60)),
        ewma_span=int(_resolve(args, "ewma_span", config, 15)),
    )


def _guard_dir(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise ValueError(f"output directory {path} is not empty (use --force to overwrite)")


def _guard_file(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise ValueError(f"output file {path} exists (use --force to overwrite)")


def _load_config(args) -> dict:
    return read_config(args.config) if args.config else {}


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    config_file = _load_config(args)
    fields = {f.name for f in dataclasses.fields(GenConfig) if f.name != "profiles"}
    overrides = {k: v for k, v in config_file.items() if k in fields}
    if args.minutes is not None:
        overrides["total_minutes"] = args.minutes
    if args.episodes is not None:
        overrides["episode_count"] = args.episodes
    overrides["seed"] = int(_resolve(args, "seed", config_file, 42))
    out = Path(args.out)
    _guard_dir(out, args.force)
    bench = generate(GenConfig(**overrides))
    bench.save(out)
    fails = sum(len(e.fail_t) for e in bench.episodes)
    print(f"wrote {len(bench.frames)} minutes, {len(bench.episodes)} episodes "
          f"({fails} intent failures) to {out}")
    return 0


def cmd_train(args) -> int:
    config_file = _load_config(args)
    horizon = int(_resolve(args, "horizon", config_file, DEFAULT_HORIZON))
    method = str(_resolve(args, "method", config_file, "mild"))
    if method not in KNOWN_METHODS:
        raise ValueError(f"unknown method {method!r}; known: {KNOWN_METHODS}")
    seed = int(_resolve(args, "seed", config_file, 42))
    fold_index = int(_resolve(args, "fold", config_file, DEFAULT_N_BLOCKS - 1))
    out = Path(args.out)
    _guard_file(out, args.force)

    bench = GeneratedBenchmark.load(args.data)
    series = bench.frames
    X_full = featurize(series.values)
    labels = LabelMatrices.build(bench.episodes, 3, horizon, len(series))
    folds = {f.index: f for f in fold_plan(len(series))}
    if fold_index not in folds:
        raise ValueError(f"fold must be in {sorted(folds)}, got {fold_index}")
    fold = folds[fold_index]
    policy = _policy_from(config_file, args)

    model = fit_method(method, series=series, X_full=X_full, labels=labels,
                       fold=fold, horizon=horizon, seed=seed,
                       loss_config=LossConfig(), train_config=TrainConfig())
    train = fold.train_rows
    n_fit = fit_val_split(train.stop - train.start, TrainConfig().val_fraction)
    val = slice(train.start + n_fit, train.stop)
    risks, _ = model.score_series(series, features=X_full)
    taus = tune_thresholds(risks[val], labels.y_bin[val], policy)
    save_bundle(model, out, thresholds=taus, metadata={
        "data": str(args.data), "method": method, "horizon": horizon,
        "fold": fold_index, "seed": seed, "policy": policy.to_dict()})
    print(f"trained {method} (horizon {horizon} min, fold {fold_index}); "
          f"thresholds {[round(t, 2) for t in taus]}; saved to {out}")
    return 0


def cmd_evaluate(args) -> int:
    config_file = _load_config(args)
    horizon = int(_resolve(args, "horizon", config_file, DEFAULT_HORIZON))
    seed = int(_resolve(args, "seed", config_file, 42))
    jobs = int(_resolve(args, "jobs", config_file, 1))
    methods_raw = _resolve(args, "methods", config_file, ",".join(DEFAULT_METHODS))
    if isinstance(methods_raw, tuple):
        methods = [str(m) for m in methods_raw]
    else:
        methods = [m.strip() for m in str(methods_raw).split(",") if m.strip()]
    out = Path(args.out)
    _guard_dir(out, args.force)
    policy = _policy_from(config_file, args)

    bench = GeneratedBenchmark.load(args.data)
    reports = run_cv(bench.frames, bench.episodes, methods=methods, horizon=horizon,
                     policy=policy, seed=seed, jobs=jobs)
    metadata = {"data": str(args.data), "horizon": horizon, "seed": seed,
                "methods": methods, "policy": policy.to_dict(),
                "n_blocks": DEFAULT_N_BLOCKS}
    write_report(out, reports, metadata)
    with open(out / "evalconfig.json", "w") as fh:
        json.dump(metadata, fh, indent=2)
        fh.write("\n")
    _print_report_summary(reports)
    print(f"report written to {out}")
    return 0


def _print_report_summary(reports: dict[str, EvalReport]) -> None:
    pob = percent_of_best(reports)
    header = f"{'method':8s} {'detect%':>8s} {'lead(min)':>10s} {'fp/day':>8s} {'rca%':>7s}"
    print(header)
    for name, r in reports.items():
        vals = radar_values(r)
        det = 100.0 * vals["detection"]
        lead = vals["lead"]
        fp = r.fp_mean_std()[0]
        rca = 100.0 * vals["disambiguation"]
        print(f"{name:8s} {det:8.1f} {lead:10.1f} {fp:8.2f} {rca:7.1f}"
              f"   (pct-of-best: {', '.join(f'{a}={pob[name][a]:.0f}' for a in pob[name])})")


def cmd_stream(args) -> int:
    out = Path(args.out)
    _guard_file(out, args.force)
    model, taus = load_bundle_with_thresholds(args.model)
    if args.tau is not None:
        taus = [float(t) for t in str(args.tau).split(",")]
    if taus is None:
        raise ValueError("bundle carries no tuned thresholds; pass --tau")
    bench = GeneratedBenchmark.load(args.data)
    K = 3
    if len(taus) == 1:
        taus = list(taus) * K
    events = stream(model, bench.frames, np.asarray(taus, dtype=float))
    with open(out, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict()) + "\n")
    print(f"{len(events)} alert events written to {out}")
    return 0


def _load_events(path) -> list[AlertEvent]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no alert log at {path}")
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(AlertEvent.from_dict(json.loads(line)))
    return events


def cmd_explain(args) -> int:
    config_file = _load_config(args)
    mode = str(_resolve(args, "mode", config_file, "grouped"))
    seed = int(_resolve(args, "seed", config_file, 42))
    model = load_bundle(args.model)
    if not hasattr(model, "predict"):
        raise ValueError("this bundle kind does not support attribution")
    events = _load_events(args.alerts)
    if not (0 <= args.index < len(events)):
        raise ValueError(f"--index must be in [0, {len(events) - 1}]")
    ev = events[args.index]
    bench = GeneratedBenchmark.load(args.data)
    row = int(np.searchsorted(bench.frames.t, ev.t))
    if row >= len(bench.frames) or bench.frames.t[row] != ev.t:
        raise ValueError(f"alert minute {ev.t} not present in {args.data}")
    X = featurize(bench.frames.values[: row + 1])
    x_std = model.standardizer.transform(X[-1])
    att = shapley_attribution(model, x_std, ev.intent, mode=mode,
                              spec=model.feature_spec, seed=seed,
                              m_permutations=int(_resolve(args, "m_permutations",
                                                          config_file, 200)))
    print(f"alert at t={ev.t} intent={ev.intent} risk={ev.smoothed_risk:.3f} "
          f"root_cause={ev.root_cause}")
    print(f"base risk {att.base_value:.4f} -> prediction {att.prediction:.4f} ({mode})")
    for name, value in att.ranked():
        print(f"  {name:24s} {value:+.4f}")
    if args.out:
        _guard_file(Path(args.out), args.force)
        att.to_csv(args.out)
        print(f"attribution written to {args.out}")
    return 0


def cmd_ttf(args) -> int:
    out = Path(args.out)
    _guard_file(out, args.force)
    logs = [p.strip() for p in str(args.alerts).split(",") if p.strip()]
    if len(logs) < 2:
        raise ValueError("ttf needs at least two alert logs (distinct horizons)")
    by_horizon: dict[int, list[AlertEvent]] = {}
    for p in logs:
        for ev in _load_events(p):
            by_horizon.setdefault(ev.horizon, []).append(ev)
    if len(by_horizon) < 2:
        raise ValueError("alert logs cover fewer than two horizons")
    intents = sorted({ev.intent for evs in by_horizon.values() for ev in evs})
    lines = []
    for intent in intents:
        spans = {h: active_spans([e for e in evs if e.intent == intent]).get(intent, [])
                 for h, evs in by_horizon.items()}
        minutes = sorted({t for sp in spans.values() for s, e in sp
                          for t in range(s, e + 1)})
        for t in minutes:
            bound = ttf_bound({h: is_active(sp, t) for h, sp in spans.items()})
            if bound is not None:
                lines.append({"t": t, "intent": intent, **bound.to_dict()})
    lines.sort(key=lambda d: (d["t"], d["intent"]))
    with open(out, "w") as fh:
        for d in lines:
            fh.write(json.dumps(d) + "\n")
    print(f"{len(lines)} bound minutes written to {out}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    _guard_dir(out, args.force)
    with open(args.report) as fh:
        payload = json.load(fh)
    reports = {name: EvalReport.from_dict(d) for name, d in payload["methods"].items()}
    write_report(out, reports, payload.get("metadata"))
    _print_report_summary(reports)
    print(f"tables rewritten to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> _Parser:
    parser = _Parser(prog="mild", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master RNG seed (default 42)")
    common.add_argument("--config", default=None, help="key=value config file")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser("generate", parents=[common], help="generate a synthetic benchmark")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--minutes", type=int, default=None, help="series length in minutes")
    p.add_argument("--episodes", type=int, default=None, help="number of failure episodes")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train one model on one fold")
    p.add_argument("--data", required=True, help="benchmark directory")
    p.add_argument("--out", required=True, help="model bundle path (JSON)")
    p.add_argument("--horizon", type=int, default=None, help="prediction horizon, minutes")
    p.add_argument("--method", default=None, help=f"one of {KNOWN_METHODS}")
    p.add_argument("--fold", type=int, default=None,
                   help="fold index 1..10; trains on blocks up to it (default 10)")
    p.add_argument("--fp-budget-per-day", dest="fp_budget_per_day", type=float, default=None)
    p.add_argument("--cooldown", type=int, default=None)
    p.add_argument("--ewma-span", dest="ewma_span", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="blocked cross-validation over all methods")
    p.add_argument("--data", required=True, help="benchmark directory")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--methods", default=None, help="comma-separated method list")
    p.add_argument("--jobs", type=int, default=None, help="parallel fold workers")
    p.add_argument("--fp-budget-per-day", dest="fp_budget_per_day", type=float, default=None)
    p.add_argument("--cooldown", type=int, default=None)
    p.add_argument("--ewma-span", dest="ewma_span", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stream", parents=[common], help="replay data through a bundle")
    p.add_argument("--model", required=True, help="model bundle path")
    p.add_argument("--data", required=True, help="benchmark directory")
    p.add_argument("--out", required=True, help="alerts JSONL path")
    p.add_argument("--tau", default=None, help="override thresholds (comma list or one value)")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("explain", parents=[common], help="attribute one alert to its inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="benchmark directory")
    p.add_argument("--alerts", required=True, help="alerts JSONL from `stream`")
    p.add_argument("--index", type=int, required=True, help="which alert to explain")
    p.add_argument("--mode", default=None, choices=("grouped", "sampled"))
    p.add_argument("--out", default=None, help="optional CSV output")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ttf", parents=[common],
                       help="fuse multi-horizon alert logs into time-to-failure bounds")
    p.add_argument("--alerts", required=True, help="comma-separated alert logs")
    p.add_argument("--out", required=True, help="bounds JSONL path")
    p.set_defaults(func=cmd_ttf)

    p = sub.add_parser("report", parents=[common], help="re-render a saved report")
    p.add_argument("--report", required=True, help="report.json path")
    p.add_argument("--out", required=True, help="output directory for tables")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, ValueError,
            KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
