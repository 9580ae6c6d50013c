"""Chronological blocked cross-validation and headline metrics.

The series is cut into ``n_blocks`` contiguous blocks.  Fold ``k`` trains on
blocks 1..k and tests on block k+1, so training data always precedes test
data.  Within each fold the leading 80% of the training rows fit the
standardizer, teacher, and model; thresholds are tuned on the trailing 20%
under the false-positive budget; the test block is then replayed as a fresh
stream.

Reported per method: per-intent detection rate, mean lead time (minutes of
warning before failure, capped at the horizon), deduplicated false-positive
events per day, and root-cause disambiguation accuracy over detected
episodes.  ``percent_of_best`` normalizes the four axes across methods (the
FP axis inverted as 1/(1+fp) so that larger is better everywhere).
"""
from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .alerting import (AlertEvent, AlertPolicy, MINUTES_PER_DAY, ewma_smooth,
                       score_to_events, tune_thresholds)
from .baselines import (WkpiStaticModel, train_dist_target, train_lr, train_mlp)
from .features import FeatureSpec, Standardizer, featurize
from .model import LossConfig, TrainConfig, fit_val_split, train_mild
from .teacher import train_teacher
from .types import (DEFAULT_EVAL_BLOCKS, EpisodeAnnotation, EpisodeKind,
                    FAILURE_KINDS, KpiSeries, LabelMatrices, block_bounds)

DEFAULT_N_BLOCKS = DEFAULT_EVAL_BLOCKS
DEFAULT_METHODS = ("mild", "lr", "mlp", "wkpi", "dist")
KNOWN_METHODS = DEFAULT_METHODS + ("oracle", "zero")


@dataclass(frozen=True)
class Fold:
    index: int        # 1-based: fold k trains on blocks 1..k
    train_rows: slice
    test_rows: slice


def fold_plan(total_rows: int, n_blocks: int = DEFAULT_N_BLOCKS) -> list[Fold]:
    bounds = block_bounds(total_rows, n_blocks)
    return [Fold(index=k, train_rows=slice(0, bounds[k]),
                 test_rows=slice(bounds[k], bounds[k + 1]))
            for k in range(1, n_blocks)]


# ---------------------------------------------------------------------------
# per-fold scoring

@dataclass
class FoldMetrics:
    fold: int
    minutes_test: int
    episode_counts: list[int]          # per intent: failures inside the test block
    detected_counts: list[int]         # per intent
    lead_minutes: list[list[float]]    # per intent: lead time of each detection
    fp_events: int
    fp_per_day: float
    disamb_total: int
    disamb_correct: int
    codrift_total: int
    codrift_correct: int
    thresholds: list[float]
    n_events: int

    def detection_rate(self, intent: int) -> float:
        n = self.episode_counts[intent]
        return float("nan") if n == 0 else self.detected_counts[intent] / n

    def mean_lead(self, intent: int) -> float:
        leads = self.lead_minutes[intent]
        return float("nan") if not leads else float(np.mean(leads))

    def disamb_accuracy(self) -> float:
        return float("nan") if self.disamb_total == 0 else self.disamb_correct / self.disamb_total

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldMetrics":
        return cls(**d)


def _qualifying(events: Sequence[AlertEvent], intent: int, fail: int,
                horizon: int) -> AlertEvent | None:
    """First event covering the pre-failure window of (intent, fail).

    An event qualifies when it matches the intent, opens strictly before the
    failure minute, and is still active at or after the window start.  The
    earliest such event is the one an operator saw first, and its snapshot is
    what detection, lead time, and the root-cause verdict are judged on.
    """
    window_lo = fail - horizon
    hits = [e for e in events
            if e.intent == intent and e.t < fail and e.t_end >= window_lo]
    return min(hits, key=lambda e: e.t) if hits else None


def score_events(events: Sequence[AlertEvent], episodes: Sequence[EpisodeAnnotation],
                 y_bin: np.ndarray, horizon: int, test_rows: slice,
                 fold: int = 0, thresholds: Sequence[float] = ()) -> FoldMetrics:
    """Compare one test block's alert events against its ground truth."""
    K = y_bin.shape[1]
    lo, hi = test_rows.start, test_rows.stop
    episode_counts = [0] * K
    detected_counts = [0] * K
    lead_minutes: list[list[float]] = [[] for _ in range(K)]
    disamb_total = disamb_correct = 0
    codrift_total = codrift_correct = 0

    for ep in episodes:
        if ep.kind not in FAILURE_KINDS:
            continue
        in_block = {i: f for i, f in ep.fail_t.items() if lo <= f < hi}
        if not in_block:
            continue
        hits: list[AlertEvent] = []
        for intent, fail in in_block.items():
            episode_counts[intent] += 1
            ev = _qualifying(events, intent, fail, horizon)
            if ev is not None:
                detected_counts[intent] += 1
                lead_minutes[intent].append(float(fail - max(ev.t, fail - horizon)))
                hits.append(ev)
        if hits:
            first = min(hits, key=lambda e: e.t)
            disamb_total += 1
            correct = first.root_cause == ep.cause
            disamb_correct += int(correct)
            if ep.kind is EpisodeKind.CO_DRIFT:
                codrift_total += 1
                codrift_correct += int(correct)

    fp = sum(1 for e in events if y_bin[e.t, e.intent] == 0)
    days = (hi - lo) / MINUTES_PER_DAY
    return FoldMetrics(
        fold=fold, minutes_test=hi - lo, episode_counts=episode_counts,
        detected_counts=detected_counts, lead_minutes=lead_minutes,
        fp_events=fp, fp_per_day=fp / days, disamb_total=disamb_total,
        disamb_correct=disamb_correct, codrift_total=codrift_total,
        codrift_correct=codrift_correct, thresholds=list(thresholds),
        n_events=len(events))


def disambiguation_accuracy(events: Sequence[AlertEvent],
                            episodes: Sequence[EpisodeAnnotation],
                            y_bin: np.ndarray, horizon: int,
                            test_rows: slice) -> float:
    """Convenience wrapper: pooled verdict accuracy over detected episodes."""
    m = score_events(events, episodes, y_bin, horizon, test_rows)
    return m.disamb_accuracy()


# ---------------------------------------------------------------------------
# method fitting

class _OracleModel:
    """Scores equal to the binary labels; the ceiling reference."""

    has_gate = False

    def __init__(self, y_bin: np.ndarray, horizon: int):
        self._y = np.asarray(y_bin, dtype=np.float64)
        self.horizon = horizon

    def score_series(self, series: KpiSeries, features=None):
        if len(series) != self._y.shape[0]:
            raise ValueError("oracle labels do not match the series")
        return self._y, None


class _ZeroModel:
    """Never raises risk; the floor reference."""

    has_gate = False

    def __init__(self, n_intents: int, horizon: int):
        self.n_intents = n_intents
        self.horizon = horizon

    def score_series(self, series: KpiSeries, features=None):
        return np.zeros((len(series), self.n_intents)), None


def fit_method(name: str, *, series: KpiSeries, X_full: np.ndarray,
               labels: LabelMatrices, fold: Fold, horizon: int, seed: int,
               loss_config: LossConfig, train_config: TrainConfig):
    train = fold.train_rows
    n_train = train.stop - train.start
    n_fit = fit_val_split(n_train, train_config.val_fraction)
    fit = slice(train.start, train.start + n_fit)

    standardizer = Standardizer.fit(X_full[fit])
    X_std_train = standardizer.transform(X_full[train])
    y_train = labels.y_bin[train]

    if name == "dist":
        return train_dist_target(series.values[fit], labels.y_bin[fit], horizon)
    if name == "oracle":
        return _OracleModel(labels.y_bin, horizon)
    if name == "zero":
        return _ZeroModel(labels.y_bin.shape[1], horizon)

    if name == "lr":
        return train_lr(X_std_train, y_train, horizon, standardizer,
                        train_config=train_config, seed=seed)
    if name == "wkpi":
        lr_model = train_lr(X_std_train, y_train, horizon, standardizer,
                            train_config=train_config, seed=seed)
        return WkpiStaticModel.from_teacher(lr_model.teacher, standardizer, horizon)
    if name == "mlp":
        return train_mlp(X_std_train, y_train, horizon, standardizer,
                         train_config=train_config, seed=seed)
    if name == "mild":
        teacher = train_teacher(standardizer.transform(X_full[fit]), labels.y_bin[fit])
        return train_mild(X_std_train, y_train, labels.y_cause[train], teacher,
                          horizon, standardizer, loss_config=loss_config,
                          train_config=train_config, seed=seed)
    raise ValueError(f"unknown method {name!r}")


def run_fold(series: KpiSeries, X_full: np.ndarray, episodes: Sequence[EpisodeAnnotation],
             labels: LabelMatrices, fold: Fold, methods: Sequence[str], horizon: int,
             policy: AlertPolicy, seed: int, loss_config: LossConfig,
             train_config: TrainConfig) -> dict[str, FoldMetrics]:
    """Fit every method on one fold and score its test block.

    Model parameters come from the leading 80% of the training window;
    thresholds are tuned on the trailing 20%, the same held-out tail that
    drives early stopping, so the paging budget is spent on rows the model
    never fit.
    """
    train, test = fold.train_rows, fold.test_rows
    n_fit = fit_val_split(train.stop - train.start, train_config.val_fraction)
    val = slice(train.start + n_fit, train.stop)
    out: dict[str, FoldMetrics] = {}
    for name in methods:
        model = fit_method(name, series=series, X_full=X_full, labels=labels,
                           fold=fold, horizon=horizon, seed=seed,
                           loss_config=loss_config, train_config=train_config)
        risks, gates = model.score_series(series, features=X_full)
        taus = tune_thresholds(risks[val], labels.y_bin[val], policy)
        smoothed = ewma_smooth(risks[test], policy.ewma_span)
        test_gates = None if gates is None else gates[test]
        events = score_to_events(smoothed, test_gates, taus, policy,
                                 series.t[test], horizon)
        out[name] = score_events(events, episodes, labels.y_bin, horizon, test,
                                 fold=fold.index, thresholds=taus)
    return out


# ---------------------------------------------------------------------------
# aggregation across folds

@dataclass
class EvalReport:
    method: str
    horizon: int
    n_intents: int
    folds: list[FoldMetrics] = field(default_factory=list)

    def detection_mean_std(self, intent: int) -> tuple[float, float]:
        rates = [m.detection_rate(intent) for m in self.folds
                 if m.episode_counts[intent] > 0]
        return _mean_std(rates)

    def lead_mean_std(self, intent: int) -> tuple[float, float]:
        leads = [m.mean_lead(intent) for m in self.folds if m.lead_minutes[intent]]
        return _mean_std(leads)

    def fp_mean_std(self) -> tuple[float, float]:
        return _mean_std([m.fp_per_day for m in self.folds])

    def disamb_mean_std(self) -> tuple[float, float]:
        accs = [m.disamb_accuracy() for m in self.folds if m.disamb_total > 0]
        return _mean_std(accs)

    def pooled_disamb(self) -> float:
        total = sum(m.disamb_total for m in self.folds)
        correct = sum(m.disamb_correct for m in self.folds)
        return float("nan") if total == 0 else correct / total

    def pooled_codrift_disamb(self) -> tuple[float, int]:
        total = sum(m.codrift_total for m in self.folds)
        correct = sum(m.codrift_correct for m in self.folds)
        return (float("nan") if total == 0 else correct / total), total

    def overall_detection(self) -> float:
        vals = [self.detection_mean_std(i)[0] for i in range(self.n_intents)]
        return float(np.nanmean(vals)) if vals else float("nan")

    def overall_lead(self) -> float:
        vals = [self.lead_mean_std(i)[0] for i in range(self.n_intents)]
        return float(np.nanmean(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        codrift_acc, codrift_n = self.pooled_codrift_disamb()
        return {
            "method": self.method,
            "horizon": self.horizon,
            "n_intents": self.n_intents,
            "folds": [m.to_dict() for m in self.folds],
            "aggregate": {
                "detection": {str(i): self.detection_mean_std(i) for i in range(self.n_intents)},
                "lead": {str(i): self.lead_mean_std(i) for i in range(self.n_intents)},
                "fp_per_day": self.fp_mean_std(),
                "disambiguation": self.disamb_mean_std(),
                "disambiguation_pooled": self.pooled_disamb(),
                "codrift_disambiguation_pooled": codrift_acc,
                "codrift_episodes": codrift_n,
                "overall_detection": self.overall_detection(),
                "overall_lead": self.overall_lead(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(method=d["method"], horizon=int(d["horizon"]),
                   n_intents=int(d["n_intents"]),
                   folds=[FoldMetrics.from_dict(m) for m in d["folds"]])


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    vals = [v for v in values if not np.isnan(v)]
    if not vals:
        return float("nan"), float("nan")
    return float(np.mean(vals)), float(np.std(vals))


def _run_fold_task(args) -> tuple[int, dict[str, FoldMetrics]]:
    (series, X_full, episodes, labels, fold, methods, horizon, policy, seed,
     loss_config, train_config) = args
    return fold.index, run_fold(series, X_full, episodes, labels, fold, methods,
                                horizon, policy, seed, loss_config, train_config)


def run_cv(series: KpiSeries, episodes: Sequence[EpisodeAnnotation],
           methods: Sequence[str] = DEFAULT_METHODS, horizon: int = 120,
           policy: AlertPolicy = AlertPolicy(), seed: int = 42,
           n_blocks: int = DEFAULT_N_BLOCKS, jobs: int = 1,
           loss_config: LossConfig = LossConfig(),
           train_config: TrainConfig = TrainConfig()) -> dict[str, EvalReport]:
    """Blocked cross-validation of every requested method over one benchmark."""
    for name in methods:
        if name not in KNOWN_METHODS:
            raise ValueError(f"unknown method {name!r}; known: {KNOWN_METHODS}")
    T = len(series)
    if not np.array_equal(series.t, np.arange(T)):
        raise ValueError("blocked evaluation expects a contiguous series starting at 0")
    X_full = featurize(series.values)
    K = max(3, max((max(ep.fail_t, default=-1) for ep in episodes), default=-1) + 1)
    labels = LabelMatrices.build(episodes, K, horizon, T)
    folds = fold_plan(T, n_blocks)
    skipped = [f.index for f in folds
               if not any(lo <= fail < hi for ep in episodes
                          for fail in ep.fail_t.values()
                          for lo, hi in [(f.test_rows.start, f.test_rows.stop)])]
    if skipped:
        warnings.warn(f"folds {skipped} have no test episodes; "
                      f"their detection metrics will be empty")

    tasks = [(series, X_full, episodes, labels, f, tuple(methods), horizon, policy,
              seed, loss_config, train_config) for f in folds]
    results: dict[int, dict[str, FoldMetrics]] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for idx, res in pool.map(_run_fold_task, tasks):
                results[idx] = res
    else:
        for task in tasks:
            idx, res = _run_fold_task(task)
            results[idx] = res

    reports = {name: EvalReport(method=name, horizon=horizon, n_intents=K)
               for name in methods}
    for f in folds:
        for name in methods:
            reports[name].folds.append(results[f.index][name])
    return reports


# ---------------------------------------------------------------------------
# cross-method comparison and persistence

RADAR_AXES = ("detection", "lead", "inverted_fp", "disambiguation")


def radar_values(report: EvalReport) -> dict[str, float]:
    """The four comparison axes, all oriented so that larger is better."""
    fp_mean, _ = report.fp_mean_std()
    disamb, _ = report.disamb_mean_std()
    return {
        "detection": report.overall_detection(),
        "lead": report.overall_lead(),
        "inverted_fp": 1.0 / (1.0 + fp_mean) if not np.isnan(fp_mean) else float("nan"),
        "disambiguation": disamb,
    }


def percent_of_best(reports: dict[str, EvalReport]) -> dict[str, dict[str, float]]:
    """Normalize each axis to the best method (best = 100)."""
    values = {name: radar_values(r) for name, r in reports.items()}
    out: dict[str, dict[str, float]] = {name: {} for name in reports}
    for axis in RADAR_AXES:
        col = {n: values[n][axis] for n in reports}
        finite = [v for v in col.values() if not np.isnan(v)]
        best = max(finite) if finite else float("nan")
        for n, v in col.items():
            if np.isnan(v) or np.isnan(best):
                pct = float("nan")
            elif best == 0.0:
                pct = 100.0 if v == 0.0 else 0.0
            else:
                pct = 100.0 * v / best
            out[n][axis] = pct
    return out


def write_report(out_dir, reports: dict[str, EvalReport],
                 metadata: dict | None = None) -> None:
    """Persist report.json plus the two summary CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "metadata": metadata or {},
        "fp_definition": "deduplicated alert events whose intent has no failure "
                         "scheduled within the horizon at the event's start",
        "methods": {name: r.to_dict() for name, r in reports.items()},
        "percent_of_best": percent_of_best(reports),
    }
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

    with open(out / "table2.csv", "w") as fh:
        fh.write("method,metric,detail,mean,std\n")
        for name, r in reports.items():
            for i in range(r.n_intents):
                m, s = r.detection_mean_std(i)
                fh.write(f"{name},detection_rate,intent{i},{m:.6g},{s:.6g}\n")
            for i in range(r.n_intents):
                m, s = r.lead_mean_std(i)
                fh.write(f"{name},lead_minutes,intent{i},{m:.6g},{s:.6g}\n")
            m, s = r.fp_mean_std()
            fh.write(f"{name},fp_per_day,all,{m:.6g},{s:.6g}\n")
            m, s = r.disamb_mean_std()
            fh.write(f"{name},disambiguation,all,{m:.6g},{s:.6g}\n")
            codrift, n = r.pooled_codrift_disamb()
            fh.write(f"{name},disambiguation,codrift_pooled,{codrift:.6g},{n}\n")

    pob = percent_of_best(reports)
    with open(out / "radar.csv", "w") as fh:
        fh.write("method,axis,value,percent_of_best\n")
        for name, r in reports.items():
            vals = radar_values(r)
            for axis in RADAR_AXES:
                fh.write(f"{name},{axis},{vals[axis]:.6g},{pob[name][axis]:.6g}\n")
