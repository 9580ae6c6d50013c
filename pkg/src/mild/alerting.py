"""Online alerting on top of per-intent risk scores.

Risks are EWMA-smoothed per intent, compared against per-intent thresholds
tuned under a false-positive budget, and deduplicated into alert events with a
cooldown.  Each event snapshots the gate distribution at its first crossing,
which is the root-cause verdict, and carries the model's horizon so that logs
from models trained at different horizons can be fused into time-to-failure
bounds.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440.0

DEFAULT_TAU_GRID: tuple[float, ...] = tuple(round(x / 100.0, 2) for x in range(5, 96))


def ewma_alpha(span: int) -> float:
    """Smoothing coefficient 2 / (span + 1)."""
    if span < 1:
        raise ValueError("span must be >= 1")
    return 2.0 / (span + 1.0)


class EwmaState:
    """Incremental EWMA seeded with the first observation."""

    def __init__(self, span: int):
        self.alpha = ewma_alpha(span)
        self.value: float | None = None

    def update(self, x: float) -> float:
        if self.value is None:
            self.value = float(x)
        else:
            self.value = self.alpha * float(x) + (1.0 - self.alpha) * self.value
        return self.value


def ewma_smooth(risks: np.ndarray, span: int) -> np.ndarray:
    """Column-wise EWMA of a (T,) or (T, K) risk array, seeded with row 0."""
    risks = np.asarray(risks, dtype=np.float64)
    squeeze = risks.ndim == 1
    if squeeze:
        risks = risks[:, None]
    alpha = ewma_alpha(span)
    out = np.empty_like(risks)
    out[0] = risks[0]
    for t in range(1, risks.shape[0]):
        out[t] = alpha * risks[t] + (1.0 - alpha) * out[t - 1]
    return out[:, 0] if squeeze else out


@dataclass
class AlertPolicy:
    """Operating parameters of the alerting layer."""

    fp_budget_per_day: float = 1.0
    cooldown: int = 60
    ewma_span: int = 15
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID

    def to_dict(self) -> dict:
        return {"fp_budget_per_day": self.fp_budget_per_day, "cooldown": self.cooldown,
                "ewma_span": self.ewma_span, "tau_grid": list(self.tau_grid)}

    @classmethod
    def from_dict(cls, d: dict) -> "AlertPolicy":
        return cls(fp_budget_per_day=float(d["fp_budget_per_day"]),
                   cooldown=int(d["cooldown"]), ewma_span=int(d["ewma_span"]),
                   tau_grid=tuple(d["tau_grid"]))


@dataclass(frozen=True)
class AlertEvent:
    """One deduplicated alert: opened at ``t``, last above threshold at ``t_end``."""

    t: int
    intent: int
    smoothed_risk: float
    gate: tuple[float, ...]
    root_cause: int
    horizon: int
    t_end: int

    def to_dict(self) -> dict:
        return {"t": self.t, "intent": self.intent,
                "smoothed_risk": self.smoothed_risk, "gate": list(self.gate),
                "root_cause": self.root_cause, "horizon": self.horizon,
                "t_end": self.t_end}

    @classmethod
    def from_dict(cls, d: dict) -> "AlertEvent":
        return cls(t=int(d["t"]), intent=int(d["intent"]),
                   smoothed_risk=float(d["smoothed_risk"]),
                   gate=tuple(float(g) for g in d["gate"]),
                   root_cause=int(d["root_cause"]), horizon=int(d["horizon"]),
                   t_end=int(d["t_end"]))


def extract_events(smoothed: np.ndarray, tau: float, cooldown: int) -> list[tuple[int, int]]:
    """Deduplicate threshold crossings into ``(start, last_above)`` index pairs.

    Above-threshold minutes separated by at most ``cooldown`` silent minutes
    belong to one event; a new event can only open after the previous one has
    been silent for more than the cooldown.
    """
    above = np.flatnonzero(np.asarray(smoothed) >= tau)
    if above.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(above) > cooldown)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [above.size - 1]])
    return [(int(above[s]), int(above[e])) for s, e in zip(starts, ends)]


def _aftermath_mask(y_bin: np.ndarray, cooldown: int) -> np.ndarray:
    """Rows within ``cooldown`` minutes after any intent's labeled failure row.

    During an active incident every channel rings together — resource KPIs are
    shared across intents, so a failure in one intent drags its neighbours'
    risk scores up and they only decay back over the smoothing span.  Pages
    opened in that shadow are incident aftermath, not independent mistakes.
    """
    true_any = np.asarray(y_bin).any(axis=1)
    t = np.arange(true_any.shape[0])
    last_true = np.maximum.accumulate(np.where(true_any, t, -1))
    return (last_true >= 0) & (t - last_true <= max(1, int(cooldown)))


def _fp_firing_count(events: Sequence[tuple[int, int]], y_col: np.ndarray,
                     cooldown: int, aftermath: np.ndarray | None = None) -> int:
    """Deduplicated false firings inside the swept events.

    Healthy minutes (label 0) under an active alert are charged one firing
    per started cooldown window: the cooldown is the deduplication horizon,
    so a stretch of alarmed healthy time is equivalent to one page per
    re-arm.  A stretch that merely decays off a true failure window — its own
    intent's, or any intent's when ``aftermath`` is given — gets one cooldown
    of grace before charges start, matching the event-level false positive
    rule for short alerts, while an alert pinned above a low threshold rings
    up charges for every healthy hour it covers and cannot hide behind event
    merging.
    """
    y = np.asarray(y_col)
    window = max(1, int(cooldown))
    count = 0
    for s, e in events:
        idx = np.flatnonzero(y[s:e + 1] == 0)
        if idx.size == 0:
            continue
        cuts = np.flatnonzero(np.diff(idx) > 1)
        starts = np.r_[idx[0], idx[cuts + 1]]
        lengths = np.r_[idx[cuts], idx[-1]] - starts + 1
        graced = starts > 0
        if aftermath is not None:
            graced |= np.asarray(aftermath)[s + starts]
        grace = np.where(graced, window, 0)
        count += int(np.ceil((lengths - grace) / window).clip(min=0).sum())
    return count


def tune_thresholds(risks: np.ndarray, y_bin: np.ndarray,
                    policy: AlertPolicy) -> np.ndarray:
    """Pick each intent's threshold: smallest grid point within the FP budget.

    False positives are deduplicated alert firings on healthy minutes (see
    ``_fp_firing_count``).  If no grid point fits the budget, the threshold
    minimizing the FP rate wins, larger tau breaking ties.  A column whose
    smoothed risk never reaches the grid gives the sweep nothing to measure:
    the threshold defaults to 0.5 with a warning.
    """
    risks = np.asarray(risks, dtype=np.float64)
    y_bin = np.asarray(y_bin)
    if risks.shape != y_bin.shape:
        raise ValueError(f"risks {risks.shape} and labels {y_bin.shape} differ")
    T, K = risks.shape
    days = T / MINUTES_PER_DAY
    grid = sorted(policy.tau_grid)
    smoothed = ewma_smooth(risks, policy.ewma_span)
    aftermath = _aftermath_mask(y_bin, policy.cooldown)
    taus = np.empty(K)
    for i in range(K):
        col = smoothed[:, i]
        if float(col.max()) < grid[0]:
            warnings.warn(f"intent {i}: no risk mass reaches the threshold grid; "
                          f"defaulting to tau=0.5")
            taus[i] = 0.5
            continue
        best_tau = None
        best_rate = np.inf
        for tau in grid:
            events = extract_events(col, tau, policy.cooldown)
            rate = _fp_firing_count(events, y_bin[:, i], policy.cooldown,
                                    aftermath) / days
            if rate <= policy.fp_budget_per_day:
                best_tau, best_rate = tau, rate
                break
            if rate <= best_rate:  # ties resolve to the larger tau
                best_tau, best_rate = tau, rate
        taus[i] = best_tau
    return taus


def score_to_events(smoothed: np.ndarray, gates: np.ndarray | None,
                    taus: np.ndarray, policy: AlertPolicy, times: np.ndarray,
                    horizon: int) -> list[AlertEvent]:
    """Turn smoothed risks into alert events.

    The root-cause verdict is the argmax of the gate distribution at the first
    crossing; models without a gate fall back to their normalized smoothed
    risks at that minute.
    """
    T, K = smoothed.shape
    events: list[AlertEvent] = []
    for i in range(K):
        for s, e in extract_events(smoothed[:, i], float(taus[i]), policy.cooldown):
            if gates is not None:
                row = gates[s]
            else:
                row = smoothed[s]
                total = row.sum()
                row = row / total if total > 0 else np.full(K, 1.0 / K)
            events.append(AlertEvent(
                t=int(times[s]), intent=i, smoothed_risk=float(smoothed[s, i]),
                gate=tuple(float(g) for g in row), root_cause=int(np.argmax(row)),
                horizon=horizon, t_end=int(times[e])))
    events.sort(key=lambda ev: (ev.t, ev.intent))
    return events


def stream(model, series, taus: np.ndarray, policy: AlertPolicy = AlertPolicy(),
           features: np.ndarray | None = None) -> list[AlertEvent]:
    """Replay a series through a fitted model and emit deduplicated alerts.

    Smoothing state resets at every gap in the minute index (logged), since a
    telemetry outage invalidates the EWMA history.
    """
    risks, gates = model.score_series(series, features=features)
    segments = series.contiguous_segments()
    if len(segments) > 1:
        log.info("series has %d gaps; smoothing state resets at each", len(segments) - 1)
    events: list[AlertEvent] = []
    for seg in segments:
        smoothed = ewma_smooth(risks[seg], policy.ewma_span)
        seg_gates = None if gates is None else gates[seg]
        events.extend(score_to_events(smoothed, seg_gates, taus, policy,
                                      series.t[seg], model.horizon))
    events.sort(key=lambda ev: (ev.t, ev.intent))
    return events


@dataclass(frozen=True)
class TtfBound:
    """Half-open time-to-failure interval ``(lower, upper]`` in minutes."""

    lower: int
    upper: int

    def __post_init__(self) -> None:
        if not (0 <= self.lower < self.upper):
            raise ValueError(f"bound must satisfy 0 <= lower < upper, got {self}")

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


def ttf_bound(active: Mapping[int, bool]) -> TtfBound | None:
    """Fuse per-horizon alert states into a time-to-failure bound.

    A consistent pattern has every horizon >= some H active and shorter ones
    silent, bounding TTF to (next shorter horizon, H].  An inconsistent
    pattern (a silent horizon above an active one) still yields the tightest
    active horizon, with a warning.
    """
    if not active:
        raise ValueError("need at least one horizon state")
    horizons = sorted(active, reverse=True)
    if len(set(horizons)) != len(horizons):
        raise ValueError("duplicate horizons")
    fired = [h for h in horizons if active[h]]
    if not fired:
        return None
    upper = min(fired)
    shorter = [h for h in horizons if h < upper]
    lower = max(shorter) if shorter else 0
    expected = {h for h in horizons if h >= upper}
    if set(fired) != expected:
        warnings.warn(f"inconsistent multi-horizon alert states {dict(active)}; "
                      f"using tightest active horizon {upper}")
    return TtfBound(lower=lower, upper=upper)


def active_spans(events: Sequence[AlertEvent]) -> dict[int, list[tuple[int, int]]]:
    """Per-intent inclusive [t, t_end] activity spans from an event list."""
    spans: dict[int, list[tuple[int, int]]] = {}
    for ev in events:
        spans.setdefault(ev.intent, []).append((ev.t, ev.t_end))
    return spans


def is_active(spans: Sequence[tuple[int, int]], t: int) -> bool:
    return any(s <= t <= e for s, e in spans)
