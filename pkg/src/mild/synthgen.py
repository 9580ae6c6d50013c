"""Synthetic multi-intent KPI benchmark with injected failure episodes.

The generator produces minute-resolution telemetry for eight KPIs — three
resource gauges (cpu, ram, storage), two network indicators (snet bandwidth,
sri reachability), and one application KPI per intent (api latency, telemetry
queue depth, analytics throughput).  Each KPI follows a daily sinusoid plus
Gaussian noise; failure episodes superimpose drift shapes that end with the
affected intent's KPI crossing its violation level, and benign spikes mimic
the early phase of a drift but self-resolve.

Three failure mechanisms are injected:

* ``SimpleDrift`` — the intent's own application KPI ramps linearly into
  violation.
* ``NonLinear`` — a pair of intent-specific resource KPIs degrades
  quadratically from onset; the application KPI stays healthy for the first
  two thirds of the ramp and then collapses.  Early detection therefore has
  to read the resource pattern, and which pair moves identifies the intent.
* ``CoDrift`` — one intent degrades as in ``NonLinear`` while a dependent
  intent's application KPI trails it with a lag and attenuated magnitude,
  failing shortly after the cause does.

All randomness is drawn from labelled streams derived from a single seed, so
output is reproducible byte-for-byte.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .types import (
    DEFAULT_EVAL_BLOCKS,
    DEFAULT_INTENTS,
    KPI_NAMES,
    PERCENT_KPIS,
    EpisodeAnnotation,
    EpisodeKind,
    KpiSeries,
    block_bounds,
    episodes_from_json,
    episodes_to_json,
    rng_for,
)


@dataclass(frozen=True)
class KpiProfile:
    """Healthy level, seasonal swing, noise scale, and violation level of one KPI."""

    nominal: float
    amplitude: float
    sigma: float
    violation: float

    @property
    def direction(self) -> float:
        """+1 when violation lies above nominal, -1 when below."""
        return 1.0 if self.violation >= self.nominal else -1.0

    @property
    def span(self) -> float:
        """Signed distance from nominal to violation."""
        return self.violation - self.nominal


DEFAULT_PROFILES: dict[str, KpiProfile] = {
    "cpu_pct": KpiProfile(35.0, 5.0, 1.2, 90.0),
    "ram_pct": KpiProfile(45.0, 3.5, 0.9, 92.0),
    "storage_pct": KpiProfile(55.0, 0.6, 0.25, 95.0),
    "snet": KpiProfile(800.0, 70.0, 15.0, 300.0),
    "sri": KpiProfile(99.0, 0.3, 0.12, 85.0),
    "api_latency": KpiProfile(120.0, 12.0, 5.0, 500.0),
    "telemetry_queue": KpiProfile(200.0, 30.0, 12.0, 2000.0),
    "analytics_tput": KpiProfile(1000.0, 90.0, 25.0, 250.0),
}

#: Fixed seasonal phase (fraction of a period) per KPI, so peaks do not align.
SEASONAL_PHASE: dict[str, float] = {
    "cpu_pct": 0.00, "ram_pct": 0.10, "storage_pct": 0.35, "snet": 0.55,
    "sri": 0.20, "api_latency": 0.70, "telemetry_queue": 0.45, "analytics_tput": 0.85,
}

#: Application KPI owned by each intent (index into DEFAULT_INTENTS).
APP_KPI: dict[int, str] = {0: "api_latency", 1: "telemetry_queue", 2: "analytics_tput"}

#: Resource pair ``(leader, follower)`` that degrades during a NonLinear
#: episode of each intent.  The leader saturates first; the follower joins
#: partway through the ramp.  Each resource leads exactly one intent and
#: follows exactly one other, so the failing intent is identifiable well
#: before its own application KPI reacts — but only from which resource
#: moved first, not from any resource alone.
RESOURCE_PAIRS: dict[int, tuple[str, str]] = {
    0: ("snet", "cpu_pct"),
    1: ("ram_pct", "snet"),
    2: ("cpu_pct", "ram_pct"),
}

#: Fraction of a NonLinear ramp during which the application KPI stays flat.
APP_ONSET_FRACTION = 2.0 / 3.0

#: Exponent of the victim's attenuated symptom ramp during a CoDrift episode.
#: Between the cause's quadratic resources (invisible until late) and a linear
#: trail (visible immediately): the dependent service absorbs stress with a
#: buffer that erodes, so its symptom grows faster than the stress itself but
#: still never outpaces the cause's own degradation.
VICTIM_RAMP_POWER = 1.5

#: Clearance (minutes) a benign spike keeps from any failure episode.
SPIKE_CLEARANCE = 60
#: Minimum spacing between benign spikes.
SPIKE_SPACING = 20


@dataclass
class GenConfig:
    """Resolved generator configuration (serialized next to the data)."""

    total_minutes: int = 30_000
    seed: int = 42
    episode_count: int = 60
    mix_non_linear: float = 0.6
    mix_co_drift: float = 0.2
    mix_simple: float = 0.2
    hard_negative_rate: float = 5.0   # spikes per 10,000 minutes
    season_period: int = 1440
    ramp_minutes: tuple[int, int] = (90, 180)
    magnitude_range: tuple[float, float] = (0.9, 1.1)
    victim_lag_minutes: tuple[int, int] = (10, 30)
    victim_attenuation: tuple[float, float] = (0.5, 0.8)
    resource_stagger: tuple[float, float] = (0.1, 0.25)
    recovery_minutes: int = 2
    min_gap: int = 300                # quiet minutes between failure episodes
    spike_minutes: tuple[int, int] = (5, 20)
    spike_magnitude: tuple[float, float] = (0.5, 1.0)
    start_margin: int = 240
    # Failure episodes never straddle the boundaries of these many contiguous
    # evaluation blocks: chronological train/test cuts then always see whole
    # incidents, never a truncated climb whose labels sit past the cut.
    eval_blocks: int = DEFAULT_EVAL_BLOCKS
    # Pre-onset minutes also kept inside the episode's block, so the labeled
    # pre-failure window of a short ramp cannot leak across the boundary.
    block_pad: int = 30
    profiles: dict[str, KpiProfile] = field(
        default_factory=lambda: dict(DEFAULT_PROFILES))

    def validate(self) -> None:
        if self.total_minutes <= 0:
            raise ValueError("total_minutes must be positive")
        mix = self.mix_non_linear + self.mix_co_drift + self.mix_simple
        if abs(mix - 1.0) > 1e-9:
            raise ValueError(f"event mix must sum to 1, got {mix}")
        if min(self.mix_non_linear, self.mix_co_drift, self.mix_simple) < 0:
            raise ValueError("event mix fractions must be non-negative")
        if self.episode_count < 0 or self.hard_negative_rate < 0:
            raise ValueError("episode_count and hard_negative_rate must be >= 0")
        if self.ramp_minutes[0] < 2 or self.ramp_minutes[0] > self.ramp_minutes[1]:
            raise ValueError("ramp_minutes must satisfy 2 <= lo <= hi")
        if not (0.0 <= self.resource_stagger[0] <= self.resource_stagger[1] < 1.0):
            raise ValueError("resource_stagger must satisfy 0 <= lo <= hi < 1")
        if self.eval_blocks < 1 or self.block_pad < 0:
            raise ValueError("eval_blocks must be >= 1 and block_pad >= 0")
        if self.eval_blocks >= 2 and self.episode_count > 0:
            max_extent = (self.ramp_minutes[1] + self.victim_lag_minutes[1]
                          + self.recovery_minutes + self.block_pad)
            if self.total_minutes // self.eval_blocks <= max_extent:
                raise ValueError(
                    "cannot place episodes: evaluation blocks are too short "
                    "to hold one; lower eval_blocks or shorten the fault shapes")
        if set(self.profiles) != set(KPI_NAMES):
            raise ValueError("profiles must cover exactly the standard KPIs")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "profiles"}
        for k, v in list(d.items()):
            if isinstance(v, tuple):
                d[k] = list(v)
        d["profiles"] = {k: vars(p) for k, p in self.profiles.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        profiles = {k: KpiProfile(**v) for k, v in d.pop("profiles").items()}
        for k, v in list(d.items()):
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(profiles=profiles, **d)


@dataclass
class GeneratedBenchmark:
    frames: KpiSeries
    episodes: list[EpisodeAnnotation]
    config: GenConfig

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.frames.to_csv(out / "kpis.csv")
        episodes_to_json(self.episodes, out / "episodes.json")
        with open(out / "genconfig.json", "w") as fh:
            json.dump(self.config.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, in_dir) -> "GeneratedBenchmark":
        src = Path(in_dir)
        if not (src / "kpis.csv").exists():
            raise FileNotFoundError(f"no kpis.csv under {src}")
        frames = KpiSeries.from_csv(src / "kpis.csv")
        episodes = episodes_from_json(src / "episodes.json")
        with open(src / "genconfig.json") as fh:
            config = GenConfig.from_dict(json.load(fh))
        return cls(frames=frames, episodes=episodes, config=config)


# ---------------------------------------------------------------------------
# shape primitives (deltas added onto the clean per-KPI baseline)

def _kpi_index(name: str) -> int:
    return KPI_NAMES.index(name)


def _add_ramp(values: np.ndarray, kpi: str, onset: int, fail: int, full: float,
              recovery: int, power: float) -> None:
    """Add ``full * s**power`` over [onset, fail], then a linear return to zero."""
    dur = fail - onset
    t = np.arange(onset, fail + 1)
    s = (t - onset) / dur
    k = _kpi_index(kpi)
    values[onset:fail + 1, k] += full * s ** power
    rec_end = min(fail + recovery, values.shape[0] - 1)
    if rec_end > fail:
        u = (np.arange(fail + 1, rec_end + 1) - fail) / recovery
        values[fail + 1:rec_end + 1, k] += full * np.maximum(0.0, 1.0 - u)


def _add_late_ramp(values: np.ndarray, kpi: str, onset: int, fail: int, full: float,
                   recovery: int, flat_fraction: float) -> None:
    """Flat until ``onset + flat_fraction*dur``, then quadratic up to ``full`` at fail."""
    dur = fail - onset
    start = onset + int(round(flat_fraction * dur))
    if start >= fail:
        start = fail - 1
    _add_ramp(values, kpi, start, fail, full, recovery, power=2.0)


def _check_bounds(values: np.ndarray, onset: int, end: int) -> None:
    if onset < 0 or end >= values.shape[0]:
        raise ValueError(f"episode [{onset}, {end}] exceeds series of length {values.shape[0]}")


def _check_clearance(episodes: list[EpisodeAnnotation], onset: int, end: int,
                     gap: int) -> None:
    for ep in episodes:
        if ep.kind is EpisodeKind.BENIGN_NEGATIVE:
            continue
        e_end = ep.end_t if ep.end_t is not None else max(ep.fail_t.values())
        if not (onset - gap >= e_end or ep.onset_t - gap >= end):
            raise ValueError(
                f"episode [{onset}, {end}] overlaps existing episode at {ep.onset_t} "
                f"(need {gap} quiet minutes)")


# ---------------------------------------------------------------------------
# public injectors (mutate the series values, return the annotation)

def inject_simple_drift(values: np.ndarray, config: GenConfig,
                        episodes: list[EpisodeAnnotation], intent: int,
                        onset_t: int, fail_t: int,
                        magnitude: float = 1.0) -> EpisodeAnnotation:
    """Linear drift of the intent's application KPI into violation at ``fail_t``."""
    if fail_t <= onset_t:
        raise ValueError("fail_t must come after onset_t")
    end = fail_t + config.recovery_minutes
    _check_bounds(values, onset_t, end)
    _check_clearance(episodes, onset_t, end, config.min_gap)
    kpi = APP_KPI[intent]
    full = magnitude * config.profiles[kpi].span
    _add_ramp(values, kpi, onset_t, fail_t, full, config.recovery_minutes, power=1.0)
    ann = EpisodeAnnotation(kind=EpisodeKind.SIMPLE_DRIFT, onset_t=onset_t,
                            fail_t={intent: fail_t}, cause=intent, end_t=end)
    episodes.append(ann)
    return ann


def _add_resource_pair(values: np.ndarray, config: GenConfig, intent: int,
                       onset_t: int, fail_t: int, magnitude: float,
                       stagger: float) -> None:
    """Quadratic growth of the intent's resource pair: leader first, then follower.

    The leader saturates from ``onset_t``; the follower joins after a
    ``stagger`` fraction of the ramp has elapsed.  Both reach full deflection
    at ``fail_t``.
    """
    leader, follower = RESOURCE_PAIRS[intent]
    dur = fail_t - onset_t
    _add_ramp(values, leader, onset_t, fail_t,
              magnitude * config.profiles[leader].span,
              config.recovery_minutes, power=2.0)
    f_onset = min(fail_t - 1, onset_t + int(round(stagger * dur)))
    _add_ramp(values, follower, f_onset, fail_t,
              magnitude * config.profiles[follower].span,
              config.recovery_minutes, power=2.0)


def inject_non_linear(values: np.ndarray, config: GenConfig,
                      episodes: list[EpisodeAnnotation], intent: int,
                      onset_t: int, fail_t: int,
                      magnitude: float = 1.0,
                      stagger: float = 0.0) -> EpisodeAnnotation:
    """Quadratic degradation of the intent's resource pair; late app-KPI collapse."""
    if fail_t <= onset_t:
        raise ValueError("fail_t must come after onset_t")
    end = fail_t + config.recovery_minutes
    _check_bounds(values, onset_t, end)
    _check_clearance(episodes, onset_t, end, config.min_gap)
    _add_resource_pair(values, config, intent, onset_t, fail_t, magnitude, stagger)
    app = APP_KPI[intent]
    _add_late_ramp(values, app, onset_t, fail_t, magnitude * config.profiles[app].span,
                   config.recovery_minutes, APP_ONSET_FRACTION)
    ann = EpisodeAnnotation(kind=EpisodeKind.NON_LINEAR, onset_t=onset_t,
                            fail_t={intent: fail_t}, cause=intent, end_t=end)
    episodes.append(ann)
    return ann


def inject_co_drift(values: np.ndarray, config: GenConfig,
                    episodes: list[EpisodeAnnotation], cause: int, victim: int,
                    onset_t: int, fail_t: int, lag: int, attenuation: float,
                    magnitude: float = 1.0,
                    stagger: float = 0.0) -> EpisodeAnnotation:
    """Cause degrades as NonLinear; the victim's app KPI trails by ``lag`` minutes.

    The victim's symptom accelerates like its cause (quadratic), lagged and
    attenuated while the cause's own application still holds up — the
    dependent service absorbs part of the stress and never outpaces what
    drives it.  Once the cause's application KPI starts collapsing (the final
    third of the ramp), that service failure propagates with the same lag:
    the victim climbs from its attenuated level straight into violation at
    its own failure minute ``fail_t + lag``.
    """
    if fail_t <= onset_t:
        raise ValueError("fail_t must come after onset_t")
    if victim == cause:
        raise ValueError("victim must differ from cause")
    if lag <= 0:
        raise ValueError("victim lag must be positive")
    fail_v = fail_t + lag
    end = fail_v + config.recovery_minutes
    _check_bounds(values, onset_t, end)
    _check_clearance(episodes, onset_t, end, config.min_gap)

    _add_resource_pair(values, config, cause, onset_t, fail_t, magnitude, stagger)
    app_c = APP_KPI[cause]
    _add_late_ramp(values, app_c, onset_t, fail_t, magnitude * config.profiles[app_c].span,
                   config.recovery_minutes, APP_ONSET_FRACTION)

    app_v = APP_KPI[victim]
    full_v = magnitude * config.profiles[app_v].span
    onset_v = onset_t + lag
    dur = fail_t - onset_t
    k = _kpi_index(app_v)
    # the cause's own application starts collapsing in the final third of the
    # ramp; that service failure reaches the victim after the same lag
    climb_t = max(onset_v + 1,
                  min(fail_v - 1, onset_t + int(round(APP_ONSET_FRACTION * dur)) + lag))
    t = np.arange(onset_v, climb_t)
    values[onset_v:climb_t, k] += (attenuation * full_v
                                   * ((t - onset_v) / dur) ** VICTIM_RAMP_POWER)
    # upstream service gone: the victim accelerates from its attenuated level
    # into violation at its own failure minute
    r0 = attenuation * full_v * ((climb_t - onset_v) / dur) ** VICTIM_RAMP_POWER
    u = (np.arange(climb_t, fail_v + 1) - climb_t) / (fail_v - climb_t)
    values[climb_t:fail_v + 1, k] += r0 + (full_v - r0) * u ** VICTIM_RAMP_POWER
    rec_end = min(fail_v + config.recovery_minutes, values.shape[0] - 1)
    if rec_end > fail_v:
        u = (np.arange(fail_v + 1, rec_end + 1) - fail_v) / config.recovery_minutes
        values[fail_v + 1:rec_end + 1, k] += full_v * np.maximum(0.0, 1.0 - u)

    ann = EpisodeAnnotation(kind=EpisodeKind.CO_DRIFT, onset_t=onset_t,
                            fail_t={cause: fail_t, victim: fail_v},
                            cause=cause, victim=victim, end_t=end)
    episodes.append(ann)
    return ann


def spike_reference(config: GenConfig, kpi: str) -> float:
    """Excursion a steepest drift reaches in its first 15 minutes (unsigned).

    Benign spikes scale against this so that they are not trivially smaller
    than the early phase of a real episode.
    """
    return abs(config.profiles[kpi].span) * 15.0 / config.ramp_minutes[0]


def inject_hard_negative(values: np.ndarray, config: GenConfig,
                         episodes: list[EpisodeAnnotation], kpis: tuple[str, ...],
                         onset_t: int, duration: int,
                         magnitude: float = 1.0) -> EpisodeAnnotation:
    """Half-sine spike toward violation on ``kpis``; fully self-resolves."""
    if duration < 2:
        raise ValueError("spike duration must be at least 2 minutes")
    end = onset_t + duration
    _check_bounds(values, onset_t, end)
    _check_clearance(episodes, onset_t, end, SPIKE_CLEARANCE)
    t = np.arange(onset_t, end + 1)
    shape = np.sin(np.pi * (t - onset_t) / duration)
    for kpi in kpis:
        prof = config.profiles[kpi]
        peak = magnitude * spike_reference(config, kpi) * prof.direction
        values[onset_t:end + 1, _kpi_index(kpi)] += peak * shape
    ann = EpisodeAnnotation(kind=EpisodeKind.BENIGN_NEGATIVE, onset_t=onset_t, end_t=end)
    episodes.append(ann)
    return ann


# ---------------------------------------------------------------------------
# full benchmark assembly

def _episode_kinds(config: GenConfig) -> list[EpisodeKind]:
    """Kind list honouring the mix exactly (largest remainder), order shuffled.

    The shuffled list is then reopened with up to one simple drift per intent:
    the cause schedule rotates through all intents every three episodes, so
    this guarantees every chronological training prefix contains each
    intent's plainest failure shape.  Without it, an unlucky shuffle leaves
    the earliest cross-validation folds with an intent whose only training
    examples are resource-led, and its scorer never learns the application
    KPI at all.
    """
    n = config.episode_count
    mix = [(EpisodeKind.NON_LINEAR, config.mix_non_linear),
           (EpisodeKind.CO_DRIFT, config.mix_co_drift),
           (EpisodeKind.SIMPLE_DRIFT, config.mix_simple)]
    counts = {k: int(np.floor(n * p)) for k, p in mix}
    remainders = sorted(mix, key=lambda kp: (n * kp[1]) % 1.0, reverse=True)
    short = n - sum(counts.values())
    for k, _ in remainders[:short]:
        counts[k] += 1
    kinds = [k for k, _ in mix for _ in range(counts[k])]
    rng = rng_for(config.seed, "synthgen/kinds")
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]
    head: list[EpisodeKind] = []
    rest: list[EpisodeKind] = []
    for k in kinds:
        if k is EpisodeKind.SIMPLE_DRIFT and len(head) < len(DEFAULT_INTENTS):
            head.append(k)
        else:
            rest.append(k)
    return head + rest


def build_baseline(config: GenConfig) -> np.ndarray:
    """Noise-free seasonal baseline for every KPI, shape (T, 8)."""
    t = np.arange(config.total_minutes)
    out = np.empty((config.total_minutes, len(KPI_NAMES)))
    for k, name in enumerate(KPI_NAMES):
        prof = config.profiles[name]
        phase = SEASONAL_PHASE[name]
        out[:, k] = prof.nominal + prof.amplitude * np.sin(
            2.0 * np.pi * (t / config.season_period + phase))
    return out


def _cause_schedule(config: GenConfig, n: int) -> list[int]:
    """Failing intent for each episode, balanced over time.

    Every K consecutive episodes cover all K intents exactly once, in a
    seeded per-block shuffle.  Any contiguous stretch of the series therefore
    exercises every intent at a comparable rate, which keeps chronological
    train/test splits meaningful: an independent draw per episode routinely
    opens the series with a single-intent run, leaving the other intents with
    zero training examples in early splits.
    """
    rng = rng_for(config.seed, "synthgen/intent_schedule")
    K = len(DEFAULT_INTENTS)
    out: list[int] = []
    while len(out) < n:
        out.extend(int(i) for i in rng.permutation(K))
    return out[:n]


def _place_failures(values: np.ndarray, config: GenConfig) -> list[EpisodeAnnotation]:
    """Draw every episode's parameters, then lay them out left to right.

    Total occupied length is computed up front; the remaining slack is split
    randomly across the gaps, which keeps episodes spread over the whole
    series.  An episode whose span (including ``block_pad`` minutes before
    onset) would cross an evaluation-block boundary is shifted just past the
    boundary, so chronological cuts at block edges never land mid-incident.
    """
    kinds = _episode_kinds(config)
    schedule = _cause_schedule(config, len(kinds))
    rng = rng_for(config.seed, "synthgen/episodes")
    K = len(DEFAULT_INTENTS)
    draws = []
    rng_stag = rng_for(config.seed, "synthgen/stagger")
    for kind, cause in zip(kinds, schedule):
        dur = int(rng.integers(config.ramp_minutes[0], config.ramp_minutes[1] + 1))
        mag = float(rng.uniform(*config.magnitude_range))
        lag = atten = victim = None
        stag = 0.0
        if kind is not EpisodeKind.SIMPLE_DRIFT:
            # dedicated stream: re-tuning the stagger range never reshuffles
            # the episode layout drawn from the main stream
            stag = float(rng_stag.uniform(*config.resource_stagger))
        if kind is EpisodeKind.CO_DRIFT:
            victim = int((cause + 1 + rng.integers(K - 1)) % K)
            lag = int(rng.integers(config.victim_lag_minutes[0],
                                   config.victim_lag_minutes[1] + 1))
            atten = float(rng.uniform(*config.victim_attenuation))
        extent = dur + (lag or 0) + config.recovery_minutes
        draws.append((kind, dur, mag, cause, victim, lag, atten, stag, extent))

    n = len(draws)
    if n == 0:
        return []
    occupied = sum(d[-1] for d in draws) + (n - 1) * config.min_gap
    budget = config.total_minutes - config.start_margin - config.min_gap
    slack = budget - occupied
    if slack < 0:
        raise ValueError(
            f"cannot place {n} episodes in {config.total_minutes} minutes: "
            f"need {occupied - slack} with the configured gaps")
    extra = rng.multinomial(slack, np.full(n + 1, 1.0 / (n + 1)))

    if config.eval_blocks >= 2:
        boundaries = block_bounds(config.total_minutes, config.eval_blocks)[1:-1]
    else:
        boundaries = []

    episodes: list[EpisodeAnnotation] = []
    cursor = config.start_margin + int(extra[0])
    for i, (kind, dur, mag, cause, victim, lag, atten, stag, extent) in enumerate(draws):
        onset = cursor
        for b in boundaries:
            if onset - config.block_pad < b <= onset + extent:
                onset = b + config.block_pad
        fail = onset + dur
        if kind is EpisodeKind.SIMPLE_DRIFT:
            inject_simple_drift(values, config, episodes, cause, onset, fail, mag)
        elif kind is EpisodeKind.NON_LINEAR:
            inject_non_linear(values, config, episodes, cause, onset, fail, mag,
                              stagger=stag)
        else:
            inject_co_drift(values, config, episodes, cause, victim, onset, fail,
                            lag, atten, mag, stagger=stag)
        cursor = onset + extent + config.min_gap + int(extra[i + 1])
    return episodes


def _place_hard_negatives(values: np.ndarray, config: GenConfig,
                          episodes: list[EpisodeAnnotation]) -> None:
    count = int(round(config.total_minutes * config.hard_negative_rate / 10_000.0))
    if count == 0:
        return
    rng = rng_for(config.seed, "synthgen/hard_negatives")
    app_by_intent = list(APP_KPI.values())
    placed = 0
    spike_spans: list[tuple[int, int]] = []
    for _ in range(count):
        for _attempt in range(1000):
            dur = int(rng.integers(config.spike_minutes[0], config.spike_minutes[1] + 1))
            t0 = int(rng.integers(config.start_margin, config.total_minutes - dur - 25))
            mag = float(rng.uniform(*config.spike_magnitude))
            flavor = int(rng.integers(2))
            if flavor == 0:
                kpis: tuple[str, ...] = ("cpu_pct", "ram_pct")
            else:
                kpis = (app_by_intent[int(rng.integers(len(app_by_intent)))],)
            end = t0 + dur
            if any(t0 - SPIKE_SPACING < e and s < end + SPIKE_SPACING
                   for s, e in spike_spans):
                continue
            try:
                inject_hard_negative(values, config, episodes, kpis, t0, dur, mag)
            except ValueError:
                continue
            spike_spans.append((t0, end))
            placed += 1
            break
        else:
            warnings.warn("could not place a benign spike after 1000 attempts; skipping")
    if placed < count:
        warnings.warn(f"placed only {placed} of {count} benign spikes")


def generate(config: GenConfig | None = None, **overrides) -> GeneratedBenchmark:
    """Generate a complete benchmark for the given (or default) configuration."""
    config = replace(config or GenConfig(), **overrides)
    config.validate()
    values = build_baseline(config)
    episodes = _place_failures(values, config)
    _place_hard_negatives(values, config, episodes)
    for k, name in enumerate(KPI_NAMES):
        sigma = config.profiles[name].sigma
        if sigma > 0:
            noise = rng_for(config.seed, f"synthgen/noise/{name}")
            values[:, k] += noise.normal(0.0, sigma, size=config.total_minutes)
    for k, name in enumerate(KPI_NAMES):
        if name in PERCENT_KPIS:
            np.clip(values[:, k], 0.0, 100.0, out=values[:, k])
        else:
            np.clip(values[:, k], 0.0, None, out=values[:, k])
    frames = KpiSeries(np.arange(config.total_minutes, dtype=np.int64), values)
    episodes = sorted(episodes, key=lambda e: e.onset_t)
    return GeneratedBenchmark(frames=frames, episodes=episodes, config=config)
