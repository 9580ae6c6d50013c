"""Shared vocabulary: intents, KPI frames, episode annotations, labels, RNG streams.

Everything downstream (generator, features, models, alerting, evaluation) speaks
in terms of the types defined here.  Conventions:

* time is an integer minute index ``t``
* the eight KPIs always appear in the order of :data:`KPI_NAMES`
* intents are small dense integer indices with human-readable names
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

KPI_NAMES: tuple[str, ...] = (
    "cpu_pct",
    "ram_pct",
    "storage_pct",
    "snet",
    "sri",
    "api_latency",
    "telemetry_queue",
    "analytics_tput",
)

#: KPIs expressed as percentages; producers clamp them to [0, 100].
PERCENT_KPIS: tuple[str, ...] = ("cpu_pct", "ram_pct", "storage_pct")

CSV_HEADER = "t," + ",".join(KPI_NAMES)


@dataclass(frozen=True)
class IntentId:
    """A managed intent: dense index plus a stable human-readable name."""

    index: int
    name: str


DEFAULT_INTENTS: tuple[IntentId, ...] = (
    IntentId(0, "api"),
    IntentId(1, "telemetry"),
    IntentId(2, "analytics"),
)


def validate_intents(intents: Sequence[IntentId]) -> None:
    """Intent indices must be 0..K-1 with unique names and K >= 2."""
    if len(intents) < 2:
        raise ValueError("need at least two intents")
    idx = sorted(i.index for i in intents)
    if idx != list(range(len(intents))):
        raise ValueError(f"intent indices must be dense 0..{len(intents) - 1}, got {idx}")
    names = {i.name for i in intents}
    if len(names) != len(intents):
        raise ValueError("intent names must be unique")


def intent_by_name(intents: Sequence[IntentId], name: str) -> IntentId:
    for it in intents:
        if it.name == name:
            return it
    raise KeyError(f"unknown intent {name!r}")


@dataclass(frozen=True)
class KpiFrame:
    """One minute of telemetry: the eight KPI readings at minute ``t``."""

    t: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(KPI_NAMES):
            raise ValueError(f"expected {len(KPI_NAMES)} KPI values, got {len(self.values)}")
        arr = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("KPI values must be finite")
        for name, v in zip(KPI_NAMES, self.values):
            if name in PERCENT_KPIS and not (0.0 <= v <= 100.0):
                raise ValueError(f"{name}={v} outside [0, 100]")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(KPI_NAMES, self.values))


class KpiSeries:
    """Column-oriented store for a run of frames (``t`` vector + T x 8 matrix).

    Iteration yields :class:`KpiFrame` objects; bulk consumers use ``.values``
    directly.  Minutes must be strictly increasing but may contain gaps, which
    streaming consumers treat as state-reset boundaries.
    """

    def __init__(self, t: np.ndarray, values: np.ndarray):
        t = np.asarray(t, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if t.ndim != 1 or values.ndim != 2:
            raise ValueError("t must be 1-D and values 2-D")
        if values.shape != (t.size, len(KPI_NAMES)):
            raise ValueError(f"values must be ({t.size}, {len(KPI_NAMES)}), got {values.shape}")
        if t.size == 0:
            raise ValueError("empty series")
        if np.any(np.diff(t) <= 0):
            raise ValueError("minute indices must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("KPI values must be finite")
        self.t = t
        self.values = values

    def __len__(self) -> int:
        return int(self.t.size)

    def __iter__(self) -> Iterator[KpiFrame]:
        for i in range(len(self)):
            yield self.frame(i)

    def frame(self, i: int) -> KpiFrame:
        return KpiFrame(int(self.t[i]), tuple(float(v) for v in self.values[i]))

    def contiguous_segments(self) -> list[slice]:
        """Row slices of maximal 1-minute-spaced runs."""
        breaks = np.flatnonzero(np.diff(self.t) != 1)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks + 1, [len(self)]])
        return [slice(int(a), int(b)) for a, b in zip(starts, ends)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            writer = csv.writer(fh)
            for i in range(len(self)):
                writer.writerow([int(self.t[i])] + [f"{v:.6f}" for v in self.values[i]])

    @classmethod
    def from_csv(cls, path) -> "KpiSeries":
        with open(path, newline="") as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ValueError(f"unexpected KPI CSV header: {header!r}")
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"no data rows in {path}")
        t = np.array([int(r[0]) for r in rows], dtype=np.int64)
        values = np.array([[float(x) for x in r[1:]] for r in rows], dtype=np.float64)
        return cls(t, values)


class EpisodeKind(str, Enum):
    SIMPLE_DRIFT = "SimpleDrift"
    NON_LINEAR = "NonLinear"
    CO_DRIFT = "CoDrift"
    BENIGN_NEGATIVE = "BenignNegative"


FAILURE_KINDS = (EpisodeKind.SIMPLE_DRIFT, EpisodeKind.NON_LINEAR, EpisodeKind.CO_DRIFT)

#: Contiguous evaluation blocks the cross-validation harness cuts a series
#: into; the generator schedules episodes around the same boundaries so that
#: no incident straddles a train/test edge.
DEFAULT_EVAL_BLOCKS = 11


def block_bounds(total_rows: int, n_blocks: int = DEFAULT_EVAL_BLOCKS) -> list[int]:
    """Row boundaries of ``n_blocks`` contiguous, near-equal blocks."""
    if n_blocks < 2:
        raise ValueError("need at least two blocks")
    if total_rows < 2 * n_blocks:
        raise ValueError(f"{total_rows} rows is too short for {n_blocks} blocks")
    return [int(round(i * total_rows / n_blocks)) for i in range(n_blocks + 1)]


@dataclass(frozen=True)
class EpisodeAnnotation:
    """Ground truth for one injected episode.

    ``fail_t`` maps affected intent index -> minute its goal is first violated
    (empty for benign negatives).  ``end_t`` is the last minute the injected
    shape touches, which benign-spike checks and placement bookkeeping need.
    """

    kind: EpisodeKind
    onset_t: int
    fail_t: Mapping[int, int] = field(default_factory=dict)
    cause: int | None = None
    victim: int | None = None
    end_t: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "fail_t", dict(self.fail_t))
        if self.kind in FAILURE_KINDS:
            if self.cause is None:
                raise ValueError(f"{self.kind.value} episode needs a cause intent")
            if not self.fail_t or self.cause not in self.fail_t:
                raise ValueError("failure episode must record fail_t for its cause")
            if any(f <= self.onset_t for f in self.fail_t.values()):
                raise ValueError("fail_t must come strictly after onset_t")
        if self.kind is EpisodeKind.CO_DRIFT:
            if self.victim is None or self.victim == self.cause:
                raise ValueError("co-drift needs a victim distinct from the cause")
            if self.victim not in self.fail_t:
                raise ValueError("co-drift must record the victim's fail_t")
        if self.kind is EpisodeKind.BENIGN_NEGATIVE and (self.fail_t or self.cause is not None):
            raise ValueError("benign negatives carry no cause and no failures")

    @property
    def affected(self) -> tuple[int, ...]:
        return tuple(sorted(self.fail_t))

    def to_dict(self, intents: Sequence[IntentId] = DEFAULT_INTENTS) -> dict:
        name = {i.index: i.name for i in intents}
        return {
            "kind": self.kind.value,
            "cause": None if self.cause is None else name[self.cause],
            "victim": None if self.victim is None else name[self.victim],
            "onset_t": self.onset_t,
            "fail_t_map": {name[i]: int(t) for i, t in sorted(self.fail_t.items())},
            "end_t": self.end_t,
        }

    @classmethod
    def from_dict(cls, d: dict, intents: Sequence[IntentId] = DEFAULT_INTENTS) -> "EpisodeAnnotation":
        idx = {i.name: i.index for i in intents}
        return cls(
            kind=EpisodeKind(d["kind"]),
            onset_t=int(d["onset_t"]),
            fail_t={idx[k]: int(v) for k, v in d.get("fail_t_map", {}).items()},
            cause=None if d.get("cause") is None else idx[d["cause"]],
            victim=None if d.get("victim") is None else idx[d["victim"]],
            end_t=None if d.get("end_t") is None else int(d["end_t"]),
        )


def episodes_to_json(episodes: Sequence[EpisodeAnnotation], path,
                     intents: Sequence[IntentId] = DEFAULT_INTENTS) -> None:
    with open(path, "w") as fh:
        json.dump([e.to_dict(intents) for e in episodes], fh, indent=2)
        fh.write("\n")


def episodes_from_json(path, intents: Sequence[IntentId] = DEFAULT_INTENTS) -> list[EpisodeAnnotation]:
    with open(path) as fh:
        raw = json.load(fh)
    return [EpisodeAnnotation.from_dict(d, intents) for d in raw]


def make_bin_labels(fail_times: Sequence[Iterable[int]], horizon: int, total_minutes: int) -> np.ndarray:
    """Fixed-horizon binary labels.

    ``y[t, i] = 1`` iff some failure of intent ``i`` at minute ``f`` satisfies
    ``f - horizon <= t < f``.  Windows are truncated at the start of the series
    (a failure at ``f < horizon`` simply yields a shorter positive run).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if total_minutes <= 0:
        raise ValueError("total_minutes must be positive")
    y = np.zeros((total_minutes, len(fail_times)), dtype=np.int8)
    for i, fails in enumerate(fail_times):
        for f in fails:
            if not (0 < f <= total_minutes):
                raise ValueError(f"failure minute {f} outside series of length {total_minutes}")
            y[max(0, f - horizon):f, i] = 1
    return y


def fail_times_from_episodes(episodes: Sequence[EpisodeAnnotation], n_intents: int) -> list[list[int]]:
    fails: list[list[int]] = [[] for _ in range(n_intents)]
    for ep in episodes:
        for i, f in ep.fail_t.items():
            if not (0 <= i < n_intents):
                raise ValueError(f"episode references unknown intent index {i}")
            fails[i].append(int(f))
    return [sorted(f) for f in fails]


def make_cause_labels(y_bin: np.ndarray, episodes: Sequence[EpisodeAnnotation],
                      horizon: int) -> np.ndarray:
    """Root-cause labels: the cause indicator masked by the binary label.

    ``y_cause[t, c] = y_bin[t, c]`` inside the cause's own pre-failure window
    of each failure episode, zero everywhere else.  Co-drift victims therefore
    stay zero: they fail, but not as the root cause.
    """
    T, K = y_bin.shape
    y_cause = np.zeros_like(y_bin)
    for ep in episodes:
        if ep.kind not in FAILURE_KINDS:
            continue
        c = ep.cause
        if not (0 <= c < K):
            raise ValueError(f"episode references unknown intent index {c}")
        f = ep.fail_t[c]
        lo = max(0, f - horizon)
        y_cause[lo:f, c] = y_bin[lo:f, c]
    return y_cause


@dataclass
class LabelMatrices:
    """Per-minute supervision: binary failure windows and root-cause windows."""

    y_bin: np.ndarray
    y_cause: np.ndarray

    def __post_init__(self) -> None:
        if self.y_bin.shape != self.y_cause.shape:
            raise ValueError("label matrices must share a shape")
        if np.any((self.y_cause == 1) & (self.y_bin == 0)):
            raise ValueError("cause labels must be a subset of binary labels")

    @classmethod
    def build(cls, episodes: Sequence[EpisodeAnnotation], n_intents: int,
              horizon: int, total_minutes: int) -> "LabelMatrices":
        fails = fail_times_from_episodes(episodes, n_intents)
        y_bin = make_bin_labels(fails, horizon, total_minutes)
        y_cause = make_cause_labels(y_bin, episodes, horizon)
        return cls(y_bin=y_bin, y_cause=y_cause)


def gate_supervision(y_bin_row: np.ndarray, y_cause_row: np.ndarray) -> np.ndarray | None:
    """Target distribution for the gate at one minute, or None to abstain.

    Prefer the normalized cause indicator; fall back to the normalized binary
    labels; abstain on all-healthy minutes.
    """
    cause_mass = float(np.sum(y_cause_row))
    if cause_mass > 0:
        return np.asarray(y_cause_row, dtype=np.float64) / cause_mass
    bin_mass = float(np.sum(y_bin_row))
    if bin_mass > 0:
        return np.asarray(y_bin_row, dtype=np.float64) / bin_mass
    return None


def gate_targets(y_bin: np.ndarray, y_cause: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`gate_supervision` over a whole label matrix.

    Returns ``(targets, has_target)``; rows with ``has_target == False`` are
    abstentions and their target row is an unused uniform placeholder.
    """
    T, K = y_bin.shape
    cause_mass = y_cause.sum(axis=1, keepdims=True).astype(np.float64)
    bin_mass = y_bin.sum(axis=1, keepdims=True).astype(np.float64)
    targets = np.full((T, K), 1.0 / K)
    use_cause = cause_mass[:, 0] > 0
    use_bin = (~use_cause) & (bin_mass[:, 0] > 0)
    targets[use_cause] = y_cause[use_cause] / cause_mass[use_cause]
    targets[use_bin] = y_bin[use_bin] / bin_mass[use_bin]
    return targets, use_cause | use_bin


@dataclass(frozen=True)
class RngStream:
    """Deterministic, label-addressed random stream.

    Two streams with the same (seed, label) produce identical draws; distinct
    labels give statistically independent streams.  Labels are hashed so that
    adding a new stream never perturbs existing ones.
    """

    seed: int
    label: str

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(self.label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
        return np.random.default_rng(np.random.SeedSequence([self.seed, *words]))


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Shorthand for ``RngStream(seed, label).generator()``."""
    return RngStream(seed, label).generator()
