"""Reference methods the mixture model is compared against.

All baselines expose the same scoring surface as the main model —
``score_series(series) -> (risks, gates)`` — but none of them produces a gate
distribution (``gates`` is None), so the alerting layer derives their
root-cause verdict from normalized smoothed risks instead.

* ``LrOvrModel`` — one-vs-rest logistic scorers, trained under the same
  minibatch budget and early-stopping schedule as the main model.
* ``WkpiStaticModel`` — a static weighted-KPI rule: per-intent fixed weights
  (L1-normalized logistic weights, intercept dropped) over the standardized
  features, squashed through a sigmoid.  Stands in for hand-tuned scoring
  rules a network operator would maintain.
* ``DistTargetModel`` — per-intent distance between the relevant raw KPIs and
  their healthy target vector, scaled by tolerances.
* ``MlpModel`` — the gate-free ablation: same encoder and per-intent heads,
  trained with the focal term only (no teacher, no gate).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .features import FeatureSpec, Standardizer, featurize
from .model import TrainConfig, fit_val_split, focal_term, positive_weights
from .numerics import ParamStore, Tape
from .teacher import DEFAULT_L2, TeacherModel, _sigmoid
from .types import KPI_NAMES, KpiSeries, rng_for

SCHEMA_VERSION = 1

#: Raw KPIs consulted by the distance-to-target rule for each intent.
RELEVANT_KPIS: dict[int, tuple[str, ...]] = {
    0: ("api_latency", "cpu_pct", "snet", "sri"),
    1: ("telemetry_queue", "ram_pct", "snet"),
    2: ("analytics_tput", "cpu_pct", "ram_pct"),
}

#: Tolerance = this many standard deviations of the healthy training data.
DIST_TOL_SIGMA = 6.0


def _featurize_series(series: KpiSeries, spec: FeatureSpec,
                      features: np.ndarray | None) -> np.ndarray:
    if features is not None:
        return features
    parts = [featurize(series.values[s], spec) for s in series.contiguous_segments()]
    return np.concatenate(parts, axis=0)


@dataclass
class LrOvrModel:
    """Per-intent logistic probabilities sharing the guidance-model surface."""

    teacher: TeacherModel
    standardizer: Standardizer
    horizon: int
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    train_info: dict = field(default_factory=dict)

    has_gate = False

    def predict(self, X_std: np.ndarray) -> tuple[np.ndarray, None]:
        return self.teacher.predict_proba(X_std), None

    def score_series(self, series: KpiSeries,
                     features: np.ndarray | None = None) -> tuple[np.ndarray, None]:
        X = self.standardizer.transform(_featurize_series(series, self.feature_spec, features))
        return self.predict(X)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "lr", "horizon": self.horizon,
                "feature_spec": self.feature_spec.to_dict(),
                "standardizer": self.standardizer.to_dict(),
                "teacher": self.teacher.to_dict(),
                "train_info": self.train_info}

    @classmethod
    def from_dict(cls, d: dict) -> "LrOvrModel":
        return cls(teacher=TeacherModel.from_dict(d["teacher"]),
                   standardizer=Standardizer.from_dict(d["standardizer"]),
                   horizon=int(d["horizon"]),
                   feature_spec=FeatureSpec.from_dict(d["feature_spec"]),
                   train_info=d.get("train_info", {}))


def train_lr(X_std: np.ndarray, y_bin: np.ndarray, horizon: int,
             standardizer: Standardizer, feature_spec: FeatureSpec = FeatureSpec(),
             train_config: TrainConfig = TrainConfig(), l2: float = DEFAULT_L2,
             seed: int = 42) -> LrOvrModel:
    """Fit the logistic scorers under the same budget and schedule as the mixture.

    Same estimator family as the guidance module — per-intent L2-regularized
    logistic regression on standardized features — but optimized with the
    shared training budget (Adam, minibatches, early stopping on the
    chronological validation tail) rather than full-batch descent run to
    convergence.  Comparisons against the mixture then measure what the
    architecture adds, not extra optimization effort.
    """
    X_std = np.asarray(X_std, dtype=np.float64)
    y_bin = np.asarray(y_bin)
    T, D = X_std.shape
    K = y_bin.shape[1]
    n_fit = fit_val_split(T, train_config.val_fraction)

    store = ParamStore(seed)
    store.add("W", (D, K), "zeros")
    store.add("b", (1, K), "zeros")
    # standard logistic intercept init: start each scorer at its intent's
    # base-rate log-odds so small chronological splits begin at the prior
    base = y_bin[:n_fit].mean(axis=0).clip(1e-4, 1.0 - 1e-4)
    store.params["b"].value[0, :] = np.log(base / (1.0 - base))

    def objective(rows: np.ndarray):
        x = nm.const(X_std[rows])
        p = nm.sigmoid(nm.affine(x, store.params["W"], store.params["b"]))
        total = None
        for i in range(K):
            bce = focal_term(nm.col(p, i), y_bin[rows, i], 0.0, 1.0)
            total = bce if total is None else nm.add(total, bce)
        return total

    def penalty() -> float:
        return l2 * float((store.params["W"].value ** 2).sum())

    val_rows = np.arange(n_fit, T)
    best_val = float("inf")
    best_params = store.values_dict()
    bad = 0
    history = []
    for epoch in range(1, train_config.max_epochs + 1):
        order = rng_for(seed, f"lr/shuffle/epoch{epoch}").permutation(n_fit)
        for lo in range(0, n_fit, train_config.batch_size):
            rows = order[lo:lo + train_config.batch_size]
            with Tape() as tape:
                loss = objective(rows)
            store.zero_grads()
            tape.backward(loss)
            store.params["W"].grad += 2.0 * l2 * store.params["W"].value
            store.clip_global_norm(train_config.clip_norm)
            store.adam_step(lr=train_config.lr)
        v = objective(val_rows).item() + penalty()
        history.append(v)
        if v < best_val - 1e-12:
            best_val, best_params, bad = v, store.values_dict(), 0
        else:
            bad += 1
            if bad >= train_config.patience:
                break
    store.load_values(best_params)
    teacher = TeacherModel(weights=store.params["W"].value.T.copy(),
                           bias=store.params["b"].value[0].copy())
    return LrOvrModel(teacher=teacher, standardizer=standardizer, horizon=horizon,
                      feature_spec=feature_spec,
                      train_info={"seed": seed, "epochs_run": len(history),
                                  "best_val_loss": best_val})


@dataclass
class WkpiStaticModel:
    """Fixed per-intent KPI weights; no intercept, no retraining at runtime."""

    weights: np.ndarray  # (K, D), rows L1-normalized
    standardizer: Standardizer
    horizon: int
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)

    has_gate = False

    @classmethod
    def from_teacher(cls, teacher: TeacherModel, standardizer: Standardizer,
                     horizon: int,
                     feature_spec: FeatureSpec = FeatureSpec()) -> "WkpiStaticModel":
        w = teacher.weights.copy()
        norms = np.abs(w).sum(axis=1, keepdims=True)
        zero = norms[:, 0] == 0.0
        if np.any(zero):
            warnings.warn("weighted-KPI rule has all-zero weight rows")
        w = np.divide(w, norms, out=np.zeros_like(w), where=norms > 0)
        return cls(weights=w, standardizer=standardizer, horizon=horizon,
                   feature_spec=feature_spec)

    def predict(self, X_std: np.ndarray) -> tuple[np.ndarray, None]:
        return _sigmoid(np.atleast_2d(X_std) @ self.weights.T), None

    def score_series(self, series: KpiSeries,
                     features: np.ndarray | None = None) -> tuple[np.ndarray, None]:
        X = self.standardizer.transform(_featurize_series(series, self.feature_spec, features))
        return self.predict(X)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "wkpi", "horizon": self.horizon,
                "feature_spec": self.feature_spec.to_dict(),
                "standardizer": self.standardizer.to_dict(),
                "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "WkpiStaticModel":
        return cls(weights=np.asarray(d["weights"], dtype=np.float64),
                   standardizer=Standardizer.from_dict(d["standardizer"]),
                   horizon=int(d["horizon"]),
                   feature_spec=FeatureSpec.from_dict(d["feature_spec"]))


@dataclass
class DistTargetModel:
    """Distance of each intent's relevant raw KPIs from their healthy targets.

    Score is ``min(1, ||(k - target) / tol||_2 / sqrt(m))`` over the intent's
    ``m`` relevant KPIs, so it grows smoothly from 0 (on target) and saturates
    at 1 once the KPIs sit far outside tolerance.
    """

    targets: np.ndarray  # (8,) healthy mean per raw KPI
    tols: np.ndarray     # (8,) tolerance per raw KPI
    horizon: int

    has_gate = False

    def score_series(self, series: KpiSeries,
                     features: np.ndarray | None = None) -> tuple[np.ndarray, None]:
        z = (series.values - self.targets) / self.tols
        K = len(RELEVANT_KPIS)
        risks = np.empty((len(series), K))
        for i in range(K):
            idx = [KPI_NAMES.index(n) for n in RELEVANT_KPIS[i]]
            d = np.sqrt((z[:, idx] ** 2).sum(axis=1) / len(idx))
            risks[:, i] = np.minimum(1.0, d)
        return risks, None

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "dist", "horizon": self.horizon,
                "targets": self.targets.tolist(), "tols": self.tols.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DistTargetModel":
        return cls(targets=np.asarray(d["targets"], dtype=np.float64),
                   tols=np.asarray(d["tols"], dtype=np.float64),
                   horizon=int(d["horizon"]))


def train_dist_target(values: np.ndarray, y_bin: np.ndarray, horizon: int,
                      tol_sigma: float = DIST_TOL_SIGMA) -> DistTargetModel:
    """Estimate targets and tolerances from the healthy training minutes."""
    healthy = y_bin.sum(axis=1) == 0
    if not np.any(healthy):
        warnings.warn("no healthy minutes in the training split; using all rows")
        healthy = np.ones(values.shape[0], dtype=bool)
    sub = values[healthy]
    return DistTargetModel(targets=sub.mean(axis=0),
                           tols=np.maximum(tol_sigma * sub.std(axis=0), 1e-8),
                           horizon=horizon)


# ---------------------------------------------------------------------------
# gate-free neural ablation

@dataclass
class MlpModel:
    """Shared encoder + per-intent risk heads, trained with focal loss only."""

    params: dict[str, np.ndarray]
    dims: tuple[int, int, int, int]  # input, hidden, encoding, head hidden
    n_intents: int
    standardizer: Standardizer
    horizon: int
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    train_info: dict = field(default_factory=dict)

    has_gate = False

    def _forward(self, X: np.ndarray) -> np.ndarray:
        def _relu(z):
            return np.where(z > 0, z, 0.0)

        h1 = _relu(X @ self.params["enc1.W"] + self.params["enc1.b"])
        h = _relu(h1 @ self.params["enc2.W"] + self.params["enc2.b"])
        out = np.empty((X.shape[0], self.n_intents))
        for i in range(self.n_intents):
            e = _relu(h @ self.params[f"hid{i}.W"] + self.params[f"hid{i}.b"])
            out[:, i] = _sigmoid(e @ self.params[f"out{i}.W"] + self.params[f"out{i}.b"])[:, 0]
        return out

    def predict(self, X_std: np.ndarray) -> tuple[np.ndarray, None]:
        return self._forward(np.atleast_2d(X_std)), None

    def score_series(self, series: KpiSeries,
                     features: np.ndarray | None = None) -> tuple[np.ndarray, None]:
        X = self.standardizer.transform(_featurize_series(series, self.feature_spec, features))
        return self._forward(X), None

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "mlp", "horizon": self.horizon,
                "dims": list(self.dims), "n_intents": self.n_intents,
                "feature_spec": self.feature_spec.to_dict(),
                "standardizer": self.standardizer.to_dict(),
                "parameters": {k: self.params[k].tolist() for k in sorted(self.params)},
                "train_info": self.train_info}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        return cls(params={k: np.asarray(v, dtype=np.float64)
                           for k, v in d["parameters"].items()},
                   dims=tuple(int(x) for x in d["dims"]),
                   n_intents=int(d["n_intents"]),
                   standardizer=Standardizer.from_dict(d["standardizer"]),
                   horizon=int(d["horizon"]),
                   feature_spec=FeatureSpec.from_dict(d["feature_spec"]),
                   train_info=d.get("train_info", {}))


def train_mlp(X_std: np.ndarray, y_bin: np.ndarray, horizon: int,
              standardizer: Standardizer, feature_spec: FeatureSpec = FeatureSpec(),
              train_config: TrainConfig = TrainConfig(), focal_gamma: float = 2.0,
              seed: int = 42) -> MlpModel:
    """Train the ablation under the same budget and schedule as the mixture."""
    X_std = np.asarray(X_std, dtype=np.float64)
    T, D = X_std.shape
    K = y_bin.shape[1]
    n_fit = fit_val_split(T, train_config.val_fraction)
    if int(y_bin[:n_fit].sum()) == 0:
        raise ValueError("training split has no positive minutes for any intent")
    dims = (D, 64, 32, 16)

    store = ParamStore(seed)
    store.add("enc1.W", (dims[0], dims[1]))
    store.add("enc1.b", (1, dims[1]), "zeros")
    store.add("enc2.W", (dims[1], dims[2]))
    store.add("enc2.b", (1, dims[2]), "zeros")
    for i in range(K):
        store.add(f"hid{i}.W", (dims[2], dims[3]))
        store.add(f"hid{i}.b", (1, dims[3]), "zeros")
        store.add(f"out{i}.W", (dims[3], 1))
        store.add(f"out{i}.b", (1, 1), "zeros")
    # same treatment as the main model's heads: start at the base-rate prior
    base = y_bin[:n_fit].mean(axis=0).clip(1e-4, 1.0 - 1e-4)
    for i in range(K):
        store.params[f"out{i}.b"].value[...] = float(np.log(base[i] / (1.0 - base[i])))
    w_pos = positive_weights(y_bin[:n_fit], train_config.pos_weight_cap)

    def batch_total(rows: np.ndarray):
        x = nm.const(X_std[rows])
        h1 = nm.relu(nm.affine(x, store.params["enc1.W"], store.params["enc1.b"]))
        h = nm.relu(nm.affine(h1, store.params["enc2.W"], store.params["enc2.b"]))
        total = None
        for i in range(K):
            e = nm.relu(nm.affine(h, store.params[f"hid{i}.W"], store.params[f"hid{i}.b"]))
            p = nm.sigmoid(nm.affine(e, store.params[f"out{i}.W"], store.params[f"out{i}.b"]))
            foc = focal_term(p, y_bin[rows, i], focal_gamma, float(w_pos[i]))
            total = foc if total is None else nm.add(total, foc)
        return total

    val_rows = np.arange(n_fit, T)
    best_val = float("inf")
    best_params = store.values_dict()
    bad = 0
    history = []
    for epoch in range(1, train_config.max_epochs + 1):
        order = rng_for(seed, f"mlp/shuffle/epoch{epoch}").permutation(n_fit)
        for lo in range(0, n_fit, train_config.batch_size):
            rows = order[lo:lo + train_config.batch_size]
            with Tape() as tape:
                loss = batch_total(rows)
            store.zero_grads()
            tape.backward(loss)
            store.clip_global_norm(train_config.clip_norm)
            store.adam_step(lr=train_config.lr)
        v = batch_total(val_rows).item()
        history.append(v)
        if v < best_val - 1e-12:
            best_val, best_params, bad = v, store.values_dict(), 0
        else:
            bad += 1
            if bad >= train_config.patience:
                break
    store.load_values(best_params)
    return MlpModel(params=store.values_dict(), dims=dims, n_intents=K,
                    standardizer=standardizer, horizon=horizon,
                    feature_spec=feature_spec,
                    train_info={"seed": seed, "epochs_run": len(history),
                                "best_val_loss": best_val})
