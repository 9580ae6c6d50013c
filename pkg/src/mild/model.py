"""Teacher-guided mixture-of-experts failure predictor.

A shared encoder feeds one small expert + risk head per intent; a gating
network sees the encoding together with the teacher's softened cross-intent
distribution and produces mixture weights that double as the root-cause
verdict.  Heads are trained with a hybrid of focal classification loss and
distillation toward the teacher; the gate is trained toward cause labels where
known, toward the teacher elsewhere, with a mild pressure to commit.
"""
from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import numerics as nm
from .features import FeatureSpec, Standardizer, featurize
from .numerics import ParamStore, Tape, Tensor2
from .teacher import TeacherModel
from .types import KpiSeries, gate_targets, rng_for

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MildArch:
    input_dim: int = 40
    encoder_hidden: int = 64
    encoder_out: int = 32
    expert_hidden: int = 16
    n_intents: int = 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MildArch":
        return cls(**{k: int(v) for k, v in d.items()})


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.9            # focal vs distillation blend per head
    focal_gamma: float = 2.0
    w_cause: float = 0.7          # gate pull toward cause labels (where known)
    w_teacher: float = 0.7        # gate pull toward the teacher distribution
    lambda_sparse: float = 0.005  # pressure for the gate to commit
    lambda_gate: float = 1.0      # weight of the whole gate term in the total
    lambda_decorr: float = 0.0    # optional expert decorrelation penalty

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 30
    patience: int = 8
    clip_norm: float = 5.0
    pos_weight_cap: float = 100.0
    val_fraction: float = 0.2


def _param_names(arch: MildArch) -> list[tuple[str, tuple[int, int], str]]:
    names = [
        ("enc1.W", (arch.input_dim, arch.encoder_hidden), "glorot"),
        ("enc1.b", (1, arch.encoder_hidden), "zeros"),
        ("enc2.W", (arch.encoder_hidden, arch.encoder_out), "glorot"),
        ("enc2.b", (1, arch.encoder_out), "zeros"),
        ("gate.W", (arch.encoder_out + arch.n_intents, arch.n_intents), "glorot"),
        ("gate.b", (1, arch.n_intents), "zeros"),
    ]
    for i in range(arch.n_intents):
        names += [
            (f"expert{i}.W", (arch.encoder_out, arch.expert_hidden), "glorot"),
            (f"expert{i}.b", (1, arch.expert_hidden), "zeros"),
            (f"head{i}.W", (arch.expert_hidden, 1), "glorot"),
            (f"head{i}.b", (1, 1), "zeros"),
        ]
    return names


class MildNetwork:
    """Trainable parameters plus the differentiable forward graph."""

    def __init__(self, arch: MildArch, seed: int):
        self.arch = arch
        self.store = ParamStore(seed)
        for name, shape, init in _param_names(arch):
            self.store.add(name, shape, init)

    def _p(self, name: str) -> Tensor2:
        return self.store.params[name]

    def forward(self, X: np.ndarray, d_teacher: np.ndarray,
                gate_override: np.ndarray | None = None) -> dict:
        """Build the forward graph (recorded if a tape is active).

        Returns a dict with the gate node ``g``, per-intent risk nodes ``p``,
        and per-intent expert outputs ``experts`` (pre-gate, for the optional
        decorrelation penalty).  ``gate_override`` replaces the computed gate
        with fixed weights, used to probe how the mixture routes information.
        """
        K = self.arch.n_intents
        x = nm.const(X)
        d = nm.const(d_teacher)
        h1 = nm.relu(nm.affine(x, self._p("enc1.W"), self._p("enc1.b")))
        h = nm.relu(nm.affine(h1, self._p("enc2.W"), self._p("enc2.b")))
        if gate_override is None:
            gin = nm.concat_cols(h, d)
            g = nm.softmax(nm.affine(gin, self._p("gate.W"), self._p("gate.b")))
        else:
            g = nm.const(np.broadcast_to(gate_override, (X.shape[0], K)).copy())
        experts = []
        risks = []
        for i in range(K):
            e = nm.relu(nm.affine(h, self._p(f"expert{i}.W"), self._p(f"expert{i}.b")))
            experts.append(e)
            scaled = nm.mul(nm.col(g, i), e)
            risks.append(nm.sigmoid(nm.affine(scaled, self._p(f"head{i}.W"), self._p(f"head{i}.b"))))
        return {"g": g, "p": risks, "experts": experts}


# ---------------------------------------------------------------------------
# loss terms (differentiable when built under an active tape)

def focal_term(p: Tensor2, y: np.ndarray, gamma: float, pos_weight: float) -> Tensor2:
    """Mean focal binary loss for one head; positives re-weighted by ``pos_weight``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    pc = nm.clip(p, nm.LOG_CLAMP, 1.0 - nm.LOG_CLAMP)
    one_minus = nm.rsub_const(1.0, pc)
    pos = nm.mul(nm.const(y), nm.mul(nm.pow_const(one_minus, gamma), nm.log(pc)))
    negt = nm.mul(nm.const(1.0 - y), nm.mul(nm.pow_const(pc, gamma), nm.log(one_minus)))
    return nm.mean_all(nm.add(nm.smul(pos, -pos_weight), nm.neg(negt)))


def distill_term(p: Tensor2, p_teacher: np.ndarray) -> Tensor2:
    """Mean cross-entropy of the head against the teacher's soft probability."""
    pt = np.asarray(p_teacher, dtype=np.float64).reshape(-1, 1)
    pc = nm.clip(p, nm.LOG_CLAMP, 1.0 - nm.LOG_CLAMP)
    ce = nm.add(nm.mul(nm.const(pt), nm.log(pc)),
                nm.mul(nm.const(1.0 - pt), nm.log(nm.rsub_const(1.0, pc))))
    return nm.mean_all(nm.neg(ce))


def _neg_entropy(rows: np.ndarray) -> np.ndarray:
    """Per-row sum of p*log(p) with 0*log(0) = 0; a constant in gate losses."""
    safe = np.where(rows > 0.0, rows, 1.0)
    return np.sum(rows * np.log(safe), axis=1, keepdims=True)


def gate_term(g: Tensor2, targets: np.ndarray, mask: np.ndarray, d_teacher: np.ndarray,
              w_cause: float, w_teacher: float, lambda_sparse: float) -> Tensor2:
    """Mean per-row gate loss.

    Rows with ``mask == 0`` (healthy minutes, no supervision) contribute no
    cause-KL; the teacher-KL and sparsity pressure apply everywhere.
    """
    targets = np.asarray(targets, dtype=np.float64)
    d_teacher = np.asarray(d_teacher, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64).reshape(-1, 1)
    lg = nm.log(g)
    sup = targets * m
    kl_sup = nm.add(nm.const(_neg_entropy(sup)), nm.neg(nm.rowsum(nm.mul(nm.const(sup), lg))))
    kl_teach = nm.add(nm.const(_neg_entropy(d_teacher)),
                      nm.neg(nm.rowsum(nm.mul(nm.const(d_teacher), lg))))
    sparse = nm.rowsum(nm.mul(g, nm.rsub_const(1.0, g)))
    per_row = nm.add(nm.add(nm.smul(kl_sup, w_cause), nm.smul(kl_teach, w_teacher)),
                     nm.smul(sparse, lambda_sparse))
    return nm.mean_all(per_row)


def decorr_term(experts: Sequence[Tensor2]) -> Tensor2:
    """Sum of squared Frobenius norms of cross-covariances between expert pairs."""
    if len(experts) < 2:
        raise ValueError("decorrelation needs at least two experts")
    B = experts[0].shape[0]
    centered = [nm.center_cols(e) for e in experts]
    total: Tensor2 | None = None
    for i in range(len(experts)):
        for j in range(i + 1, len(experts)):
            cov = nm.smul(nm.matmul(nm.transpose(centered[i]), centered[j]), 1.0 / B)
            term = nm.sum_all(nm.pow_const(cov, 2.0))
            total = term if total is None else nm.add(total, term)
    return total


def batch_loss(net: MildNetwork, X: np.ndarray, d_teacher: np.ndarray,
               p_teacher: np.ndarray, y_bin: np.ndarray, targets: np.ndarray,
               mask: np.ndarray, cfg: LossConfig, pos_weights: np.ndarray) -> Tensor2:
    """Total training objective for one batch (a (1, 1) tensor)."""
    out = net.forward(X, d_teacher)
    total: Tensor2 | None = None
    for i in range(net.arch.n_intents):
        foc = focal_term(out["p"][i], y_bin[:, i], cfg.focal_gamma, float(pos_weights[i]))
        dis = distill_term(out["p"][i], p_teacher[:, i])
        head = nm.add(nm.smul(foc, cfg.alpha), nm.smul(dis, 1.0 - cfg.alpha))
        total = head if total is None else nm.add(total, head)
    gate = gate_term(out["g"], targets, mask, d_teacher,
                     cfg.w_cause, cfg.w_teacher, cfg.lambda_sparse)
    total = nm.add(total, nm.smul(gate, cfg.lambda_gate))
    if cfg.lambda_decorr > 0.0:
        total = nm.add(total, nm.smul(decorr_term(out["experts"]), cfg.lambda_decorr))
    return total


# ---------------------------------------------------------------------------
# inference bundle

def _forward_np(params: dict[str, np.ndarray], arch: MildArch, X: np.ndarray,
                d_teacher: np.ndarray,
                gate_override: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Plain-numpy twin of :meth:`MildNetwork.forward` (identical op order)."""

    def _relu(z): return np.where(z > 0, z, 0.0)

    def _sigmoid(z):
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    h1 = _relu(X @ params["enc1.W"] + params["enc1.b"])
    h = _relu(h1 @ params["enc2.W"] + params["enc2.b"])
    if gate_override is None:
        gin = np.concatenate([h, d_teacher], axis=1)
        z = gin @ params["gate.W"] + params["gate.b"]
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        g = e / e.sum(axis=1, keepdims=True)
    else:
        g = np.broadcast_to(gate_override, (X.shape[0], arch.n_intents)).copy()
    risks = np.empty((X.shape[0], arch.n_intents))
    for i in range(arch.n_intents):
        ei = _relu(h @ params[f"expert{i}.W"] + params[f"expert{i}.b"])
        scaled = g[:, i:i + 1] * ei
        risks[:, i] = _sigmoid(scaled @ params[f"head{i}.W"] + params[f"head{i}.b"])[:, 0]
    return risks, g


@dataclass
class MildModel:
    """Self-contained inference bundle: features -> risks + gate distribution."""

    arch: MildArch
    loss_config: LossConfig
    horizon: int
    params: dict[str, np.ndarray]
    standardizer: Standardizer
    teacher: TeacherModel
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    train_info: dict = field(default_factory=dict)

    @property
    def has_gate(self) -> bool:
        return True

    def predict(self, X_std: np.ndarray,
                gate_override: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-intent risks and gate distribution for standardized feature rows."""
        X_std = np.atleast_2d(np.asarray(X_std, dtype=np.float64))
        d = self.teacher.distribution(X_std)
        return _forward_np(self.params, self.arch, X_std, d, gate_override)

    def score_series(self, series: KpiSeries,
                     features: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Featurize (per contiguous segment), standardize, and score a series."""
        if features is None:
            parts = [featurize(series.values[s], self.feature_spec)
                     for s in series.contiguous_segments()]
            features = np.concatenate(parts, axis=0)
        return self.predict(self.standardizer.transform(features))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "mild",
            "arch": self.arch.to_dict(),
            "loss_config": self.loss_config.to_dict(),
            "horizon": self.horizon,
            "feature_spec": self.feature_spec.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "teacher": self.teacher.to_dict(),
            "parameters": {k: self.params[k].tolist() for k in sorted(self.params)},
            "train_info": self.train_info,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "MildModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported bundle schema_version {d.get('schema_version')!r}")
        if d.get("kind") != "mild":
            raise ValueError(f"not a mild bundle: kind={d.get('kind')!r}")
        arch = MildArch.from_dict(d["arch"])
        params = {k: np.asarray(v, dtype=np.float64) for k, v in d["parameters"].items()}
        expected = {name: shape for name, shape, _ in _param_names(arch)}
        if set(params) != set(expected):
            raise ValueError("bundle parameter names do not match the architecture")
        for k, v in params.items():
            if v.shape != expected[k]:
                raise ValueError(f"bundle parameter {k!r} has shape {v.shape}, want {expected[k]}")
        return cls(
            arch=arch,
            loss_config=LossConfig.from_dict(d["loss_config"]),
            horizon=int(d["horizon"]),
            params=params,
            standardizer=Standardizer.from_dict(d["standardizer"]),
            teacher=TeacherModel.from_dict(d["teacher"]),
            feature_spec=FeatureSpec.from_dict(d["feature_spec"]),
            train_info=d.get("train_info", {}),
        )

    @classmethod
    def load(cls, path) -> "MildModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# training

def fit_val_split(n_rows: int, val_fraction: float) -> int:
    """Rows assigned to fitting; the chronological tail is held out."""
    n_fit = max(1, int(round(n_rows * (1.0 - val_fraction))))
    return min(n_fit, n_rows - 1)


def positive_weights(y_bin: np.ndarray, cap: float) -> np.ndarray:
    """Per-intent negative/positive ratio, capped; capped fallback when empty."""
    K = y_bin.shape[1]
    w = np.ones(K)
    for i in range(K):
        pos = int(y_bin[:, i].sum())
        neg = y_bin.shape[0] - pos
        if pos == 0:
            warnings.warn(f"intent column {i} has no positives; using capped weight")
            w[i] = cap
        else:
            w[i] = min(cap, neg / pos)
    return w


def train_mild(X_std: np.ndarray, y_bin: np.ndarray, y_cause: np.ndarray,
               teacher: TeacherModel, horizon: int, standardizer: Standardizer,
               feature_spec: FeatureSpec = FeatureSpec(),
               loss_config: LossConfig = LossConfig(),
               train_config: TrainConfig = TrainConfig(),
               seed: int = 42) -> MildModel:
    """Train the mixture on chronologically ordered standardized features.

    The chronological tail (``val_fraction`` of the rows) is held out for
    early stopping; the leading rows are minibatched with a seeded shuffle
    each epoch.  Raises if the fitted portion contains no positive minutes.
    """
    X_std = np.asarray(X_std, dtype=np.float64)
    T = X_std.shape[0]
    if T < 10:
        raise ValueError("not enough rows to train")
    n_fit = fit_val_split(T, train_config.val_fraction)
    val_idx = np.arange(n_fit, T)
    if int(y_bin[:n_fit].sum()) == 0:
        raise ValueError("training split has no positive minutes for any intent")

    arch = MildArch(input_dim=X_std.shape[1], n_intents=y_bin.shape[1])
    net = MildNetwork(arch, seed)
    # Start each head at its intent's base rate: an undertrained head then
    # scores healthy minutes near the prior instead of 0.5, which keeps the
    # risk scale meaningful even on the smallest chronological splits.
    base = y_bin[:n_fit].mean(axis=0).clip(1e-4, 1.0 - 1e-4)
    for i in range(arch.n_intents):
        net.store.params[f"head{i}.b"].value[...] = float(np.log(base[i] / (1.0 - base[i])))
    w_pos = positive_weights(y_bin[:n_fit], train_config.pos_weight_cap)
    d_all = teacher.distribution(X_std)
    p_all = teacher.predict_proba(X_std)
    targets_all, mask_all = gate_targets(y_bin, y_cause)

    def val_loss() -> float:
        # No tape active: the same graph code computes values only.
        return batch_loss(net, X_std[val_idx], d_all[val_idx], p_all[val_idx],
                          y_bin[val_idx], targets_all[val_idx], mask_all[val_idx],
                          loss_config, w_pos).item()

    best_val = float("inf")
    best_params = net.store.values_dict()
    best_epoch = 0
    bad_epochs = 0
    history: list[float] = []
    for epoch in range(1, train_config.max_epochs + 1):
        order = rng_for(seed, f"mild/shuffle/epoch{epoch}").permutation(n_fit)
        for lo in range(0, n_fit, train_config.batch_size):
            rows = order[lo:lo + train_config.batch_size]
            with Tape() as tape:
                loss = batch_loss(net, X_std[rows], d_all[rows], p_all[rows],
                                  y_bin[rows], targets_all[rows], mask_all[rows],
                                  loss_config, w_pos)
            net.store.zero_grads()
            tape.backward(loss)
            net.store.clip_global_norm(train_config.clip_norm)
            net.store.adam_step(lr=train_config.lr)
        v = val_loss()
        history.append(v)
        if v < best_val - 1e-12:
            best_val = v
            best_params = net.store.values_dict()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_config.patience:
                break
    net.store.load_values(best_params)

    return MildModel(
        arch=arch,
        loss_config=loss_config,
        horizon=horizon,
        params=net.store.values_dict(),
        standardizer=standardizer,
        teacher=teacher,
        feature_spec=feature_spec,
        train_info={
            "seed": seed,
            "epochs_run": len(history),
            "best_epoch": best_epoch,
            "best_val_loss": best_val,
            "val_loss_history": history,
            "pos_weights": w_pos.tolist(),
        },
    )
