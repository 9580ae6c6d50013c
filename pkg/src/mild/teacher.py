"""One-vs-rest logistic teacher.

A small, deterministic logistic-regression bank: one binary model per intent
over standardized features.  Besides serving as an interpretable baseline, it
supplies the softened cross-intent distribution that guides the gating network
and the per-intent probabilities used as distillation targets.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_TEMPERATURE = 2.0
DEFAULT_L2 = 1e-4
MAX_ITER = 500
GRAD_TOL = 1e-6


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class TeacherModel:
    """Frozen per-intent logistic scorers sharing one softmax temperature."""

    weights: np.ndarray  # (K, D)
    bias: np.ndarray     # (K,)
    temperature: float = DEFAULT_TEMPERATURE

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weights.T + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Independent per-intent probabilities (rows need not sum to one)."""
        return _sigmoid(self.logits(X))

    def distribution(self, X: np.ndarray) -> np.ndarray:
        """Temperature-softened softmax over the per-intent logits."""
        z = self.logits(X) / self.temperature
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TeacherModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=np.asarray(d["bias"], dtype=np.float64),
            temperature=float(d["temperature"]),
        )


def _spectral_norm_sq(Xa: np.ndarray, iters: int = 30) -> float:
    """Largest eigenvalue of Xa^T Xa via deterministic power iteration."""
    v = np.ones(Xa.shape[1]) / np.sqrt(Xa.shape[1])
    for _ in range(iters):
        w = Xa.T @ (Xa @ v)
        n = np.linalg.norm(w)
        if n == 0.0:
            return 0.0
        v = w / n
    return float(v @ (Xa.T @ (Xa @ v)))


def _fit_single(Xa: np.ndarray, y: np.ndarray, l2: float, lip: float) -> np.ndarray:
    """Full-batch gradient descent on L2-regularized logistic loss.

    The step size 1/L uses the loss's Lipschitz-smoothness constant
    L = sigma_max(Xa)^2 / (4n) + 2*l2, which guarantees monotone descent, so
    the fit is deterministic with no tuning.  The intercept (last column of
    ``Xa``) is left unregularized.
    """
    n, d = Xa.shape
    theta = np.zeros(d)
    lr = 1.0 / max(lip, 1e-12)
    for _ in range(MAX_ITER):
        p = _sigmoid(Xa @ theta)
        grad = Xa.T @ (p - y) / n
        grad[:-1] += 2.0 * l2 * theta[:-1]
        if np.linalg.norm(grad) < GRAD_TOL:
            break
        theta -= lr * grad
    return theta


def train_teacher(X: np.ndarray, y_bin: np.ndarray, l2: float = DEFAULT_L2,
                  temperature: float = DEFAULT_TEMPERATURE) -> TeacherModel:
    """Fit one logistic scorer per intent on standardized features.

    A label column with no positives (or no negatives) cannot identify a
    slope, so that intent falls back to an intercept-only model matching its
    clamped base rate, with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    y_bin = np.asarray(y_bin)
    if X.ndim != 2 or y_bin.ndim != 2 or X.shape[0] != y_bin.shape[0]:
        raise ValueError(f"incompatible shapes X={X.shape}, y={y_bin.shape}")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a teacher on an empty matrix")
    n, d = X.shape
    K = y_bin.shape[1]
    Xa = np.hstack([X, np.ones((n, 1))])
    lip = _spectral_norm_sq(Xa) / (4.0 * n) + 2.0 * l2

    weights = np.zeros((K, d))
    bias = np.zeros(K)
    for i in range(K):
        y = y_bin[:, i].astype(np.float64)
        rate = float(y.mean())
        if rate == 0.0 or rate == 1.0:
            warnings.warn(f"intent column {i} is single-class; using intercept-only model")
            clamped = min(max(rate, 1e-6), 1.0 - 1e-6)
            bias[i] = float(np.log(clamped / (1.0 - clamped)))
            continue
        theta = _fit_single(Xa, y, l2, lip)
        weights[i] = theta[:-1]
        bias[i] = theta[-1]
    return TeacherModel(weights=weights, bias=bias, temperature=temperature)
