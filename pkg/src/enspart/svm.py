"""Soft-margin RBF support vector machines, trained by sequential minimal
optimization with maximal-violating-pair working-set selection.

Multi-class decisions use one-vs-one binary machines with majority voting;
vote ties resolve to the lowest class id so predictions are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SvmConfig:
    """Training cost C and RBF kernel width gamma, both positive."""

    C: float = 10.0
    gamma: float | None = None      # None: 1 / feature count

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be > 0")

    def resolve_gamma(self, n_features: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / n_features


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    sq = ((x * x).sum(axis=1)[:, None]
          + (y * y).sum(axis=1)[None, :]
          - 2.0 * (x @ y.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _smo(k: np.ndarray, y: np.ndarray, c: float,
         tol: float = 1e-6, max_iter: int | None = None):
    """Solve the binary dual problem on a precomputed kernel matrix.

    Returns (alpha, bias). y must be +-1. Working-set selection picks the
    maximal violating pair; the loop terminates when the KKT gap drops below
    tol.
    """
    n = y.size
    if max_iter is None:
        max_iter = max(20000, 200 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)              # gradient of 0.5 a'Qa - sum(a), Q = yy' * K
    yk = y[:, None] * k * y[None, :]
    for _ in range(max_iter):
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            break
        viol = -y * grad
        i = int(np.flatnonzero(up)[np.argmax(viol[up])])
        j = int(np.flatnonzero(low)[np.argmin(viol[low])])
        gap = viol[i] - viol[j]
        if gap < tol:
            break
        quad = max(yk[i, i] + yk[j, j] - 2.0 * y[i] * y[j] * yk[i, j], 1e-12)
        # move alpha_i up and alpha_j down along the equality constraint
        max_i = (c - alpha[i]) if y[i] > 0 else alpha[i]
        max_j = alpha[j] if y[j] > 0 else (c - alpha[j])
        step = min(gap / quad, max_i, max_j)
        da_i = step * y[i]
        da_j = -step * y[j]
        alpha[i] = min(max(alpha[i] + da_i, 0.0), c)
        alpha[j] = min(max(alpha[j] + da_j, 0.0), c)
        grad += yk[:, i] * da_i + yk[:, j] * da_j
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    viol = -y * grad
    free = (alpha > 1e-10) & (alpha < c - 1e-10)
    if free.any():
        bias = float(np.mean(viol[free]))
    else:
        hi = viol[up].max() if up.any() else 0.0
        lo = viol[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)
    return alpha, bias


@dataclass
class BinarySvm:
    support: np.ndarray             # support vectors (rows)
    coef: np.ndarray                # alpha_i * y_i for support vectors
    bias: float
    gamma: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        return rbf_kernel(np.atleast_2d(x), self.support, self.gamma) @ self.coef + self.bias


def train_binary(x: np.ndarray, y: np.ndarray, c: float, gamma: float) -> BinarySvm:
    """Fit one soft-margin RBF machine; y holds +-1 labels."""
    k = rbf_kernel(x, x, gamma)
    alpha, bias = _smo(k, y.astype(np.float64), c)
    mask = alpha > 1e-10
    return BinarySvm(support=x[mask].copy(), coef=(alpha * y)[mask], bias=bias, gamma=gamma)


@dataclass
class MulticlassSvm:
    """One-vs-one ensemble over a fixed ascending class list."""

    classes: list[int]
    machines: dict = field(default_factory=dict)   # (ci, cj), ci < cj -> BinarySvm
    gamma: float = 1.0
    config: SvmConfig = field(default_factory=SvmConfig)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        votes = np.zeros((x.shape[0], len(self.classes)), dtype=np.int64)
        pos = {c: i for i, c in enumerate(self.classes)}
        for (ci, cj), m in self.machines.items():
            dec = m.decision(x)
            votes[dec >= 0, pos[ci]] += 1
            votes[dec < 0, pos[cj]] += 1
        # argmax scans ascending class order, so ties land on the lowest id
        winners = np.argmax(votes, axis=1)
        return np.array([self.classes[w] for w in winners], dtype=np.int64)


def train_multiclass(x: np.ndarray, labels: np.ndarray, cfg: SvmConfig) -> MulticlassSvm:
    """Train all one-vs-one pairs; the lower class id takes the +1 side."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if not np.isfinite(x).all():
        raise ValueError("non-finite parameter values")
    classes = sorted(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes to train")
    gamma = cfg.resolve_gamma(x.shape[1])
    model = MulticlassSvm(classes=classes, gamma=gamma, config=cfg)
    for a_idx in range(len(classes)):
        for b_idx in range(a_idx + 1, len(classes)):
            ca, cb = classes[a_idx], classes[b_idx]
            mask = (labels == ca) | (labels == cb)
            xs = x[mask]
            ys = np.where(labels[mask] == ca, 1.0, -1.0)
            model.machines[(ca, cb)] = train_binary(xs, ys, cfg.C, gamma)
    return model
