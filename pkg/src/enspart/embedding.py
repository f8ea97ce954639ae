"""Low-dimensional embeddings of distance matrices by stress majorization.

The solver starts from classical scaling and iterates the Guttman transform,
which never increases the (normalized) stress

    stress(X) = sqrt( sum_{i<j} (delta_ij - d_ij(X))^2 / sum_{i<j} delta_ij^2 )

where delta are the input distances and d the embedded ones. The constant
denominator makes the per-iteration monotonicity of the raw stress carry over
to the reported value. Embeddings are centered at the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .clustering import GREY_ID, ClusterAssignment
from .fields import Ensemble
from .similarity import DistanceMatrix


@dataclass
class Embedding:
    dim: int
    points: dict                    # key -> coordinate vector (np.ndarray)
    stress: float
    stress_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    def coordinates(self, keys=None) -> np.ndarray:
        keys = list(self.points) if keys is None else keys
        return np.array([self.points[k] for k in keys])

    def to_json(self) -> str:
        pts = {_key_str(k): [float(x) for x in v] for k, v in self.points.items()}
        return json.dumps({"dim": self.dim, "stress": self.stress, "points": pts},
                          sort_keys=True) + "\n"


def _key_str(key) -> str:
    if isinstance(key, tuple):
        return f"{key[0]}@{key[1]}"
    return str(key)


@dataclass
class TemporalCurves:
    """Embedded timesteps joined per run in time order."""

    embedding: Embedding
    curves: dict[str, list]         # run -> [(t, coords), ...] ordered by t
    interval: tuple | None = None


def classical_scaling(d: np.ndarray, dim: int) -> np.ndarray:
    """Torgerson scaling: eigendecomposition of the double-centered squared matrix."""
    n = d.shape[0]
    sq = d * d
    row = sq.mean(axis=1, keepdims=True)
    col = sq.mean(axis=0, keepdims=True)
    b = -0.5 * (sq - row - col + sq.mean())
    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(evals)[::-1][:dim]
    lam = np.clip(evals[order], 0.0, None)
    x = evecs[:, order] * np.sqrt(lam)
    if x.shape[1] < dim:
        x = np.hstack([x, np.zeros((n, dim - x.shape[1]))])
    return x


def smacof_from(d: DistanceMatrix, init: np.ndarray, max_iter: int = 300,
                tol: float = 1e-9) -> Embedding:
    """Stress majorization from an explicit starting configuration.

    Exposed for restart comparisons; the default pipeline initializes with
    classical scaling via mds_embed.
    """
    delta = np.asarray(d.entries, dtype=np.float64)
    n = delta.shape[0]
    dim = init.shape[1]
    norm = np.sum(np.triu(delta, 1) ** 2)
    if norm == 0.0:
        return Embedding(dim=dim, points={k: np.zeros(dim) for k in d.keys},
                         stress=0.0, stress_history=[0.0])
    x = np.array(init, dtype=np.float64)
    x = x - x.mean(axis=0)

    def stress_of(xx):
        dist = squareform(pdist(xx))
        return float(np.sqrt(np.sum(np.triu(delta - dist, 1) ** 2) / norm))

    history = [stress_of(x)]
    it = 0
    for it in range(1, max_iter + 1):
        dist = squareform(pdist(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, delta / dist, 0.0)
        np.fill_diagonal(ratio, 0.0)
        b = -ratio
        np.fill_diagonal(b, ratio.sum(axis=1))
        x = (b @ x) / n
        x = x - x.mean(axis=0)
        s = stress_of(x)
        history.append(s)
        prev = history[-2]
        if s == 0.0 or prev - s < tol * max(prev, np.finfo(float).tiny):
            break
    points = {k: x[i].copy() for i, k in enumerate(d.keys)}
    return Embedding(dim=dim, points=points, stress=history[-1],
                     stress_history=history, n_iter=it)


def mds_embed(d: DistanceMatrix, dim: int, max_iter: int = 300,
              tol: float = 1e-9) -> Embedding:
    """Embed a distance matrix into 1, 2, or 3 dimensions.

    Stops once the relative stress decrease of an iteration falls below tol
    or after max_iter iterations. A degenerate all-zero matrix puts every
    point at the origin with stress 0.
    """
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2, or 3")
    delta = np.asarray(d.entries, dtype=np.float64)
    return smacof_from(d, classical_scaling(delta, dim), max_iter=max_iter, tol=tol)


def similarity_embedding(dr: DistanceMatrix, max_iter: int = 300,
                         tol: float = 1e-9) -> Embedding:
    """2D embedding of the run-level matrix; one point per simulation run."""
    return mds_embed(dr, dim=2, max_iter=max_iter, tol=tol)


def temporal_evolution(dt: DistanceMatrix, dim: int = 2, interval=None,
                       max_iter: int = 300, tol: float = 1e-9) -> TemporalCurves:
    """Embed every (run, timestep) and join each run's points in time order."""
    emb = mds_embed(dt, dim=dim, max_iter=max_iter, tol=tol)
    curves: dict[str, list] = {}
    for run, t in dt.keys:
        curves.setdefault(run, []).append((t, emb.points[(run, t)]))
    for run in curves:
        curves[run].sort(key=lambda p: p[0])
    return TemporalCurves(embedding=emb, curves=curves,
                          interval=tuple(interval) if interval is not None else None)


def normalized_parameters(e: Ensemble) -> np.ndarray:
    """Per-axis min-max normalized parameter vectors; constant axes map to 0."""
    p = e.parameter_matrix()
    out = np.zeros_like(p)
    for j, name in enumerate(e.parameter_names):
        lo, hi = e.parameter_ranges[name]
        if hi > lo:
            out[:, j] = (p[:, j] - lo) / (hi - lo)
    return out


def parameter_embedding(e: Ensemble, max_iter: int = 300, tol: float = 1e-9) -> Embedding:
    """2D embedding of the normalized parameter vectors' Euclidean distances."""
    x = normalized_parameters(e)
    d = squareform(pdist(x))
    dm = DistanceMatrix(entries=d, keys=[r.name for r in e.runs])
    return mds_embed(dm, dim=2, max_iter=max_iter, tol=tol)


def barycenters(emb: Embedding, assignment: ClusterAssignment) -> dict[int, np.ndarray]:
    """Post-projection cluster centers: plain means of embedded coordinates.

    Computed from the fixed embedding, so cluster changes move the centers
    without re-running the embedding. Grey (unselected) leaves are skipped and
    empty clusters are omitted.
    """
    groups: dict[int, list[np.ndarray]] = {}
    for key, cid in zip(assignment.keys, assignment.labels):
        cid = int(cid)
        if cid == GREY_ID or key not in emb.points:
            continue
        groups.setdefault(cid, []).append(emb.points[key])
    return {cid: np.mean(pts, axis=0) for cid, pts in sorted(groups.items())}
