"""Field and run similarity: distance matrices over timesteps and runs.

The field-level dissimilarity of two sampled fields a, b with components in
[0, 1] is

    d(a, b) = 1 - sum_k(1 - max(a_k, b_k)) / sum_k(1 - min(a_k, b_k))

Run-level distances average the field distance over an equidistant resampling
of the overlapping time interval of the two runs, optionally minimized over a
discrete time shift. Both aggregations interpolate precomputed timestep-level
entries rather than touching fields again, so restricting the time interval
stays cheap.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .fields import Ensemble, EnsembleError, draw_seeds, sample_fields

MATRIX_MAGIC = b"EDMX"


class OverlapError(ValueError):
    """Two runs share no time interval (after restriction)."""


@dataclass(frozen=True)
class ShiftOptions:
    """Discrete time-shift search settings for run alignment."""

    enabled: bool = False
    tau_max: float = 0.0
    tau_step: float = 1.0

    def __post_init__(self):
        if self.tau_max < 0:
            raise ValueError("tau_max must be >= 0")
        if self.tau_step <= 0:
            raise ValueError("tau_step must be > 0")
        m = self.tau_max / self.tau_step
        if abs(m - round(m)) > 1e-9:
            raise ValueError("tau_max must be an integer multiple of tau_step")

    def taus(self) -> np.ndarray:
        m = int(round(self.tau_max / self.tau_step))
        return np.arange(-m, m + 1) * self.tau_step


@dataclass
class DistanceMatrix:
    """Symmetric nonnegative distance matrix with row identifiers.

    Keys are run names for run-level matrices and (run name, time) pairs for
    timestep-level matrices.
    """

    entries: np.ndarray
    keys: list

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        n = self.entries.shape[0]
        if self.entries.shape != (n, n):
            raise ValueError("distance matrix must be square")
        if len(self.keys) != n:
            raise ValueError("key count must match matrix size")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def index(self) -> dict:
        return {k: i for i, k in enumerate(self.keys)}


def field_distance(a, b) -> float:
    """Dissimilarity of two sample vectors with components in [0, 1].

    Identical vectors give 0; disjoint full-mass vectors give 1. If both
    vectors are all ones the denominator vanishes and 0 is returned, keeping
    the identity property.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    num = np.sum(1.0 - np.maximum(a, b))
    den = np.sum(1.0 - np.minimum(a, b))
    if den == 0.0:
        return 0.0
    return float(1.0 - num / den)


# ---------------------------------------------------------------------------
# Timestep-level matrix.

def compute_timestep_matrix(e: Ensemble, seed_count: int, rng_seed: int) -> DistanceMatrix:
    """Pairwise field distance over all (run, timestep) pairs on shared seeds.

    Uses sum(max) = (sum(a) + sum(b) + L1(a,b)) / 2 so the whole matrix
    reduces to one L1 pdist; entries are clipped to [0, 1] to absorb float
    rounding dust.
    """
    if not e.normalized:
        raise EnsembleError("ensemble must be normalized before computing distances")
    seeds = draw_seeds(e.dims, seed_count, rng_seed)
    fields = []
    keys = []
    for r in e.runs:
        for t, f in r.timesteps:
            fields.append(f)
            keys.append((r.name, float(t)))
    v = sample_fields(fields, seeds)
    k = v.shape[1]
    s = v.sum(axis=1)
    l1 = squareform(pdist(v, metric="cityblock"))
    ssum = s[:, None] + s[None, :]
    num = k - (ssum + l1) / 2.0
    den = k - (ssum - l1) / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(den > 0, 1.0 - num / np.where(den > 0, den, 1.0), 0.0)
    np.fill_diagonal(d, 0.0)
    np.clip(d, 0.0, 1.0, out=d)
    return DistanceMatrix(entries=d, keys=keys)


class _RunRows:
    """Row indices and native times per run inside a timestep matrix."""

    def __init__(self, dt: DistanceMatrix):
        order: list[str] = []
        rows: dict[str, list[int]] = {}
        times: dict[str, list[float]] = {}
        for i, (run, t) in enumerate(dt.keys):
            if run not in rows:
                order.append(run)
                rows[run] = []
                times[run] = []
            rows[run].append(i)
            times[run].append(t)
        self.order = order
        self.rows = {r: np.array(ix, dtype=np.intp) for r, ix in rows.items()}
        self.times = {r: np.array(ts, dtype=np.float64) for r, ts in times.items()}

    def require(self, run: str):
        if run not in self.rows:
            raise KeyError(f"run {run!r} not present in timestep matrix")
        return self.rows[run], self.times[run]


def _bracket(times: np.ndarray, t: np.ndarray):
    """Lower index and fractional weight for linear interpolation on a time axis."""
    t = np.asarray(t, dtype=np.float64)
    if times.size == 1:
        return np.zeros(t.shape, dtype=np.intp), np.zeros_like(t)
    i0 = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
    w = (t - times[i0]) / (times[i0 + 1] - times[i0])
    return i0, np.clip(w, 0.0, 1.0)


def _interp_block(block: np.ndarray, times_i: np.ndarray, times_j: np.ndarray,
                  ta: np.ndarray, tb: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of timestep-matrix entries at (ta[n], tb[n])."""
    i0, wi = _bracket(times_i, ta)
    j0, wj = _bracket(times_j, tb)
    i1 = np.minimum(i0 + 1, times_i.size - 1)
    j1 = np.minimum(j0 + 1, times_j.size - 1)
    return ((1.0 - wi) * (1.0 - wj) * block[i0, j0]
            + wi * (1.0 - wj) * block[i1, j0]
            + (1.0 - wi) * wj * block[i0, j1]
            + wi * wj * block[i1, j1])


def interpolated_timestep_distance(dt: DistanceMatrix, run_i: str, run_j: str,
                                   ta: float, tb: float) -> float:
    """Field distance at arbitrary times, bilinear in the two time coordinates."""
    rr = _RunRows(dt)
    rows_i, times_i = rr.require(run_i)
    rows_j, times_j = rr.require(run_j)
    if not (times_i[0] <= ta <= times_i[-1]):
        raise OverlapError(f"time {ta} outside span of run {run_i!r}")
    if not (times_j[0] <= tb <= times_j[-1]):
        raise OverlapError(f"time {tb} outside span of run {run_j!r}")
    block = dt.entries[np.ix_(rows_i, rows_j)]
    return float(_interp_block(block, times_i, times_j,
                               np.array([ta]), np.array([tb]))[0])


def _overlap(times_i, times_j, interval):
    lo = max(times_i[0], times_j[0])
    hi = min(times_i[-1], times_j[-1])
    if interval is not None:
        lo = max(lo, float(interval[0]))
        hi = min(hi, float(interval[1]))
    if lo > hi:
        raise OverlapError(f"empty time overlap [{lo}, {hi}]")
    return lo, hi


def _sample_times(times_i, times_j, interval, n_samples=None):
    lo, hi = _overlap(times_i, times_j, interval)
    if n_samples is None:
        ci = int(np.count_nonzero((times_i >= lo) & (times_i <= hi)))
        cj = int(np.count_nonzero((times_j >= lo) & (times_j <= hi)))
        n_samples = max(ci, cj, 2)
    if hi == lo:
        return np.array([lo])
    return np.linspace(lo, hi, n_samples)


def _pair_distance(block, times_i, times_j, tn, taus=None) -> float:
    n = tn.size
    if taus is None:
        return float(_interp_block(block, times_i, times_j, tn, tn).sum() / n)
    best = np.inf
    for tau in taus:
        tb = np.clip(tn + tau, times_j[0], times_j[-1])
        val = float(_interp_block(block, times_i, times_j, tn, tb).sum() / n)
        if val < best:
            best = val
    return best


def run_distance(dt: DistanceMatrix, run_i: str, run_j: str,
                 interval=None, n_samples: int | None = None) -> float:
    """Mean field distance over an equidistant resampling of the time overlap.

    The sample count defaults to the larger native timestep count of the two
    runs inside the overlap (n_samples overrides it, for refinement checks).
    A single-point overlap degenerates to one evaluation at that time.
    """
    rr = _RunRows(dt)
    rows_i, times_i = rr.require(run_i)
    rows_j, times_j = rr.require(run_j)
    tn = _sample_times(times_i, times_j, interval, n_samples)
    block = dt.entries[np.ix_(rows_i, rows_j)]
    return _pair_distance(block, times_i, times_j, tn)


def run_distance_shifted(dt: DistanceMatrix, run_i: str, run_j: str,
                         interval, shift: ShiftOptions) -> float:
    """Run distance minimized over discrete shifts of the second run's times.

    Shifted sample times leaving the second run's span are clamped to the
    span boundary, keeping the sample count identical for every shift.
    """
    if not shift.enabled:
        raise ValueError("shift options not enabled")
    rr = _RunRows(dt)
    rows_i, times_i = rr.require(run_i)
    rows_j, times_j = rr.require(run_j)
    tn = _sample_times(times_i, times_j, interval)
    block = dt.entries[np.ix_(rows_i, rows_j)]
    return _pair_distance(block, times_i, times_j, tn, taus=shift.taus())


def default_tau_step(dt: DistanceMatrix, run_i: str, run_j: str) -> float:
    """Finer of the two runs' native time resolutions."""
    rr = _RunRows(dt)
    _, times_i = rr.require(run_i)
    _, times_j = rr.require(run_j)
    steps = []
    for ts in (times_i, times_j):
        if ts.size > 1:
            steps.append(float(np.min(np.diff(ts))))
    if not steps:
        raise ValueError("both runs have a single timestep; no native resolution")
    return min(steps)


def compute_run_matrix(dt: DistanceMatrix, interval=None,
                       shift: ShiftOptions | None = None) -> DistanceMatrix:
    """Run-level distance matrix; the overlap is computed per pair."""
    rr = _RunRows(dt)
    runs = rr.order
    n = len(runs)
    taus = shift.taus() if (shift is not None and shift.enabled) else None
    out = np.zeros((n, n))
    plan_cache: dict = {}
    for i in range(n):
        rows_i, times_i = rr.rows[runs[i]], rr.times[runs[i]]
        for j in range(i + 1, n):
            rows_j, times_j = rr.rows[runs[j]], rr.times[runs[j]]
            sig = (times_i.tobytes(), times_j.tobytes())
            tn = plan_cache.get(sig)
            if tn is None:
                tn = _sample_times(times_i, times_j, interval)
                plan_cache[sig] = tn
            block = dt.entries[np.ix_(rows_i, rows_j)]
            out[i, j] = out[j, i] = _pair_distance(block, times_i, times_j, tn, taus)
    return DistanceMatrix(entries=out, keys=list(runs))


# ---------------------------------------------------------------------------
# Serialization: magic 'EDMX', u32 n, n*n float64 little-endian row-major,
# plus a JSON sidecar (path + ".json") holding the row keys.

def save_matrix(dm: DistanceMatrix, path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<I", dm.n))
        fh.write(dm.entries.astype("<f8").tobytes())
    keys = [list(k) if isinstance(k, tuple) else k for k in dm.keys]
    Path(str(path) + ".json").write_text(json.dumps({"rowKeys": keys}, sort_keys=True) + "\n")


def load_matrix(path) -> DistanceMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MATRIX_MAGIC:
        raise ValueError(f"not a distance matrix file (bad magic): {path}")
    (n,) = struct.unpack_from("<I", raw, 4)
    entries = np.frombuffer(raw, dtype="<f8", count=n * n, offset=8).reshape(n, n).copy()
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    keys = [tuple(k) if isinstance(k, list) else k for k in sidecar["rowKeys"]]
    return DistanceMatrix(entries=entries, keys=keys)
