"""Domain types and file I/O for spatio-temporal scalar-field ensembles.

An ensemble is a collection of simulation runs. Each run pairs one point of
the simulation's input-parameter space with an ordered time series of 2D or
3D scalar fields, all sharing one grid resolution.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

FIELD_MAGIC = b"EFLD"


class EnsembleError(ValueError):
    """Malformed ensemble data, manifest, or field file."""


@dataclass(frozen=True)
class ScalarField:
    """A scalar field on a regular 2D or 3D grid, values flat in row-major order."""

    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (2, 3):
            raise EnsembleError(f"field must be 2D or 3D, got {len(dims)} axes")
        if any(d < 1 for d in dims):
            raise EnsembleError(f"grid extents must be positive, got {dims}")
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if vals.size != int(np.prod(dims)):
            raise EnsembleError(
                f"field has {vals.size} values, expected {int(np.prod(dims))} for dims {dims}"
            )
        object.__setattr__(self, "values", vals)

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.dims)


@dataclass
class Run:
    """One simulation run: a parameter setting plus its field time series."""

    name: str
    parameters: dict[str, float]
    timesteps: list[tuple[float, ScalarField]]

    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.timesteps], dtype=np.float64)

    def span(self) -> tuple[float, float]:
        return self.timesteps[0][0], self.timesteps[-1][0]

    def field_at(self, index: int) -> ScalarField:
        return self.timesteps[index][1]


@dataclass
class Ensemble:
    """A validated set of runs over one shared parameter space."""

    runs: list[Run]
    parameter_names: list[str]
    parameter_ranges: dict[str, tuple[float, float]]
    normalized: bool = False
    # Present only for generated data with known behavior classes.
    ground_truth: dict[str, int] | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return self.runs[0].timesteps[0][1].dims

    def run(self, name: str) -> Run:
        for r in self.runs:
            if r.name == name:
                return r
        raise EnsembleError(f"unknown run {name!r}")

    def parameter_matrix(self) -> np.ndarray:
        """Run parameters stacked as an (n_runs, n_params) array, column order = parameter_names."""
        return np.array(
            [[r.parameters[p] for p in self.parameter_names] for r in self.runs],
            dtype=np.float64,
        )


def make_ensemble(runs: list[Run], parameter_names: list[str] | None = None,
                  ground_truth: dict[str, int] | None = None) -> Ensemble:
    """Assemble and validate an Ensemble from runs.

    Checks the structural invariants: at least two runs, unique run names,
    identical parameter-name sets, shared field dims, strictly increasing
    timestep times.
    """
    if len(runs) < 2:
        raise EnsembleError("an ensemble needs at least 2 runs")
    names = [r.name for r in runs]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise EnsembleError(f"duplicate run name: {dup[0]!r}")
    if parameter_names is None:
        parameter_names = sorted(runs[0].parameters)
    pset = set(parameter_names)
    if not pset:
        raise EnsembleError("parameter space must have at least one dimension")
    for r in runs:
        if set(r.parameters) != pset:
            raise EnsembleError(
                f"parameter set mismatch: run {r.name!r} has {sorted(r.parameters)}, "
                f"expected {sorted(pset)}"
            )
        if not r.timesteps:
            raise EnsembleError(f"run {r.name!r} has no timesteps")
        times = r.times()
        if np.any(np.diff(times) <= 0):
            raise EnsembleError(f"run {r.name!r} has non-increasing timestep times")
    dims = runs[0].timesteps[0][1].dims
    for r in runs:
        for _, f in r.timesteps:
            if f.dims != dims:
                raise EnsembleError(
                    f"dims mismatch: run {r.name!r} has field dims {f.dims}, expected {dims}"
                )
    ranges = {}
    for p in parameter_names:
        vals = [r.parameters[p] for r in runs]
        ranges[p] = (float(min(vals)), float(max(vals)))
    return Ensemble(runs=list(runs), parameter_names=list(parameter_names),
                    parameter_ranges=ranges, ground_truth=ground_truth)


# ---------------------------------------------------------------------------
# Field files: magic 'EFLD', u32 little-endian axis count (2 or 3), one u32
# extent per axis, then float32 little-endian values in row-major order.

def write_field(f: ScalarField, path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<I", len(f.dims)))
        fh.write(struct.pack(f"<{len(f.dims)}I", *f.dims))
        fh.write(f.values.astype("<f4").tobytes())


def read_field(path) -> ScalarField:
    path = Path(path)
    if not path.exists():
        raise EnsembleError(f"missing field file: {path}")
    raw = path.read_bytes()
    if raw[:4] != FIELD_MAGIC:
        raise EnsembleError(f"not a field file (bad magic): {path}")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    if ndim not in (2, 3):
        raise EnsembleError(f"field file {path} has {ndim} axes, expected 2 or 3")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    count = int(np.prod(dims))
    offset = 8 + 4 * ndim
    expected = offset + 4 * count
    if len(raw) != expected:
        raise EnsembleError(f"field file {path} truncated: {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).astype(np.float64)
    return ScalarField(dims=dims, values=values)


def field_bytes(f: ScalarField) -> bytes:
    """The field-file byte representation, for wire transfer."""
    head = FIELD_MAGIC + struct.pack("<I", len(f.dims)) + struct.pack(f"<{len(f.dims)}I", *f.dims)
    return head + f.values.astype("<f4").tobytes()


# ---------------------------------------------------------------------------
# Manifest: JSON document listing parameter names and, per run, its name,
# parameter values, and (time, field-file path) pairs relative to the manifest.

def load_ensemble(manifest_path) -> Ensemble:
    """Load an ensemble from a manifest file. Fields are not yet normalized."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise EnsembleError(f"missing manifest: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise EnsembleError(f"manifest is not valid JSON: {e}") from e
    base = manifest_path.parent
    try:
        parameter_names = list(doc["parameterNames"])
        run_docs = doc["runs"]
    except (KeyError, TypeError) as e:
        raise EnsembleError(f"manifest missing required key: {e}") from e
    runs = []
    for rd in run_docs:
        timesteps = [(float(ts["t"]), read_field(base / ts["field"])) for ts in rd["timesteps"]]
        runs.append(Run(name=str(rd["name"]),
                        parameters={k: float(v) for k, v in rd["parameters"].items()},
                        timesteps=timesteps))
    return make_ensemble(runs, parameter_names)


def save_ensemble(e: Ensemble, out_dir, field_dir: str = "fields") -> Path:
    """Write manifest plus field files under out_dir; returns the manifest path."""
    out = Path(out_dir)
    (out / field_dir).mkdir(parents=True, exist_ok=True)
    run_docs = []
    for r in e.runs:
        steps = []
        for k, (t, f) in enumerate(r.timesteps):
            rel = f"{field_dir}/{r.name}_{k:03d}.efld"
            write_field(f, out / rel)
            steps.append({"t": t, "field": rel})
        run_docs.append({"name": r.name, "parameters": dict(sorted(r.parameters.items())),
                         "timesteps": steps})
    doc = {"parameterNames": list(e.parameter_names), "runs": run_docs}
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# Normalization and Monte Carlo sampling.

def normalize_fields(e: Ensemble) -> Ensemble:
    """Rescale all fields affinely by the global min/max over the whole ensemble.

    One shared range keeps values of different runs comparable. A constant
    ensemble maps to all zeros.
    """
    lo = min(float(f.values.min()) for r in e.runs for _, f in r.timesteps)
    hi = max(float(f.values.max()) for r in e.runs for _, f in r.timesteps)
    span = hi - lo
    runs = []
    for r in e.runs:
        steps = []
        for t, f in r.timesteps:
            if span > 0:
                vals = (f.values - lo) / span
            else:
                vals = np.zeros_like(f.values)
            steps.append((t, ScalarField(dims=f.dims, values=vals)))
        runs.append(Run(name=r.name, parameters=dict(r.parameters), timesteps=steps))
    return replace(e, runs=runs, normalized=True)


def draw_seeds(dims, count: int, rng_seed: int) -> np.ndarray:
    """Draw Monte Carlo seed positions, uniform over the grid domain.

    Coordinates are in grid-index space: axis k spans [0, dims[k] - 1].
    One seed list is drawn per analysis session and shared across all fields
    so that sample vectors correspond componentwise.
    """
    rng = np.random.default_rng(rng_seed)
    dims = tuple(int(d) for d in dims)
    return rng.uniform(0.0, [d - 1 for d in dims], size=(int(count), len(dims)))


def sample_field(f: ScalarField, seeds) -> np.ndarray:
    """Sample a field at seed positions by multilinear interpolation.

    Returns one value per seed; a seed exactly on a grid node returns that
    node's value.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    return sample_fields([f], seeds)[0]


def sample_fields(fields, seeds) -> np.ndarray:
    """Sample many same-dims fields at shared seeds; returns (n_fields, n_seeds)."""
    fields = list(fields)
    dims = fields[0].dims
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    if seeds.shape[1] != len(dims):
        raise EnsembleError(f"seeds have {seeds.shape[1]} coordinates, field has {len(dims)} axes")
    upper = np.array([d - 1 for d in dims], dtype=np.float64)
    if np.any(seeds < 0) or np.any(seeds > upper):
        raise EnsembleError("seed out of domain")
    stack = np.stack([f.values for f in fields])
    base = np.floor(seeds).astype(np.int64)
    base = np.minimum(base, np.maximum(np.array(dims) - 2, 0))
    frac = seeds - base
    out = np.zeros((len(fields), seeds.shape[0]))
    for corner in product((0, 1), repeat=len(dims)):
        w = np.ones(seeds.shape[0])
        idx = np.empty_like(base)
        for ax, bit in enumerate(corner):
            w = w * (frac[:, ax] if bit else 1.0 - frac[:, ax])
            idx[:, ax] = np.minimum(base[:, ax] + bit, dims[ax] - 1)
        flat = np.ravel_multi_index(tuple(idx.T), dims)
        out += w * stack[:, flat]
    return out
