"""Parameter-space partitioning built on the similarity clustering.

A multi-class SVM trained on the cluster labels extends the clustering from
the sampled parameter settings to the whole space; a regular grid discretizes
the result per axis. Each grid node also carries an uncertainty factor from
its distance to the nearest sampled setting. Hyper-slices extract 2D planes
through a focus point, and boundary masks project a segment's existence along
free parameter axes, combinable with Boolean operators.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .clustering import GREY_ID, ClusterAssignment
from .embedding import Embedding
from .expressions import Atom, BinOp, Complete, Not
from .fields import Ensemble, EnsembleError
from .svm import MulticlassSvm, SvmConfig, train_multiclass

LABEL_MAGIC = b"ELBL"
UNCERT_MAGIC = b"EUNC"


@dataclass
class SvmModel:
    """Trained one-vs-one model plus the training context it came from."""

    multiclass: MulticlassSvm
    axes: list[str]                       # parameter names used as features
    run_names: list[str]
    x: np.ndarray                         # normalized training vectors
    labels: np.ndarray                    # cluster labels per run
    training_misclassifications: list[str] = field(default_factory=list)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.multiclass.predict(x)


@dataclass
class LabelGrid:
    axes: list[str]
    coords: list[np.ndarray]              # normalized node positions per axis
    labels: np.ndarray                    # shape = tuple(len(c) for c in coords)
    sample_x: np.ndarray                  # normalized run coordinates over axes
    sample_labels: np.ndarray
    run_names: list[str]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.labels.shape


@dataclass
class UncertaintyGrid:
    axes: list[str]
    coords: list[np.ndarray]
    distance: np.ndarray                  # normalized distance to nearest sample
    factor: np.ndarray                    # saturation multiplier 1 - distance


@dataclass
class HyperSlice:
    axes: tuple[int, int]
    axis_names: tuple[str, str]
    labels: np.ndarray                    # 2D, first axis = axes[0]
    uncertainty: np.ndarray
    coords: tuple[np.ndarray, np.ndarray]         # original-unit node positions
    in_slice: list                        # (run, (pi, pj) original units, cluster id)
    projected: list                       # ((pi, pj) original units, [run, ...])
    focus: np.ndarray
    epsilon: float
    mask: "BinaryMask | None" = None


@dataclass
class BinaryMask:
    axes: tuple[int, int]
    axis_names: tuple[str, str]
    mask: np.ndarray                      # 2D bool, aligned with the slice grid


@dataclass
class CorrelationResult:
    coefficients: dict[str, float]
    ranking: list[str]                    # names by |coefficient| descending
    degenerate: set[str]
    degenerate_overall: bool
    component: np.ndarray                 # per-run principal-axis coordinate


def normalize_parameters(e: Ensemble, axes=None) -> tuple[np.ndarray, list[str]]:
    """Per-axis min-max normalized run parameters over the chosen axes."""
    axes = list(axes) if axes is not None else list(e.parameter_names)
    for a in axes:
        if a not in e.parameter_names:
            raise EnsembleError(f"unknown parameter {a!r}")
    cols = []
    for a in axes:
        lo, hi = e.parameter_ranges[a]
        vals = np.array([r.parameters[a] for r in e.runs])
        cols.append((vals - lo) / (hi - lo) if hi > lo else np.zeros(len(e.runs)))
    return np.column_stack(cols), axes


def normalize_focus(e: Ensemble, focus, axes: list[str]) -> np.ndarray:
    focus = np.asarray(focus, dtype=np.float64)
    if focus.size != len(axes):
        raise ValueError(f"focus needs {len(axes)} coordinates, got {focus.size}")
    out = np.zeros(len(axes))
    for i, a in enumerate(axes):
        lo, hi = e.parameter_ranges[a]
        if not (lo <= focus[i] <= hi):
            raise ValueError(f"focus coordinate {a}={focus[i]} outside range [{lo}, {hi}]")
        out[i] = (focus[i] - lo) / (hi - lo) if hi > lo else 0.0
    return out


def train_svm(e: Ensemble, assignment: ClusterAssignment, cfg: SvmConfig,
              axes=None) -> SvmModel:
    """Train the one-vs-one RBF model on normalized parameters vs cluster labels.

    Training misclassifications are recorded per run name so callers can warn
    and retune C or gamma.
    """
    x, axes = normalize_parameters(e, axes)
    names = [r.name for r in e.runs]
    if list(assignment.keys) != names:
        idx = {k: i for i, k in enumerate(assignment.keys)}
        labels = np.array([assignment.labels[idx[n]] for n in names])
    else:
        labels = np.asarray(assignment.labels)
    keep = labels != GREY_ID
    if not keep.all():
        x, labels = x[keep], labels[keep]
        names = [n for n, k in zip(names, keep) if k]
    mc = train_multiclass(x, labels, cfg)
    pred = mc.predict(x)
    bad = [names[i] for i in np.flatnonzero(pred != labels)]
    return SvmModel(multiclass=mc, axes=axes, run_names=names, x=x,
                    labels=np.asarray(labels), training_misclassifications=bad)


def label_grid(model: SvmModel, resolution) -> LabelGrid:
    """Classify every node of a regular grid over the normalized space."""
    n_axes = len(model.axes)
    res = [int(resolution)] * n_axes if np.isscalar(resolution) else [int(r) for r in resolution]
    if len(res) != n_axes or any(r < 2 for r in res):
        raise ValueError("grid resolution must be >= 2 per axis")
    coords = [np.linspace(0.0, 1.0, r) for r in res]
    mesh = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1).reshape(-1, n_axes)
    labels = np.empty(mesh.shape[0], dtype=np.int64)
    chunk = 8192
    for start in range(0, mesh.shape[0], chunk):
        labels[start:start + chunk] = model.predict(mesh[start:start + chunk])
    return LabelGrid(axes=list(model.axes), coords=coords,
                     labels=labels.reshape(res), sample_x=model.x.copy(),
                     sample_labels=model.labels.copy(), run_names=list(model.run_names))


def uncertainty_grid(e: Ensemble, resolution, axes=None) -> UncertaintyGrid:
    """Distance of every grid node to the nearest sampled parameter setting.

    Distances are Euclidean in normalized coordinates, divided by the maximum
    over the grid; the saturation factor is 1 - distance, exactly 1 on nodes
    that coincide with a sample.
    """
    x, axes = normalize_parameters(e, axes)
    n_axes = len(axes)
    res = [int(resolution)] * n_axes if np.isscalar(resolution) else [int(r) for r in resolution]
    coords = [np.linspace(0.0, 1.0, r) for r in res]
    mesh = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1).reshape(-1, n_axes)
    dist, _ = cKDTree(x).query(mesh)
    dmax = dist.max()
    if dmax > 0:
        dist = dist / dmax
    return UncertaintyGrid(axes=axes, coords=coords,
                           distance=dist.reshape(res), factor=1.0 - dist.reshape(res))


def _nearest_index(coords: np.ndarray, value: float) -> int:
    return int(np.argmin(np.abs(coords - value)))


def _resolve_axes(grid_axes: list[str], axes) -> tuple[int, int]:
    def resolve(a):
        if isinstance(a, str):
            if a not in grid_axes:
                raise ValueError(f"axis {a!r} not in grid axes {grid_axes}")
            return grid_axes.index(a)
        a = int(a)
        if not 0 <= a < len(grid_axes):
            raise ValueError(f"axis index {a} out of range")
        return a

    ai, aj = resolve(axes[0]), resolve(axes[1])
    if ai == aj:
        raise ValueError("slice axes must differ")
    return ai, aj


def _plane(values: np.ndarray, ai: int, aj: int, fixed: dict[int, int]) -> np.ndarray:
    indexer = [slice(None)] * values.ndim
    for dim, idx in fixed.items():
        indexer[dim] = idx
    plane = values[tuple(indexer)]
    return plane if ai < aj else plane.T


def extract_slice(grid: LabelGrid, unc: UncertaintyGrid, e: Ensemble,
                  focus, axes, epsilon: float | None = None) -> HyperSlice:
    """Extract the axis-pair plane through the grid node nearest to the focus.

    A run lies in the slice iff every non-axis coordinate is within epsilon of
    the focus (normalized units); all other runs project onto the plane, with
    runs sharing a projected position aggregated into one marker. Epsilon
    defaults to half a grid cell.
    """
    ai, aj = _resolve_axes(grid.axes, axes)
    nf = normalize_focus(e, focus, grid.axes)
    if epsilon is None:
        epsilon = 0.5 / (min(len(c) for c in grid.coords) - 1)
    fixed = {dim: _nearest_index(grid.coords[dim], nf[dim])
             for dim in range(len(grid.axes)) if dim not in (ai, aj)}
    labels2d = _plane(grid.labels, ai, aj, fixed)
    unc2d = _plane(unc.factor, ai, aj, fixed)

    label_by_run = dict(zip(grid.run_names, grid.sample_labels))
    others = [d for d in range(len(grid.axes)) if d not in (ai, aj)]
    in_slice = []
    projected: dict[tuple[float, float], list[str]] = {}
    x_norm, _ = normalize_parameters(e, grid.axes)
    name_row = {r.name: i for i, r in enumerate(e.runs)}
    for name in grid.run_names:
        row = x_norm[name_row[name]]
        run = e.run(name)
        pos = (float(run.parameters[grid.axes[ai]]), float(run.parameters[grid.axes[aj]]))
        if all(abs(row[d] - nf[d]) <= epsilon for d in others):
            in_slice.append((name, pos, int(label_by_run[name])))
        else:
            projected.setdefault(pos, []).append(name)
    proj = sorted(projected.items())
    coords_orig = []
    for a in (ai, aj):
        lo, hi = e.parameter_ranges[grid.axes[a]]
        coords_orig.append(lo + grid.coords[a] * (hi - lo))
    return HyperSlice(axes=(ai, aj), axis_names=(grid.axes[ai], grid.axes[aj]),
                      labels=labels2d, uncertainty=unc2d,
                      coords=(coords_orig[0], coords_orig[1]),
                      in_slice=in_slice, projected=proj,
                      focus=np.asarray(focus, dtype=np.float64), epsilon=float(epsilon))


def slice_pairs(axes: list[str]) -> list[tuple[str, str]]:
    """All distinct axis pairs of the hyper-slice matrix, n(n-1)/2 of them."""
    return list(combinations(axes, 2))


def axis_sweep_mask(grid: LabelGrid, segment: int, sweep_axis: int,
                    focus_idx: dict[int, int], ai: int, aj: int) -> np.ndarray:
    """Existential sweep: does the segment occur anywhere along one free axis.

    All dims other than the slice axes and the sweep axis stay fixed at the
    focus node.
    """
    indexer = [slice(None)] * grid.labels.ndim
    for dim, idx in focus_idx.items():
        if dim not in (ai, aj) and dim != sweep_axis:
            indexer[dim] = idx
    sub = grid.labels[tuple(indexer)] == segment
    kept = [d for d in range(grid.labels.ndim) if d in (ai, aj) or d == sweep_axis]
    out = sub.any(axis=kept.index(sweep_axis))
    kept.remove(sweep_axis)
    return out if kept[0] == ai else out.T


def _eval_mask(node, atom_masks: dict[str, np.ndarray],
               complete_mask: np.ndarray | None) -> np.ndarray:
    if isinstance(node, Complete):
        return complete_mask
    if isinstance(node, Atom):
        return atom_masks[node.name]
    if isinstance(node, Not):
        return ~_eval_mask(node.operand, atom_masks, complete_mask)
    if isinstance(node, BinOp):
        l = _eval_mask(node.left, atom_masks, complete_mask)
        r = _eval_mask(node.right, atom_masks, complete_mask)
        if node.op == "and":
            return l & r
        if node.op == "or":
            return l | r
        if node.op == "xor":
            return l ^ r
        if node.op == "nand":
            return ~(l & r)
        if node.op == "nor":
            return ~(l | r)
        if node.op == "implies":
            return ~l | r
        if node.op == "equiv":
            return ~(l ^ r)
    raise TypeError(f"unknown expression node {node!r}")


def boundary_mask(grid: LabelGrid, segment: int, expr, focus, axes,
                  e: Ensemble | None = None) -> BinaryMask:
    """Project a segment's occurrence along free axes into one slice.

    Atom masks sweep a single parameter axis with every other free coordinate
    pinned to the focus node; the expression combines them pointwise.
    `Complete` sweeps all free parameters jointly. The focus may be given in
    normalized units, or original units with the ensemble for context.
    """
    ai, aj = _resolve_axes(grid.axes, axes)
    if not np.any(grid.labels == segment):
        raise ValueError(f"segment {segment} not present in grid")
    nf = (normalize_focus(e, focus, grid.axes) if e is not None
          else np.asarray(focus, dtype=np.float64))
    focus_idx = {dim: _nearest_index(grid.coords[dim], nf[dim])
                 for dim in range(len(grid.axes)) if dim not in (ai, aj)}
    if isinstance(expr, Complete):
        free = tuple(d for d in range(grid.labels.ndim) if d not in (ai, aj))
        hit = (grid.labels == segment).any(axis=free)
        mask = hit if ai < aj else hit.T
        return BinaryMask(axes=(ai, aj), axis_names=(grid.axes[ai], grid.axes[aj]), mask=mask)
    atom_masks = {}
    for name in sorted({a for a in _atoms(expr)}):
        k = grid.axes.index(name)
        atom_masks[name] = axis_sweep_mask(grid, segment, k, focus_idx, ai, aj)
    mask = _eval_mask(expr, atom_masks, None)
    return BinaryMask(axes=(ai, aj), axis_names=(grid.axes[ai], grid.axes[aj]), mask=mask)


def _atoms(node):
    if isinstance(node, Atom):
        yield node.name
    elif isinstance(node, Not):
        yield from _atoms(node.operand)
    elif isinstance(node, BinOp):
        yield from _atoms(node.left)
        yield from _atoms(node.right)


def complete_union_mask(grid: LabelGrid, segment: int, focus, axes,
                        e: Ensemble | None = None) -> BinaryMask:
    """OR of the single-axis sweeps over all free parameters.

    Companion to `Complete` (joint sweep) for comparing the two readings; in
    a 3-parameter grid with one free axis both coincide.
    """
    ai, aj = _resolve_axes(grid.axes, axes)
    nf = (normalize_focus(e, focus, grid.axes) if e is not None
          else np.asarray(focus, dtype=np.float64))
    focus_idx = {dim: _nearest_index(grid.coords[dim], nf[dim])
                 for dim in range(len(grid.axes)) if dim not in (ai, aj)}
    mask = None
    for k in focus_idx:
        m = axis_sweep_mask(grid, segment, k, focus_idx, ai, aj)
        mask = m if mask is None else (mask | m)
    return BinaryMask(axes=(ai, aj), axis_names=(grid.axes[ai], grid.axes[aj]), mask=mask)


def correlation_ranking(e: Ensemble, sim_emb: Embedding) -> CorrelationResult:
    """Pearson correlation of each parameter with the embedding's principal axis.

    The per-run scalar is the coordinate along the principal axis of the
    centered 2D point cloud; its sign is fixed so the largest-magnitude
    coordinate is positive. Constant parameters get coefficient 0 with a
    degenerate flag, as does everything when fewer than 3 runs exist.
    """
    names = [r.name for r in e.runs]
    pts = np.array([sim_emb.points[n] for n in names], dtype=np.float64)
    pts = pts - pts.mean(axis=0)
    degenerate_overall = len(names) < 3
    if degenerate_overall or np.allclose(pts, 0.0):
        v = np.zeros(len(names))
    else:
        _, _, vt = np.linalg.svd(pts, full_matrices=False)
        v = pts @ vt[0]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
    mu_v = v.mean()
    sv = np.sqrt(np.sum((v - mu_v) ** 2))
    coefficients = {}
    degenerate = set()
    for name in e.parameter_names:
        p = np.array([r.parameters[name] for r in e.runs], dtype=np.float64)
        sp = np.sqrt(np.sum((p - p.mean()) ** 2))
        if sp == 0.0 or sv == 0.0 or degenerate_overall:
            coefficients[name] = 0.0
            degenerate.add(name)
            continue
        coefficients[name] = float(np.sum((p - p.mean()) * (v - mu_v)) / (sp * sv))
    ranking = sorted(coefficients, key=lambda n: (-abs(coefficients[n]), n))
    return CorrelationResult(coefficients=coefficients, ranking=ranking,
                             degenerate=degenerate,
                             degenerate_overall=degenerate_overall, component=v)


# ---------------------------------------------------------------------------
# Grid serialization: same header layout as field files (magic, u32 axis
# count, u32 extents) but with u8 labels / float32 factors and an unrestricted
# axis count, plus one JSON metadata sidecar for the directory.

def save_grids(grid: LabelGrid, unc: UncertaintyGrid, out_dir,
               class_colors: dict[int, str] | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.grid", "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<I", grid.labels.ndim))
        fh.write(struct.pack(f"<{grid.labels.ndim}I", *grid.labels.shape))
        fh.write(grid.labels.astype(np.uint8).tobytes())
    with open(out / "uncertainty.grid", "wb") as fh:
        fh.write(UNCERT_MAGIC)
        fh.write(struct.pack("<I", unc.factor.ndim))
        fh.write(struct.pack(f"<{unc.factor.ndim}I", *unc.factor.shape))
        fh.write(unc.factor.astype("<f4").tobytes())
    meta = {
        "axes": list(grid.axes),
        "resolution": [len(c) for c in grid.coords],
        "classColors": {str(k): v for k, v in (class_colors or {}).items()},
        "samples": {
            "runs": list(grid.run_names),
            "coordinates": [[float(v) for v in row] for row in grid.sample_x],
            "labels": [int(v) for v in grid.sample_labels],
        },
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_grids(in_dir) -> tuple[LabelGrid, UncertaintyGrid]:
    src = Path(in_dir)
    meta = json.loads((src / "meta.json").read_text())
    raw = (src / "labels.grid").read_bytes()
    if raw[:4] != LABEL_MAGIC:
        raise ValueError("bad label grid magic")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    shape = struct.unpack_from(f"<{ndim}I", raw, 8)
    labels = np.frombuffer(raw, dtype=np.uint8, count=int(np.prod(shape)),
                           offset=8 + 4 * ndim).reshape(shape).astype(np.int64)
    raw = (src / "uncertainty.grid").read_bytes()
    if raw[:4] != UNCERT_MAGIC:
        raise ValueError("bad uncertainty grid magic")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    shape = struct.unpack_from(f"<{ndim}I", raw, 8)
    factor = np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)),
                           offset=8 + 4 * ndim).reshape(shape).astype(np.float64)
    coords = [np.linspace(0.0, 1.0, r) for r in meta["resolution"]]
    samples = meta["samples"]
    grid = LabelGrid(axes=list(meta["axes"]), coords=coords, labels=labels,
                     sample_x=np.array(samples["coordinates"], dtype=np.float64),
                     sample_labels=np.array(samples["labels"], dtype=np.int64),
                     run_names=list(samples["runs"]))
    unc = UncertaintyGrid(axes=list(meta["axes"]), coords=coords,
                          distance=1.0 - factor, factor=factor)
    return grid, unc
