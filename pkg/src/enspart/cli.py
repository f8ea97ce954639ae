"""Batch front door: every pipeline stage as a subcommand, no UI required.

All outputs are deterministic for fixed flags and seeds. Exit codes: 0 on
success, 2 on validation errors (bad flags, malformed inputs), 1 on
unexpected runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clustering, embedding, partition, similarity
from .expressions import ExpressionError, parse_projection_expr
from .fields import EnsembleError, load_ensemble, normalize_fields, save_ensemble
from .svm import SvmConfig
from .synthetic import generate_synthetic

VALIDATION_ERRORS = (EnsembleError, ExpressionError, similarity.OverlapError,
                     FileNotFoundError, ValueError, KeyError)


def _parse_interval(text):
    if text is None:
        return None
    t0, t1 = text.split(":")
    return (float(t0), float(t1))


def _parse_shift(text):
    if text is None:
        return None
    tau_max, tau_step = text.split(":")
    return similarity.ShiftOptions(enabled=True, tau_max=float(tau_max),
                                   tau_step=float(tau_step))


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def cmd_synth(args) -> int:
    ens = generate_synthetic(args.seed)
    out = Path(args.out)
    save_ensemble(ens, out)
    _write_json(out / "ground_truth.json", ens.ground_truth)
    print(f"wrote {len(ens.runs)} runs to {out}", file=sys.stderr)
    return 0


def cmd_distances(args) -> int:
    ens = normalize_fields(load_ensemble(args.manifest))
    dt = similarity.compute_timestep_matrix(ens, args.seeds, args.rng)
    dr = similarity.compute_run_matrix(dt, _parse_interval(args.interval),
                                       _parse_shift(args.shift))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    similarity.save_matrix(dt, out / "dt.edmx")
    similarity.save_matrix(dr, out / "dr.edmx")
    print(f"wrote {out / 'dt.edmx'} ({dt.n} rows) and {out / 'dr.edmx'} ({dr.n} rows)",
          file=sys.stderr)
    return 0


def cmd_cluster(args) -> int:
    dr = similarity.load_matrix(args.dr)
    tree = clustering.hierarchical_cluster(dr, args.linkage)
    if args.prune.startswith("auto"):
        height = clustering.height_for_count(tree, int(args.prune[4:]))
    else:
        height = float(args.prune)
    assignment = clustering.prune(tree, height)
    colors = clustering.assign_colors(tree, assignment)
    _write_json(args.out, {
        "linkage": tree.linkage,
        "merges": [[int(l), int(r), float(h)] for l, r, h in tree.merges],
        "pruningHeight": assignment.pruning_height,
        "clusterCount": assignment.cluster_count,
        "labels": {k: int(v) for k, v in zip(assignment.keys, assignment.labels)},
        "colors": {str(cid): c for cid, c in sorted(colors.colors.items())},
    })
    print(f"{assignment.cluster_count} clusters at height {assignment.pruning_height}",
          file=sys.stderr)
    return 0


def cmd_embed(args) -> int:
    dm = similarity.load_matrix(args.matrix)
    emb = embedding.mds_embed(dm, dim=args.dim)
    Path(args.out).write_text(emb.to_json())
    print(f"stress {emb.stress:.6g} after {emb.n_iter} iterations", file=sys.stderr)
    return 0


def cmd_partition(args) -> int:
    ens = normalize_fields(load_ensemble(args.manifest))
    doc = json.loads(Path(args.labels).read_text())
    labels = doc["labels"]
    names = [r.name for r in ens.runs]
    missing = [n for n in names if n not in labels]
    if missing:
        raise EnsembleError(f"label file lacks runs, e.g. {missing[0]!r}")
    assignment = clustering.ClusterAssignment(
        pruning_height=float(doc.get("pruningHeight", 0.0)),
        labels=np.array([labels[n] for n in names], dtype=np.int64),
        cluster_count=len(set(labels.values())),
        roots=[], keys=names)
    cfg = SvmConfig(C=args.c, gamma=args.gamma)
    axes = args.parameters.split(",") if args.parameters else None
    model = partition.train_svm(ens, assignment, cfg, axes=axes)
    grid = partition.label_grid(model, args.resolution)
    unc = partition.uncertainty_grid(ens, args.resolution, axes=model.axes)
    colors = doc.get("colors", {})
    partition.save_grids(grid, unc, args.out, class_colors=colors)
    if model.training_misclassifications:
        print(f"warning: {len(model.training_misclassifications)} training "
              f"misclassifications: {model.training_misclassifications[:5]}", file=sys.stderr)
    print(f"labeled {grid.labels.size} grid nodes over axes {model.axes}", file=sys.stderr)
    return 0


def cmd_slice(args) -> int:
    grid, unc = partition.load_grids(args.grid)
    ens = normalize_fields(load_ensemble(args.manifest))
    axes = tuple(args.axes.split(","))
    focus = [float(x) for x in args.focus.split(",")]
    hs = partition.extract_slice(grid, unc, ens, focus, axes, args.epsilon)
    _write_json(args.out, {
        "axes": list(hs.axis_names),
        "labels": hs.labels.tolist(),
        "uncertainty": [[float(u) for u in row] for row in hs.uncertainty],
        "coords": [list(map(float, c)) for c in hs.coords],
        "inSlice": [{"run": n, "position": list(p), "cluster": c} for n, p, c in hs.in_slice],
        "projected": [{"position": list(p), "runs": ns} for p, ns in hs.projected],
        "focus": focus,
        "epsilon": hs.epsilon,
    })
    print(f"slice {hs.axis_names}: {len(hs.in_slice)} in-slice, "
          f"{len(hs.projected)} projected markers", file=sys.stderr)
    return 0


def cmd_project(args) -> int:
    grid, _ = partition.load_grids(args.grid)
    axes = tuple(args.axes.split(","))
    expr = parse_projection_expr(args.expr, axes, grid.axes)
    focus = [float(x) for x in args.focus.split(",")]
    ens = normalize_fields(load_ensemble(args.manifest)) if args.manifest else None
    bm = partition.boundary_mask(grid, args.segment, expr, focus, axes, e=ens)
    _write_json(args.out, {
        "axes": list(bm.axis_names),
        "segment": args.segment,
        "expression": args.expr,
        "mask": [[int(v) for v in row] for row in bm.mask],
    })
    print(f"mask has {int(bm.mask.sum())} set pixels", file=sys.stderr)
    return 0


def cmd_correlations(args) -> int:
    ens = normalize_fields(load_ensemble(args.manifest))
    doc = json.loads(Path(args.embedding).read_text())
    points = {k: np.array(v) for k, v in doc["points"].items()}
    emb = embedding.Embedding(dim=doc["dim"], points=points, stress=doc["stress"])
    result = partition.correlation_ranking(ens, emb)
    payload = {
        "coefficients": {k: float(v) for k, v in sorted(result.coefficients.items())},
        "ranking": result.ranking,
        "degenerate": sorted(result.degenerate),
    }
    if args.out:
        _write_json(args.out, payload)
    else:
        print(json.dumps(payload, sort_keys=True, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enspart",
                                description="ensemble parameter-space partitioning")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate the synthetic ground-truth ensemble")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("distances", help="compute timestep and run distance matrices")
    s.add_argument("--manifest", required=True)
    s.add_argument("--seeds", type=int, default=1024)
    s.add_argument("--rng", type=int, default=1)
    s.add_argument("--interval", help="T0:T1 time restriction")
    s.add_argument("--shift", help="TAUMAX:STEP time-shift search")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_distances)

    s = sub.add_parser("cluster", help="hierarchical clustering of a run matrix")
    s.add_argument("--dr", required=True)
    s.add_argument("--linkage", choices=clustering.LINKAGES, required=True)
    s.add_argument("--prune", required=True, help="height or autoK (e.g. auto4)")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_cluster)

    s = sub.add_parser("embed", help="MDS embedding of a distance matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--dim", type=int, choices=(1, 2, 3), default=2)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_embed)

    s = sub.add_parser("partition", help="train the SVM and label the parameter grid")
    s.add_argument("--manifest", required=True)
    s.add_argument("--labels", required=True, help="cluster output JSON")
    s.add_argument("--c", type=float, default=10.0)
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--resolution", type=int, default=16)
    s.add_argument("--parameters", help="comma-separated subset of parameters")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_partition)

    s = sub.add_parser("slice", help="extract one hyper-slice plane")
    s.add_argument("--grid", required=True, help="partition output directory")
    s.add_argument("--manifest", required=True)
    s.add_argument("--axes", required=True, help="i,j axis names")
    s.add_argument("--focus", required=True, help="comma-separated focus coordinates")
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_slice)

    s = sub.add_parser("project", help="boundary-projection mask for a segment")
    s.add_argument("--grid", required=True)
    s.add_argument("--manifest", help="needed when focus is in original units")
    s.add_argument("--segment", type=int, required=True)
    s.add_argument("--expr", required=True)
    s.add_argument("--axes", required=True)
    s.add_argument("--focus", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_project)

    s = sub.add_parser("correlations", help="parameter correlation ranking")
    s.add_argument("--manifest", required=True)
    s.add_argument("--embedding", required=True, help="similarity embedding JSON")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_correlations)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:       # anything unexpected
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
