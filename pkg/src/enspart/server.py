"""Session-oriented HTTP/JSON service wrapping the analysis engine.

One session holds one loaded ensemble plus the cached products of the
pipeline stages

    ensemble -> D_T -> D_R -> tree -> assignment/colors -> svm -> grids

Changing the inputs of a stage invalidates everything downstream and nothing
upstream; the timestep matrix in particular survives time-interval changes,
which is what keeps interval refinement interactive. Computing D_T is the one
slow step, so distance requests run as polled jobs; every other endpoint is
synchronous. GETs never mutate session state.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import clustering, embedding, partition, similarity
from .expressions import ExpressionError, parse_projection_expr
from .fields import Ensemble, EnsembleError, field_bytes, load_ensemble, normalize_fields
from .svm import SvmConfig
from .synthetic import generate_synthetic

STAGES = ("distances", "run_matrix", "tree", "assignment", "svm", "grids")


class Session:
    def __init__(self, sid: str, ensemble: Ensemble):
        self.id = sid
        self.lock = threading.RLock()
        self.ensemble = ensemble
        self.seed_count: int | None = None
        self.rng_seed: int | None = None
        self.interval: tuple | None = None
        self.shift: similarity.ShiftOptions | None = None
        self.dt: similarity.DistanceMatrix | None = None
        self.dr: similarity.DistanceMatrix | None = None
        self.linkage: str | None = None
        self.tree: clustering.ClusterTree | None = None
        self.pruning_height: float | None = None
        self.assignment: clustering.ClusterAssignment | None = None
        self.colors: clustering.ColorAssignment | None = None
        self.svm_config: SvmConfig | None = None
        self.selected_parameters: list[str] | None = None
        self.resolution: int = 16
        self.model: partition.SvmModel | None = None
        self.grid: partition.LabelGrid | None = None
        self.uncertainty: partition.UncertaintyGrid | None = None
        self.focus: list[float] | None = None
        self.axes: list[str] | None = None
        self.segment: int | None = None
        self.expression: str | None = None
        self.embeddings: dict = {}          # cache key -> Embedding / TemporalCurves
        self.correlations: partition.CorrelationResult | None = None
        self.jobs: dict[str, dict] = {}

    def invalidate(self, stage: str) -> None:
        """Clear the given stage and everything downstream of it."""
        start = STAGES.index(stage)
        for s in STAGES[start:]:
            if s == "distances":
                self.dt = None
                self.embeddings = {k: v for k, v in self.embeddings.items()
                                   if not k.startswith("temporal")}
            elif s == "run_matrix":
                self.dr = None
                self.embeddings = {k: v for k, v in self.embeddings.items()
                                   if not k.startswith("similarity")}
                self.correlations = None
            elif s == "tree":
                self.tree = None
            elif s == "assignment":
                self.assignment = None
                self.colors = None
            elif s == "svm":
                self.model = None
            elif s == "grids":
                self.grid = None
                self.uncertainty = None

    def stage_state(self) -> dict:
        return {
            "distances": self.dt is not None,
            "run_matrix": self.dr is not None,
            "tree": self.tree is not None,
            "assignment": self.assignment is not None,
            "svm": self.model is not None,
            "grids": self.grid is not None,
        }


class CreateSession(BaseModel):
    source: str                                   # "synthetic" | "manifest"
    rngSeed: int = 1
    manifestPath: Optional[str] = None


class DistancesRequest(BaseModel):
    seedCount: int = 1024
    rngSeed: int = 1
    interval: Optional[tuple[float, float]] = None
    shift: Optional[dict] = None                  # {"tauMax": .., "tauStep": ..}


class ClusterRequest(BaseModel):
    linkage: str = "ward.D"
    pruningHeight: Optional[float] = None
    clusterCount: Optional[int] = None
    subtreeNode: Optional[int] = None
    localPruningHeight: Optional[float] = None
    palette: Optional[str] = None


class PartitionRequest(BaseModel):
    C: float = 10.0
    gamma: Optional[float] = None
    resolution: int = 16
    selectedParameters: Optional[list[str]] = None


class ProjectionRequest(BaseModel):
    segment: int
    expression: str
    axes: tuple[str, str]
    focus: list[float]


def _error(code: int, message: str) -> HTTPException:
    return HTTPException(status_code=code, detail=message)


def create_app() -> FastAPI:
    app = FastAPI(title="enspart")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    sessions: dict[str, Session] = {}
    executor = ThreadPoolExecutor(max_workers=2)

    def get_session(sid: str) -> Session:
        s = sessions.get(sid)
        if s is None:
            raise _error(404, f"unknown session {sid}")
        return s

    @app.post("/sessions")
    def create_session(req: CreateSession):
        if req.source == "synthetic":
            ens = generate_synthetic(req.rngSeed)
        elif req.source == "manifest":
            if not req.manifestPath:
                raise _error(400, "manifestPath required for manifest source")
            try:
                ens = load_ensemble(req.manifestPath)
            except EnsembleError as e:
                raise _error(400, str(e))
        else:
            raise _error(400, f"unknown source {req.source!r}")
        ens = normalize_fields(ens)
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(sid, ens)
        return {
            "id": sid,
            "runs": len(ens.runs),
            "parameterNames": list(ens.parameter_names),
            "parameterRanges": {k: list(v) for k, v in ens.parameter_ranges.items()},
        }

    @app.post("/sessions/{sid}/distances")
    def compute_distances(sid: str, req: DistancesRequest):
        s = get_session(sid)
        shift = None
        if req.shift:
            shift = similarity.ShiftOptions(enabled=True,
                                            tau_max=float(req.shift["tauMax"]),
                                            tau_step=float(req.shift["tauStep"]))
        job_id = uuid.uuid4().hex[:12]
        s.jobs[job_id] = {"status": "pending"}

        def work():
            with s.lock:
                s.jobs[job_id]["status"] = "running"
                try:
                    if s.dt is None or (req.seedCount, req.rngSeed) != (s.seed_count, s.rng_seed):
                        s.invalidate("distances")
                        s.seed_count, s.rng_seed = req.seedCount, req.rngSeed
                        s.dt = similarity.compute_timestep_matrix(
                            s.ensemble, req.seedCount, req.rngSeed)
                    s.invalidate("run_matrix")
                    s.interval = tuple(req.interval) if req.interval else None
                    s.shift = shift
                    s.dr = similarity.compute_run_matrix(s.dt, s.interval, s.shift)
                    s.jobs[job_id] = {"status": "done"}
                except Exception as e:      # surfaced through job polling
                    s.jobs[job_id] = {"status": "error", "error": str(e)}

        executor.submit(work)
        return {"job": job_id}

    @app.get("/sessions/{sid}/jobs/{job_id}")
    def job_status(sid: str, job_id: str):
        s = get_session(sid)
        job = s.jobs.get(job_id)
        if job is None:
            raise _error(404, f"unknown job {job_id}")
        return job

    @app.post("/sessions/{sid}/cluster")
    def cluster(sid: str, req: ClusterRequest):
        s = get_session(sid)
        with s.lock:
            if s.dr is None:
                raise _error(409, "run-level distances not computed yet")
            palette = clustering.PALETTES.get(req.palette) if req.palette else None
            if req.subtreeNode is not None:
                if s.tree is None:
                    raise _error(409, "no cluster tree to select from")
                height = (req.localPruningHeight
                          if req.localPruningHeight is not None else s.pruning_height or 0.0)
                try:
                    assignment, colors = clustering.select_subtree(
                        s.tree, req.subtreeNode, height,
                        palette=palette, previous=s.colors)
                except ValueError as e:
                    raise _error(400, str(e))
                s.invalidate("svm")
                s.assignment, s.colors = assignment, colors
            else:
                if req.linkage not in clustering.LINKAGES:
                    raise _error(400, f"unknown linkage {req.linkage!r}")
                if s.tree is None or s.linkage != req.linkage:
                    s.invalidate("tree")
                    s.linkage = req.linkage
                    s.tree = clustering.hierarchical_cluster(s.dr, req.linkage)
                height = req.pruningHeight
                if req.clusterCount is not None:
                    height = clustering.height_for_count(s.tree, req.clusterCount)
                if height is None:
                    raise _error(400, "pruningHeight or clusterCount required")
                assignment = clustering.prune(s.tree, height)
                s.invalidate("assignment")
                s.pruning_height = float(height)
                s.assignment = assignment
                s.colors = clustering.assign_colors(s.tree, assignment,
                                                    palette=palette, previous=s.colors)
            return _cluster_payload(s)

    def _cluster_payload(s: Session) -> dict:
        return {
            "linkage": s.linkage,
            "pruningHeight": s.assignment.pruning_height,
            "clusterCount": s.assignment.cluster_count,
            "labels": {k: int(v) for k, v in zip(s.assignment.keys, s.assignment.labels)},
            "colors": {str(cid): c for cid, c in sorted(s.colors.colors.items())},
            "merges": [[int(l), int(r), float(h)] for l, r, h in s.tree.merges],
        }

    @app.get("/sessions/{sid}/embeddings/{kind}")
    def embeddings(sid: str, kind: str, dim: int = 2,
                   t0: Optional[float] = None, t1: Optional[float] = None):
        s = get_session(sid)
        with s.lock:
            if kind == "similarity":
                if s.dr is None:
                    raise _error(409, "run-level distances not computed yet")
                key = f"similarity:{dim}"
                if key not in s.embeddings:
                    s.embeddings[key] = embedding.mds_embed(s.dr, dim=dim)
                emb = s.embeddings[key]
                payload = _embedding_payload(emb)
                if s.assignment is not None:
                    centers = embedding.barycenters(emb, s.assignment)
                    payload["barycenters"] = {str(c): [float(x) for x in xy]
                                              for c, xy in centers.items()}
                return payload
            if kind == "parameters":
                key = f"parameters:{dim}"
                if key not in s.embeddings:
                    s.embeddings[key] = embedding.parameter_embedding(s.ensemble)
                emb = s.embeddings[key]
                payload = _embedding_payload(emb)
                if s.assignment is not None:
                    centers = embedding.barycenters(emb, s.assignment)
                    payload["barycenters"] = {str(c): [float(x) for x in xy]
                                              for c, xy in centers.items()}
                return payload
            if kind == "temporal":
                if s.dt is None:
                    raise _error(409, "timestep distances not computed yet")
                key = f"temporal:{dim}"
                if key not in s.embeddings:
                    s.embeddings[key] = embedding.temporal_evolution(s.dt, dim=dim)
                curves = s.embeddings[key]
                interval = [t0, t1] if t0 is not None and t1 is not None else None
                return {
                    "dim": curves.embedding.dim,
                    "stress": curves.embedding.stress,
                    "interval": interval,
                    "curves": {run: [[float(t)] + [float(x) for x in xy] for t, xy in pts]
                               for run, pts in sorted(curves.curves.items())},
                }
            raise _error(400, f"unknown embedding kind {kind!r}")

    def _embedding_payload(emb) -> dict:
        return {
            "dim": emb.dim,
            "stress": emb.stress,
            "points": {str(k) if not isinstance(k, tuple) else f"{k[0]}@{k[1]}":
                       [float(x) for x in v] for k, v in sorted(emb.points.items())},
        }

    @app.post("/sessions/{sid}/partition")
    def run_partition(sid: str, req: PartitionRequest):
        s = get_session(sid)
        with s.lock:
            if s.assignment is None:
                raise _error(409, "clustering not computed yet")
            try:
                cfg = SvmConfig(C=req.C, gamma=req.gamma)
            except ValueError as e:
                raise _error(400, str(e))
            axes = req.selectedParameters or list(s.ensemble.parameter_names)
            if len(axes) < 2:
                raise _error(400, "need at least 2 selected parameters")
            s.invalidate("svm")
            s.svm_config = cfg
            s.selected_parameters = axes
            s.resolution = req.resolution
            try:
                s.model = partition.train_svm(s.ensemble, s.assignment, cfg, axes=axes)
            except ValueError as e:
                raise _error(400, str(e))
            s.grid = partition.label_grid(s.model, req.resolution)
            s.uncertainty = partition.uncertainty_grid(s.ensemble, req.resolution, axes=axes)
            return {
                "axes": axes,
                "resolution": req.resolution,
                "misclassifiedRuns": list(s.model.training_misclassifications),
                "warning": ("training misclassifications occurred; adjust C or gamma"
                            if s.model.training_misclassifications else None),
                "slicePairs": [list(p) for p in partition.slice_pairs(axes)],
            }

    @app.get("/sessions/{sid}/slice")
    def get_slice(sid: str, axes: str, focus: str, epsilon: Optional[float] = None):
        s = get_session(sid)
        with s.lock:
            if s.grid is None:
                raise _error(409, "partition not computed yet")
            axis_pair = [a.strip() for a in axes.split(",")]
            focus_vals = [float(x) for x in focus.split(",")]
            try:
                hs = partition.extract_slice(s.grid, s.uncertainty, s.ensemble,
                                             focus_vals, tuple(axis_pair), epsilon)
            except (ValueError, EnsembleError) as e:
                raise _error(400, str(e))
            return {
                "axes": list(hs.axis_names),
                "labels": hs.labels.tolist(),
                "uncertainty": [[round(float(u), 6) for u in row] for row in hs.uncertainty],
                "coords": [list(map(float, hs.coords[0])), list(map(float, hs.coords[1]))],
                "inSlice": [{"run": n, "position": [float(p) for p in pos], "cluster": c}
                            for n, pos, c in hs.in_slice],
                "projected": [{"position": [float(p) for p in pos], "runs": names}
                              for pos, names in hs.projected],
                "focus": focus_vals,
                "epsilon": hs.epsilon,
            }

    @app.post("/sessions/{sid}/projection")
    def projection(sid: str, req: ProjectionRequest):
        s = get_session(sid)
        with s.lock:
            if s.grid is None:
                raise _error(409, "partition not computed yet")
            try:
                expr = parse_projection_expr(req.expression, req.axes, s.grid.axes)
            except ExpressionError as e:
                raise HTTPException(status_code=422,
                                    detail={"message": str(e), "position": e.position})
            try:
                bm = partition.boundary_mask(s.grid, req.segment, expr,
                                             req.focus, req.axes, e=s.ensemble)
            except ValueError as e:
                raise _error(400, str(e))
            s.focus = list(req.focus)
            s.axes = list(req.axes)
            s.segment = req.segment
            s.expression = req.expression
            return {
                "axes": list(bm.axis_names),
                "segment": req.segment,
                "expression": req.expression,
                "mask": [[int(v) for v in row] for row in bm.mask],
            }

    @app.get("/sessions/{sid}/correlations")
    def correlations(sid: str):
        s = get_session(sid)
        with s.lock:
            if s.dr is None:
                raise _error(409, "run-level distances not computed yet")
            key = "similarity:2"
            if key not in s.embeddings:
                s.embeddings[key] = embedding.mds_embed(s.dr, dim=2)
            if s.correlations is None:
                s.correlations = partition.correlation_ranking(s.ensemble, s.embeddings[key])
            c = s.correlations
            return {
                "coefficients": {k: float(v) for k, v in sorted(c.coefficients.items())},
                "ranking": list(c.ranking),
                "degenerate": sorted(c.degenerate),
            }

    @app.get("/sessions/{sid}/runs/{name}/fields/{t}")
    def field_payload(sid: str, name: str, t: float):
        s = get_session(sid)
        with s.lock:
            try:
                run = s.ensemble.run(name)
            except EnsembleError as e:
                raise _error(404, str(e))
            times = run.times()
            idx = int(np.argmin(np.abs(times - t)))
            return Response(content=field_bytes(run.timesteps[idx][1]),
                            media_type="application/octet-stream",
                            headers={"X-Time": repr(float(times[idx]))})

    @app.get("/sessions/{sid}/state")
    def state(sid: str):
        s = get_session(sid)
        with s.lock:
            return {
                "id": s.id,
                "runs": len(s.ensemble.runs),
                "parameterNames": list(s.ensemble.parameter_names),
                "stages": s.stage_state(),
                "interval": list(s.interval) if s.interval else None,
                "shift": ({"tauMax": s.shift.tau_max, "tauStep": s.shift.tau_step}
                          if s.shift and s.shift.enabled else None),
                "linkage": s.linkage,
                "pruningHeight": s.pruning_height,
                "clusterCount": s.assignment.cluster_count if s.assignment else None,
                "selectedParameters": s.selected_parameters,
                "resolution": s.resolution,
                "focus": s.focus,
                "axes": s.axes,
                "segment": s.segment,
                "expression": s.expression,
            }

    return app


app = create_app()
