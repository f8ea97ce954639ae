"""Synthetic ground-truth ensemble generator.

Builds a 4-parameter ensemble on [0,1]^4 sampled equidistantly with 5 values
per axis (625 runs). Parameters a, b, c control the count and placement of
Gaussian kernels rendered on a 64x64 grid; parameter d has no influence at
all. Four behavior classes are modeled, each tied to one region of the (b, c)
plane, so every class is exposed in the b-c slice:

    class 2 ("green")  : c > 0.25 + 0.5 b   (larger c, diagonal boundary)
    class 0 ("red")    : c <= 0.25 and b <= 0.5
    class 3 ("purple") : c <= 0.25 and b >  0.5
    class 1 ("blue")   : the remaining band below the diagonal

The generated ensemble carries the class of every run in `ground_truth`.
"""

from __future__ import annotations

import numpy as np

from .fields import Ensemble, Run, ScalarField, make_ensemble

AXIS_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0)
PARAMETER_NAMES = ("a", "b", "c", "d")
GRID_DIMS = (64, 64)
TIMES = (0.0, 1.0, 2.0)

RED, BLUE, GREEN, PURPLE = 0, 1, 2, 3
CLASS_NAMES = {RED: "red", BLUE: "blue", GREEN: "green", PURPLE: "purple"}

# Base kernel layouts per class; class identity is carried by kernel count
# and placement, (a, b, c) only modulate within-class appearance.
_BASE_CENTERS = {
    RED: [(0.34, 0.32)],
    BLUE: [(0.22, 0.72), (0.72, 0.22)],
    GREEN: [(0.18, 0.2), (0.5, 0.78), (0.82, 0.3)],
    PURPLE: [(0.2, 0.2), (0.2, 0.8), (0.8, 0.2), (0.8, 0.8)],
}
_DRIFT = (0.03, 0.02)  # per unit of normalized time


def behavior_class(b: float, c: float) -> int:
    """Ground-truth class of a parameter setting; depends on (b, c) only."""
    if c > 0.25 + 0.5 * b:
        return GREEN
    if c <= 0.25:
        return PURPLE if b > 0.5 else RED
    return BLUE


def _render(a: float, b: float, c: float, jitter: np.ndarray, t_hat: float) -> np.ndarray:
    cls = behavior_class(b, c)
    ny, nx = GRID_DIMS
    ys = (np.arange(ny) + 0.5) / ny
    xs = (np.arange(nx) + 0.5) / nx
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    sigma = 0.07 + 0.03 * c
    out = np.zeros(GRID_DIMS)
    for k, (cy, cx) in enumerate(_BASE_CENTERS[cls]):
        my = cy + 0.06 * (b - 0.5) + jitter[k, 0] + _DRIFT[0] * t_hat
        mx = cx + 0.10 * (a - 0.5) + jitter[k, 1] + _DRIFT[1] * t_hat
        out += np.exp(-((yy - my) ** 2 + (xx - mx) ** 2) / (2.0 * sigma * sigma))
    return out


def generate_synthetic(rng_seed: int) -> Ensemble:
    """Generate the 625-run ground-truth ensemble, deterministic in rng_seed.

    Runs that differ only in parameter d produce bit-identical fields: the
    per-run jitter stream is keyed by (rng_seed, ia, ib, ic) and d is never
    consumed.
    """
    runs = []
    labels = {}
    idx = 0
    for ia, a in enumerate(AXIS_VALUES):
        for ib, b in enumerate(AXIS_VALUES):
            for ic, c in enumerate(AXIS_VALUES):
                cls = behavior_class(b, c)
                rng = np.random.default_rng([int(rng_seed), ia, ib, ic])
                jitter = rng.uniform(-0.015, 0.015, size=(len(_BASE_CENTERS[cls]), 2))
                fields = [
                    ScalarField(dims=GRID_DIMS,
                                values=_render(a, b, c, jitter, t / TIMES[-1]).ravel())
                    for t in TIMES
                ]
                for d in AXIS_VALUES:
                    name = f"run{idx:04d}"
                    runs.append(Run(
                        name=name,
                        parameters={"a": a, "b": b, "c": c, "d": d},
                        timesteps=[(t, f) for t, f in zip(TIMES, fields)],
                    ))
                    labels[name] = cls
                    idx += 1
    return make_ensemble(runs, list(PARAMETER_NAMES), ground_truth=labels)
