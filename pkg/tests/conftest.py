import numpy as np
import pytest

from enspart import (
    Run,
    ScalarField,
    generate_synthetic,
    make_ensemble,
    normalize_fields,
)


def flat_field(values, dims=(4, 4)):
    return ScalarField(dims=dims, values=np.asarray(values, dtype=float).ravel())


def constant_field(value, dims=(4, 4)):
    return flat_field(np.full(int(np.prod(dims)), value), dims)


def make_run(name, times, fields, **params):
    if not params:
        params = {"x": 0.0}
    return Run(name=name, parameters={k: float(v) for k, v in params.items()},
               timesteps=[(float(t), f) for t, f in zip(times, fields)])


def random_run(name, rng, times=(0.0, 1.0, 2.0), dims=(4, 4), **params):
    fields = [flat_field(rng.uniform(0, 1, int(np.prod(dims))), dims) for _ in times]
    return make_run(name, times, fields, **params)


@pytest.fixture(scope="session")
def synthetic():
    return generate_synthetic(1)


@pytest.fixture(scope="session")
def synthetic_normalized(synthetic):
    return normalize_fields(synthetic)


@pytest.fixture()
def small_ensemble():
    rng = np.random.default_rng(42)
    runs = [random_run(f"r{i}", rng, x=float(i), y=float(i % 2)) for i in range(5)]
    return normalize_fields(make_ensemble(runs))
