import numpy as np

from enspart import generate_synthetic
from enspart.synthetic import (
    AXIS_VALUES,
    BLUE,
    GREEN,
    PURPLE,
    RED,
    behavior_class,
)


def test_shape_of_the_dataset(synthetic):
    assert len(synthetic.runs) == 625
    assert synthetic.parameter_names == ["a", "b", "c", "d"]
    assert synthetic.dims == (64, 64)
    for name in ("a", "b", "c", "d"):
        assert synthetic.parameter_ranges[name] == (0.0, 1.0)
    values = {tuple(r.parameters[p] for p in "abcd") for r in synthetic.runs}
    assert len(values) == 625
    assert all(v in AXIS_VALUES for combo in values for v in combo)


def test_exactly_four_classes(synthetic):
    assert set(synthetic.ground_truth.values()) == {RED, BLUE, GREEN, PURPLE}


def test_d_never_changes_field_or_class(synthetic):
    by_abc = {}
    for r in synthetic.runs:
        key = (r.parameters["a"], r.parameters["b"], r.parameters["c"])
        by_abc.setdefault(key, []).append(r)
    assert len(by_abc) == 125
    for group in by_abc.values():
        assert len(group) == 5
        ref = group[0]
        for other in group[1:]:
            assert synthetic.ground_truth[other.name] == synthetic.ground_truth[ref.name]
            for (_, fa), (_, fb) in zip(ref.timesteps, other.timesteps):
                assert np.array_equal(fa.values, fb.values)


def test_deterministic_given_seed():
    a = generate_synthetic(7)
    b = generate_synthetic(7)
    for ra, rb in zip(a.runs, b.runs):
        assert ra.name == rb.name and ra.parameters == rb.parameters
        for (ta, fa), (tb, fb) in zip(ra.timesteps, rb.timesteps):
            assert ta == tb
            assert np.array_equal(fa.values, fb.values)
    c = generate_synthetic(8)
    assert any(not np.array_equal(ra.timesteps[0][1].values, rc.timesteps[0][1].values)
               for ra, rc in zip(a.runs, c.runs))


def test_class_layout_in_bc_plane(synthetic):
    # every class present in the (b, c) plane, green at larger c with a
    # diagonal lower boundary
    classes = {(b, c): behavior_class(b, c) for b in AXIS_VALUES for c in AXIS_VALUES}
    assert set(classes.values()) == {RED, BLUE, GREEN, PURPLE}
    green_c = [c for (b, c), k in classes.items() if k == GREEN]
    other_c = [c for (b, c), k in classes.items() if k != GREEN]
    assert np.mean(green_c) > np.mean(other_c)
    # diagonal: the count of green cells per b column strictly drops overall
    per_b = {b: sum(1 for c in AXIS_VALUES if classes[(b, c)] == GREEN) for b in AXIS_VALUES}
    counts = [per_b[b] for b in AXIS_VALUES]
    assert counts[0] > counts[-1]
    assert all(x >= y for x, y in zip(counts, counts[1:]))
    # class depends on (b, c) only, so the slice shows all four anywhere
    for r in synthetic.runs:
        assert synthetic.ground_truth[r.name] == behavior_class(
            r.parameters["b"], r.parameters["c"])


def test_fields_differ_between_classes(synthetic):
    runs = {synthetic.ground_truth[r.name]: r for r in synthetic.runs}
    fields = {k: r.timesteps[0][1].values for k, r in runs.items()}
    for a in range(4):
        for b in range(a + 1, 4):
            assert not np.allclose(fields[a], fields[b])


def test_manifest_round_trip(synthetic, tmp_path):
    from enspart import load_ensemble, save_ensemble

    manifest = save_ensemble(synthetic, tmp_path)
    loaded = load_ensemble(manifest)
    assert len(loaded.runs) == 625
    assert loaded.parameter_names == ["a", "b", "c", "d"]
    assert loaded.dims == (64, 64)
