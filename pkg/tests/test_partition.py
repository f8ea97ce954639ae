import numpy as np
import pytest

from enspart import (
    DistanceMatrix,
    SvmConfig,
    correlation_ranking,
    extract_slice,
    label_grid,
    make_ensemble,
    mds_embed,
    slice_pairs,
    train_svm,
    uncertainty_grid,
)
from enspart.clustering import ClusterAssignment
from enspart.embedding import Embedding
from enspart.partition import load_grids, normalize_parameters, save_grids

from conftest import flat_field, make_run


def grid_parameter_ensemble(axis_values=(0.0, 0.5, 1.0), params=("x", "y")):
    """Full grid of parameter settings with throwaway fields."""
    rng = np.random.default_rng(0)
    runs = []
    idx = 0
    from itertools import product
    for combo in product(axis_values, repeat=len(params)):
        runs.append(make_run(f"r{idx}", [0.0], [flat_field(rng.uniform(0, 1, 16))],
                             **dict(zip(params, combo))))
        idx += 1
    e = make_ensemble(runs, list(params))
    e.normalized = True
    return e


def split_assignment(e, axis="x", threshold=0.5):
    labels = np.array([0 if r.parameters[axis] < threshold else 1 for r in e.runs])
    return ClusterAssignment(pruning_height=0.0, labels=labels, cluster_count=2,
                             roots=[], keys=[r.name for r in e.runs])


class TestLabelGrid:
    def test_two_class_1d_split(self):
        # classes on either side of x = 0.5 (no sample at the midpoint, so the
        # decision boundary falls exactly there)
        e = grid_parameter_ensemble(axis_values=(0.0, 0.25, 0.75, 1.0), params=("x", "y"))
        assignment = split_assignment(e)
        model = train_svm(e, assignment, SvmConfig(C=10.0, gamma=2.0))
        grid = label_grid(model, 9)
        assert grid.shape == (9, 9)
        xs = grid.coords[0]
        for i, x in enumerate(xs):
            if abs(x - 0.5) < 1e-9:      # the knife edge itself is unspecified
                continue
            want = 0 if x < 0.5 else 1
            np.testing.assert_array_equal(grid.labels[i, :], want)

    def test_shape_contract(self):
        e = grid_parameter_ensemble()
        model = train_svm(e, split_assignment(e), SvmConfig(C=10.0, gamma=1.0))
        grid = label_grid(model, (4, 6))
        assert grid.labels.shape == (4, 6)
        assert label_grid(model, 3).labels.size == 9

    def test_resolution_validation(self):
        e = grid_parameter_ensemble()
        model = train_svm(e, split_assignment(e), SvmConfig())
        with pytest.raises(ValueError, match="resolution"):
            label_grid(model, 1)

    def test_deterministic(self):
        e = grid_parameter_ensemble()
        model = train_svm(e, split_assignment(e), SvmConfig())
        a = label_grid(model, 5)
        b = label_grid(model, 5)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestUncertaintyGrid:
    def test_exact_values_on_coincident_and_farthest_nodes(self):
        e = grid_parameter_ensemble(axis_values=(0.0, 1.0), params=("x", "y"))
        # samples at the four corners; grid nodes at k/4
        unc = uncertainty_grid(e, 5)
        assert unc.factor[0, 0] == 1.0
        assert unc.factor[0, 4] == 1.0
        assert unc.factor[4, 0] == 1.0
        assert unc.factor[4, 4] == 1.0
        # center is the farthest node from any corner
        assert unc.factor[2, 2] == 0.0
        assert unc.factor.min() >= 0.0 and unc.factor.max() <= 1.0

    def test_minima_between_samples_on_regular_grid(self):
        e = grid_parameter_ensemble(axis_values=(0.0, 0.5, 1.0), params=("x", "y"))
        unc = uncertainty_grid(e, 9)
        # sample nodes sit at even indices; cell centers at odd ones
        assert unc.factor[0, 0] == 1.0
        assert unc.factor[1, 1] < unc.factor[1, 0] < unc.factor[0, 0]


class TestExtractSlice:
    def make_grid(self):
        e = grid_parameter_ensemble(axis_values=(0.0, 0.5, 1.0), params=("x", "y", "z"))
        assignment = split_assignment(e)
        model = train_svm(e, assignment, SvmConfig(C=10.0, gamma=1.0))
        return e, label_grid(model, 5), uncertainty_grid(e, 5)

    def test_focus_at_sample_epsilon_zero(self):
        e, grid, unc = self.make_grid()
        hs = extract_slice(grid, unc, e, focus=[0.5, 0.5, 0.5], axes=("x", "y"),
                           epsilon=0.0)
        assert {n for n, _, _ in hs.in_slice} == {
            r.name for r in e.runs if r.parameters["z"] == 0.5}
        in_names = {n for n, _, _ in hs.in_slice}
        proj_names = {n for _, names in hs.projected for n in names}
        assert in_names | proj_names == {r.name for r in e.runs}
        assert not in_names & proj_names

    def test_projected_positions_aggregate(self):
        e, grid, unc = self.make_grid()
        hs = extract_slice(grid, unc, e, focus=[0.5, 0.5, 0.5], axes=("x", "y"),
                           epsilon=0.0)
        # two other z planes project onto each (x, y) spot
        for _, names in hs.projected:
            assert len(names) == 2

    def test_axis_errors(self):
        e, grid, unc = self.make_grid()
        with pytest.raises(ValueError, match="differ"):
            extract_slice(grid, unc, e, [0.5, 0.5, 0.5], axes=("x", "x"))
        with pytest.raises(ValueError, match="not in grid"):
            extract_slice(grid, unc, e, [0.5, 0.5, 0.5], axes=("x", "q"))

    def test_focus_out_of_range(self):
        e, grid, unc = self.make_grid()
        with pytest.raises(ValueError, match="outside range"):
            extract_slice(grid, unc, e, [2.0, 0.5, 0.5], axes=("x", "y"))

    def test_slice_pair_count(self):
        assert len(slice_pairs(["a", "b", "c", "d"])) == 6
        assert len(slice_pairs(list("abcde"))) == 10

    def test_plane_orientation(self):
        e, grid, unc = self.make_grid()
        hs = extract_slice(grid, unc, e, [0.5, 0.5, 0.5], axes=("y", "x"))
        flipped = extract_slice(grid, unc, e, [0.5, 0.5, 0.5], axes=("x", "y"))
        np.testing.assert_array_equal(hs.labels, flipped.labels.T)


class TestGridSerialization:
    def test_round_trip(self, tmp_path):
        e = grid_parameter_ensemble(axis_values=(0.0, 0.5, 1.0), params=("x", "y", "z"))
        model = train_svm(e, split_assignment(e), SvmConfig(C=10.0, gamma=1.0))
        grid = label_grid(model, 5)
        unc = uncertainty_grid(e, 5)
        save_grids(grid, unc, tmp_path / "g", class_colors={0: "#ff0000", 1: "#00ff00"})
        grid2, unc2 = load_grids(tmp_path / "g")
        np.testing.assert_array_equal(grid2.labels, grid.labels)
        np.testing.assert_allclose(unc2.factor, unc.factor, atol=1e-7)
        assert grid2.axes == grid.axes
        assert grid2.run_names == grid.run_names
        np.testing.assert_allclose(grid2.sample_x, grid.sample_x, atol=1e-12)
        raw = (tmp_path / "g" / "labels.grid").read_bytes()
        assert raw[:4] == b"ELBL"
        assert raw[4:8] == (3).to_bytes(4, "little")


class TestCorrelation:
    def embedding_for(self, e, first_coord):
        pts = {r.name: np.array([first_coord[i], 0.0]) for i, r in enumerate(e.runs)}
        return Embedding(dim=2, points=pts, stress=0.0)

    def test_parameter_identical_to_component(self):
        e = grid_parameter_ensemble(axis_values=(0.0, 0.25, 0.5, 1.0), params=("x", "y"))
        xs = np.array([r.parameters["x"] for r in e.runs])
        emb = self.embedding_for(e, xs)
        result = correlation_ranking(e, emb)
        assert result.coefficients["x"] == pytest.approx(1.0, abs=1e-12)
        assert result.ranking[0] == "x"

    def test_constant_parameter_degenerate(self):
        rng = np.random.default_rng(4)
        runs = [make_run(f"r{i}", [0.0], [flat_field(rng.uniform(0, 1, 16))],
                         x=float(i), k=2.0) for i in range(5)]
        e = make_ensemble(runs)
        emb = self.embedding_for(e, np.arange(5.0))
        result = correlation_ranking(e, emb)
        assert result.coefficients["k"] == 0.0
        assert "k" in result.degenerate
        assert result.ranking[-1] == "k"

    def test_fewer_than_three_runs_degenerate(self):
        rng = np.random.default_rng(5)
        runs = [make_run(f"r{i}", [0.0], [flat_field(rng.uniform(0, 1, 16))], x=float(i))
                for i in range(2)]
        e = make_ensemble(runs)
        emb = self.embedding_for(e, np.arange(2.0))
        result = correlation_ranking(e, emb)
        assert result.degenerate_overall
        assert all(v == 0.0 for v in result.coefficients.values())

    def test_uses_principal_axis_not_first_column(self):
        # variance concentrated on the second embedding coordinate
        e = grid_parameter_ensemble(axis_values=(0.0, 0.5, 1.0), params=("x", "y"))
        xs = np.array([r.parameters["x"] for r in e.runs])
        pts = {r.name: np.array([0.01 * np.random.default_rng(i).normal(), 5 * xs[i]])
               for i, r in enumerate(e.runs)}
        emb = Embedding(dim=2, points=pts, stress=0.0)
        result = correlation_ranking(e, emb)
        assert abs(result.coefficients["x"]) > 0.99


class TestNormalizeParameters:
    def test_unit_box_and_subset(self):
        e = grid_parameter_ensemble(axis_values=(2.0, 4.0), params=("x", "y"))
        x, axes = normalize_parameters(e)
        assert axes == ["x", "y"]
        assert x.min() == 0.0 and x.max() == 1.0
        sub, axes = normalize_parameters(e, axes=["y"])
        assert axes == ["y"] and sub.shape[1] == 1
