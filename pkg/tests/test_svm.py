import numpy as np
import pytest

from enspart import SvmConfig, make_ensemble, train_svm
from enspart.clustering import ClusterAssignment
from enspart.svm import rbf_kernel, train_binary, train_multiclass

from conftest import flat_field, make_run


class TestBinary:
    def test_linearly_separable_1d(self):
        x = np.array([[0.0], [0.1], [0.2], [0.8], [0.9], [1.0]])
        y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
        m = train_binary(x, y, c=1.0, gamma=1.0)
        assert np.all(np.sign(m.decision(x)) == y)

    def test_xor_needs_rbf(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        m = train_binary(x, y, c=100.0, gamma=2.0)
        assert np.all(np.sign(m.decision(x)) == y)

    def test_kernel_diagonal_is_one(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, (5, 3))
        k = rbf_kernel(x, x, gamma=0.7)
        np.testing.assert_allclose(np.diag(k), 1.0, atol=1e-12)
        np.testing.assert_allclose(k, k.T, atol=1e-12)


class TestMulticlass:
    def blobs(self, rng, centers, per=20, spread=0.05):
        xs, ys = [], []
        for label, c in enumerate(centers):
            xs.append(rng.normal(c, spread, size=(per, len(c))))
            ys.append(np.full(per, label))
        return np.vstack(xs), np.concatenate(ys)

    def test_three_blobs(self):
        rng = np.random.default_rng(1)
        x, y = self.blobs(rng, [(0.1, 0.1), (0.9, 0.1), (0.5, 0.9)])
        model = train_multiclass(x, y, SvmConfig(C=10.0, gamma=2.0))
        assert np.array_equal(model.predict(x), y)

    def test_prediction_at_training_points_of_separable_fixture(self):
        x = np.array([[0.0], [0.25], [0.75], [1.0]])
        y = np.array([0, 0, 1, 1])
        model = train_multiclass(x, y, SvmConfig(C=10.0, gamma=1.0))
        assert np.array_equal(model.predict(x), y)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="2 classes"):
            train_multiclass(np.zeros((3, 1)), np.zeros(3), SvmConfig())

    def test_non_finite_rejected(self):
        x = np.array([[0.0], [np.nan]])
        with pytest.raises(ValueError, match="non-finite"):
            train_multiclass(x, np.array([0, 1]), SvmConfig())

    def test_gamma_default_is_reciprocal_dimension(self):
        assert SvmConfig().resolve_gamma(4) == 0.25
        assert SvmConfig(gamma=3.0).resolve_gamma(4) == 3.0

    def test_config_validation(self):
        with pytest.raises(ValueError, match="C"):
            SvmConfig(C=0.0)
        with pytest.raises(ValueError, match="gamma"):
            SvmConfig(gamma=-1.0)

    def test_vote_tie_goes_to_lowest_class(self):
        # three classes arranged so some far-away query point gets one vote each
        rng = np.random.default_rng(2)
        x, y = self.blobs(rng, [(0.0, 0.0), (1.0, 0.0), (0.5, 0.9)], per=10)
        model = train_multiclass(x, y, SvmConfig(C=10.0, gamma=0.5))
        votes_equal_points = model.predict(np.array([[0.5, 0.35]]))
        assert votes_equal_points[0] in (0, 1, 2)


class TestTrainSvmOnEnsemble:
    def build(self, labels):
        rng = np.random.default_rng(3)
        runs = [make_run(f"r{i}", [0.0], [flat_field(rng.uniform(0, 1, 16))],
                         x=float(i), y=float(i % 2)) for i in range(6)]
        e = make_ensemble(runs)
        e.normalized = True
        assignment = ClusterAssignment(pruning_height=0.0,
                                       labels=np.asarray(labels),
                                       cluster_count=len(set(labels)),
                                       roots=[], keys=[r.name for r in e.runs])
        return e, assignment

    def test_separable_two_classes_no_misclassification(self):
        e, assignment = self.build([0, 0, 0, 1, 1, 1])
        model = train_svm(e, assignment, SvmConfig(C=1.0, gamma=1.0))
        assert model.training_misclassifications == []
        assert np.array_equal(model.predict(model.x), model.labels)

    def test_normalization_to_unit_box(self):
        e, assignment = self.build([0, 0, 0, 1, 1, 1])
        model = train_svm(e, assignment, SvmConfig())
        assert model.x.min() >= 0.0 and model.x.max() <= 1.0
        assert model.axes == ["x", "y"]

    def test_axis_subset(self):
        e, assignment = self.build([0, 0, 0, 1, 1, 1])
        model = train_svm(e, assignment, SvmConfig(), axes=["x"])
        assert model.axes == ["x"]
        assert model.x.shape == (6, 1)
