import numpy as np
import pytest

from hybridrep.datamodel import FeatureTensor
from hybridrep.gmm import (
    GmmModel,
    load_gmm,
    sample_descriptors,
    save_gmm,
    scale_quotas,
    train_gmm,
)


def tensor_of(n_rows, d=4, seed=0):
    rng = np.random.default_rng(seed)
    h = n_rows
    return FeatureTensor(rng.standard_normal((d, h, 1)).astype(np.float32))


class TestSampling:
    def test_proportional_quotas(self):
        assert scale_quotas([25, 50, 100], 35) == [5, 10, 20]

    def test_quota_clamped_to_available(self):
        assert scale_quotas([3, 100], 200) == [3, 100]

    def test_budget_split_across_images(self):
        per_image = [[tensor_of(20, seed=i)] for i in range(4)]
        out = sample_descriptors(per_image, budget=40, seed=0)
        assert out.shape == (40, 4)

    def test_without_replacement(self):
        t = tensor_of(30, seed=1)
        out = sample_descriptors([[t]], budget=30, seed=2)
        # drawing the full budget returns every row exactly once
        assert out.shape == (30, 4)
        got = {tuple(r) for r in np.round(out, 5)}
        want = {tuple(r) for r in np.round(t.vectors().astype(np.float64), 5)}
        assert got == want

    def test_deterministic(self):
        per_image = [[tensor_of(50, seed=3)]]
        a = sample_descriptors(per_image, budget=20, seed=5)
        b = sample_descriptors(per_image, budget=20, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sample_descriptors([], budget=10)


class TestModel:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GmmModel(np.array([0.5, 0.6]), np.zeros((2, 2)), np.ones((2, 2)))

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            GmmModel(np.array([1.0]), np.zeros((1, 2)), np.array([[1.0, 0.0]]))

    def test_responsibility_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        model = GmmModel(
            np.array([0.3, 0.7]),
            rng.standard_normal((2, 3)),
            np.abs(rng.standard_normal((2, 3))) + 0.5,
        )
        resp, _ = model.responsibilities(rng.standard_normal((40, 3)))
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)

    def test_log_prob_matches_scalar_oracle(self):
        model = GmmModel(
            np.array([0.4, 0.6]),
            np.array([[0.0, 1.0], [2.0, -1.0]]),
            np.array([[1.0, 2.0], [0.5, 1.5]]),
        )
        x = np.array([[0.3, 0.4]])
        got = model.log_prob_components(x)[0]
        for i in range(2):
            lp = np.log(model.weights[i])
            for j in range(2):
                v = model.variances[i, j]
                lp += -0.5 * np.log(2 * np.pi * v) - 0.5 * (
                    (x[0, j] - model.means[i, j]) ** 2 / v
                )
            assert got[i] == pytest.approx(lp, abs=1e-10)


class TestTraining:
    def test_single_component_closed_form(self):
        rng = np.random.default_rng(1)
        points = rng.standard_normal((500, 3)) * np.array([1.0, 2.0, 0.5]) + 4.0
        model = train_gmm(points, n_components=1, seed=0)
        np.testing.assert_allclose(model.weights, [1.0])
        np.testing.assert_allclose(model.means[0], points.mean(axis=0), atol=1e-6)
        np.testing.assert_allclose(model.variances[0], points.var(axis=0), atol=1e-6)

    def test_two_blob_recovery(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.0, 0.5, size=(300, 2))
        b = rng.normal(8.0, 0.5, size=(300, 2))
        model = train_gmm(np.concatenate([a, b]), n_components=2, seed=0)
        order = np.argsort(model.means[:, 0])
        np.testing.assert_allclose(model.means[order][0], [0.0, 0.0], atol=0.15)
        np.testing.assert_allclose(model.means[order][1], [8.0, 8.0], atol=0.15)
        np.testing.assert_allclose(model.weights, [0.5, 0.5], atol=0.05)

    def test_monotone_log_likelihood(self):
        # the internal assert fires if EM ever decreases the likelihood;
        # run a batch of random datasets to exercise it
        rng = np.random.default_rng(3)
        for trial in range(10):
            n = int(rng.integers(60, 200))
            d = int(rng.integers(2, 6))
            m = int(rng.integers(1, 5))
            points = rng.standard_normal((n, d)) * rng.uniform(0.5, 2.0, size=d)
            train_gmm(points, n_components=m, seed=trial)

    def test_variance_floor_applied(self):
        # a dimension with zero spread must not produce a zero variance
        rng = np.random.default_rng(4)
        points = np.column_stack([rng.standard_normal(100), np.zeros(100)])
        model = train_gmm(points, n_components=2, seed=0)
        assert np.all(model.variances > 0)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        points = rng.standard_normal((120, 3))
        m1 = train_gmm(points, n_components=3, seed=9)
        m2 = train_gmm(points, n_components=3, seed=9)
        np.testing.assert_array_equal(m1.means, m2.means)
        np.testing.assert_array_equal(m1.weights, m2.weights)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            train_gmm(np.zeros((3, 2)), n_components=5)


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        model = train_gmm(rng.standard_normal((200, 3)), n_components=4, seed=0)
        store = tmp_path / "g.hfrs"
        sidecar = tmp_path / "g.json"
        save_gmm(model, store, sidecar)
        back = load_gmm(store, sidecar)
        assert back.n_components == 4 and back.dim == 3
        np.testing.assert_allclose(back.means, model.means, atol=1e-6)
        np.testing.assert_allclose(back.weights, model.weights, atol=1e-6)
        assert abs(back.weights.sum() - 1.0) <= 1e-12
