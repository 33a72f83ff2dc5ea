import numpy as np
import pytest

from hybridrep.cfv import (
    FIVE_SCALES,
    TEN_SCALES,
    FvConfig,
    cfv_dim,
    encode_cfv,
    fv_encode_scale,
    l2_normalize,
    msp_pool,
    power_l2,
)
from hybridrep.datamodel import FeatureTensor, ImageRecord
from hybridrep.extractors import ExtractorSpec, SyntheticExtractor
from hybridrep.gmm import GmmModel


def tensor_from_rows(rows):
    rows = np.asarray(rows, dtype=np.float32)
    return FeatureTensor(rows.T.reshape(rows.shape[1], rows.shape[0], 1))


def random_gmm(m, d, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.2, 1.0, size=m)
    w /= w.sum()
    return GmmModel(w, rng.standard_normal((m, d)), rng.uniform(0.5, 2.0, size=(m, d)))


class TestScaleConstants:
    def test_counts(self):
        assert len(FIVE_SCALES) == 5 and len(TEN_SCALES) == 10

    def test_geometric_sqrt2(self):
        for scales in (FIVE_SCALES, TEN_SCALES):
            ratios = np.diff(np.log(np.array(scales)))
            np.testing.assert_allclose(ratios, 0.5 * np.log(2.0), atol=1e-12)

    def test_five_starts_at_one(self):
        assert FIVE_SCALES[0] == pytest.approx(1.0)


class TestFvEncodeScale:
    def test_single_standard_gaussian_hand_case(self):
        # M=1, mu=0, sigma=1: mean block reduces to the mean descriptor,
        # variance block to (mean(x^2) - 1) / sqrt(2)
        gmm = GmmModel(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        rows = np.array([[1.0, -2.0], [3.0, 0.5]])
        out = fv_encode_scale(tensor_from_rows(rows), gmm).astype(np.float64)
        np.testing.assert_allclose(out[:2], rows.mean(axis=0), atol=1e-6)
        np.testing.assert_allclose(
            out[2:], (np.mean(rows**2, axis=0) - 1.0) / np.sqrt(2.0), atol=1e-6
        )

    def test_descriptors_at_mean_give_negative_var_block(self):
        gmm = GmmModel(np.array([1.0]), np.full((1, 3), 2.0), np.ones((1, 3)))
        rows = np.full((5, 3), 2.0)
        out = fv_encode_scale(tensor_from_rows(rows), gmm).astype(np.float64)
        np.testing.assert_allclose(out[:3], 0.0, atol=1e-7)
        np.testing.assert_allclose(out[3:], -1.0 / np.sqrt(2.0), atol=1e-6)

    def finite_difference_oracle(self, rows, gmm, eps=1e-5):
        """FV blocks from numerically differentiated mean log-likelihood."""
        m, d = gmm.means.shape

        def mean_ll(means, variances):
            model = GmmModel(gmm.weights, means, variances)
            return model.responsibilities(rows)[1]

        g_mu = np.zeros((m, d))
        g_sig = np.zeros((m, d))
        sigma = np.sqrt(gmm.variances)
        for i in range(m):
            for j in range(d):
                mp = gmm.means.copy(); mp[i, j] += eps
                mm = gmm.means.copy(); mm[i, j] -= eps
                dmu = (mean_ll(mp, gmm.variances) - mean_ll(mm, gmm.variances)) / (2 * eps)
                sp = sigma.copy(); sp[i, j] += eps
                sm = sigma.copy(); sm[i, j] -= eps
                dsig = (mean_ll(gmm.means, sp**2) - mean_ll(gmm.means, sm**2)) / (2 * eps)
                g_mu[i, j] = sigma[i, j] / np.sqrt(gmm.weights[i]) * dmu
                g_sig[i, j] = sigma[i, j] / np.sqrt(2.0 * gmm.weights[i]) * dsig
        return np.concatenate([g_mu.ravel(), g_sig.ravel()])

    def test_matches_finite_difference_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            m = int(rng.integers(1, 4))
            d = int(rng.integers(2, 5))
            n = int(rng.integers(3, 12))
            gmm = random_gmm(m, d, seed=trial)
            rows = rng.standard_normal((n, d))
            got = fv_encode_scale(tensor_from_rows(rows), gmm).astype(np.float64)
            want = self.finite_difference_oracle(rows, gmm)
            np.testing.assert_allclose(got, want, rtol=2e-4, atol=1e-6,
                                       err_msg=f"trial {trial}")

    def test_weight_block_optional(self):
        gmm = random_gmm(3, 2, seed=1)
        rows = np.random.default_rng(2).standard_normal((8, 2))
        base = fv_encode_scale(tensor_from_rows(rows), gmm)
        with_w = fv_encode_scale(tensor_from_rows(rows), gmm, include_weight_grad=True)
        assert with_w.shape[0] == base.shape[0] + 3
        np.testing.assert_array_equal(with_w[: base.shape[0]], base)

    def test_dim_mismatch(self):
        gmm = random_gmm(2, 3)
        with pytest.raises(ValueError):
            fv_encode_scale(tensor_from_rows(np.zeros((4, 2))), gmm)


class TestNormalization:
    def test_l2_normalize_unit(self):
        v = np.array([3.0, 4.0], dtype=np.float32)
        np.testing.assert_allclose(l2_normalize(v), [0.6, 0.8], atol=1e-7)

    def test_l2_zero_passthrough(self):
        z = np.zeros(3, dtype=np.float32)
        np.testing.assert_array_equal(l2_normalize(z), z)

    def test_msp_single_scale_is_normalized_input(self):
        v = np.array([1.0, 1.0], dtype=np.float32)
        np.testing.assert_allclose(msp_pool([v]), np.sqrt(0.5), atol=1e-6)

    def test_msp_elementwise_max(self):
        a = np.array([1.0, 0.0], dtype=np.float32)
        b = np.array([0.0, 1.0], dtype=np.float32)
        np.testing.assert_allclose(msp_pool([a, b]), [1.0, 1.0], atol=1e-7)

    def test_msp_dim_mismatch(self):
        with pytest.raises(ValueError):
            msp_pool([np.zeros(2, dtype=np.float32), np.zeros(3, dtype=np.float32)])

    def test_power_signed(self):
        out = power_l2(np.array([-4.0, 0.0, 4.0]))
        # signed square root then L2: (-2, 0, 2) / sqrt(8)
        np.testing.assert_allclose(out, [-2.0 / np.sqrt(8), 0.0, 2.0 / np.sqrt(8)],
                                   atol=1e-6)

    def test_power_alpha_one_is_plain_l2(self):
        v = np.array([3.0, -4.0])
        np.testing.assert_allclose(power_l2(v, alpha=1.0), [0.6, -0.8], atol=1e-6)

    def test_power_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            power_l2(np.ones(2), alpha=0.0)


class TestEncodeCfv:
    def setup_method(self):
        rng = np.random.default_rng(5)
        self.image = ImageRecord(
            id="i", label=0,
            pixels=rng.integers(0, 256, size=(256, 256, 3), dtype=np.uint8),
        )
        self.extractor = SyntheticExtractor(ExtractorSpec(kind="synthetic", d=6, seed=0))
        self.gmm = random_gmm(3, 6, seed=7)

    def test_output_dim_and_unit_norm(self):
        cfg = FvConfig(scales=FIVE_SCALES[:2])
        out = encode_cfv(self.image, self.extractor, self.gmm, cfg)
        assert out.shape == (cfv_dim(self.gmm),)
        assert cfv_dim(self.gmm) == 2 * 3 * 6
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-5)

    def test_deterministic(self):
        cfg = FvConfig(scales=FIVE_SCALES[:2])
        a = encode_cfv(self.image, self.extractor, self.gmm, cfg)
        b = encode_cfv(self.image, self.extractor, self.gmm, cfg)
        np.testing.assert_array_equal(a, b)

    def test_weight_grad_dim(self):
        assert cfv_dim(self.gmm, include_weight_grad=True) == 2 * 3 * 6 + 3

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            FvConfig(scales=())
        with pytest.raises(ValueError):
            FvConfig(power=1.5)
