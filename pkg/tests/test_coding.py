import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridrep.coding import LlcParams, default_tau, llc_exact, llc_approx, vlad_encode
from hybridrep.dictionary import CLASS_MIXTURE, PartDictionary


def make_dict(atoms):
    return PartDictionary(np.asarray(atoms, dtype=np.float32), CLASS_MIXTURE)


def quadratic_oracle(x, atoms, lam, tau):
    """Solve the LLC objective by plain normal equations, independently of the
    Cholesky path used in the implementation."""
    dist = np.exp(np.sum((atoms - x) ** 2, axis=1) / tau)
    a = atoms @ atoms.T + lam * np.diag(dist**2)
    return np.linalg.lstsq(a, atoms @ x, rcond=None)[0]


class TestLlcExact:
    def test_orthonormal_zero_lam_is_projection(self):
        atoms = np.eye(3)
        d = make_dict(atoms)
        x = np.array([0.3, -0.7, 0.2])
        v = llc_exact(x, d, LlcParams(lam=0.0, tau=1.0))
        np.testing.assert_allclose(v, x, atol=1e-6)

    def test_locality_concentrates_on_near_atom(self):
        atoms = np.array([[1.0, 0.0], [10.0, 10.0]])
        d = make_dict(atoms)
        v = llc_exact(np.array([1.1, 0.0]), d, LlcParams(lam=1.0, tau=5.0))
        assert abs(v[0]) > 100 * abs(v[1])

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            k = int(rng.integers(2, 9))
            dim = int(rng.integers(2, 9))
            atoms = rng.standard_normal((k, dim))
            x = rng.standard_normal(dim)
            lam = float(rng.uniform(1e-3, 1.0))
            tau = default_tau(atoms)  # keeps the locality weights well conditioned
            got = llc_exact(x, make_dict(atoms), LlcParams(lam=lam, tau=tau))
            want = quadratic_oracle(x, atoms, lam, tau)
            np.testing.assert_allclose(got, want, atol=1e-6, err_msg=f"trial {trial}")

    def test_gradient_stationarity(self):
        # at the returned code, the objective gradient should vanish
        rng = np.random.default_rng(1)
        atoms = rng.standard_normal((6, 4))
        x = rng.standard_normal(4)
        p = LlcParams(lam=0.05, tau=4.0)
        v = llc_exact(x, make_dict(atoms), p).astype(np.float64)
        dist = np.exp(np.sum((atoms - x) ** 2, axis=1) / p.tau)
        grad = 2 * atoms @ (atoms.T @ v - x) + 2 * p.lam * dist**2 * v
        np.testing.assert_allclose(grad, 0.0, atol=1e-5)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            llc_exact(np.zeros(3), make_dict(np.eye(2)), LlcParams())


class TestLlcApprox:
    def test_knn_one_gives_indicator(self):
        atoms = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]])
        code = llc_approx(np.array([4.9, 5.2]), make_dict(atoms), LlcParams(knn=1))
        np.testing.assert_allclose(code, [0.0, 1.0, 0.0], atol=1e-7)

    def test_midpoint_splits_evenly(self):
        atoms = np.array([[0.0, 0.0], [2.0, 0.0], [50.0, 50.0]])
        code = llc_approx(np.array([1.0, 0.0]), make_dict(atoms), LlcParams(knn=2))
        np.testing.assert_allclose(code[:2], [0.5, 0.5], atol=1e-6)
        assert code[2] == 0.0

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), k=st.integers(3, 10), knn=st.integers(1, 3))
    def test_sum_to_one_with_knn_support(self, seed, k, knn):
        rng = np.random.default_rng(seed)
        atoms = rng.standard_normal((k, 5))
        code = llc_approx(rng.standard_normal(5), make_dict(atoms), LlcParams(knn=knn))
        assert abs(code.sum() - 1.0) < 1e-6
        assert np.count_nonzero(code) <= knn

    def test_knn_exceeds_k_rejected(self):
        with pytest.raises(ValueError):
            llc_approx(np.zeros(2), make_dict(np.eye(2)), LlcParams(knn=5))

    def test_deterministic_under_ties(self):
        atoms = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        a = llc_approx(np.zeros(2), make_dict(atoms), LlcParams(knn=2))
        b = llc_approx(np.zeros(2), make_dict(atoms), LlcParams(knn=2))
        np.testing.assert_array_equal(a, b)
        # stable sort keeps the lowest-index atoms among the equidistant four
        assert np.count_nonzero(a[:2]) == 2


class TestDefaultTau:
    def test_two_unit_apart_atoms(self):
        atoms = np.array([[0.0], [1.0]])
        assert default_tau(atoms) == pytest.approx(10.0)

    def test_single_atom_fallback(self):
        assert default_tau(np.zeros((1, 3))) == 1.0


def vlad_double_loop(descriptors, centers):
    m, d = centers.shape
    out = np.zeros((m, d))
    for x in descriptors:
        best, best_d = 0, np.inf
        for j in range(m):
            dist = float(np.sum((x - centers[j]) ** 2))
            if dist < best_d:
                best, best_d = j, dist
        out[best] += x - centers[best]
    return out.ravel()


class TestVlad:
    def test_descriptors_on_centers_give_zero(self):
        centers = np.array([[0.0, 0.0], [4.0, 4.0]])
        out = vlad_encode(centers.copy(), centers)
        np.testing.assert_allclose(out, 0.0)

    def test_single_center_sums_residuals(self):
        centers = np.array([[1.0, 1.0]])
        descs = np.array([[2.0, 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(vlad_encode(descs, centers), [0.0, 0.0])

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(100):
            m = int(rng.integers(1, 6))
            d = int(rng.integers(1, 6))
            n = int(rng.integers(1, 30))
            centers = rng.standard_normal((m, d))
            descs = rng.standard_normal((n, d))
            np.testing.assert_allclose(
                vlad_encode(descs, centers),
                vlad_double_loop(descs, centers),
                atol=1e-5,
                err_msg=f"trial {trial}",
            )

    def test_additive_over_descriptor_split(self):
        rng = np.random.default_rng(4)
        centers = rng.standard_normal((3, 4))
        descs = rng.standard_normal((20, 4))
        whole = vlad_encode(descs, centers).astype(np.float64)
        parts = vlad_encode(descs[:11], centers).astype(np.float64) + vlad_encode(
            descs[11:], centers
        ).astype(np.float64)
        np.testing.assert_allclose(whole, parts, atol=1e-5)

    def test_output_dim(self):
        out = vlad_encode(np.zeros((5, 7)), np.zeros((3, 7)))
        assert out.shape == (21,)


class TestParams:
    @pytest.mark.parametrize(
        "kwargs", [{"lam": -1.0}, {"tau": 0.0}, {"knn": 0}]
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            LlcParams(**kwargs)
