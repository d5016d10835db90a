import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cograca.numerics import (
    AdamState,
    adam_step,
    mann_whitney_u,
    pearson,
    sym_eig,
    wasserstein_1d,
)

from conftest import random_connectivity


class TestSymEig:
    def test_identity(self):
        dec = sym_eig(np.eye(3))
        assert np.allclose(dec.eigenvalues, 1.0)
        assert np.allclose(dec.eigenvectors @ dec.eigenvectors.T, np.eye(3))

    def test_known_2x2(self):
        # [[2,1],[1,2]] has eigenvalues 3 and 1 with vectors (1,1)/sqrt2, (1,-1)/sqrt2
        dec = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(dec.eigenvalues, [3.0, 1.0])
        s = 1 / math.sqrt(2)
        assert np.allclose(np.abs(dec.eigenvectors[:, 0]), [s, s])
        assert np.allclose(np.abs(dec.eigenvectors[:, 1]), [s, s])

    def test_descending_order(self, rng):
        a = rng.standard_normal((20, 20))
        a = a + a.T
        dec = sym_eig(a)
        assert np.all(np.diff(dec.eigenvalues) <= 1e-12)

    @pytest.mark.parametrize("n", [2, 10, 50, 200])
    def test_reconstruction(self, n):
        rng = np.random.default_rng(n)
        a = rng.standard_normal((n, n))
        a = (a + a.T) / 2
        dec = sym_eig(a)
        recon = dec.eigenvectors @ np.diag(dec.eigenvalues) @ dec.eigenvectors.T
        assert np.max(np.abs(recon - a)) < 1e-8 * max(1.0, np.max(np.abs(a)))
        ortho = dec.eigenvectors.T @ dec.eigenvectors
        assert np.max(np.abs(ortho - np.eye(n))) < 1e-10

    def test_sign_convention(self, rng):
        a = rng.standard_normal((8, 8))
        a = a + a.T
        dec = sym_eig(a)
        for col in dec.eigenvectors.T:
            assert col[np.argmax(np.abs(col))] >= 0

    def test_deterministic_under_degeneracy(self):
        # eigenvalue 1 has a 2-dimensional eigenspace; ordering must be stable
        a = np.diag([2.0, 1.0, 1.0])
        d1 = sym_eig(a)
        d2 = sym_eig(a.copy())
        assert np.array_equal(d1.eigenvectors, d2.eigenvectors)
        assert np.array_equal(d1.eigenvalues, d2.eigenvalues)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_nonsquare_and_nonfinite(self):
        with pytest.raises(ValueError):
            sym_eig(np.zeros((2, 3)))
        bad = np.eye(2)
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            sym_eig(bad)

    @given(hnp.arrays(np.float64, (6, 6), elements=st.floats(-10, 10)))
    def test_property_reconstruction(self, raw):
        a = (raw + raw.T) / 2
        dec = sym_eig(a)
        recon = dec.eigenvectors @ np.diag(dec.eigenvalues) @ dec.eigenvectors.T
        assert np.max(np.abs(recon - a)) < 1e-9 * max(1.0, np.max(np.abs(a)))


class TestAdam:
    def test_first_step_magnitude(self):
        # With bias correction the very first update is lr * g/(|g| + ~0), so
        # each coordinate moves by almost exactly lr against the gradient sign.
        params = np.array([1.0, -2.0, 3.0])
        grads = np.array([10.0, -0.5, 1e-3])
        state = AdamState.for_params(params, lr=0.001)
        new, _ = adam_step(state, params, grads)
        delta = new - params
        assert np.all(np.sign(delta) == -np.sign(grads))
        assert np.allclose(np.abs(delta), 0.001, atol=1e-5)

    def test_converges_on_quadratic(self):
        # minimize 0.5*||x - t||^2
        target = np.array([0.3, -1.2, 2.0])
        params = np.zeros(3)
        state = AdamState.for_params(params, lr=0.05)
        for _ in range(500):
            params, state = adam_step(state, params, params - target)
        assert np.allclose(params, target, atol=1e-3)

    def test_state_is_not_mutated(self):
        params = np.ones(2)
        state = AdamState.for_params(params, lr=0.01)
        m_before = state.m.copy()
        adam_step(state, params, np.ones(2))
        assert np.array_equal(state.m, m_before)
        assert state.step == 0

    def test_step_counter_advances(self):
        params = np.ones(2)
        state = AdamState.for_params(params, lr=0.01)
        _, s1 = adam_step(state, params, np.ones(2))
        _, s2 = adam_step(s1, params, np.ones(2))
        assert (s1.step, s2.step) == (1, 2)

    def test_mismatched_shapes_rejected(self):
        params = np.ones(2)
        state = AdamState.for_params(params, lr=0.01)
        with pytest.raises(ValueError):
            adam_step(state, params, np.ones(3))


class TestPearson:
    def test_known_value(self):
        # r((1,2,3),(1,2,4)) = 9 / (2*sqrt(21)) = sqrt(27/28)
        r = pearson(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 4.0]))
        assert abs(r - 9 / (2 * math.sqrt(21))) < 1e-14

    def test_perfect_and_anti(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
        assert pearson(x, -x) == pytest.approx(-1.0)

    def test_matches_scipy(self, rng):
        for _ in range(10):
            x = rng.standard_normal(30)
            y = rng.standard_normal(30)
            assert pearson(x, y) == pytest.approx(
                scipy.stats.pearsonr(x, y).statistic, abs=1e-12
            )

    def test_zero_variance_raises(self):
        with pytest.raises(ValueError, match="variance"):
            pearson(np.array([1.0, 1.0, 1.0]), np.array([1.0, 2.0, 3.0]))

    @given(
        hnp.arrays(np.float64, 8, elements=st.floats(-100, 100)),
        st.floats(0.1, 10),
        st.floats(-5, 5),
    )
    def test_affine_invariance(self, x, scale, shift):
        y = np.arange(8.0)
        if np.std(x) < 1e-6:
            return
        base = pearson(x, y)
        assert pearson(scale * x + shift, y) == pytest.approx(base, abs=1e-9)


class TestWasserstein:
    def test_known_value(self):
        # {0,2} vs {1,3}: both CDF steps shifted by 1 -> W1 = 1
        assert wasserstein_1d(np.array([0.0, 2.0]), np.array([1.0, 3.0])) == pytest.approx(1.0)

    def test_identical_is_zero(self, rng):
        x = rng.standard_normal(40)
        assert wasserstein_1d(x, x.copy()) == 0.0

    def test_translation(self):
        x = np.array([0.0, 1.0, 5.0])
        assert wasserstein_1d(x, x + 2.5) == pytest.approx(2.5)

    def test_matches_scipy(self, rng):
        for _ in range(20):
            a = rng.standard_normal(rng.integers(2, 50))
            b = rng.standard_normal(rng.integers(2, 50))
            assert wasserstein_1d(a, b) == pytest.approx(
                scipy.stats.wasserstein_distance(a, b), abs=1e-12
            )

    def test_symmetry_and_nonnegativity(self, rng):
        a = rng.standard_normal(15)
        b = rng.standard_normal(9)
        assert wasserstein_1d(a, b) == pytest.approx(wasserstein_1d(b, a))
        assert wasserstein_1d(a, b) >= 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            wasserstein_1d(np.array([]), np.array([1.0]))


class TestMannWhitney:
    def test_known_small_case(self):
        # {1,2} vs {3,4}: U1 = 0
        res = mann_whitney_u(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert res.u == 0.0
        assert not res.degenerate
        ref = scipy.stats.mannwhitneyu(
            [1.0, 2.0], [3.0, 4.0], alternative="two-sided", method="asymptotic"
        )
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-6)

    def test_matches_scipy_with_ties(self, rng):
        for _ in range(15):
            a = rng.integers(0, 6, size=rng.integers(3, 25)).astype(float)
            b = rng.integers(0, 6, size=rng.integers(3, 25)).astype(float)
            if np.all(a == a[0]) and np.all(b == b[0]) and a[0] == b[0]:
                continue
            ref = scipy.stats.mannwhitneyu(
                a, b, alternative="two-sided", method="asymptotic"
            )
            res = mann_whitney_u(a, b)
            assert res.u == pytest.approx(ref.statistic)
            assert res.p_value == pytest.approx(ref.pvalue, rel=1e-6)

    def test_separated_samples_are_significant(self, rng):
        a = rng.normal(0, 1, 40)
        b = rng.normal(5, 1, 40)
        res = mann_whitney_u(a, b)
        assert res.p_value < 1e-6

    def test_all_identical_degenerate(self):
        with pytest.warns(UserWarning, match="identical"):
            res = mann_whitney_u(np.ones(5), np.ones(7))
        assert res.degenerate
        assert res.p_value == 1.0
        assert res.u == 5 * 7 / 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u(np.array([]), np.array([1.0]))

    @given(st.integers(0, 2**32 - 1))
    def test_u_complement_identity(self, seed):
        # U1 + U2 = n1 * n2 always
        r = np.random.default_rng(seed)
        a = r.standard_normal(6)
        b = r.standard_normal(9)
        u1 = mann_whitney_u(a, b).u
        u2 = mann_whitney_u(b, a).u
        assert u1 + u2 == pytest.approx(6 * 9)


def test_random_connectivity_helper_is_valid(rng):
    mat = random_connectivity(rng, 12)
    assert np.array_equal(mat, mat.T)
    assert np.allclose(np.diag(mat), 1.0)
    assert np.max(np.abs(mat)) <= 1.0
