import dataclasses

import numpy as np
import pytest

from cograca.baselines import (
    BASELINE_KINDS,
    amari_index,
    baseline_pipeline,
    classical_cca,
    ica_fit,
    out_of_fold_matrix,
    pca_fit,
    vectorize_connectivity,
)
from cograca.data import SyntheticConfig, generate_synthetic
from cograca.pipeline import make_subject_folds

from test_gcca import first_canonical_correlation


class TestVectorize:
    def test_strict_upper_triangle_row_major(self):
        mat = np.arange(16, dtype=np.float64).reshape(4, 4)
        mat = (mat + mat.T) / 2
        vec = vectorize_connectivity(mat)
        expect = [mat[0, 1], mat[0, 2], mat[0, 3], mat[1, 2], mat[1, 3], mat[2, 3]]
        assert np.array_equal(vec, expect)

    def test_length(self, rng):
        mat = rng.standard_normal((9, 9))
        mat = mat + mat.T
        assert vectorize_connectivity(mat).shape == (9 * 8 // 2,)


class TestPca:
    def test_orthonormal_components(self, rng):
        data = rng.standard_normal((40, 8))
        red = pca_fit(data, n_components=5)
        gram = red.components @ red.components.T
        assert np.max(np.abs(gram - np.eye(5))) < 1e-10

    def test_full_rank_round_trip(self, rng):
        data = rng.standard_normal((30, 6))
        red = pca_fit(data, n_components=6)
        back = red.inverse_transform(red.transform(data))
        assert np.max(np.abs(back - data)) < 1e-10

    def test_variance_threshold_picks_enough(self, rng):
        # 3 strong directions and 5 weak ones
        strong = rng.standard_normal((200, 3)) * 10
        weak = rng.standard_normal((200, 5)) * 0.1
        data = np.hstack([strong, weak])
        red = pca_fit(data, variance_threshold=0.95)
        assert red.components.shape[0] == 3
        assert red.explained_variance_ratio is not None
        assert red.explained_variance_ratio.sum() <= 1.0 + 1e-12

    def test_threshold_one_keeps_rank(self, rng):
        data = rng.standard_normal((25, 4))
        red = pca_fit(data, variance_threshold=1.0)
        assert red.components.shape[0] == 4

    def test_transform_centers(self, rng):
        data = rng.standard_normal((30, 5)) + 7.0
        red = pca_fit(data, n_components=2)
        assert np.max(np.abs(red.transform(data).mean(axis=0))) < 1e-10

    def test_constant_data_rejected(self):
        with pytest.raises(ValueError):
            pca_fit(np.ones((10, 3)))

    def test_deterministic(self, rng):
        data = rng.standard_normal((30, 6))
        a = pca_fit(data, n_components=4)
        b = pca_fit(data, n_components=4)
        assert np.array_equal(a.components, b.components)


class TestIca:
    @staticmethod
    def _mixed_laplace(seed, n=3000):
        rng = np.random.default_rng(seed)
        sources = rng.laplace(size=(n, 2))
        mixing = rng.uniform(-1, 1, (2, 2)) + np.eye(2)
        return sources @ mixing.T, mixing

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_recovers_independent_sources(self, seed):
        data, mixing = self._mixed_laplace(seed)
        red = ica_fit(data, n_components=2, seed=seed)
        assert red.converged
        assert red.identifiable
        assert amari_index(red.unmixing, mixing) < 0.05

    def test_unmixed_sources_are_decorrelated(self, rng):
        data, _ = self._mixed_laplace(7)
        red = ica_fit(data, n_components=2, seed=0)
        recovered = red.transform(data)
        cov = np.cov(recovered.T)
        assert abs(cov[0, 1]) < 0.05

    def test_gaussian_sources_flagged(self):
        # needs enough samples that the contrast cannot overfit spurious
        # kurtosis out of noise
        rng = np.random.default_rng(3)
        data = rng.standard_normal((20_000, 3))
        with pytest.warns(UserWarning, match="Gaussian"):
            red = ica_fit(data, n_components=2, seed=0)
        assert not red.identifiable

    def test_deterministic(self):
        data, _ = self._mixed_laplace(4)
        a = ica_fit(data, n_components=2, seed=5)
        b = ica_fit(data, n_components=2, seed=5)
        assert np.array_equal(a.unmixing, b.unmixing)

    def test_too_few_samples_rejected(self, rng):
        with pytest.raises(ValueError):
            ica_fit(rng.standard_normal((3, 5)), n_components=4)

    def test_too_many_components_rejected(self, rng):
        with pytest.raises(ValueError):
            ica_fit(rng.standard_normal((50, 3)), n_components=4)


class TestAmari:
    def test_perfect_unmixing_scores_zero(self, rng):
        mixing = rng.uniform(-1, 1, (3, 3)) + 2 * np.eye(3)
        perm = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=np.float64)
        scale = np.diag([2.0, -0.5, 3.0])
        unmixing = scale @ perm @ np.linalg.inv(mixing)
        assert amari_index(unmixing, mixing) < 1e-12

    def test_wrong_unmixing_scores_high(self, rng):
        mixing = rng.uniform(-1, 1, (3, 3)) + 2 * np.eye(3)
        assert amari_index(np.eye(3) + 0.5, mixing) > 0.1


class TestCca:
    def test_matches_eigen_oracle(self, rng):
        for _ in range(5):
            x = rng.standard_normal((60, 4))
            z = rng.standard_normal(60)
            y = np.outer(z, rng.standard_normal(3)) + 0.5 * rng.standard_normal((60, 3))
            x[:, 0] += z
            model = classical_cca(x, y)
            oracle = first_canonical_correlation(x.T, y.T)
            assert model.correlations[0] == pytest.approx(oracle, abs=1e-6)

    def test_perfectly_coupled_views(self, rng):
        x = rng.standard_normal((50, 3))
        w = rng.standard_normal((3, 3)) + np.eye(3)
        model = classical_cca(x, x @ w)
        assert model.correlations[0] == pytest.approx(1.0, abs=1e-6)

    def test_correlations_sorted_and_bounded(self, rng):
        x = rng.standard_normal((80, 5))
        y = rng.standard_normal((80, 4))
        model = classical_cca(x, y)
        assert np.all(np.diff(model.correlations) <= 1e-12)
        assert np.all(model.correlations >= 0.0)
        assert np.all(model.correlations <= 1.0)

    def test_affine_invariance_of_correlations(self, rng):
        x = rng.standard_normal((70, 4))
        y = x[:, :3] + 0.3 * rng.standard_normal((70, 3))
        base = classical_cca(x, y).correlations
        ax = rng.standard_normal((4, 4)) + 3 * np.eye(4)
        ay = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        moved = classical_cca(x @ ax + 1.0, y @ ay - 2.0).correlations
        assert np.allclose(base, moved, atol=1e-8)

    def test_transform_variates_have_claimed_correlation(self, rng):
        x = rng.standard_normal((90, 4))
        y = x[:, :2] + 0.5 * rng.standard_normal((90, 2))
        model = classical_cca(x, y)
        tx, ty = model.transform(x, y)
        r = np.corrcoef(tx[:, 0], ty[:, 0])[0, 1]
        assert r == pytest.approx(model.correlations[0], abs=1e-6)

    def test_too_few_samples_rejected(self, rng):
        with pytest.raises(ValueError, match="samples"):
            classical_cca(rng.standard_normal((4, 5)), rng.standard_normal((4, 2)))

    def test_pair_count(self, rng):
        x = rng.standard_normal((50, 5))
        y = rng.standard_normal((50, 3))
        assert classical_cca(x, y).correlations.shape == (3,)
        assert classical_cca(x, y, n_pairs=2).correlations.shape == (2,)


@pytest.fixture(scope="module")
def cohort():
    cfg = SyntheticConfig(subjects=12, rois=10, d_cog=6, latent_dim=3, seed=21)
    records, _ = generate_synthetic(cfg)
    folds = make_subject_folds([r.subject_id for r in records], 3, seed=0)
    return records, folds


class TestBaselinePipeline:
    @pytest.mark.parametrize("kind", BASELINE_KINDS)
    def test_covers_every_visit_with_constant_width(self, cohort, kind):
        records, folds = cohort
        results = baseline_pipeline(records, kind, folds, n_components=4)
        reps, fold_of = out_of_fold_matrix(results, len(records))
        assert reps.shape[0] == len(records)
        assert np.all(np.isfinite(reps))
        widths = {r.test_representations.shape[1] for r in results}
        assert len(widths) == 1
        for k, fold in enumerate(folds):
            assert np.all(fold_of[fold] == k)

    def test_unknown_kind_rejected(self, cohort):
        records, folds = cohort
        with pytest.raises(ValueError, match="kind"):
            baseline_pipeline(records, "mystery", folds)

    def test_cognition_only_uses_train_stats(self, cohort):
        records, folds = cohort
        results = baseline_pipeline(records, "cognition-only", folds)
        first = results[0]
        train_cogs = np.stack([records[i].cognition for i in first.train_indices])
        mean = train_cogs.mean(axis=0)
        std = train_cogs.std(axis=0)
        std[std < 1e-12] = 1.0
        expect = (records[first.test_indices[0]].cognition - mean) / std
        assert np.allclose(first.test_representations[0], expect)

    def test_no_leakage_from_held_out_visits(self, cohort):
        # Corrupting a held-out visit must not move the training-split
        # representations of that fold.
        records, folds = cohort
        base = baseline_pipeline(records, "pca-cca", folds, n_components=4)
        victim_idx = int(folds[0][0])
        mutated = list(records)
        corrupt = dataclasses.replace(
            mutated[victim_idx],
            cognition=mutated[victim_idx].cognition + 100.0,
        )
        mutated[victim_idx] = corrupt
        redo = baseline_pipeline(mutated, "pca-cca", folds, n_components=4)
        assert np.array_equal(
            base[0].train_representations, redo[0].train_representations
        )

    def test_deterministic(self, cohort):
        records, folds = cohort
        a = baseline_pipeline(records, "fmri-only-ica", folds, n_components=4, seed=2)
        b = baseline_pipeline(records, "fmri-only-ica", folds, n_components=4, seed=2)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.test_representations, fb.test_representations)

    def test_out_of_fold_matrix_rejects_gaps(self, cohort):
        records, folds = cohort
        results = baseline_pipeline(records, "cognition-only", folds)
        with pytest.raises(ValueError):
            out_of_fold_matrix(results, len(records) + 1)
