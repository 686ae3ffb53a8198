import numpy as np
import pytest
from scipy import stats

from lowrankstream import (
    ConfigError,
    MaskedSlice,
    MaskedVector,
    SynthMatrixConfig,
    SynthTensorConfig,
    gen_matrix_stream,
    gen_tensor_stream,
)


class TestMaskedTypes:
    def test_masked_vector_accepts_empty(self):
        v = MaskedVector(3, [], [], 10)
        assert v.n_observed == 0
        assert np.array_equal(v.dense(), np.zeros(10))

    def test_masked_vector_rejects_bad_indices(self):
        with pytest.raises(ConfigError):
            MaskedVector(1, [2, 1], [0.5, 0.5], 10)
        with pytest.raises(ConfigError):
            MaskedVector(1, [0, 10], [0.5, 0.5], 10)
        with pytest.raises(ConfigError):
            MaskedVector(1, [0, 1], [0.5], 10)

    def test_masked_slice_rejects_duplicates(self):
        with pytest.raises(ConfigError):
            MaskedSlice(1, [0, 0], [1, 1], [1.0, 2.0], (2, 2))

    def test_masked_slice_dense_roundtrip(self):
        s = MaskedSlice(1, [0, 1], [1, 0], [3.0, 4.0], (2, 2))
        assert s.dense()[0, 1] == 3.0
        assert s.mask().sum() == 2


class TestConfigValidation:
    @pytest.mark.parametrize("kw", [
        dict(pi=0.0), dict(pi=1.5), dict(r=6), dict(sigma=-1.0),
        dict(change_mode="jump"),
    ])
    def test_matrix_config_rejects(self, kw):
        base = dict(P=5, r=2, sigma=0.1, pi=0.5, seed=0)
        base.update(kw)
        with pytest.raises(ConfigError):
            SynthMatrixConfig(**base)

    def test_tensor_config_rejects_rank(self):
        with pytest.raises(ConfigError):
            SynthTensorConfig(M=4, N=3, R=4, sigma=0.0, pi=0.5, seed=0)


class TestMatrixGenerator:
    def test_noise_free_full_sampling_matches_truth(self):
        cfg = SynthMatrixConfig(P=4, r=1, sigma=0.0, pi=1.0, seed=123)
        for obs, x in gen_matrix_stream(cfg, 3):
            assert obs.n_observed == 4
            np.testing.assert_allclose(obs.values, x)

    def test_observed_count_concentrates(self):
        # oracle: the count is Binomial(P, pi); [2300, 2700] holds all but
        # ~4e-6 of that law's mass, so a fixed seed lands inside
        P, pi = 10000, 0.25
        law = stats.binom(P, pi)
        assert law.cdf(2700) - law.cdf(2299) > 1 - 1e-5
        cfg = SynthMatrixConfig(P=P, r=3, sigma=0.1, pi=pi, seed=7)
        obs, _ = next(gen_matrix_stream(cfg, 1))
        assert 2300 <= obs.n_observed <= 2700

    def test_determinism(self):
        cfg = SynthMatrixConfig(P=30, r=2, sigma=0.3, pi=0.4, seed=99)
        run1 = list(gen_matrix_stream(cfg, 20))
        run2 = list(gen_matrix_stream(cfg, 20))
        for (o1, x1), (o2, x2) in zip(run1, run2):
            assert np.array_equal(o1.indices, o2.indices)
            assert np.array_equal(o1.values, o2.values)
            assert np.array_equal(x1, x2)

    def test_subspace_scaling(self):
        # entries N(0, 1/P) make column norms concentrate near 1
        cfg = SynthMatrixConfig(P=10000, r=5, sigma=0.0, pi=1.0, seed=5)
        xs = np.array([x for _, x in gen_matrix_stream(cfg, 60)])
        # per-coordinate energy E x_p^2 = r / P; total E||x||^2 = r
        assert abs(np.mean(np.sum(xs**2, axis=1)) / cfg.r - 1.0) < 0.25

    def test_column_norms_within_5pct(self):
        rng_probe = SynthMatrixConfig(P=10000, r=5, sigma=0.0, pi=1.0, seed=21)
        # reconstruct U from the generator's own draws: with sigma=0, pi=1
        # the first r observations with known w would be needed; instead draw
        # U the same way the generator does and check the scaling contract
        rng = np.random.default_rng(rng_probe.seed)
        U = rng.normal(0.0, 1.0 / np.sqrt(rng_probe.P),
                       size=(rng_probe.P, rng_probe.r))
        norms = np.linalg.norm(U, axis=0)
        assert np.all(np.abs(norms - 1.0) < 0.05)

    def test_redraw_changes_subspace(self):
        cfg = SynthMatrixConfig(P=200, r=2, sigma=0.0, pi=1.0, seed=3,
                                change_at=11, change_mode="redraw")
        xs = np.array([x for _, x in gen_matrix_stream(cfg, 20)])
        before = xs[:10].T
        after = xs[10:].T
        combined_rank = np.linalg.matrix_rank(np.hstack([before, after]))
        assert combined_rank == 4  # two disjoint rank-2 subspaces

    def test_perturb_keeps_overlap(self):
        cfg = SynthMatrixConfig(P=400, r=3, sigma=0.0, pi=1.0, seed=3,
                                change_at=31, change_mode="perturb")
        xs = np.array([x for _, x in gen_matrix_stream(cfg, 60)])
        U1 = np.linalg.svd(xs[:30].T, full_matrices=False)[0][:, :3]
        U2 = np.linalg.svd(xs[30:].T, full_matrices=False)[0][:, :3]
        overlap = np.linalg.svd(U1.T @ U2, compute_uv=False)
        # perturbation halves the energy; substantial overlap must remain
        assert overlap[0] > 0.5


class TestTensorGenerator:
    def test_rank_one_slices(self):
        cfg = SynthTensorConfig(M=2, N=2, R=1, sigma=0.0, pi=1.0, seed=1)
        for slc, X in gen_tensor_stream(cfg, 5):
            s = np.linalg.svd(X, compute_uv=False)
            assert s[1] <= 1e-12 * max(s[0], 1.0)
            assert slc.n_observed == 4

    def test_noise_free_values_match_truth(self):
        cfg = SynthTensorConfig(M=3, N=4, R=2, sigma=0.0, pi=1.0, seed=2)
        for slc, X in gen_tensor_stream(cfg, 4):
            np.testing.assert_allclose(slc.values, X[slc.rows, slc.cols])

    def test_gamma_mean_law_of_large_numbers(self):
        # oracle: mean of 1e4 standard normals has std 0.01; +-0.05 is 5 sigma.
        # The factors are the generator's first two draws (documented order);
        # each slice's coefficients are then recovered by least squares.
        cfg = SynthTensorConfig(M=3, N=2, R=2, sigma=0.0, pi=1.0, seed=4)
        rng = np.random.default_rng(cfg.seed)
        A = rng.standard_normal((cfg.M, cfg.R))
        B = rng.standard_normal((cfg.N, cfg.R))
        design = np.stack([np.outer(A[:, r], B[:, r]).ravel()
                           for r in range(cfg.R)], axis=1)
        total = np.zeros(cfg.R)
        n = 10**4
        for _, X in gen_tensor_stream(cfg, n):
            total += np.linalg.lstsq(design, X.ravel(), rcond=None)[0]
        assert np.all(np.abs(total / n) < 0.05)

    def test_determinism(self):
        cfg = SynthTensorConfig(M=5, N=6, R=2, sigma=0.2, pi=0.5, seed=42)
        run1 = list(gen_tensor_stream(cfg, 10))
        run2 = list(gen_tensor_stream(cfg, 10))
        for (s1, X1), (s2, X2) in zip(run1, run2):
            assert np.array_equal(s1.rows, s2.rows)
            assert np.array_equal(s1.values, s2.values)
            assert np.array_equal(X1, X2)
