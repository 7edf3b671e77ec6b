import numpy as np
import pytest

from fedbench.checkpoint import load_vector
from fedbench.errors import ConfigError, ShapeError
from fedbench.nn_core import MlpArch
from fedbench.posterior import (
    ClientWeightSet,
    DirichletPosterior,
    GaussianPosterior,
    PosteriorKind,
    build_model_set,
    fit_gaussian,
    sample_dirichlet_model,
    sample_dirichlet_weights,
    sample_gaussian,
    save_gaussian_posterior,
    weighted_average,
)
from fedbench.rng import derive


def random_clients(n_clients: int, dim: int, seed: int, sizes=None) -> ClientWeightSet:
    rng = np.random.default_rng(seed)
    weights = [rng.normal(size=dim) for _ in range(n_clients)]
    return ClientWeightSet(weights, sizes or [int(s) for s in rng.integers(1, 50, n_clients)])


class TestWeightedAverage:
    def test_quarter_three_quarter_combination(self):
        cws = ClientWeightSet([np.array([0.0, 4.0]), np.array([4.0, 0.0])], [1, 3])
        np.testing.assert_array_equal(weighted_average(cws), [3.0, 1.0])

    def test_single_client_identity(self):
        w = np.array([1.5, -2.0, 0.25])
        np.testing.assert_array_equal(weighted_average(ClientWeightSet([w], [17])), w)

    def test_identical_clients_fixed_point(self):
        w = np.array([0.5, 0.5])
        cws = ClientWeightSet([w.copy() for _ in range(4)], [1, 2, 3, 4])
        np.testing.assert_array_equal(weighted_average(cws), w)

    def test_permutation_invariance(self):
        cws = random_clients(5, 20, seed=1)
        perm = [3, 0, 4, 1, 2]
        shuffled = ClientWeightSet([cws.weights[i] for i in perm],
                                   [cws.data_sizes[i] for i in perm])
        np.testing.assert_allclose(weighted_average(cws), weighted_average(shuffled),
                                   atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            ClientWeightSet([np.zeros(3), np.zeros(4)], [1, 1])


class TestFitGaussian:
    def test_two_point_unit_variance(self):
        cws = ClientWeightSet([np.array([0.0]), np.array([2.0])], [5, 5])
        post = fit_gaussian(cws)
        np.testing.assert_allclose(post.mu, [1.0], atol=1e-12)
        np.testing.assert_allclose(post.sigma_diag, [1.0], atol=1e-12)

    def test_identical_clients_zero_variance(self):
        w = np.array([0.3, -0.7])
        post = fit_gaussian(ClientWeightSet([w.copy(), w.copy()], [2, 9]))
        np.testing.assert_array_equal(post.sigma_diag, [0.0, 0.0])

    def test_weighted_two_client_hand_evaluation(self):
        # Direct evaluation of the weighted-variance formula with
        # fractions 0.25 / 0.75 and weights [0,4] / [4,0].
        cws = ClientWeightSet([np.array([0.0, 4.0]), np.array([4.0, 0.0])], [1, 3])
        post = fit_gaussian(cws)
        mu = 0.25 * np.array([0.0, 4.0]) + 0.75 * np.array([4.0, 0.0])
        np.testing.assert_allclose(post.mu, mu, atol=1e-15)
        expected_var = [
            0.25 * (0.0 - mu[0]) ** 2 + 0.75 * (4.0 - mu[0]) ** 2,
            0.25 * (4.0 - mu[1]) ** 2 + 0.75 * (0.0 - mu[1]) ** 2,
        ]
        np.testing.assert_allclose(post.sigma_diag, expected_var, atol=1e-12)

    def test_variance_nonnegative(self):
        for seed in range(10):
            post = fit_gaussian(random_clients(6, 30, seed))
            assert np.all(post.sigma_diag >= 0)

    def test_size_scaling_invariance(self):
        cws = random_clients(4, 12, seed=3, sizes=[2, 5, 7, 11])
        scaled = ClientWeightSet(cws.weights, [s * 1000 for s in cws.data_sizes])
        np.testing.assert_allclose(weighted_average(cws), weighted_average(scaled), atol=1e-12)
        a, b = fit_gaussian(cws), fit_gaussian(scaled)
        np.testing.assert_allclose(a.mu, b.mu, atol=1e-12)
        np.testing.assert_allclose(a.sigma_diag, b.sigma_diag, atol=1e-12)


class TestSampleGaussian:
    def test_degenerate_returns_mu(self):
        post = GaussianPosterior(np.array([1.0, -2.0]), np.zeros(2))
        np.testing.assert_array_equal(sample_gaussian(post, derive(1, "s")), post.mu)

    def test_monte_carlo_statistics(self):
        post = GaussianPosterior(np.array([1.0]), np.array([1.0]))
        rng = derive(42, "gauss")
        xs = np.array([sample_gaussian(post, rng)[0] for _ in range(10000)])
        assert abs(xs.mean() - 1.0) < 0.05
        assert abs(xs.var() - 1.0) < 0.1

    def test_equal_seeds_equal_samples(self):
        post = GaussianPosterior(np.zeros(8), np.full(8, 0.5))
        a = sample_gaussian(post, derive(7, "x"))
        b = sample_gaussian(post, derive(7, "x"))
        np.testing.assert_array_equal(a, b)


class TestSampleDirichlet:
    def test_single_client_identity(self):
        w = np.array([3.0, 1.0])
        post = DirichletPosterior(np.array([0.01]), ClientWeightSet([w], [4]))
        np.testing.assert_array_equal(sample_dirichlet_model(post, derive(2, "d")), w)

    def test_lambda_on_simplex(self):
        cws = random_clients(6, 10, seed=5)
        post = DirichletPosterior(np.full(6, 0.5), cws)
        rng = derive(11, "lam")
        for _ in range(300):
            lam = sample_dirichlet_weights(post, rng)
            assert np.all(lam >= 0)
            assert abs(lam.sum() - 1.0) < 1e-12

    def test_concentration_at_average(self):
        cws = random_clients(5, 16, seed=9, sizes=[3, 3, 3, 3, 3])
        post = DirichletPosterior(np.full(5, 1e6), cws)
        avg = weighted_average(cws)
        spread = max(
            np.max(np.stack(cws.weights), axis=0).max()
            - np.min(np.stack(cws.weights), axis=0).min(),
            1.0,
        )
        sample = sample_dirichlet_model(post, derive(3, "conc"))
        assert np.max(np.abs(sample - avg)) / spread < 1e-3

    def test_convex_hull(self):
        cws = random_clients(4, 25, seed=13)
        post = DirichletPosterior(np.full(4, 0.5), cws)
        lo = np.min(np.stack(cws.weights), axis=0)
        hi = np.max(np.stack(cws.weights), axis=0)
        rng = derive(17, "hull")
        for _ in range(1000):
            w = sample_dirichlet_model(post, rng)
            assert np.all(w >= lo - 1e-12)
            assert np.all(w <= hi + 1e-12)

    def test_size_scaling_same_lambda(self):
        cws = random_clients(4, 6, seed=19, sizes=[1, 2, 3, 4])
        scaled = ClientWeightSet(cws.weights, [7, 14, 21, 28])
        a = sample_dirichlet_weights(DirichletPosterior(np.full(4, 0.5), cws), derive(23, "s"))
        b = sample_dirichlet_weights(DirichletPosterior(np.full(4, 0.5), scaled), derive(23, "s"))
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_alpha_validation(self):
        cws = random_clients(2, 3, seed=1)
        with pytest.raises(ShapeError):
            DirichletPosterior(np.array([0.5]), cws)
        with pytest.raises(ShapeError):
            DirichletPosterior(np.array([0.5, 0.0]), cws)


class TestBuildModelSet:
    def test_full_set_size(self):
        cws = random_clients(10, 8, seed=29)
        models = build_model_set(cws, PosteriorKind.GAUSSIAN, 10, True, True, derive(1, "m"))
        assert len(models) == 21

    def test_average_only(self):
        cws = random_clients(3, 5, seed=31)
        models = build_model_set(cws, PosteriorKind.DIRICHLET, 0, True, False, derive(1, "m"))
        assert len(models) == 1
        np.testing.assert_array_equal(models[0], weighted_average(cws))

    def test_deterministic_order_and_content(self):
        cws = random_clients(4, 6, seed=37)
        a = build_model_set(cws, PosteriorKind.DIRICHLET, 5, True, True, derive(9, "m"))
        b = build_model_set(cws, PosteriorKind.DIRICHLET, 5, True, True, derive(9, "m"))
        assert len(a) == 1 + 4 + 5
        np.testing.assert_array_equal(a[0], weighted_average(cws))
        for i in range(4):
            np.testing.assert_array_equal(a[1 + i], cws.weights[i])
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_empty_set_error(self):
        cws = random_clients(2, 3, seed=41)
        with pytest.raises(ConfigError):
            build_model_set(cws, PosteriorKind.GAUSSIAN, 0, False, False, derive(1, "m"))


class TestPosteriorExport:
    def test_two_checkpoints(self, tmp_path):
        arch = MlpArch((2, 3))
        cws = random_clients(3, arch.param_count(), seed=43)
        post = fit_gaussian(cws)
        mu_path, var_path = tmp_path / "mu.fbe1", tmp_path / "var.fbe1"
        save_gaussian_posterior(post, arch, mu_path, var_path)
        arch_mu, mu = load_vector(mu_path)
        arch_var, var = load_vector(var_path)
        assert arch_mu == arch == arch_var
        np.testing.assert_array_equal(mu, post.mu)
        np.testing.assert_array_equal(var, post.sigma_diag)
