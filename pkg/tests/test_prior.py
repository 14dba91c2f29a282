"""Mean-free Gaussian prior: sampling, exact density, symmetry invariance."""

import math

import numpy as np
import pytest
from scipy import integrate

from flowbg import MeanFreePrior, apply_group, random_group_element, remove_mean


class TestSampling:
    def test_samples_are_mean_free(self):
        prior = MeanFreePrior(4, 2)
        z = prior.sample(np.random.default_rng(0), 100)
        assert np.max(np.abs(z.mean(axis=1))) < 1e-12

    def test_same_seed_identical_draw(self):
        prior = MeanFreePrior(3, 2)
        z1 = prior.sample(np.random.default_rng(42))
        z2 = prior.sample(np.random.default_rng(42))
        np.testing.assert_array_equal(z1, z2)

    def test_mean_squared_norm_matches_subspace_rank(self):
        """E||z||^2 equals (K-1)*D; Monte Carlo check within 3 standard errors."""
        prior = MeanFreePrior(4, 2)
        z = prior.sample(np.random.default_rng(1), 100_000)
        sq = np.einsum("nkd,nkd->n", z, z)
        rank = 6
        se = math.sqrt(2.0 * rank / sq.size)  # chi-square variance 2*rank
        assert abs(sq.mean() - rank) < 3.0 * se

    def test_per_coordinate_variance_shrinks_by_projection(self):
        """var(z_id) = 1 - 1/K after subtracting the mean of K particles."""
        K = 4
        prior = MeanFreePrior(K, 2)
        z = prior.sample(np.random.default_rng(2), 100_000)
        var = z.reshape(-1, 8).var(axis=0, ddof=1)
        expected = 1.0 - 1.0 / K
        se = expected * math.sqrt(2.0 / (z.shape[0] - 1))
        assert np.all(np.abs(var - expected) < 3.0 * se)


class TestLogprob:
    def test_value_at_origin(self):
        prior = MeanFreePrior(2, 2)
        assert prior.logprob(np.zeros((2, 2))) == pytest.approx(-math.log(2 * math.pi), abs=1e-12)

    def test_plug_in_value(self):
        prior = MeanFreePrior(2, 2)
        z = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert prior.logprob(z) == pytest.approx(-1.0 - math.log(2 * math.pi), abs=1e-12)

    def test_rejects_off_subspace_points(self):
        prior = MeanFreePrior(2, 2)
        with pytest.raises(ValueError):
            prior.logprob(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_invariant_under_group_actions(self):
        """Permutations and rotations preserve the density exactly; translations
        act trivially on the mean-free subspace, i.e. modulo re-projection."""
        prior = MeanFreePrior(4, 2)
        rng = np.random.default_rng(3)
        z = prior.sample(rng)
        base = prior.logprob(z)
        for kind in ("permutation", "rotation"):
            for _ in range(25):
                g = random_group_element(kind, 4, 2, rng)
                assert abs(prior.logprob(apply_group(g, z)) - base) < 1e-12
        for _ in range(25):
            g = random_group_element("translation", 4, 2, rng)
            assert abs(prior.logprob(remove_mean(apply_group(g, z))) - base) < 1e-12

    def test_batched_logprob_matches_loop(self):
        prior = MeanFreePrior(3, 2)
        Z = prior.sample(np.random.default_rng(4), 10)
        batched = prior.logprob(Z)
        np.testing.assert_allclose(batched, [prior.logprob(z) for z in Z], atol=1e-14)


def _subspace_basis(K: int, D: int) -> np.ndarray:
    """Orthonormal basis of the mean-free subspace as columns (K*D, (K-1)*D)."""
    ones = np.ones((K, 1)) / math.sqrt(K)
    proj = np.eye(K) - ones @ ones.T
    eigvals, eigvecs = np.linalg.eigh(proj)
    particle_basis = eigvecs[:, eigvals > 0.5]  # (K, K-1)
    return np.kron(particle_basis, np.eye(D))


class TestNormalization:
    """exp(logprob) must integrate to one over the mean-free subspace."""

    def test_quadrature_K2_D1(self):
        prior = MeanFreePrior(2, 1)
        basis = _subspace_basis(2, 1)

        def density(t):
            z = (basis * t).reshape(2, 1)
            return math.exp(prior.logprob(z))

        total, _ = integrate.quad(density, -9, 9, epsabs=1e-10)
        assert abs(total - 1.0) < 1e-6

    def test_quadrature_K2_D2(self):
        prior = MeanFreePrior(2, 2)
        basis = _subspace_basis(2, 2)

        def density(t1, t2):
            z = (basis @ np.array([t1, t2])).reshape(2, 2)
            return math.exp(prior.logprob(z))

        total, _ = integrate.dblquad(density, -8, 8, -8, 8, epsabs=1e-9)
        assert abs(total - 1.0) < 1e-6
