"""Double-well pair potential: values, analytic derivatives, symmetries."""

import numpy as np
import pytest
from scipy import optimize

from flowbg import DoubleWell, DoubleWellParams, GaussianEnergy, apply_group, random_group_element
from flowbg.errors import SingularityError

ENERGY = DoubleWell()


def well_shift_oracle() -> float:
    """Root of d/ds (a s^2 + b s^4) away from zero, found numerically."""
    p = ENERGY.params
    return optimize.brentq(lambda s: 2 * p.a * s + 4 * p.b * s**3, 0.1, 4.0, xtol=1e-12)


def pair_at(distance: float) -> np.ndarray:
    return np.array([[0.0, 0.0], [distance, 0.0]])


def fd_gradient(energy, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for d in range(x.shape[1]):
            xp = x.copy(); xp[i, d] += h
            xm = x.copy(); xm[i, d] -= h
            g[i, d] = (energy.energy(xp) - energy.energy(xm)) / (2 * h)
    return g


class TestParams:
    def test_confinement_required(self):
        with pytest.raises(ValueError):
            DoubleWellParams(b=-1.0)

    def test_well_shift_matches_root_oracle(self):
        s_star = well_shift_oracle()
        assert ENERGY.params.well_shift() == pytest.approx(s_star, abs=1e-10)
        assert 4.0 + s_star == pytest.approx(5.490712, abs=1e-6)


class TestEnergyValues:
    def test_zero_at_well_offset(self):
        assert ENERGY.energy(pair_at(4.0)) == pytest.approx(0.0, abs=1e-14)

    def test_minimum_value_from_root_oracle(self):
        """At the outer well the two ordered-pair terms sum to 2*(a s*^2 + b s*^4)."""
        p = ENERGY.params
        s = well_shift_oracle()
        expected = 2.0 * (p.a * s**2 + p.b * s**4)
        assert expected == pytest.approx(-8.888889, abs=1e-6)
        assert ENERGY.energy(pair_at(4.0 + s)) == pytest.approx(expected, abs=1e-10)

    def test_invariant_under_group_actions(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 2)) * 2.0
        u = ENERGY.energy(x)
        for kind in ("permutation", "rotation", "translation"):
            for _ in range(10):
                g = random_group_element(kind, 4, 2, rng)
                assert abs(ENERGY.energy(apply_group(g, x)) - u) < 1e-10

    def test_per_pair_shape_two_minima_and_barrier(self):
        """Exactly two stationary distances beside d0, both below the barrier."""
        s = well_shift_oracle()
        u_inner = ENERGY.energy(pair_at(4.0 - s))
        u_outer = ENERGY.energy(pair_at(4.0 + s))
        u_barrier = ENERGY.energy(pair_at(4.0))
        assert u_inner == pytest.approx(u_outer, abs=1e-10)
        assert u_barrier > u_inner
        # no further roots of the distance derivative in (0.1, 10) beyond d0 +/- s
        p = ENERGY.params
        grid = np.linspace(0.1, 10.0, 2000)
        deriv = 2 * p.a * (grid - p.d0) + 4 * p.b * (grid - p.d0) ** 3
        crossings = np.sum(np.sign(deriv[1:]) != np.sign(deriv[:-1]))
        assert crossings == 3

    def test_energy_many_matches_scalar(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((8, 4, 2)) * 2.0
        np.testing.assert_allclose(ENERGY.energy_many(X), [ENERGY.energy(x) for x in X], rtol=1e-12)


class TestGradient:
    def test_zero_at_stationary_distance(self):
        g = ENERGY.gradient(pair_at(4.0))
        assert np.max(np.abs(g)) < 1e-12

    def test_zero_at_well_minimum(self):
        g = ENERGY.gradient(pair_at(4.0 + well_shift_oracle()))
        assert np.max(np.abs(g)) < 1e-8

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = rng.standard_normal((4, 2)) * 2.0
            g = ENERGY.gradient(x)
            g_fd = fd_gradient(ENERGY, x)
            np.testing.assert_allclose(g, g_fd, rtol=1e-5, atol=1e-7)

    def test_coincident_particles_raise(self):
        x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(SingularityError):
            ENERGY.gradient(x)

    def test_gradient_many_matches_scalar(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((6, 3, 2)) * 2.0
        np.testing.assert_allclose(ENERGY.gradient_many(X), [ENERGY.gradient(x) for x in X], rtol=1e-12)


class TestHessian:
    def test_matches_finite_differences_of_gradient(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 2)) * 2.0
        H = ENERGY.hessian(x)
        h = 1e-6
        flat = x.reshape(-1)
        H_fd = np.zeros_like(H)
        for j in range(flat.size):
            xp = flat.copy(); xp[j] += h
            xm = flat.copy(); xm[j] -= h
            H_fd[:, j] = (ENERGY.gradient(xp.reshape(3, 2)) - ENERGY.gradient(xm.reshape(3, 2))).reshape(-1) / (2 * h)
        np.testing.assert_allclose(H, H_fd, rtol=1e-4, atol=1e-5)

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 2)) * 2.0
        H = ENERGY.hessian(x)
        assert np.max(np.abs(H - H.T)) < 1e-10

    def test_translation_null_space(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((4, 2)) * 2.0
        H = ENERGY.hessian(x)
        for d in range(2):
            v = np.zeros((4, 2))
            v[:, d] = 1.0
            assert np.max(np.abs(H @ v.reshape(-1))) < 1e-8

    def test_coincident_particles_raise(self):
        with pytest.raises(SingularityError):
            ENERGY.hessian(np.zeros((2, 2)))


class TestGaussianEnergy:
    def test_gradient_and_hessian(self):
        e = GaussianEnergy(3, 2)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 2))
        np.testing.assert_allclose(e.gradient(x), fd_gradient(e, x), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(e.hessian(x), np.eye(6))
