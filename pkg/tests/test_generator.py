"""Weighted sampling, effective sample size, reweighting, minimization, dedup."""

import numpy as np
import pytest

from flowbg import (
    DoubleWell,
    EquivariantFlow,
    GaussianEnergy,
    WeightedSample,
    apply_group,
    distinct_minima,
    effective_sample_size,
    generate,
    minimize_energy,
    minimize_many,
    random_group_element,
    reweighted_expectation,
    signature,
)
from flowbg.errors import NonConvergenceError

ENERGY = DoubleWell()


class TestGenerate:
    def test_empty(self):
        flow = EquivariantFlow(2, 2, M=4, n_steps=2)
        assert generate(flow, ENERGY, 0, np.random.default_rng(0)) == []

    def test_perfect_proposal_weights_constant(self):
        """Identity flow against the prior-matching energy: logw identically zero."""
        flow = EquivariantFlow(4, 2, M=8, n_steps=4)
        samples = generate(flow, GaussianEnergy(4, 2), 200, np.random.default_rng(1))
        logw = np.array([s.logw for s in samples])
        assert np.var(logw) < 1e-20
        assert np.max(np.abs(logw)) < 1e-10

    def test_logq_self_consistent(self):
        rng = np.random.default_rng(2)
        flow = EquivariantFlow(3, 2, M=6, n_steps=16)
        flow.params.values[:] = 0.1 * rng.standard_normal(flow.params.size)
        samples = generate(flow, ENERGY, 16, rng)
        for s in samples:
            assert abs(flow.logprob(s.x) - s.logq) < 1e-6

    def test_non_finite_energy_flagged(self):
        class HoleEnergy(GaussianEnergy):
            def energy_many(self, X):
                u = super().energy_many(X)
                u[0] = np.nan
                return u

        flow = EquivariantFlow(2, 2, M=4, n_steps=2)
        samples = generate(flow, HoleEnergy(2, 2), 5, np.random.default_rng(3))
        assert samples[0].logw == -np.inf
        assert all(np.isfinite(s.logw) for s in samples[1:])


class TestEffectiveSampleSize:
    def test_equal_weights(self):
        logw = np.zeros(100)
        assert effective_sample_size(logw) == pytest.approx(100.0, abs=1e-12)

    def test_single_dominant_weight(self):
        logw = np.array([0.0] + [-2000.0] * 99)
        assert effective_sample_size(logw) == pytest.approx(1.0, abs=1e-12)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(4)
        logw = rng.standard_normal(10)
        w = np.exp(logw)
        expected = w.sum() ** 2 / np.sum(w * w)
        assert effective_sample_size(logw) == pytest.approx(expected, rel=1e-12)

    def test_all_zero_weights_error(self):
        with pytest.raises(ValueError):
            effective_sample_size(np.full(5, -np.inf))

    def test_accepts_weighted_samples(self):
        samples = [WeightedSample(np.zeros((2, 2)), 0.0, 0.0, 0.0) for _ in range(7)]
        assert effective_sample_size(samples) == pytest.approx(7.0)


class TestReweightedExpectation:
    def _samples(self, logw):
        rng = np.random.default_rng(5)
        return [WeightedSample(rng.standard_normal((2, 2)), 0.0, 0.0, lw) for lw in logw]

    def test_constant_observable_normalizes(self):
        samples = self._samples(np.random.default_rng(6).standard_normal(50))
        assert reweighted_expectation(samples, lambda x: 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_equal_weights_reduce_to_plain_mean(self):
        samples = self._samples(np.zeros(50))
        f = lambda x: float(x[0, 0])
        expected = np.mean([f(s.x) for s in samples])
        assert reweighted_expectation(samples, f) == pytest.approx(expected, rel=1e-12)

    def test_weighted_against_brute_force(self):
        logw = np.random.default_rng(7).standard_normal(20)
        samples = self._samples(logw)
        f = lambda x: float(np.sum(x**2))
        w = np.exp(logw - logw.max())
        expected = np.sum(w * [f(s.x) for s in samples]) / w.sum()
        assert reweighted_expectation(samples, f) == pytest.approx(expected, rel=1e-12)


class TestMinimizeEnergy:
    def test_already_at_minimum(self):
        x_min = minimize_energy(np.array([[0.0, 0.0], [5.3, 0.0]]), ENERGY).x_min
        rec = minimize_energy(x_min, ENERGY)
        assert rec.iterations == 0
        np.testing.assert_allclose(rec.x_min, x_min, atol=1e-10)

    def test_two_particle_outer_well(self):
        rec = minimize_energy(np.array([[0.0, 0.0], [4.5, 0.0]]), ENERGY)
        d = float(np.linalg.norm(rec.x_min[0] - rec.x_min[1]))
        assert d == pytest.approx(5.490712, abs=1e-5)
        assert rec.grad_norm < 1e-6

    def test_energy_never_increases(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            x0 = rng.standard_normal((3, 2)) * 2.0
            u0 = ENERGY.energy(x0)
            rec = minimize_energy(x0, ENERGY, max_iter=300)
            assert rec.u_min <= u0 + 1e-12

    def test_non_convergence_reports_last_iterate(self):
        with pytest.raises(NonConvergenceError) as err:
            minimize_energy(np.array([[0.0, 0.0], [4.5, 0.0]]), ENERGY, max_iter=1)
        assert err.value.last_iterate is not None
        assert err.value.iterations == 1

    def test_minimize_many_matches_sequential(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((6, 3, 2)) * 2.0
        seq = minimize_many(X, ENERGY)
        par = minimize_many(X, ENERGY, threads=4)
        for a, b in zip(seq, par):
            np.testing.assert_array_equal(a.x_min, b.x_min)


class TestSignatures:
    def test_invariant_under_group_actions(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((4, 2)) * 2.0
        sig = signature(x)
        g = random_group_element("permutation", 4, 2, rng)
        np.testing.assert_array_equal(signature(apply_group(g, x)), sig)
        for kind in ("rotation", "translation"):
            g = random_group_element(kind, 4, 2, rng)
            np.testing.assert_allclose(signature(apply_group(g, x)), sig, atol=1e-10)

    def test_distinct_minima_merges_symmetry_copies(self):
        rng = np.random.default_rng(11)
        rec = minimize_energy(np.array([[0.0, 0.0], [4.5, 0.0]]), ENERGY)
        g = random_group_element("rotation", 2, 2, rng)
        rec2 = minimize_energy(apply_group(g, rec.x_min), ENERGY)
        merged = distinct_minima([rec, rec2], tol=1e-3)
        assert len(merged) == 1
        assert merged[0].n_hits == 2

    def test_distinct_minima_separates_the_two_wells(self):
        inner = minimize_energy(np.array([[0.0, 0.0], [2.7, 0.0]]), ENERGY)
        outer = minimize_energy(np.array([[0.0, 0.0], [4.5, 0.0]]), ENERGY)
        d_in = float(np.linalg.norm(inner.x_min[0] - inner.x_min[1]))
        d_out = float(np.linalg.norm(outer.x_min[0] - outer.x_min[1]))
        assert d_in == pytest.approx(2.509288, abs=1e-5)
        assert d_out == pytest.approx(5.490712, abs=1e-5)
        assert len(distinct_minima([inner, outer], tol=1e-3)) == 2

    def test_empty_input(self):
        assert distinct_minima([], tol=1e-3) == []
