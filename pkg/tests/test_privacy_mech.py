import math

import numpy as np
import pytest
from scipy import integrate, stats

from utils.errors import PrivacyDomainError
from utils.privacy_mech import (
    NoiseModel,
    PrivacySpec,
    agent_streams,
    check_adjacency,
    kappa,
    kappa_derivative,
    min_sigma,
    q_function,
    q_inverse,
    sample_privacy_noise,
    sigmas_for,
)


class TestTailFunction:
    def test_known_values(self):
        assert q_function(0.0) == 0.5
        assert q_function(40.0) < 1e-300
        assert q_function(1.6449) == pytest.approx(0.05, abs=5e-5)

    def test_matches_survival_function(self):
        for y in np.linspace(-6.0, 8.0, 57):
            assert abs(q_function(y) - stats.norm.sf(y)) <= 1e-12

    def test_matches_integral_oracle(self):
        for y in (-2.0, -0.3, 0.0, 0.7, 1.5, 3.0):
            tail, _ = integrate.quad(lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi), y, np.inf)
            assert q_function(y) == pytest.approx(tail, abs=1e-10)

    def test_inverse_known_values(self):
        assert q_inverse(0.5) == pytest.approx(0.0, abs=1e-12)
        assert q_inverse(q_function(1.234)) == pytest.approx(1.234, abs=1e-9)
        assert q_inverse(0.05) == pytest.approx(1.6449, abs=1e-4)

    @pytest.mark.parametrize("delta", [0.01, 0.05, 0.1])
    def test_inverse_matches_quantile_oracle(self, delta):
        assert abs(q_inverse(delta) - stats.norm.isf(delta)) <= 1e-8

    def test_round_trip_on_log_grid(self):
        for p in np.geomspace(1e-8, 0.49, 60):
            assert abs(q_function(q_inverse(p)) - p) <= 1e-10

    def test_upper_half_is_negative(self):
        assert q_inverse(0.9) == pytest.approx(-stats.norm.isf(0.1), abs=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
    def test_inverse_domain(self, p):
        with pytest.raises(PrivacyDomainError):
            q_inverse(p)


class TestCalibration:
    def test_kappa_reference_value(self):
        k = stats.norm.isf(0.05)
        oracle = (k + math.sqrt(k * k + 2.0)) / 2.0
        assert kappa(0.05, 1.0) == pytest.approx(1.9071, abs=1e-4)
        assert abs(kappa(0.05, 1.0) - oracle) <= 1e-4

    def test_kappa_lower_bound_and_order(self):
        for delta in (0.01, 0.1, 0.3):
            for eps in (0.05, 0.5, 2.0):
                assert kappa(delta, eps) >= q_inverse(delta) / (2 * eps)
        assert kappa(0.05, 0.1) > kappa(0.05, 0.5) > kappa(0.05, 1.0)

    def test_monotone_on_grid(self):
        deltas = np.linspace(0.001, 0.49, 100)
        epsilons = np.geomspace(0.01, 10.0, 100)
        table = np.array([[kappa(d, e) for e in epsilons] for d in deltas])
        assert np.all(np.diff(table, axis=1) < 0)
        assert np.all(np.diff(table, axis=0) < 0)

    def test_derivative_matches_finite_difference(self):
        for eps in (0.03, 0.4, 2.5):
            h = 1e-6 * eps
            numeric = (kappa(0.05, eps + h) - kappa(0.05, eps - h)) / (2 * h)
            assert kappa_derivative(0.05, eps) == pytest.approx(numeric, rel=1e-6)
            assert kappa_derivative(0.05, eps) < 0

    def test_min_sigma(self):
        base = min_sigma(PrivacySpec(1.0, 0.05, 1.0))
        assert base == pytest.approx(1.9071, abs=1e-4)
        assert min_sigma(PrivacySpec(1.0, 0.05, 2.0)) == 2 * base
        assert min_sigma(PrivacySpec(1e6, 0.05, 1.0)) < 0.01

    def test_sigma_decreases_in_epsilon(self):
        sigmas = sigmas_for([PrivacySpec(float(e), 0.05, 1.0) for e in np.linspace(0.05, 3.0, 100)])
        assert np.all(np.diff(sigmas) < 0)

    @pytest.mark.parametrize("eps, delta, b", [(0.0, 0.05, 1.0), (-1.0, 0.05, 1.0), (1.0, 0.5, 1.0),
                                               (1.0, 0.0, 1.0), (1.0, 0.05, 0.0)])
    def test_spec_domain(self, eps, delta, b):
        with pytest.raises(PrivacyDomainError):
            PrivacySpec(eps, delta, b)


class TestNoiseModel:
    def test_equality_calibration_by_default(self):
        specs = [PrivacySpec(0.5, 0.05, 1.0), PrivacySpec(1.0, 0.01, 2.0)]
        model = NoiseModel.from_specs(specs, [0.1, 0.2])
        assert np.array_equal(model.privacy_sigmas, [s.sigma_min for s in specs])
        assert np.allclose(np.diag(model.sigma_v), model.privacy_sigmas ** 2)
        assert np.allclose(np.diag(model.sigma_n), [0.01, 0.04])

    def test_below_calibrated_minimum_rejected(self):
        spec = PrivacySpec(1.0, 0.05, 1.0)
        with pytest.raises(PrivacyDomainError):
            NoiseModel.from_specs([spec], [0.0], privacy_sigmas=[spec.sigma_min * 0.9])

    def test_length_mismatch_rejected(self):
        with pytest.raises(PrivacyDomainError):
            NoiseModel.uncalibrated([1.0, 1.0], [0.0])

    def test_permuted(self):
        model = NoiseModel.uncalibrated([1.0, 2.0, 3.0], [0.1, 0.2, 0.3])
        moved = model.permuted([2, 0, 1])
        assert list(moved.privacy_sigmas) == [2.0, 3.0, 1.0]
        assert list(moved.process_sigmas) == [0.2, 0.3, 0.1]


class TestSampling:
    def test_zero_sigma(self):
        assert np.array_equal(sample_privacy_noise(0.0, 3, np.random.default_rng(0)), np.zeros(3))

    def test_deterministic_given_seed(self):
        a = sample_privacy_noise(1.5, 4, np.random.default_rng(42))
        b = sample_privacy_noise(1.5, 4, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_moments(self):
        draws = sample_privacy_noise(2.0, 1_000_000, np.random.default_rng(123))
        assert 3.98 <= draws.var() <= 4.02
        assert abs(draws.mean()) <= 5 * 2.0 / 1e3

    def test_negative_sigma_rejected(self):
        with pytest.raises(PrivacyDomainError):
            sample_privacy_noise(-1.0, 2, np.random.default_rng(0))

    def test_agent_streams_reproducible_and_independent(self):
        first = agent_streams(9, 3)
        second = agent_streams(9, 3)
        a = [s.privacy.standard_normal(5) for s in first]
        b = [s.privacy.standard_normal(5) for s in second]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[0], a[1])
        assert not np.array_equal(first[0].process.standard_normal(5), a[0])

    def test_same_seed_sequence_reused(self):
        seq = np.random.SeedSequence(5)
        a = agent_streams(seq, 2)[0].privacy.standard_normal(3)
        b = agent_streams(seq, 2)[0].privacy.standard_normal(3)
        assert np.array_equal(a, b)


class TestAdjacency:
    def test_identical_trajectories(self):
        v = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert check_adjacency(v, v.copy(), 0.1)

    def test_boundary_exceeded(self):
        assert not check_adjacency([0.0], [1.001], 1.0)

    def test_boundary_is_inclusive(self):
        assert check_adjacency([0.0, 0.0], [0.6, 0.8], 1.0)

    def test_length_mismatch(self):
        with pytest.raises(PrivacyDomainError):
            check_adjacency([0.0, 1.0], [0.0], 1.0)
