"""Target posteriors: hand-computed densities, gradients, RV machinery."""

import math

import numpy as np
import pytest

from nfmc.targets import (
    GaussianMixtureTarget,
    GaussianTarget,
    RadialVelocityTarget,
    RvDataset,
    RvPriorConfig,
    joker_initialize,
    rv_generate_observations,
    rv_model,
)

LOG_2PI = math.log(2.0 * math.pi)


def fd_gradient(target, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.empty_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        up[j] += h
        down = theta.copy()
        down[j] -= h
        out[j] = (target.log_unnorm_posterior(up) - target.log_unnorm_posterior(down)) / (2 * h)
    return out


def paper_mixture() -> GaussianMixtureTarget:
    center_a = np.zeros(10)
    center_a[0], center_a[1] = 8.0, 3.0
    center_b = np.zeros(10)
    center_b[0], center_b[1] = -2.0, 3.0
    return GaussianMixtureTarget(2.0 / 3.0, 1.0 / 3.0, center_a, center_b)


class TestGaussianTarget:
    def test_log_density_at_origin(self):
        target = GaussianTarget(3, log_offset=1.5)
        assert target.log_unnorm_posterior(np.zeros(3)) == pytest.approx(
            1.5 - 1.5 * LOG_2PI, rel=1e-15
        )

    def test_gradient_is_minus_theta(self):
        target = GaussianTarget(4)
        theta = np.array([1.0, -2.0, 0.5, 3.0])
        assert np.array_equal(target.grad_log_unnorm_posterior(theta), -theta)

    def test_factorization(self):
        target = GaussianTarget(2, log_offset=0.7)
        thetas = np.random.default_rng(0).standard_normal((5, 2))
        assert np.array_equal(target.log_likelihood_many(thetas), np.full(5, 0.7))
        total = target.log_likelihood_many(thetas) + target.log_prior_many(thetas)
        assert np.array_equal(total, target.log_unnorm_posterior_many(thetas))

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            GaussianTarget(0)
        with pytest.raises(ValueError, match="expected"):
            GaussianTarget(3).log_unnorm_posterior_many(np.zeros((2, 2)))


class TestGaussianMixtureTarget:
    def test_symmetric_midpoint_value(self):
        # halfway between unit-variance components the density is one full kernel
        target = GaussianMixtureTarget(0.5, 0.5, [0.0], [2.0])
        expected = math.log(math.exp(-0.5) / math.sqrt(2.0 * math.pi))
        assert target.log_unnorm_posterior(np.array([1.0])) == pytest.approx(expected, rel=1e-14)

    def test_value_at_component_center(self):
        target = paper_mixture()
        # direct two-term sum; separation 10 => cross term exp(-50)
        w = (2.0 * math.pi) ** -5.0
        expected = math.log((2.0 / 3.0) * w + (1.0 / 3.0) * w * math.exp(-50.0))
        theta = target.centers[0]
        assert target.log_unnorm_posterior(theta) == pytest.approx(expected, rel=1e-14)

    def test_finite_deep_in_tail(self):
        target = paper_mixture()
        theta = np.full(10, 1e3)
        val = target.log_unnorm_posterior(theta)
        assert np.isfinite(val) and val < -1e5

    def test_gradient_matches_finite_differences(self):
        target = GaussianMixtureTarget(0.3, 0.7, [1.0, -1.0, 0.0], [-2.0, 0.5, 1.0])
        rng = np.random.default_rng(3)
        for _ in range(5):
            theta = rng.normal(0.0, 2.0, size=3)
            grad = target.grad_log_unnorm_posterior(theta)
            fd = fd_gradient(target, theta)
            assert np.allclose(grad, fd, rtol=1e-6, atol=1e-7)

    def test_everything_in_support(self):
        target = paper_mixture()
        assert np.all(target.in_support_many(np.full((3, 10), 1e6)))

    def test_factorization_trivial_likelihood(self):
        target = paper_mixture()
        thetas = np.random.default_rng(4).standard_normal((6, 10))
        assert np.array_equal(target.log_likelihood_many(thetas), np.zeros(6))
        assert np.array_equal(target.log_prior_many(thetas), target.log_unnorm_posterior_many(thetas))

    def test_validation(self):
        with pytest.raises(ValueError, match="sum to 1"):
            GaussianMixtureTarget(0.5, 0.6, [0.0], [1.0])
        with pytest.raises(ValueError, match="positive"):
            GaussianMixtureTarget(-0.5, 1.5, [0.0], [1.0])
        with pytest.raises(ValueError, match="equal-length"):
            GaussianMixtureTarget(0.5, 0.5, [0.0], [1.0, 2.0])


class TestRvModel:
    def test_hand_computed_curve(self):
        # lnP = log(2 pi) makes omega = 1: v(t) = v0 + K cos(t + phi0)
        theta = np.array([2.0, 3.0, 0.0, math.log(2.0 * math.pi)])
        assert rv_model(0.0, theta) == pytest.approx(5.0, rel=1e-15)
        assert rv_model(math.pi, theta) == pytest.approx(-1.0, rel=1e-12)
        vals = rv_model(np.array([0.0, math.pi]), theta)
        assert vals.shape == (2,)

    def test_phase_shift(self):
        theta = np.array([0.0, 1.0, math.pi / 2.0, math.log(2.0 * math.pi)])
        assert rv_model(0.0, theta) == pytest.approx(0.0, abs=1e-15)

    def test_generate_observations_adds_noise(self):
        truth = np.array([0.0, 5.0, 1.0, 4.0])
        times = np.linspace(0.0, 100.0, 50)
        data = rv_generate_observations(truth, times, 1.8, np.random.default_rng(0))
        resid = data.velocities - rv_model(times, truth)
        assert np.array_equal(data.times, times)
        assert 1.0 < np.std(resid) < 2.6
        again = rv_generate_observations(truth, times, 1.8, np.random.default_rng(0))
        assert np.array_equal(data.velocities, again.velocities)


class TestRvDataset:
    def test_csv_round_trip_exact(self):
        rng = np.random.default_rng(5)
        data = RvDataset(np.sort(rng.uniform(0.0, 1e5, 6)), rng.normal(0.0, 5.0, 6))
        back = RvDataset.from_csv(data.to_csv())
        assert np.array_equal(back.times, data.times)
        assert np.array_equal(back.velocities, data.velocities)

    def test_header_and_shape_validation(self):
        with pytest.raises(ValueError, match="header"):
            RvDataset.from_csv("time,vel\n1,2\n")
        with pytest.raises(ValueError, match="equal-length"):
            RvDataset(np.zeros(3), np.zeros(2))
        with pytest.raises(ValueError, match="at least one"):
            RvDataset(np.zeros(0), np.zeros(0))


def small_rv_target(seed: int = 11) -> RadialVelocityTarget:
    prior = RvPriorConfig()
    truth = np.array([0.5, 5.0, 1.0, 4.0])
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0.0, 300.0, 6))
    data = rv_generate_observations(truth, times, prior.sigma_obs, rng)
    return RadialVelocityTarget(data, prior)


class TestRadialVelocityTarget:
    def test_support_box(self):
        target = small_rv_target()
        inside = np.array(
            [
                [0.0, 0.0, 0.0, 3.0],
                [0.0, 0.0, 2.0 * math.pi - 1e-9, 5.0],
            ]
        )
        outside = np.array(
            [
                [0.0, 0.0, 2.0 * math.pi, 4.0],
                [0.0, 0.0, -1e-9, 4.0],
                [0.0, 0.0, 1.0, 2.999],
                [0.0, 0.0, 1.0, 5.001],
            ]
        )
        assert np.all(target.in_support_many(inside))
        assert not np.any(target.in_support_many(outside))
        assert np.all(np.isinf(target.log_unnorm_posterior_many(outside)))

    def test_perfect_fit_log_likelihood(self):
        # one observation with zero residual: logL = -(log sigma + log(2 pi)/2)
        prior = RvPriorConfig()
        theta = np.array([1.0, 4.0, 0.5, 4.0])
        data = RvDataset(np.array([3.0]), np.array([float(rv_model(3.0, theta))]))
        target = RadialVelocityTarget(data, prior)
        expected = -(math.log(1.8) + 0.5 * LOG_2PI)
        assert target.log_likelihood_many(theta[None, :])[0] == pytest.approx(expected, rel=1e-14)

    def test_prior_value_at_gaussian_means(self):
        target = small_rv_target()
        prior = target.prior
        theta = np.array([0.0, prior.mu_K, 1.0, 4.0])
        expected = (
            -math.log(prior.ln_P_max - prior.ln_P_min)
            - math.log(2.0 * math.pi)
            - math.log(prior.sigma_K)
            - math.log(prior.sigma_v0)
            - LOG_2PI
        )
        assert target.log_prior_many(theta[None, :])[0] == pytest.approx(expected, rel=1e-14)

    def test_likelihood_finite_everywhere_prior_masks(self):
        target = small_rv_target()
        theta = np.array([[0.0, 1.0, -3.0, 10.0]])
        assert np.isfinite(target.log_likelihood_many(theta)[0])
        assert target.log_prior_many(theta)[0] == -np.inf
        assert target.log_unnorm_posterior_many(theta)[0] == -np.inf

    def test_factorization(self):
        target = small_rv_target()
        rng = np.random.default_rng(6)
        thetas = np.column_stack(
            [
                rng.normal(0.0, 1.0, 8),
                rng.normal(5.0, 3.0, 8),
                rng.uniform(0.0, 2.0 * math.pi, 8),
                rng.uniform(3.0, 5.0, 8),
            ]
        )
        total = target.log_likelihood_many(thetas) + target.log_prior_many(thetas)
        assert np.array_equal(total, target.log_unnorm_posterior_many(thetas))

    def test_gradient_matches_finite_differences(self):
        target = small_rv_target()
        rng = np.random.default_rng(7)
        for _ in range(5):
            theta = np.array(
                [
                    rng.normal(0.0, 1.0),
                    rng.normal(5.0, 2.0),
                    rng.uniform(0.5, 5.5),
                    rng.uniform(3.2, 4.8),
                ]
            )
            grad = target.grad_log_unnorm_posterior(theta)
            fd = fd_gradient(target, theta)
            assert np.allclose(grad, fd, rtol=1e-5, atol=1e-6)

    def test_prior_config_validation(self):
        with pytest.raises(ValueError, match="ln_P_min"):
            RvPriorConfig(ln_P_min=5.0, ln_P_max=3.0)
        with pytest.raises(ValueError, match="sigma_obs"):
            RvPriorConfig(sigma_obs=0.0)


class TestJokerInitialize:
    def test_deterministic_and_in_support(self):
        target = small_rv_target()
        prior = target.prior
        accepted = joker_initialize(target.dataset, prior, 1000, np.random.default_rng(2))
        again = joker_initialize(target.dataset, prior, 1000, np.random.default_rng(2))
        assert len(accepted) == len(again)
        for a, b in zip(accepted, again):
            assert np.array_equal(a, b)
        pts = np.stack(accepted)
        assert 1 <= pts.shape[0] <= 1000
        assert np.all(target.in_support_many(pts))
        assert np.all(np.isfinite(pts))

    def test_single_draw_is_always_kept(self):
        # a lone candidate is its own likelihood maximum, so acceptance is certain
        target = small_rv_target()
        for seed in range(10):
            accepted = joker_initialize(target.dataset, target.prior, 1, np.random.default_rng(seed))
            assert len(accepted) == 1

    def test_validation(self):
        target = small_rv_target()
        with pytest.raises(ValueError):
            joker_initialize(target.dataset, target.prior, 0, np.random.default_rng(0))
