"""Langevin and flow-proposal MH kernels on the walker ensemble."""

import math

import numpy as np
import pytest

from nfmc.flow import RealNvpFlow, build_realnvp
from nfmc.samplers import (
    MALA,
    ULA,
    KernelStats,
    WalkerEnsemble,
    langevin_step,
    log_nf_acceptance,
    nf_acceptance,
    nf_mh_step,
)
from nfmc.targets import GaussianMixtureTarget, GaussianTarget, TargetPosterior


class FakeStream:
    """Scripted stand-in for a Generator: returns queued draws in order."""

    def __init__(self, normals=(), uniforms=()):
        self._normals = [np.asarray(v, dtype=float) for v in normals]
        self._uniforms = list(uniforms)

    def standard_normal(self, size):
        vec = self._normals.pop(0)
        assert vec.shape == (size,)
        return vec

    def uniform(self):
        return self._uniforms.pop(0)


class BoxedGaussian(TargetPosterior):
    """Standard normal restricted to the cube max_j |theta_j| <= bound."""

    def __init__(self, dim: int, bound: float):
        self.dim = dim
        self.bound = bound

    def log_unnorm_posterior_many(self, thetas):
        thetas = self._check(thetas)
        out = np.full(thetas.shape[0], -np.inf)
        ok = self.in_support_many(thetas)
        out[ok] = -0.5 * np.sum(thetas[ok] ** 2, axis=1)
        return out

    def grad_log_unnorm_posterior_many(self, thetas):
        return -self._check(thetas)

    def in_support_many(self, thetas):
        return np.all(np.abs(self._check(thetas)) <= self.bound, axis=1)


def scripted_ensemble(target, positions, streams) -> WalkerEnsemble:
    positions = np.asarray(positions, dtype=float)
    return WalkerEnsemble(positions, target.log_unnorm_posterior_many(positions), streams)


class TestWalkerEnsemble:
    def test_from_positions_fills_cache(self):
        target = GaussianTarget(2)
        pos = np.array([[1.0, 0.0], [0.0, -2.0]])
        ens = WalkerEnsemble.from_positions(pos, target, master_seed=0)
        assert ens.n_walkers == 2 and ens.dim == 2
        assert np.array_equal(ens.cached_log_post, target.log_unnorm_posterior_many(pos))

    def test_out_of_support_start_names_walker(self):
        target = BoxedGaussian(2, 1.0)
        pos = np.array([[0.5, 0.5], [0.0, 3.0]])
        with pytest.raises(ValueError, match="walker 1"):
            WalkerEnsemble.from_positions(pos, target, master_seed=0)

    def test_streams_do_not_depend_on_ensemble_size(self):
        # walker i's stream is keyed by (seed, i), not by how many walkers exist
        target = GaussianTarget(3)
        small = WalkerEnsemble.from_positions(np.zeros((2, 3)), target, master_seed=5)
        large = WalkerEnsemble.from_positions(np.zeros((4, 3)), target, master_seed=5)
        a = small.draw_normals()
        b = large.draw_normals()
        assert np.array_equal(a, b[:2])

    def test_shape_validation(self):
        target = GaussianTarget(2)
        with pytest.raises(ValueError, match="positions"):
            WalkerEnsemble.from_positions(np.zeros(2), target, master_seed=0)
        with pytest.raises(ValueError, match="one entry per walker"):
            WalkerEnsemble(np.zeros((2, 2)), np.zeros(3), [None, None])
        with pytest.raises(ValueError, match="stream"):
            WalkerEnsemble(np.zeros((2, 2)), np.zeros(2), [None])


class TestUla:
    def test_update_formula(self):
        target = GaussianTarget(2)
        eta = np.array([0.5, 0.25])
        tau = 0.1
        pos = np.array([[1.0, -1.0]])
        ens = scripted_ensemble(target, pos, [FakeStream(normals=[eta])])
        stats = langevin_step(ens, target, tau=tau, mode=ULA)
        expected = pos[0] - tau * pos[0] + math.sqrt(2.0 * tau) * eta
        assert np.array_equal(ens.positions[0], expected)
        assert stats.langevin_proposed == 1 and stats.langevin_accepted == 1

    def test_out_of_support_proposal_stays_put(self):
        target = BoxedGaussian(2, 1.0)
        pos = np.array([[0.9, 0.0]])
        ens = scripted_ensemble(target, pos, [FakeStream(normals=[np.array([10.0, 0.0])])])
        cache_before = ens.cached_log_post.copy()
        stats = langevin_step(ens, target, tau=0.02, mode=ULA)
        assert np.array_equal(ens.positions, pos)
        assert np.array_equal(ens.cached_log_post, cache_before)
        assert stats.langevin_accepted == 0

    def test_in_unbounded_target_every_move_is_accepted(self):
        target = GaussianMixtureTarget(0.5, 0.5, [2.0, 0.0], [-2.0, 0.0])
        ens = WalkerEnsemble.from_positions(np.zeros((20, 2)), target, master_seed=1)
        stats = KernelStats()
        for _ in range(10):
            langevin_step(ens, target, tau=0.05, mode=ULA, stats=stats)
        assert stats.langevin_proposed == 200
        assert stats.langevin_accepted == 200

    def test_parameter_validation(self):
        target = GaussianTarget(1)
        ens = WalkerEnsemble.from_positions(np.zeros((1, 1)), target, master_seed=0)
        with pytest.raises(ValueError, match="tau"):
            langevin_step(ens, target, tau=0.0)
        with pytest.raises(ValueError, match="mode"):
            langevin_step(ens, target, tau=0.1, mode="hmc")


class TestMala:
    def acceptance_setup(self, u: float):
        # 1-d standard normal from the origin: alpha = exp(-tau * y^2 / 4)
        target = GaussianTarget(1)
        stream = FakeStream(normals=[np.array([2.0])], uniforms=[u])
        ens = scripted_ensemble(target, np.array([[0.0]]), [stream])
        langevin_step(ens, target, tau=0.5, mode=MALA)
        return ens

    def test_hand_oracle_accepts_below_threshold(self):
        # y = sqrt(2 * 0.5) * 2 = 2, alpha = exp(-0.5) ~ 0.6065
        ens = self.acceptance_setup(u=0.60)
        assert ens.positions[0, 0] == 2.0
        assert ens.cached_log_post[0] == GaussianTarget(1).log_unnorm_posterior(np.array([2.0]))

    def test_hand_oracle_rejects_above_threshold(self):
        ens = self.acceptance_setup(u=0.61)
        assert ens.positions[0, 0] == 0.0

    def test_stationary_point_always_accepts(self):
        # from the mode with zero noise the move is the identity: alpha = 1
        target = GaussianTarget(2)
        stream = FakeStream(normals=[np.zeros(2)], uniforms=[0.999999])
        ens = scripted_ensemble(target, np.zeros((1, 2)), [stream])
        stats = langevin_step(ens, target, tau=0.3, mode=MALA)
        assert stats.langevin_accepted == 1

    def test_out_of_support_proposal_rejected(self):
        target = BoxedGaussian(2, 1.0)
        stream = FakeStream(normals=[np.array([10.0, 0.0])], uniforms=[1e-12])
        ens = scripted_ensemble(target, np.array([[0.9, 0.0]]), [stream])
        langevin_step(ens, target, tau=0.02, mode=MALA)
        assert np.array_equal(ens.positions, [[0.9, 0.0]])

    def test_tiny_step_accepts_everything(self):
        target = GaussianMixtureTarget(0.3, 0.7, [1.0, 0.0, 0.0], [-1.0, 0.0, 1.0])
        ens = WalkerEnsemble.from_positions(np.zeros((20, 3)), target, master_seed=2)
        stats = KernelStats()
        for _ in range(10):
            langevin_step(ens, target, tau=1e-12, mode=MALA, stats=stats)
        assert stats.langevin_accepted == stats.langevin_proposed == 200

    def test_nonfinite_gradient_names_walker(self):
        class BadGradTarget(GaussianTarget):
            def grad_log_unnorm_posterior_many(self, thetas):
                grads = super().grad_log_unnorm_posterior_many(thetas)
                grads[1] = np.nan
                return grads

        target = BadGradTarget(2)
        ens = WalkerEnsemble.from_positions(np.zeros((3, 2)), target, master_seed=3)
        with pytest.raises(FloatingPointError, match="walker 1"):
            langevin_step(ens, target, tau=0.1)


class TestNfAcceptance:
    def test_hand_values(self):
        assert nf_acceptance(-1.0, -1.0, -1.0, -1.0) == 1.0
        assert nf_acceptance(-2.0, -1.0, -1.0, -1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
        assert nf_acceptance(-1.0, -2.0, -1.0, -1.0) == 1.0
        assert nf_acceptance(0.0, 0.0, 0.0, -np.inf) == 0.0
        assert nf_acceptance(0.0, 0.0, -np.inf, 0.0) == 1.0

    def test_detailed_balance_identity(self):
        # log alpha(x->y) - log alpha(y->x) equals the log ratio exactly
        rng = np.random.default_rng(14)
        for _ in range(1000):
            a, b, c, d = rng.normal(0.0, 5.0, 4)
            fwd = log_nf_acceptance(a, b, c, d)
            rev = log_nf_acceptance(c, d, a, b)
            delta = (a + d) - (b + c)
            assert abs((fwd - rev) - delta) <= 1e-12


class TestNfMhStep:
    def test_identity_flow_on_matching_target_always_accepts(self):
        # flow density equals the posterior, so the ratio is exactly 1
        target = GaussianTarget(2)
        flow = build_realnvp(2, num_pairs=1, hidden_widths=(4,), seed=0, zero_final_layer=True)
        ens = WalkerEnsemble.from_positions(np.full((30, 2), 0.5), target, master_seed=4)
        stats = nf_mh_step(ens, target, flow)
        assert stats.nf_proposed == 30
        assert stats.nf_accepted == 30
        assert not np.allclose(ens.positions, 0.5)

    def test_rejected_walkers_keep_position_and_cache(self):
        # a flow concentrated far from the target mode is mostly rejected
        target = GaussianMixtureTarget(0.5, 0.5, [30.0, 0.0], [-30.0, 0.0])
        flow = build_realnvp(2, num_pairs=1, hidden_widths=(4,), seed=1, zero_final_layer=True)
        start = np.tile(np.array([30.0, 0.0]), (40, 1))
        ens = WalkerEnsemble.from_positions(start, target, master_seed=5)
        stats = nf_mh_step(ens, target, flow)
        rejected = np.flatnonzero(np.all(ens.positions == start, axis=1))
        assert stats.nf_accepted < 5
        assert rejected.size == 40 - stats.nf_accepted
        assert np.array_equal(
            ens.cached_log_post, target.log_unnorm_posterior_many(ens.positions)
        )

    def test_dim_mismatch_rejected(self):
        target = GaussianTarget(3)
        flow = build_realnvp(2, num_pairs=1, hidden_widths=(4,), seed=0)
        ens = WalkerEnsemble.from_positions(np.zeros((2, 3)), target, master_seed=0)
        with pytest.raises(ValueError, match="dim"):
            nf_mh_step(ens, target, flow)

    def test_nonfinite_flow_density_names_walker(self):
        class BrokenDensityFlow(RealNvpFlow):
            def log_density(self, theta):
                return np.full(np.atleast_2d(theta).shape[0], np.nan)

        base = build_realnvp(2, num_pairs=1, hidden_widths=(4,), seed=0, zero_final_layer=True)
        broken = BrokenDensityFlow(base.dim, base.layers)
        target = GaussianTarget(2)
        ens = WalkerEnsemble.from_positions(np.zeros((2, 2)), target, master_seed=6)
        with pytest.raises(FloatingPointError, match="current walker 0"):
            nf_mh_step(ens, target, broken)


class TestCacheCoherence:
    def test_cache_matches_recomputation_after_mixed_kernels(self):
        target = GaussianMixtureTarget(0.4, 0.6, [2.0, 0.0], [-2.0, 1.0])
        flow = build_realnvp(2, num_pairs=2, hidden_widths=(6,), seed=7, init_scale=0.2)
        ens = WalkerEnsemble.from_positions(
            np.random.default_rng(16).normal(0.0, 1.0, (15, 2)), target, master_seed=8
        )
        for k in range(15):
            if k % 3 == 0:
                nf_mh_step(ens, target, flow)
            elif k % 3 == 1:
                langevin_step(ens, target, tau=0.05, mode=ULA)
            else:
                langevin_step(ens, target, tau=0.05, mode=MALA)
        assert np.array_equal(
            ens.cached_log_post, target.log_unnorm_posterior_many(ens.positions)
        )
        assert np.all(target.in_support_many(ens.positions))


class TestStationarity:
    def test_alternating_kernels_preserve_a_gaussian(self):
        # identity flow + small-step Langevin on the base target: pooled
        # moments over many post-burn-in sweeps stay near (0, I)
        target = GaussianTarget(2)
        flow = build_realnvp(2, num_pairs=1, hidden_widths=(4,), seed=0, zero_final_layer=True)
        rng = np.random.default_rng(17)
        ens = WalkerEnsemble.from_positions(rng.standard_normal((50, 2)), target, master_seed=9)
        collected = []
        for k in range(300):
            if k % 2 == 0:
                langevin_step(ens, target, tau=0.05, mode=ULA)
            else:
                nf_mh_step(ens, target, flow)
            if k >= 100:
                collected.append(ens.positions.copy())
        pooled = np.concatenate(collected)
        assert np.abs(pooled.mean(axis=0)).max() < 0.08
        assert np.abs(pooled.var(axis=0) - 1.0).max() < 0.1


class TestKernelStats:
    def test_merge_and_rates(self):
        a = KernelStats(langevin_proposed=10, langevin_accepted=4, nf_proposed=2, nf_accepted=1)
        b = KernelStats(langevin_proposed=10, langevin_accepted=6, nf_proposed=0, nf_accepted=0)
        merged = a.merge(b)
        assert merged.langevin_rate == 0.5
        assert merged.nf_rate == 0.5
        assert KernelStats().nf_rate == 0.0
