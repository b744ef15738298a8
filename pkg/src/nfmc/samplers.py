"""MCMC kernels over a walker ensemble.

Two transition kernels act on the same ensemble state:

* ``langevin_step``: the discretized overdamped Langevin move
  theta' = theta + tau * grad log rho(theta) + sqrt(2 tau) * eta, either
  unadjusted (ULA) or Metropolis-adjusted (MALA);
* ``nf_mh_step``: an independence Metropolis-Hastings move whose proposal
  is a draw from a normalizing flow, accepted with the usual ratio
  min[1, rho_hat(theta) rho(theta') / (rho(theta) rho_hat(theta'))].

Each walker owns an independent random stream derived from the master
seed and the walker index, so results do not depend on evaluation order
and any walker's chain can be reproduced in isolation.  Per step a walker
consumes: one d-vector of normals (ULA), or the normals plus one uniform
(MALA and the flow move).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import RealNvpFlow
from .targets import TargetPosterior

__all__ = [
    "ULA",
    "MALA",
    "KernelStats",
    "WalkerEnsemble",
    "langevin_step",
    "nf_mh_step",
    "nf_acceptance",
    "log_nf_acceptance",
]

ULA = "ula"
MALA = "mala"

# Stream-key tags: 4 is reserved for walker streams; the experiment driver
# uses 1..3 and 5 for data generation, initialization and evidence draws.
WALKER_STREAM_TAG = 4


@dataclass
class KernelStats:
    """Proposal/acceptance counters for the two kernels."""

    langevin_proposed: int = 0
    langevin_accepted: int = 0
    nf_proposed: int = 0
    nf_accepted: int = 0

    def merge(self, other: "KernelStats") -> "KernelStats":
        return KernelStats(
            self.langevin_proposed + other.langevin_proposed,
            self.langevin_accepted + other.langevin_accepted,
            self.nf_proposed + other.nf_proposed,
            self.nf_accepted + other.nf_accepted,
        )

    @property
    def langevin_rate(self) -> float:
        return self.langevin_accepted / self.langevin_proposed if self.langevin_proposed else 0.0

    @property
    def nf_rate(self) -> float:
        return self.nf_accepted / self.nf_proposed if self.nf_proposed else 0.0


class WalkerEnsemble:
    """Positions of n walkers with cached log-posterior values.

    The cache invariant (``cached_log_post[i]`` equals the target
    log-density at ``positions[i]``) is maintained by the kernels; all
    positions stay inside the target support.
    """

    def __init__(self, positions: np.ndarray, cached_log_post: np.ndarray, rng_streams):
        positions = np.array(positions, dtype=float)
        cached_log_post = np.array(cached_log_post, dtype=float)
        if positions.ndim != 2:
            raise ValueError("positions must be an (n, d) array")
        if cached_log_post.shape != (positions.shape[0],):
            raise ValueError("cached_log_post must have one entry per walker")
        if len(rng_streams) != positions.shape[0]:
            raise ValueError("need one random stream per walker")
        self.positions = positions
        self.cached_log_post = cached_log_post
        self.rng_streams = list(rng_streams)

    @property
    def n_walkers(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def from_positions(cls, positions, target: TargetPosterior, master_seed: int) -> "WalkerEnsemble":
        """Build an ensemble at the given start positions.

        Validates support, fills the log-posterior cache and creates the
        per-walker streams from ``(master_seed, walker index)``.
        """
        positions = np.array(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != target.dim:
            raise ValueError(f"positions must be (n, {target.dim}), got {positions.shape}")
        ok = target.in_support_many(positions)
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise ValueError(f"walker {bad} starts outside the target support: {positions[bad]}")
        log_post = target.log_unnorm_posterior_many(positions)
        streams = [
            np.random.default_rng(np.random.SeedSequence([int(master_seed), WALKER_STREAM_TAG, i]))
            for i in range(positions.shape[0])
        ]
        return cls(positions, log_post, streams)

    def draw_normals(self) -> np.ndarray:
        """One (n, d) block of standard normals, one row per walker stream."""
        out = np.empty_like(self.positions)
        for i, rng in enumerate(self.rng_streams):
            out[i] = rng.standard_normal(self.dim)
        return out

    def draw_uniforms(self) -> np.ndarray:
        out = np.empty(self.n_walkers)
        for i, rng in enumerate(self.rng_streams):
            out[i] = rng.uniform()
        return out


def _check_finite_grads(grads: np.ndarray, positions: np.ndarray) -> None:
    finite = np.isfinite(grads).all(axis=1)
    if not np.all(finite):
        bad = int(np.flatnonzero(~finite)[0])
        raise FloatingPointError(
            f"non-finite posterior gradient at walker {bad}, position {positions[bad]}"
        )


def langevin_step(
    ensemble: WalkerEnsemble,
    target: TargetPosterior,
    tau: float,
    mode: str = ULA,
    stats: KernelStats | None = None,
) -> KernelStats:
    """Advance every walker by one Langevin move, in place.

    ULA accepts unconditionally unless the proposal leaves the support, in
    which case the walker stays put (plain ULA never rejects, but bounded
    supports need a rule and staying keeps the cache invariants intact).
    MALA applies the exact acceptance ratio with the Gaussian forward and
    reverse proposal densities q(y | x) = N(y; x + tau grad log rho(x), 2 tau I).
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if mode not in (ULA, MALA):
        raise ValueError(f"mode must be '{ULA}' or '{MALA}', got {mode!r}")
    if stats is None:
        stats = KernelStats()

    pos = ensemble.positions
    n = ensemble.n_walkers
    grads = target.grad_log_unnorm_posterior_many(pos)
    _check_finite_grads(grads, pos)

    noise = ensemble.draw_normals()
    proposals = pos + tau * grads + np.sqrt(2.0 * tau) * noise
    ok = target.in_support_many(proposals)
    stats.langevin_proposed += n

    if mode == ULA:
        accept = ok
        new_log_post = ensemble.cached_log_post.copy()
        if np.any(ok):
            new_log_post[ok] = target.log_unnorm_posterior_many(proposals[ok])
    else:
        uniforms = ensemble.draw_uniforms()
        log_post_prop = np.full(n, -np.inf)
        log_alpha = np.full(n, -np.inf)
        if np.any(ok):
            sub = proposals[ok]
            log_post_prop[ok] = target.log_unnorm_posterior_many(sub)
            grads_prop = target.grad_log_unnorm_posterior_many(sub)
            _check_finite_grads(grads_prop, sub)
            # log q(x | y) - log q(y | x) with drift mu(x) = x + tau * grad(x)
            fwd = proposals[ok] - (pos[ok] + tau * grads[ok])
            rev = pos[ok] - (sub + tau * grads_prop)
            log_q_diff = (np.sum(fwd * fwd, axis=1) - np.sum(rev * rev, axis=1)) / (4.0 * tau)
            log_alpha[ok] = log_post_prop[ok] - ensemble.cached_log_post[ok] + log_q_diff
        with np.errstate(divide="ignore"):
            accept = np.log(uniforms) < log_alpha
        new_log_post = np.where(accept, log_post_prop, ensemble.cached_log_post)

    ensemble.positions = np.where(accept[:, None], proposals, pos)
    ensemble.cached_log_post = new_log_post
    stats.langevin_accepted += int(np.count_nonzero(accept))
    return stats


def log_nf_acceptance(
    log_rho_hat_cur: float,
    log_post_cur: float,
    log_rho_hat_prop: float,
    log_post_prop: float,
) -> float:
    """Log acceptance probability of the flow-proposed MH move.

    min(0, [log rho_hat(cur) + log post(prop)] - [log post(cur) + log rho_hat(prop)]),
    with an out-of-support proposal (log post -inf) giving -inf.  Current-state
    values must be finite.
    """
    if log_post_prop == -np.inf:
        return -np.inf
    if log_rho_hat_prop == -np.inf:
        # flow assigns the proposal zero density; ratio diverges, accept
        return 0.0
    delta = (log_rho_hat_cur + log_post_prop) - (log_post_cur + log_rho_hat_prop)
    return min(0.0, delta)


def nf_acceptance(
    log_rho_hat_cur: float,
    log_post_cur: float,
    log_rho_hat_prop: float,
    log_post_prop: float,
) -> float:
    """Acceptance probability of the flow-proposed MH move, in [0, 1]."""
    return float(np.exp(log_nf_acceptance(log_rho_hat_cur, log_post_cur, log_rho_hat_prop, log_post_prop)))


def nf_mh_step(
    ensemble: WalkerEnsemble,
    target: TargetPosterior,
    flow: RealNvpFlow,
    stats: KernelStats | None = None,
) -> KernelStats:
    """One independence MH sweep with flow-sampled proposals, in place.

    Per walker: draw z from the base density on the walker's own stream,
    propose theta' = T(z), and accept with the independence ratio computed
    entirely in the log domain (the unknown evidence cancels).  The flow
    density at theta' comes from the forward pass (no inversion needed);
    the density at the current position requires one inverse pass.
    """
    if flow.dim != ensemble.dim:
        raise ValueError(f"flow dim {flow.dim} does not match ensemble dim {ensemble.dim}")
    if stats is None:
        stats = KernelStats()

    n = ensemble.n_walkers
    z = ensemble.draw_normals()
    proposals, log_det = flow.forward(z)
    log_rho_hat_prop = flow.base_log_density(z) - log_det
    log_rho_hat_cur = flow.log_density(ensemble.positions)
    for name, vals in (("current", log_rho_hat_cur), ("proposed", log_rho_hat_prop)):
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise FloatingPointError(f"non-finite flow log-density for {name} walker {bad}")

    ok = target.in_support_many(proposals)
    # evaluate only inside the support: outside it the model is allowed to
    # overflow, and the prior already zeroes those proposals
    log_post_prop = np.full(n, -np.inf)
    if np.any(ok):
        log_post_prop[ok] = target.log_unnorm_posterior_many(proposals[ok])
    if np.any(np.isnan(log_post_prop)):
        bad = int(np.flatnonzero(np.isnan(log_post_prop))[0])
        raise FloatingPointError(f"non-finite posterior value for proposed walker {bad}")
    with np.errstate(divide="ignore"):
        log_u = np.log(ensemble.draw_uniforms())

    accept = np.zeros(n, dtype=bool)
    for i in range(n):
        log_alpha = log_nf_acceptance(
            log_rho_hat_cur[i], ensemble.cached_log_post[i], log_rho_hat_prop[i], log_post_prop[i]
        )
        accept[i] = log_u[i] < log_alpha

    ensemble.positions = np.where(accept[:, None], proposals, ensemble.positions)
    ensemble.cached_log_post = np.where(accept, log_post_prop, ensemble.cached_log_post)
    stats.nf_proposed += n
    stats.nf_accepted += int(np.count_nonzero(accept))
    return stats
