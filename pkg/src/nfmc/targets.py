"""Target posteriors: the abstract interface and the two built-in targets.

A target exposes its dimension, the unnormalized log-posterior (log
likelihood plus log prior, the evidence being unknown), the gradient of
that quantity on the interior of the support, and a support indicator.
Out-of-support points have log density -inf.  Batched variants operate on
(n, d) arrays and are what the samplers actually call.

Built-ins:

* a two-component isotropic Gaussian mixture (normalized, so the evidence
  is exactly 1), used to exercise mode mixing and relative mode weights;
* a circular-orbit radial-velocity posterior over (v0, K, phi0, ln P)
  with Gaussian likelihood, Gaussian priors on the linear parameters and
  uniform priors on phase and log-period, plus a Joker-style accept-reject
  initializer and synthetic data generation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "TargetPosterior",
    "GaussianTarget",
    "GaussianMixtureTarget",
    "RvPriorConfig",
    "RvDataset",
    "RadialVelocityTarget",
    "rv_model",
    "rv_generate_observations",
    "joker_initialize",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class TargetPosterior:
    """Interface for an unnormalized posterior density on R^d.

    The unnormalized posterior factors as likelihood times prior,
    log rho_* = log L + log rho_o.  Targets that are given directly as a
    density (no separate data term) use the defaults: likelihood 1 and
    prior equal to the density itself.  Importance weights are built from
    the two factors so that constant-likelihood cases cancel exactly.
    """

    dim: int

    def log_unnorm_posterior(self, theta: np.ndarray) -> float:
        return float(self.log_unnorm_posterior_many(np.asarray(theta, dtype=float)[None, :])[0])

    def grad_log_unnorm_posterior(self, theta: np.ndarray) -> np.ndarray:
        return self.grad_log_unnorm_posterior_many(np.asarray(theta, dtype=float)[None, :])[0]

    def in_support(self, theta: np.ndarray) -> bool:
        return bool(self.in_support_many(np.asarray(theta, dtype=float)[None, :])[0])

    # Batched forms; subclasses implement these.
    def log_unnorm_posterior_many(self, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_log_unnorm_posterior_many(self, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def in_support_many(self, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # Likelihood/prior factorization; overridden by data-driven targets.
    def log_likelihood_many(self, thetas: np.ndarray) -> np.ndarray:
        return np.zeros(self._check(thetas).shape[0])

    def log_prior_many(self, thetas: np.ndarray) -> np.ndarray:
        return self.log_unnorm_posterior_many(thetas)

    def _check(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim != 2 or thetas.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) points, got shape {thetas.shape}")
        return thetas


class GaussianTarget(TargetPosterior):
    """Standard normal in d dimensions times a known constant.

    The unnormalized density is exp(log_offset) * N(0, I), so the exact
    evidence is exp(log_offset).  Smoke-test target with zero-variance
    importance weights under the identity flow.
    """

    def __init__(self, dim: int, log_offset: float = 0.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.log_offset = float(log_offset)

    def log_unnorm_posterior_many(self, thetas):
        return self.log_likelihood_many(thetas) + self.log_prior_many(thetas)

    def grad_log_unnorm_posterior_many(self, thetas):
        return -self._check(thetas)

    def in_support_many(self, thetas):
        return np.ones(self._check(thetas).shape[0], dtype=bool)

    # factorization: constant likelihood exp(log_offset), standard normal prior
    def log_likelihood_many(self, thetas):
        return np.full(self._check(thetas).shape[0], self.log_offset)

    def log_prior_many(self, thetas):
        thetas = self._check(thetas)
        return -0.5 * np.sum(thetas * thetas, axis=1) - 0.5 * self.dim * LOG_2PI


class GaussianMixtureTarget(TargetPosterior):
    """Two-component isotropic (unit covariance) Gaussian mixture.

    Weights must sum to 1, so the density is normalized and doubles as a
    posterior with evidence exactly 1.  The log-density is evaluated with
    log-sum-exp and stays finite for any finite point; the gradient is the
    responsibility-weighted sum of the component gradients.
    """

    def __init__(self, weight_a: float, weight_b: float, center_a, center_b):
        center_a = np.asarray(center_a, dtype=float)
        center_b = np.asarray(center_b, dtype=float)
        if center_a.ndim != 1 or center_a.shape != center_b.shape:
            raise ValueError("centers must be equal-length vectors")
        if not (weight_a > 0 and weight_b > 0):
            raise ValueError("weights must be positive")
        if abs(weight_a + weight_b - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if not (np.all(np.isfinite(center_a)) and np.all(np.isfinite(center_b))):
            raise ValueError("centers must be finite")
        self.dim = center_a.shape[0]
        self.weights = np.array([weight_a, weight_b])
        self.centers = np.stack([center_a, center_b])

    def _component_logs(self, thetas: np.ndarray) -> np.ndarray:
        # (n, 2): log w_c + log N(theta; center_c, I)
        diff = thetas[:, None, :] - self.centers[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        return np.log(self.weights)[None, :] - 0.5 * sq - 0.5 * self.dim * LOG_2PI

    def log_unnorm_posterior_many(self, thetas):
        thetas = self._check(thetas)
        return logsumexp(self._component_logs(thetas), axis=1)

    def grad_log_unnorm_posterior_many(self, thetas):
        thetas = self._check(thetas)
        comp = self._component_logs(thetas)
        resp = np.exp(comp - logsumexp(comp, axis=1, keepdims=True))
        diff = self.centers[None, :, :] - thetas[:, None, :]
        return np.sum(resp[:, :, None] * diff, axis=1)

    def in_support_many(self, thetas):
        return np.ones(self._check(thetas).shape[0], dtype=bool)


# ----------------------------------------------------------------------
# radial velocity
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RvPriorConfig:
    """Prior hyperparameters of the radial-velocity model.

    ln P is uniform on [ln_P_min, ln_P_max], the phase is uniform on
    [0, 2 pi), K ~ N(mu_K, sigma_K^2), v0 ~ N(0, sigma_v0^2), and the
    observation noise sigma_obs is treated as known.
    """

    ln_P_min: float = 3.0
    ln_P_max: float = 5.0
    mu_K: float = 5.0
    sigma_K: float = 3.0
    sigma_v0: float = 1.0
    sigma_obs: float = 1.8

    def __post_init__(self):
        if not self.ln_P_min < self.ln_P_max:
            raise ValueError("ln_P_min must be < ln_P_max")
        for name in ("sigma_K", "sigma_v0", "sigma_obs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class RvDataset:
    """Observation times and measured velocities."""

    times: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.velocities.shape:
            raise ValueError("times and velocities must be equal-length vectors")
        if self.times.size < 1:
            raise ValueError("dataset must contain at least one observation")
        if not np.all(np.isfinite(self.times)):
            raise ValueError("times must be finite")

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,v\n")
        for t, v in zip(self.times, self.velocities):
            buf.write(f"{t:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RvDataset":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or lines[0].strip() != "t,v":
            raise ValueError("expected CSV header 't,v'")
        rows = [ln.split(",") for ln in lines[1:]]
        return cls(
            np.array([float(r[0]) for r in rows]),
            np.array([float(r[1]) for r in rows]),
        )


def rv_model(t, theta) -> np.ndarray | float:
    """Circular-orbit radial velocity v0 + K cos(2 pi t / P + phi0).

    ``theta`` is (v0, K, phi0, ln P); the period enters as exp(ln P).
    ``t`` may be a scalar or an array.
    """
    v0, amp, phi0, ln_period = (float(v) for v in np.asarray(theta, dtype=float))
    omega = 2.0 * np.pi * np.exp(-ln_period)
    return v0 + amp * np.cos(omega * np.asarray(t, dtype=float) + phi0)


def rv_generate_observations(truth, times, sigma_obs: float, rng: np.random.Generator) -> RvDataset:
    """Noisy observations of the model curve: independent N(0, sigma_obs^2) errors."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times must be nonempty")
    clean = rv_model(times, truth)
    noise = rng.normal(0.0, sigma_obs, size=times.shape) if sigma_obs > 0 else 0.0
    return RvDataset(times, clean + noise)


class RadialVelocityTarget(TargetPosterior):
    """Posterior over (v0, K, phi0, ln P) for a circular-orbit RV model.

    The support is the prior box of phi0 and ln P; uniform prior terms are
    included as exact constants inside the support so that absolute
    evidence values are meaningful.
    """

    dim = 4

    def __init__(self, dataset: RvDataset, prior: RvPriorConfig):
        self.dataset = dataset
        self.prior = prior
        # constants: uniform prior log-densities and Gaussian normalizers
        self._log_prior_const = (
            -np.log(prior.ln_P_max - prior.ln_P_min)
            - np.log(2.0 * np.pi)
            - np.log(prior.sigma_K) - 0.5 * LOG_2PI
            - np.log(prior.sigma_v0) - 0.5 * LOG_2PI
        )
        self._log_lik_const = -len(dataset) * (np.log(prior.sigma_obs) + 0.5 * LOG_2PI)

    def in_support_many(self, thetas):
        thetas = self._check(thetas)
        phi0 = thetas[:, 2]
        ln_period = thetas[:, 3]
        return (
            (phi0 >= 0.0)
            & (phi0 < 2.0 * np.pi)
            & (ln_period >= self.prior.ln_P_min)
            & (ln_period <= self.prior.ln_P_max)
        )

    def _model_matrix(self, thetas):
        # returns (predicted velocities (n, N), cos phase (n, N), sin phase (n, N), omega (n,))
        t = self.dataset.times[None, :]
        # far outside the prior box exp(-lnP) overflows; the result is nan
        # there and callers must mask by in_support_many, so keep it quiet
        with np.errstate(over="ignore", invalid="ignore"):
            omega = 2.0 * np.pi * np.exp(-thetas[:, 3])
            phase = omega[:, None] * t + thetas[:, 2][:, None]
            cos_p = np.cos(phase)
            sin_p = np.sin(phase)
            pred = thetas[:, 0][:, None] + thetas[:, 1][:, None] * cos_p
        return pred, cos_p, sin_p, omega

    def log_unnorm_posterior_many(self, thetas):
        # the prior carries the -inf support mask
        return self.log_likelihood_many(thetas) + self.log_prior_many(thetas)

    def log_prior_many(self, thetas):
        thetas = self._check(thetas)
        ok = self.in_support_many(thetas)
        out = np.full(thetas.shape[0], -np.inf)
        if np.any(ok):
            sub = thetas[ok]
            out[ok] = (
                -0.5 * (sub[:, 0] / self.prior.sigma_v0) ** 2
                - 0.5 * ((sub[:, 1] - self.prior.mu_K) / self.prior.sigma_K) ** 2
                + self._log_prior_const
            )
        return out

    def grad_log_unnorm_posterior_many(self, thetas):
        thetas = self._check(thetas)
        pred, cos_p, sin_p, omega = self._model_matrix(thetas)
        resid = self.dataset.velocities[None, :] - pred
        w = resid / self.prior.sigma_obs**2
        amp = thetas[:, 1][:, None]
        t = self.dataset.times[None, :]
        grad = np.empty_like(thetas)
        grad[:, 0] = w.sum(axis=1) - thetas[:, 0] / self.prior.sigma_v0**2
        grad[:, 1] = np.sum(w * cos_p, axis=1) - (thetas[:, 1] - self.prior.mu_K) / self.prior.sigma_K**2
        grad[:, 2] = np.sum(w * (-amp * sin_p), axis=1)
        # d omega / d lnP = -omega, so dv/dlnP = K t omega sin(phase)
        grad[:, 3] = np.sum(w * (amp * omega[:, None] * t * sin_p), axis=1)
        return grad

    def log_likelihood_many(self, thetas):
        """Gaussian log-likelihood alone; finite throughout the prior box."""
        thetas = self._check(thetas)
        pred, _, _, _ = self._model_matrix(thetas)
        resid = self.dataset.velocities[None, :] - pred
        return -0.5 * np.sum(resid * resid, axis=1) / self.prior.sigma_obs**2 + self._log_lik_const


def joker_initialize(
    dataset: RvDataset,
    prior: RvPriorConfig,
    num_prior_draws: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Accept-reject initializer over the nonlinear parameters.

    Draws (ln P, phi0) from their priors, solves the 2x2 MAP problem for
    the linear parameters (v0, K) in closed form, then keeps each
    candidate with probability L / L_max, where L_max is the largest
    candidate likelihood in the batch.  Returns the accepted parameter
    vectors; raises if nothing is accepted.
    """
    if num_prior_draws < 1:
        raise ValueError("num_prior_draws must be >= 1")
    ln_periods = rng.uniform(prior.ln_P_min, prior.ln_P_max, size=num_prior_draws)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=num_prior_draws)
    uniforms = rng.uniform(size=num_prior_draws)

    t = dataset.times
    v = dataset.velocities
    n_obs = t.size
    inv_var = 1.0 / prior.sigma_obs**2

    target = RadialVelocityTarget(dataset, prior)
    candidates = []
    draw_index = []
    for k, (ln_period, phi0) in enumerate(zip(ln_periods, phases)):
        omega = 2.0 * np.pi * np.exp(-ln_period)
        c = np.cos(omega * t + phi0)
        # normal equations of the Gaussian-likelihood + Gaussian-prior fit
        a11 = n_obs * inv_var + 1.0 / prior.sigma_v0**2
        a12 = c.sum() * inv_var
        a22 = np.dot(c, c) * inv_var + 1.0 / prior.sigma_K**2
        b1 = v.sum() * inv_var
        b2 = np.dot(v, c) * inv_var + prior.mu_K / prior.sigma_K**2
        det = a11 * a22 - a12 * a12
        if det <= 0 or not np.isfinite(det):
            continue
        v0 = (a22 * b1 - a12 * b2) / det
        amp = (a11 * b2 - a12 * b1) / det
        candidates.append(np.array([v0, amp, phi0, ln_period]))
        draw_index.append(k)

    if not candidates:
        raise ValueError("no solvable candidates; increase num_prior_draws")
    cand = np.stack(candidates)
    log_lik = target.log_likelihood_many(cand)
    log_lik_max = log_lik.max()
    with np.errstate(divide="ignore"):
        log_u = np.log(uniforms[draw_index])
    accepted = [cand[i] for i in range(cand.shape[0]) if log_u[i] < log_lik[i] - log_lik_max]
    if not accepted:
        raise ValueError("no candidates accepted; increase num_prior_draws")
    return accepted
