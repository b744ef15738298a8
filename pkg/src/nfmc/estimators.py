"""Importance-sampling estimators built on a trained flow.

The flow is the proposal: draw theta_i from it, weight by
log w_i = log rho_*(theta_i) - log rho_hat(theta_i) where rho_* is the
unnormalized posterior.  The mean weight estimates the evidence; the
squared-sum ratio (sum w)^2 / sum w^2 is the effective sample size.  All
weight arithmetic stays in the log domain (a max shift before
exponentiation), since weights from a poorly trained flow can span
hundreds of orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import RealNvpFlow
from .targets import TargetPosterior

__all__ = [
    "WeightedSamples",
    "ModeIndicator",
    "EvidenceEstimate",
    "importance_weights",
    "evidence_estimate",
    "mode_log_mass",
    "log_evidence_difference",
]


@dataclass
class WeightedSamples:
    """Flow draws with unnormalized log importance weights.

    ``log_weights[i]`` is finite for in-support points and -inf where the
    target density vanishes.
    """

    thetas: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.thetas.ndim != 2 or self.log_weights.shape != (self.thetas.shape[0],):
            raise ValueError("thetas must be (n, d) with one log weight per row")
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("log weights must lie in [-inf, inf)")

    def __len__(self) -> int:
        return self.thetas.shape[0]


@dataclass(frozen=True)
class ModeIndicator:
    """Euclidean ball used to restrict weight sums to one posterior mode."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("radius must be > 0")

    def contains(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        diff = thetas - self.center
        return np.sum(diff * diff, axis=1) <= self.radius**2


@dataclass(frozen=True)
class EvidenceEstimate:
    log_z_hat: float
    z_hat: float
    std_error: float
    n_eff: float
    n: int


def importance_weights(
    flow: RealNvpFlow, target: TargetPosterior, count: int, rng: np.random.Generator
) -> WeightedSamples:
    """Draw ``count`` flow samples and attach their log importance weights."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if flow.dim != target.dim:
        raise ValueError(f"flow dim {flow.dim} does not match target dim {target.dim}")
    thetas, log_rho_hat = flow.sample(rng, count)
    if not np.all(np.isfinite(log_rho_hat)):
        bad = int(np.flatnonzero(~np.isfinite(log_rho_hat))[0])
        raise FloatingPointError(f"non-finite flow log-density at sample {bad}")
    # out-of-support draws get weight zero without evaluating the model
    # there (it may overflow); inside, the grouping lets a prior matching
    # the flow density cancel exactly
    ok = target.in_support_many(thetas)
    log_weights = np.full(count, -np.inf)
    if np.any(ok):
        sub = thetas[ok]
        log_weights[ok] = target.log_likelihood_many(sub) + (
            target.log_prior_many(sub) - log_rho_hat[ok]
        )
    return WeightedSamples(thetas, log_weights)


def evidence_estimate(samples: WeightedSamples) -> EvidenceEstimate:
    """Evidence, its standard error and the effective sample size.

    Z_hat is the sample mean of the weights, evaluated as a shifted sum so
    only ratios to the largest weight are ever exponentiated.  The error
    estimate is the empirical weight standard deviation divided by
    sqrt(n_eff) with n_eff = (sum w)^2 / sum w^2.
    """
    n = len(samples)
    if n == 0:
        raise ValueError("no samples")
    lw = samples.log_weights
    if not np.any(np.isfinite(lw)):
        raise ValueError("flow support misses target: all importance weights are zero")
    m = float(np.max(lw))
    v = np.exp(lw - m)
    s1 = float(np.sum(v))
    s2 = float(np.sum(v * v))
    # grouped so equal weights give log_z_hat = m exactly
    log_z_hat = m + (np.log(s1) - np.log(n))
    # Cauchy-Schwarz bounds can be missed by an ulp in float arithmetic
    n_eff = min(max(s1 * s1 / s2, 1.0), float(n))
    std_v = float(np.std(v))
    with np.errstate(over="ignore"):
        std_error = float(np.exp(m) * std_v / np.sqrt(n_eff))
        z_hat = float(np.exp(log_z_hat))
    return EvidenceEstimate(
        log_z_hat=float(log_z_hat),
        z_hat=z_hat,
        std_error=std_error,
        n_eff=float(n_eff),
        n=n,
    )


def mode_log_mass(samples: WeightedSamples, mode: ModeIndicator, label: str = "mode") -> float:
    """log of the weight sum restricted to the indicator ball."""
    inside = mode.contains(samples.thetas)
    lw = samples.log_weights[inside]
    lw = lw[np.isfinite(lw)]
    if lw.size == 0:
        raise ValueError(f"{label}: no finite-weight samples inside the indicator ball")
    m = float(np.max(lw))
    return m + float(np.log(np.sum(np.exp(lw - m))))


def log_evidence_difference(
    samples: WeightedSamples, mode_a: ModeIndicator, mode_b: ModeIndicator
) -> float:
    """log Z_A - log Z_B from one weighted sample set; Z_* cancels."""
    mass_a = mode_log_mass(samples, mode_a, label="mode A")
    mass_b = mode_log_mass(samples, mode_b, label="mode B")
    return mass_a - mass_b
