"""Affine whitening of target parameters.

Given samples theta_1..theta_n, compute the empirical mean and covariance
(divisor n), eigendecompose the covariance with a cyclic Jacobi sweep and
form W = O D^{-1/2} O^T.  Whitened coordinates are theta_w = W (theta - mean).
``whitened_target`` wraps a posterior so the whole sampling pipeline can
run in whitened coordinates; the wrapper adds the constant log|det W^-1|,
which keeps the normalization (and hence any evidence estimate) equal to
that of the original parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import TargetPosterior

__all__ = [
    "WhiteningTransform",
    "empirical_moments",
    "symmetric_eig",
    "build_whitening",
    "whitened_target",
]


def empirical_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the rows of ``samples``, covariance divisor n."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples for empirical moments")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / n
    return mean, 0.5 * (cov + cov.T)


def symmetric_eig(matrix, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (O, eigenvalues) with the eigenvalues sorted descending and
    matrix = O diag(eigenvalues) O^T.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if a.size and np.max(np.abs(a - a.T)) > 1e-10:
        raise ValueError("matrix is not symmetric")
    d = a.shape[0]
    a = 0.5 * (a + a.T)
    o = np.eye(d)
    scale = max(float(np.max(np.abs(a))), 1.0) if d else 1.0

    def max_off_diag() -> float:
        return float(np.max(np.abs(a - np.diag(np.diag(a))))) if d > 1 else 0.0

    for _ in range(max_sweeps):
        if max_off_diag() <= 1e-15 * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.hypot(theta, 1.0))
                else:
                    t = -1.0 / (-theta + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with the rotation J acting in the (p, q) plane
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                ocp, ocq = o[:, p].copy(), o[:, q].copy()
                o[:, p] = c * ocp - s * ocq
                o[:, q] = s * ocp + c * ocq
    else:
        if max_off_diag() > 1e-15 * scale:
            raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return o[:, order], vals[order]


@dataclass
class WhiteningTransform:
    """The affine map theta_w = w_matrix (theta - mean) and its inverse."""

    mean: np.ndarray
    w_matrix: np.ndarray
    w_inverse: np.ndarray
    log_abs_det_w: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_whitened(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        return (thetas - self.mean) @ self.w_matrix.T

    def to_original(self, thetas_w: np.ndarray) -> np.ndarray:
        thetas_w = np.asarray(thetas_w, dtype=float)
        return thetas_w @ self.w_inverse.T + self.mean

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "w_matrix": self.w_matrix.tolist(),
            "w_inverse": self.w_inverse.tolist(),
            "log_abs_det_w": self.log_abs_det_w,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "WhiteningTransform":
        return cls(
            mean=np.asarray(data["mean"], dtype=float),
            w_matrix=np.asarray(data["w_matrix"], dtype=float),
            w_inverse=np.asarray(data["w_inverse"], dtype=float),
            log_abs_det_w=float(data["log_abs_det_w"]),
        )

    @classmethod
    def identity(cls, dim: int) -> "WhiteningTransform":
        return cls(np.zeros(dim), np.eye(dim), np.eye(dim), 0.0)


def build_whitening(samples, eigenvalue_floor: float | None = None) -> WhiteningTransform:
    """Whitening transform W = O D^{-1/2} O^T from empirical moments.

    Eigenvalues are clamped below at ``eigenvalue_floor`` before the
    inverse square root, so rank-deficient sample sets still give a finite
    transform.  The default floor is 1e-10 times the largest eigenvalue.
    """
    mean, cov = empirical_moments(samples)
    o, vals = symmetric_eig(cov)
    lam_max = float(vals[0])
    if eigenvalue_floor is None:
        eigenvalue_floor = 1e-10 * lam_max
    if not eigenvalue_floor > 0.0:
        raise ValueError(
            "eigenvalue floor must be positive; pass one explicitly when the "
            "sample covariance is identically zero"
        )
    clamped = np.maximum(vals, eigenvalue_floor)
    w = (o / np.sqrt(clamped)) @ o.T
    w_inv = (o * np.sqrt(clamped)) @ o.T
    return WhiteningTransform(
        mean=mean,
        w_matrix=0.5 * (w + w.T),
        w_inverse=0.5 * (w_inv + w_inv.T),
        log_abs_det_w=float(-0.5 * np.sum(np.log(clamped))),
    )


class _WhitenedTarget(TargetPosterior):
    """A posterior re-expressed in whitened coordinates.

    Densities pick up the constant Jacobian log|det W^-1|, so evidence
    computed in whitened coordinates equals evidence in the original ones.
    """

    def __init__(self, target: TargetPosterior, transform: WhiteningTransform):
        self.dim = target.dim
        self.target = target
        self.transform = transform

    def log_unnorm_posterior_many(self, thetas):
        thetas = self._check(thetas)
        orig = self.transform.to_original(thetas)
        return self.target.log_unnorm_posterior_many(orig) - self.transform.log_abs_det_w

    def log_likelihood_many(self, thetas):
        thetas = self._check(thetas)
        return self.target.log_likelihood_many(self.transform.to_original(thetas))

    def log_prior_many(self, thetas):
        # the Jacobian constant lives with the prior factor
        thetas = self._check(thetas)
        orig = self.transform.to_original(thetas)
        return self.target.log_prior_many(orig) - self.transform.log_abs_det_w

    def grad_log_unnorm_posterior_many(self, thetas):
        thetas = self._check(thetas)
        orig = self.transform.to_original(thetas)
        grads = self.target.grad_log_unnorm_posterior_many(orig)
        # chain rule through theta = mean + W^-1 theta_w; W^-1 is symmetric
        return grads @ self.transform.w_inverse

    def in_support_many(self, thetas):
        thetas = self._check(thetas)
        return self.target.in_support_many(self.transform.to_original(thetas))


def whitened_target(target: TargetPosterior, transform: WhiteningTransform) -> TargetPosterior:
    """Wrap ``target`` so samplers and flow operate on whitened parameters."""
    if transform.dim != target.dim:
        raise ValueError(f"transform dim {transform.dim} does not match target dim {target.dim}")
    return _WhitenedTarget(target, transform)
