"""Common interface shared by all posterior targets."""

from __future__ import annotations

import numpy as np


class TargetModel:
    """A log-posterior with derivatives and, optionally, a Fisher metric.

    Subclasses implement ``log_density``, ``grad`` and ``hvp``. Targets that
    carry a Fisher metric override ``fisher`` and set ``has_fisher``. Optional
    extras, each signalled by returning ``None`` or by a ``has_*`` flag:

    * ``fisher_derivative(theta)`` -- array ``dG`` with ``dG[i] = dG/dtheta_i``
    * ``fisher_accel(theta, v)`` -- closed-form geodesic acceleration
    * ``per_datum_scores(theta)`` -- ``(N, D)`` likelihood score vectors
    """

    name = "target"
    dim: int
    has_fisher = False
    has_fisher_derivative = False
    has_fisher_accel = False
    has_scores = False

    def log_density(self, theta):
        raise NotImplementedError

    def grad(self, theta):
        raise NotImplementedError

    def hvp(self, theta, v):
        raise NotImplementedError

    def fisher(self, theta):
        raise NotImplementedError(f"{self.name} target has no Fisher metric")

    def fisher_derivative(self, theta):
        raise NotImplementedError

    def fisher_accel(self, theta, v):
        raise NotImplementedError

    def per_datum_scores(self, theta):
        raise NotImplementedError(f"{self.name} target exposes no per-datum scores")

    def prior_precision_matrix(self):
        """Negative Hessian of the log-prior (constant for Gaussian priors)."""
        raise NotImplementedError

    def hessian(self, theta):
        """Dense Hessian of the log-density assembled column-wise from ``hvp``."""
        theta = np.asarray(theta, dtype=float)
        eye = np.eye(self.dim)
        H = np.column_stack([self.hvp(theta, eye[i]) for i in range(self.dim)])
        return 0.5 * (H + H.T)

    def pushforward(self, psi):
        """Map base-normal draws to target space (diffeomorphic targets only)."""
        raise NotImplementedError(f"{self.name} target has no exact pushforward sampler")

    def base_covariance(self):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim}


def as_vector(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise ValueError(f"expected a vector of shape ({dim},), got {theta.shape}")
    return theta


def require_spd(matrix, what="matrix"):
    """Return the Cholesky factor of ``matrix`` or raise ``ValueError``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{what} must be square, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{what} is not symmetric")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{what} is not positive definite (Cholesky failed)") from exc
