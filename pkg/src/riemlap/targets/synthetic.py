"""Low-dimensional synthetic targets: Gaussian, banana, squiggle and funnel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import TargetModel, as_vector, require_spd

LOG_2PI = np.log(2.0 * np.pi)


class GaussianTarget(TargetModel):
    """Multivariate normal ``N(mean, cov)``; its Fisher metric is ``cov^-1``."""

    name = "gaussian"
    has_fisher = True
    has_fisher_derivative = True
    has_fisher_accel = True

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean of length {mean.size}")
        self.cov_chol = require_spd(cov, "covariance")
        self.mean = mean
        self.cov = cov
        self.dim = mean.size
        inv_chol = np.linalg.inv(self.cov_chol)
        self.precision = inv_chol.T @ inv_chol
        self._log_norm = -0.5 * self.dim * LOG_2PI - np.sum(np.log(np.diag(self.cov_chol)))

    def log_density(self, theta):
        r = as_vector(theta, self.dim) - self.mean
        return float(self._log_norm - 0.5 * r @ self.precision @ r)

    def grad(self, theta):
        return -self.precision @ (as_vector(theta, self.dim) - self.mean)

    def hvp(self, theta, v):
        return -self.precision @ np.asarray(v, dtype=float)

    def fisher(self, theta):
        return self.precision.copy()

    def fisher_derivative(self, theta):
        return np.zeros((self.dim, self.dim, self.dim))

    def fisher_accel(self, theta, v):
        return np.zeros(self.dim)

    def prior_precision_matrix(self):
        return self.precision.copy()

    def pushforward(self, psi):
        return self.mean + np.asarray(psi, dtype=float)

    def base_covariance(self):
        return self.cov.copy()

    def describe(self):
        return {"name": self.name, "dim": self.dim,
                "mean": self.mean.tolist(), "cov": self.cov.tolist()}


def gaussian_target(mean, cov) -> GaussianTarget:
    return GaussianTarget(mean, cov)


@dataclass(frozen=True)
class BananaConfig:
    sigma_theta: float = 2.0
    sigma_y: float = 2.0
    n_obs: int = 100
    theta1_true: float = 0.5
    theta2sq_true: float = 0.75

    def __post_init__(self):
        if self.sigma_theta <= 0 or self.sigma_y < 0:
            raise ValueError("sigma_theta must be > 0 and sigma_y >= 0")
        if self.n_obs < 1:
            raise ValueError("n_obs must be >= 1")


def generate_banana_data(cfg: BananaConfig, seed: int) -> np.ndarray:
    """Draw ``y_n = theta1 + theta2^2 + sigma_y * eps_n`` from a seeded generator."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(cfg.n_obs)
    return cfg.theta1_true + cfg.theta2sq_true + cfg.sigma_y * eps


class BananaTarget(TargetModel):
    """Posterior of ``y_n ~ N(theta1 + theta2^2, sigma_y^2)`` with iid normal prior."""

    name = "banana"
    dim = 2
    has_fisher = True
    has_fisher_derivative = True
    has_scores = True

    def __init__(self, cfg: BananaConfig, data):
        data = np.asarray(data, dtype=float).ravel()
        if data.size < 1 or not np.all(np.isfinite(data)):
            raise ValueError("banana data must be a non-empty finite vector")
        if cfg.sigma_y <= 0:
            raise ValueError("banana target needs sigma_y > 0")
        self.cfg = cfg
        self.data = data
        self.n = data.size
        self._sum_y = float(data.sum())
        self._py = 1.0 / cfg.sigma_y**2
        self._pt = 1.0 / cfg.sigma_theta**2

    def _resid_sum(self, theta):
        return self._sum_y - self.n * (theta[0] + theta[1] ** 2)

    def log_density(self, theta):
        theta = as_vector(theta, 2)
        r = self.data - theta[0] - theta[1] ** 2
        return float(-0.5 * self._py * r @ r - 0.5 * self._pt * theta @ theta)

    def grad(self, theta):
        theta = as_vector(theta, 2)
        s = self._resid_sum(theta) * self._py
        return np.array([s - self._pt * theta[0], 2.0 * theta[1] * s - self._pt * theta[1]])

    def hvp(self, theta, v):
        return self.hessian(theta) @ np.asarray(v, dtype=float)

    def hessian(self, theta):
        theta = as_vector(theta, 2)
        n, py, pt = self.n, self._py, self._pt
        h11 = -n * py - pt
        h12 = -2.0 * n * theta[1] * py
        h22 = 2.0 * self._resid_sum(theta) * py - 4.0 * n * theta[1] ** 2 * py - pt
        return np.array([[h11, h12], [h12, h22]])

    def fisher(self, theta):
        theta = as_vector(theta, 2)
        n, py, pt = self.n, self._py, self._pt
        off = 2.0 * n * theta[1] * py
        return np.array([[pt + n * py, off], [off, pt + 4.0 * n * theta[1] ** 2 * py]])

    def fisher_derivative(self, theta):
        theta = as_vector(theta, 2)
        c = 2.0 * self.n * self._py
        dG = np.zeros((2, 2, 2))
        dG[1] = [[0.0, c], [c, 4.0 * c * theta[1]]]
        return dG

    def per_datum_scores(self, theta):
        theta = as_vector(theta, 2)
        r = (self.data - theta[0] - theta[1] ** 2) * self._py
        return np.column_stack([r, 2.0 * theta[1] * r])

    def prior_precision_matrix(self):
        return self._pt * np.eye(2)

    def describe(self):
        return {"name": self.name, "dim": 2, "sigma_theta": self.cfg.sigma_theta,
                "sigma_y": self.cfg.sigma_y, "n_obs": self.n}


def banana_target(cfg: BananaConfig, data) -> BananaTarget:
    return BananaTarget(cfg, data)


class SquiggleTarget(TargetModel):
    """``N(psi(theta) | mu, S)`` with the unit-Jacobian shear
    ``psi(theta) = (theta1, theta2 + sin(a * theta1))``."""

    name = "squiggle"
    dim = 2
    has_fisher = True
    has_fisher_derivative = True

    def __init__(self, a: float, S, mu=(0.0, 0.0)):
        S = np.asarray(S, dtype=float)
        if S.shape != (2, 2):
            raise ValueError("squiggle covariance S must be 2x2")
        chol = require_spd(S, "squiggle covariance")
        self.a = float(a)
        self.S = S
        self.mu = np.asarray(mu, dtype=float)
        inv_chol = np.linalg.inv(chol)
        self.P = inv_chol.T @ inv_chol
        self._log_norm = -LOG_2PI - np.sum(np.log(np.diag(chol)))

    def inverse_map(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([theta[..., 0], theta[..., 1] + np.sin(self.a * theta[..., 0])], axis=-1)

    def _jac(self, theta):
        return np.array([[1.0, 0.0], [self.a * np.cos(self.a * theta[0]), 1.0]])

    def log_density(self, theta):
        r = self.inverse_map(as_vector(theta, 2)) - self.mu
        return float(self._log_norm - 0.5 * r @ self.P @ r)

    def grad(self, theta):
        theta = as_vector(theta, 2)
        w = -self.P @ (self.inverse_map(theta) - self.mu)
        return self._jac(theta).T @ w

    def hvp(self, theta, v):
        theta = as_vector(theta, 2)
        v = np.asarray(v, dtype=float)
        J = self._jac(theta)
        w = -self.P @ (self.inverse_map(theta) - self.mu)
        out = -J.T @ (self.P @ (J @ v))
        out[0] += w[1] * (-self.a**2 * np.sin(self.a * theta[0])) * v[0]
        return out

    def fisher(self, theta):
        J = self._jac(as_vector(theta, 2))
        return J.T @ self.P @ J

    def fisher_derivative(self, theta):
        theta = as_vector(theta, 2)
        J = self._jac(theta)
        dJ = np.array([[0.0, 0.0], [-self.a**2 * np.sin(self.a * theta[0]), 0.0]])
        dG = np.zeros((2, 2, 2))
        dG[0] = dJ.T @ self.P @ J + J.T @ self.P @ dJ
        return dG

    def pushforward(self, psi):
        psi = np.asarray(psi, dtype=float) + self.mu
        out = psi.copy()
        out[..., 1] = psi[..., 1] - np.sin(self.a * psi[..., 0])
        return out

    def base_covariance(self):
        return self.S.copy()

    def describe(self):
        return {"name": self.name, "dim": 2, "a": self.a, "S": self.S.tolist(),
                "mu": self.mu.tolist()}


def squiggle_target(a: float, S, mu=(0.0, 0.0)) -> SquiggleTarget:
    return SquiggleTarget(a, S, mu)


class FunnelTarget(TargetModel):
    """Two-dimensional funnel defined as the pushforward of ``N(0, I)`` through
    ``theta = (exp(sigma * psi2 / 2) * psi1, sigma * psi2)``."""

    name = "funnel"
    dim = 2
    has_fisher = True
    has_fisher_derivative = True

    def __init__(self, sigma: float = 3.0):
        if sigma <= 0:
            raise ValueError("funnel sigma must be positive")
        self.sigma = float(sigma)

    def inverse_map(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([theta[..., 0] * np.exp(-0.5 * theta[..., 1]), theta[..., 1] / self.sigma],
                        axis=-1)

    def inverse_jacobian(self, theta):
        e = np.exp(-0.5 * theta[1])
        return np.array([[e, -0.5 * theta[0] * e], [0.0, 1.0 / self.sigma]])

    def log_density(self, theta):
        theta = as_vector(theta, 2)
        psi = self.inverse_map(theta)
        return float(-0.5 * psi @ psi - LOG_2PI - 0.5 * theta[1] - np.log(self.sigma))

    def grad(self, theta):
        t1, t2 = as_vector(theta, 2)
        e = np.exp(-t2)
        return np.array([-t1 * e, 0.5 * t1**2 * e - t2 / self.sigma**2 - 0.5])

    def hvp(self, theta, v):
        return self.hessian(theta) @ np.asarray(v, dtype=float)

    def hessian(self, theta):
        t1, t2 = as_vector(theta, 2)
        e = np.exp(-t2)
        return np.array([[-e, t1 * e], [t1 * e, -0.5 * t1**2 * e - 1.0 / self.sigma**2]])

    def fisher(self, theta):
        Jinv = self.inverse_jacobian(as_vector(theta, 2))
        return Jinv.T @ Jinv

    def fisher_derivative(self, theta):
        t1, t2 = as_vector(theta, 2)
        e = np.exp(-t2)
        dG = np.empty((2, 2, 2))
        dG[0] = [[0.0, -0.5 * e], [-0.5 * e, 0.5 * t1 * e]]
        dG[1] = [[-e, 0.5 * t1 * e], [0.5 * t1 * e, -0.25 * t1**2 * e]]
        return dG

    def pushforward(self, psi):
        psi = np.asarray(psi, dtype=float)
        out = np.empty_like(psi)
        out[..., 0] = np.exp(0.5 * self.sigma * psi[..., 1]) * psi[..., 0]
        out[..., 1] = self.sigma * psi[..., 1]
        return out

    def base_covariance(self):
        return np.eye(2)

    def describe(self):
        return {"name": self.name, "dim": 2, "sigma": self.sigma}


def funnel_target(sigma: float = 3.0) -> FunnelTarget:
    return FunnelTarget(sigma)
