"""Regression with a 1-H-1 tanh network and a Gaussian likelihood.

Parameters are packed as ``[w1 (H), b1 (H), w2 (H), b2]`` so that
``f(x) = w2 . tanh(w1 * x + b1) + b2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import TargetModel, as_vector
from .datasets import Dataset, DatasetError


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 10
    noise_std: float = 0.3
    prior_prec: float = 1.0

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.noise_std <= 0 or self.prior_prec <= 0:
            raise ValueError("noise_std and prior_prec must be positive")

    @property
    def n_params(self) -> int:
        return 3 * self.hidden + 1


def _unpack(theta, H):
    return theta[:H], theta[H:2 * H], theta[2 * H:3 * H], theta[3 * H]


def mlp_forward(theta, x, hidden):
    w1, b1, w2, b2 = _unpack(theta, hidden)
    h = np.tanh(np.outer(x, w1) + b1)
    return h @ w2 + b2


def mlp_forward_batch(thetas, x, hidden):
    """Predictions for many parameter vectors at once, shape ``(S, N)``."""
    thetas = np.atleast_2d(thetas)
    H = hidden
    w1, b1, w2, b2 = thetas[:, :H], thetas[:, H:2 * H], thetas[:, 2 * H:3 * H], thetas[:, 3 * H]
    h = np.tanh(x[None, :, None] * w1[:, None, :] + b1[:, None, :])
    return np.einsum("snh,sh->sn", h, w2) + b2[:, None]


class MlpTarget(TargetModel):
    name = "mlp"
    has_fisher = True
    has_fisher_accel = True
    has_scores = True

    def __init__(self, cfg: MlpConfig, data: Dataset):
        if data.X.shape[1] != 1:
            raise DatasetError(f"MLP target expects 1-D inputs, got {data.X.shape[1]} columns")
        self.cfg = cfg
        self.data = data
        self.x = data.X[:, 0]
        self.y = data.y
        self.H = cfg.hidden
        self.dim = cfg.n_params
        self._inv_var = 1.0 / cfg.noise_std**2

    def _hidden(self, theta):
        w1, b1, w2, b2 = _unpack(theta, self.H)
        h = np.tanh(np.outer(self.x, w1) + b1)
        return h, w1, b1, w2, b2

    def predict(self, theta, x=None):
        x = self.x if x is None else np.asarray(x, dtype=float).ravel()
        return mlp_forward(as_vector(theta, self.dim), x, self.H)

    def jacobian(self, theta):
        """Per-datum gradients of the network output, shape ``(N, D)``."""
        theta = as_vector(theta, self.dim)
        h, _, _, w2, _ = self._hidden(theta)
        g = w2 * (1.0 - h**2)
        return np.hstack([g * self.x[:, None], g, h, np.ones((self.x.size, 1))])

    def _hess_f_dot(self, theta, v):
        """Rows ``(grad^2 f_n) v`` and curvatures ``v^T (grad^2 f_n) v``."""
        h, _, _, w2, _ = self._hidden(theta)
        dw1, db1, dw2, _ = _unpack(v, self.H)
        hp = 1.0 - h**2
        hpp = -2.0 * h * hp
        dz = np.outer(self.x, dw1) + db1
        c = w2 * hpp * dz + dw2 * hp
        rows = np.hstack([c * self.x[:, None], c, hp * dz, np.zeros((self.x.size, 1))])
        curv = np.sum(w2 * hpp * dz**2 + 2.0 * dw2 * hp * dz, axis=1)
        return rows, curv

    def curvature(self, theta, v):
        """Second directional derivatives ``v^T grad^2 f(x_n) v`` for every datum."""
        return self._hess_f_dot(as_vector(theta, self.dim), np.asarray(v, dtype=float))[1]

    def log_density(self, theta):
        theta = as_vector(theta, self.dim)
        r = self.y - mlp_forward(theta, self.x, self.H)
        return float(-0.5 * self._inv_var * r @ r - 0.5 * self.cfg.prior_prec * theta @ theta)

    def grad(self, theta):
        theta = as_vector(theta, self.dim)
        r = self.y - mlp_forward(theta, self.x, self.H)
        return self._inv_var * self.jacobian(theta).T @ r - self.cfg.prior_prec * theta

    def hvp(self, theta, v):
        theta = as_vector(theta, self.dim)
        v = np.asarray(v, dtype=float)
        J = self.jacobian(theta)
        r = self.y - mlp_forward(theta, self.x, self.H)
        rows, _ = self._hess_f_dot(theta, v)
        return (self._inv_var * (-J.T @ (J @ v) + rows.T @ r)
                - self.cfg.prior_prec * v)

    def fisher(self, theta):
        J = self.jacobian(theta)
        G = self._inv_var * J.T @ J
        G[np.diag_indices_from(G)] += self.cfg.prior_prec
        return G

    def fisher_accel(self, theta, v):
        return mlp_accel(self, theta, v)

    def per_datum_scores(self, theta):
        theta = as_vector(theta, self.dim)
        r = self.y - mlp_forward(theta, self.x, self.H)
        return (self._inv_var * r)[:, None] * self.jacobian(theta)

    def prior_precision_matrix(self):
        return self.cfg.prior_prec * np.eye(self.dim)

    def describe(self):
        return {"name": self.name, "dim": self.dim, "hidden": self.H, "n": self.data.n,
                "noise_std": self.cfg.noise_std, "prior_prec": self.cfg.prior_prec}


def mlp_accel(target: MlpTarget, theta, v):
    """Geodesic acceleration of the pullback Fisher metric,
    ``-(1/sigma^2) G^-1 J^T h`` with ``h_n = v^T grad^2 f(x_n) v``."""
    theta = as_vector(theta, target.dim)
    v = np.asarray(v, dtype=float)
    J = target.jacobian(theta)
    _, curv = target._hess_f_dot(theta, v)
    G = target._inv_var * J.T @ J
    G[np.diag_indices_from(G)] += target.cfg.prior_prec
    L = np.linalg.cholesky(G)
    rhs = target._inv_var * J.T @ curv
    return -np.linalg.solve(L.T, np.linalg.solve(L, rhs))


def mlp_target(cfg: MlpConfig, data: Dataset) -> MlpTarget:
    return MlpTarget(cfg, data)
