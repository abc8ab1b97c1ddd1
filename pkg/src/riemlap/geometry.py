"""Metric fields and geodesic accelerations.

Every metric exposes ``tensor``, ``inverse_apply``, ``accel`` (the contraction
``a^k = -Gamma^k_ij v^i v^j``), ``log_det`` and ``log_det_grad``. Derivatives of
the metric are stored as ``dG[i] = dG/dtheta_i``.
"""

from __future__ import annotations

from functools import partial

import numpy as np

from .targets import TargetModel, empirical_fisher
from .targets.logistic import logistic_accel  # noqa: F401  (re-exported)
from .targets.mlp import mlp_accel  # noqa: F401  (re-exported)

EPS = np.finfo(float).eps
FD_STEP = EPS ** (1.0 / 3.0)
FULL_TENSOR_MAX_DIM = 64


class NonSPDMetricError(np.linalg.LinAlgError):
    def __init__(self, theta, what="metric tensor"):
        self.theta = np.array(theta, dtype=float, copy=True)
        super().__init__(f"{what} is not positive definite at theta={self.theta.tolist()}")


def spd_cholesky(G, theta=None, what="metric tensor"):
    """Cholesky factor of ``G``; one diagonal jitter retry before giving up."""
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        pass
    if np.all(np.isfinite(G)):
        jitter = 1e-9 * max(float(np.mean(np.diag(G))), EPS)
        try:
            return np.linalg.cholesky(G + jitter * np.eye(G.shape[0]))
        except np.linalg.LinAlgError:
            pass
    raise NonSPDMetricError(theta if theta is not None else np.full(G.shape[0], np.nan), what)


def chol_solve(L, w):
    return np.linalg.solve(L.T, np.linalg.solve(L, w))


def christoffel_contract(G, dG, v, theta=None):
    """``-G^-1 * 1/2 (p1 + p2 - p3)`` for a metric with derivative array ``dG``."""
    M = np.tensordot(v, dG, axes=(0, 0))          # sum_i v_i dG_i
    p12 = 2.0 * (M @ v)                           # p1 == p2 for symmetric G
    p3 = np.einsum("lij,i,j->l", dG, v, v)
    L = spd_cholesky(G, theta)
    return -chol_solve(L, 0.5 * (p12 - p3))


def _steps(theta, h):
    return h * (1.0 + np.abs(theta))


def metric_derivative_fd(tensor_fn, theta, h=FD_STEP):
    """Central-difference derivative array ``dG[i] = dG/dtheta_i``."""
    theta = np.asarray(theta, dtype=float)
    D = theta.size
    steps = _steps(theta, h)
    dG = np.empty((D, D, D))
    for i in range(D):
        e = np.zeros(D)
        e[i] = steps[i]
        dG[i] = (tensor_fn(theta + e) - tensor_fn(theta - e)) / (2.0 * steps[i])
    return 0.5 * (dG + dG.transpose(0, 2, 1))


def numeric_accel(tensor_fn, theta, v, h=FD_STEP):
    """Geodesic acceleration from central differences of the metric tensor.

    Up to ``FULL_TENSOR_MAX_DIM`` dimensions the full derivative array is
    formed. Above that, ``sum_i v_i dG_i`` is a single directional difference
    and the ``v^T dG_l v`` terms come from one probe per coordinate, so memory
    stays ``O(D^2)``.
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    D = theta.size
    if D <= FULL_TENSOR_MAX_DIM:
        return christoffel_contract(tensor_fn(theta), metric_derivative_fd(tensor_fn, theta, h),
                                    v, theta)
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return np.zeros(D)
    step = h * (1.0 + np.linalg.norm(theta)) / vnorm
    M = (tensor_fn(theta + step * v) - tensor_fn(theta - step * v)) / (2.0 * step)
    steps = _steps(theta, h)
    p3 = np.empty(D)
    for l in range(D):
        e = np.zeros(D)
        e[l] = steps[l]
        dGl = (tensor_fn(theta + e) - tensor_fn(theta - e)) / (2.0 * steps[l])
        p3[l] = v @ dGl @ v
    L = spd_cholesky(tensor_fn(theta), theta)
    return -chol_solve(L, 0.5 * (2.0 * (M @ v) - p3))


def monge_accel(grad, hvp_v, v):
    """Closed-form acceleration for ``G = I + g g^T``: ``-(v.Hv) g / (1 + |g|^2)``."""
    grad = np.asarray(grad, dtype=float)
    return -(np.dot(v, hvp_v) / (1.0 + grad @ grad)) * grad


def monge_inverse_apply(grad, w):
    """Sherman-Morrison solve of ``(I + g g^T) x = w``."""
    grad = np.asarray(grad, dtype=float)
    w = np.asarray(w, dtype=float)
    return w - grad * (grad @ w) / (1.0 + grad @ grad)


def log_det_grad(tensor_fn, theta, h=FD_STEP):
    """Central-difference gradient of ``log det G(theta)``."""
    theta = np.asarray(theta, dtype=float)
    steps = _steps(theta, h)
    out = np.empty(theta.size)
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = steps[i]
        out[i] = (_logdet(tensor_fn(theta + e), theta + e)
                  - _logdet(tensor_fn(theta - e), theta - e)) / (2.0 * steps[i])
    return out


def _logdet(G, theta=None):
    L = spd_cholesky(G, theta)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


class MetricField:
    """Base class; subclasses provide at least ``tensor`` and ``accel``."""

    dim: int
    name = "metric"

    def tensor(self, theta):
        raise NotImplementedError

    def accel(self, theta, v):
        raise NotImplementedError

    def inverse_apply(self, theta, w):
        return chol_solve(spd_cholesky(self.tensor(theta), theta), w)

    def log_det(self, theta):
        return _logdet(self.tensor(theta), theta)

    def log_det_grad(self, theta):
        return log_det_grad(self.tensor, theta)

    def norm_sq(self, theta, v):
        v = np.asarray(v, dtype=float)
        return float(v @ self.tensor(theta) @ v)

    def accel_batch(self, thetas, vs):
        """Row-wise ``accel``; subclasses with vectorised forms override this."""
        return np.array([self.accel(th, v) for th, v in zip(thetas, vs)])


class EuclideanMetric(MetricField):
    name = "euclidean"

    def __init__(self, dim):
        self.dim = int(dim)

    def tensor(self, theta):
        return np.eye(self.dim)

    def accel(self, theta, v):
        return np.zeros(self.dim)

    def accel_batch(self, thetas, vs):
        return np.zeros(np.shape(vs))

    def inverse_apply(self, theta, w):
        return np.array(w, dtype=float, copy=True)

    def log_det(self, theta):
        return 0.0

    def log_det_grad(self, theta):
        return np.zeros(self.dim)

    def norm_sq(self, theta, v):
        v = np.asarray(v, dtype=float)
        return float(v @ v)


class _MongeBase(MetricField):
    def _grad(self, theta):
        raise NotImplementedError

    def _hvp(self, theta, v):
        raise NotImplementedError

    def tensor(self, theta):
        g = self._grad(theta)
        return np.eye(self.dim) + np.outer(g, g)

    def accel(self, theta, v):
        return monge_accel(self._grad(theta), self._hvp(theta, v), v)

    def _grad_batch(self, thetas):
        return np.array([self._grad(th) for th in thetas])

    def _hvp_batch(self, thetas, vs):
        return np.array([self._hvp(th, v) for th, v in zip(thetas, vs)])

    def accel_batch(self, thetas, vs):
        G = self._grad_batch(thetas)
        coef = -np.einsum("ij,ij->i", vs, self._hvp_batch(thetas, vs))
        return (coef / (1.0 + np.einsum("ij,ij->i", G, G)))[:, None] * G

    def inverse_apply(self, theta, w):
        return monge_inverse_apply(self._grad(theta), w)

    def log_det(self, theta):
        g = self._grad(theta)
        return float(np.log1p(g @ g))

    def log_det_grad(self, theta):
        g = self._grad(theta)
        return 2.0 * self._hvp(theta, g) / (1.0 + g @ g)

    def norm_sq(self, theta, v):
        v = np.asarray(v, dtype=float)
        return float(v @ v + np.dot(v, self._grad(theta)) ** 2)


class MongeMetric(_MongeBase):
    """``G(theta) = I + grad l(theta) grad l(theta)^T`` for a target log-density ``l``."""

    name = "monge"

    def __init__(self, target: TargetModel):
        self.target = target
        self.dim = target.dim

    def _grad(self, theta):
        return self.target.grad(theta)

    def _hvp(self, theta, v):
        return self.target.hvp(theta, v)


class GaussianMongeMetric(_MongeBase):
    """Monge metric induced by ``N(center, Sigma)``, parameterised by ``Sigma^-1``."""

    name = "gaussian_monge"

    def __init__(self, center, precision):
        self.center = np.asarray(center, dtype=float)
        self.precision = np.asarray(precision, dtype=float)
        self.dim = self.center.size
        spd_cholesky(self.precision, self.center, "precision")

    def _grad(self, theta):
        return -self.precision @ (np.asarray(theta, dtype=float) - self.center)

    def _hvp(self, theta, v):
        return -self.precision @ np.asarray(v, dtype=float)

    def _grad_batch(self, thetas):
        return -(thetas - self.center) @ self.precision

    def _hvp_batch(self, thetas, vs):
        return -vs @ self.precision


class TensorMetric(MetricField):
    """Metric given by an explicit tensor function.

    The acceleration uses, in order of preference: a closed-form ``accel_fn``,
    the analytic derivative ``dtensor_fn``, or central differences.
    """

    name = "tensor"

    def __init__(self, dim, tensor_fn, dtensor_fn=None, accel_fn=None, name=None):
        self.dim = int(dim)
        self._tensor = tensor_fn
        self._dtensor = dtensor_fn
        self._accel = accel_fn
        if name:
            self.name = name

    def tensor(self, theta):
        return self._tensor(theta)

    def accel(self, theta, v):
        if self._accel is not None:
            return self._accel(theta, v)
        if self._dtensor is not None:
            return christoffel_contract(self._tensor(theta), self._dtensor(theta), v, theta)
        return numeric_accel(self._tensor, theta, v)

    def numeric_accel(self, theta, v):
        return numeric_accel(self._tensor, theta, v)

    def log_det_grad(self, theta):
        if self._dtensor is None:
            return log_det_grad(self._tensor, theta)
        L = spd_cholesky(self._tensor(theta), theta)
        dG = self._dtensor(theta)
        return np.array([np.trace(chol_solve(L, dG[i])) for i in range(self.dim)])


def fisher_metric(target: TargetModel) -> TensorMetric:
    if not target.has_fisher:
        raise ValueError(f"target {target.name!r} has no Fisher metric")
    return TensorMetric(
        target.dim, target.fisher,
        dtensor_fn=target.fisher_derivative if target.has_fisher_derivative else None,
        accel_fn=target.fisher_accel if target.has_fisher_accel else None,
        name="fisher",
    )


def empirical_fisher_metric(target: TargetModel) -> TensorMetric:
    """Empirical Fisher metric; Christoffel symbols always by finite differences."""
    if not target.has_scores:
        raise ValueError(f"target {target.name!r} exposes no per-datum scores")
    return TensorMetric(target.dim, partial(empirical_fisher, target), name="empirical_fisher")
