"""MAP search, precision construction and the ELA / RLA sampling variants."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .geodesics import (STATUS_LOG_MAP, STATUS_OK, IntegratorConfig, LogMapError,
                        ShootingConfig, exp_map, log_map)
from .geometry import (GaussianMongeMetric, MetricField, MongeMetric, empirical_fisher_metric,
                       fisher_metric)
from .targets import TargetModel

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    ELA = "ELA"
    RLA_B = "RLA_B"
    RLA_BLOG = "RLA_BLOG"
    RLA_F = "RLA_F"


class MapKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    HAUSDORFF = "hausdorff"


class PrecisionKind(str, enum.Enum):
    NEG_HESSIAN = "neg_hessian"
    FISHER = "fisher"


class MapError(RuntimeError):
    pass


class NonSPDPrecisionError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ApproxConfig:
    variant: Variant = Variant.RLA_F
    map_kind: MapKind = MapKind.EUCLIDEAN
    precision_kind: PrecisionKind = PrecisionKind.NEG_HESSIAN
    n_samples: int = 2000
    seed: int = 0
    integrator: IntegratorConfig = IntegratorConfig()
    shooting: ShootingConfig = ShootingConfig()
    metric: str = "fisher"          # Riemannian metric for RLA_F / Hausdorff MAP
    restarts: int = 20

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "map_kind", MapKind(self.map_kind))
        object.__setattr__(self, "precision_kind", PrecisionKind(self.precision_kind))
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.metric not in ("fisher", "empirical_fisher"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class LaplaceFit:
    theta_hat: np.ndarray
    precision: np.ndarray
    cov_chol: np.ndarray
    precision_kind: PrecisionKind = PrecisionKind.NEG_HESSIAN
    map_kind: MapKind = MapKind.EUCLIDEAN

    @property
    def cov(self):
        return self.cov_chol @ self.cov_chol.T

    @classmethod
    def from_precision(cls, theta_hat, precision, precision_kind=PrecisionKind.NEG_HESSIAN,
                       map_kind=MapKind.EUCLIDEAN):
        precision = 0.5 * (precision + precision.T)
        try:
            Lp = np.linalg.cholesky(precision)
        except np.linalg.LinAlgError as exc:
            raise NonSPDPrecisionError(_non_spd_message(precision_kind, theta_hat)) from exc
        inv_Lp = np.linalg.inv(Lp)
        cov = inv_Lp.T @ inv_Lp
        cov_chol = np.linalg.cholesky(0.5 * (cov + cov.T))
        return cls(np.asarray(theta_hat, dtype=float), precision, cov_chol,
                   PrecisionKind(precision_kind), MapKind(map_kind))


@dataclass
class SampleSet:
    samples: np.ndarray
    nfev: np.ndarray
    statuses: list
    seed: int = 0
    velocities: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ok_mask(self):
        return np.array([s == STATUS_OK for s in self.statuses], dtype=bool)

    @property
    def ok_samples(self):
        return self.samples[self.ok_mask]

    @property
    def n_failed(self) -> int:
        return int(np.sum(~self.ok_mask))

    @property
    def mean_nfev(self) -> float:
        mask = self.ok_mask
        return float(np.mean(self.nfev[mask])) if mask.any() else float("nan")

    def status_counts(self) -> dict:
        out = {}
        for s in self.statuses:
            out[s] = out.get(s, 0) + 1
        return dict(sorted(out.items()))


def _non_spd_message(kind, theta):
    msg = f"{PrecisionKind(kind).value} precision is not positive definite at theta_hat"
    if PrecisionKind(kind) is PrecisionKind.NEG_HESSIAN:
        msg += ("; the negative Hessian need not be positive definite away from a strict "
                "mode (e.g. for neural networks) -- use precision_kind='fisher'")
    return msg


def _multistart(objective, grad, dim, restarts, seed, polish=None):
    rng = np.random.default_rng(seed)
    best_x, best_f = None, np.inf
    for _ in range(restarts):
        x0 = rng.standard_normal(dim)
        try:
            res = minimize(objective, x0, jac=grad, method="L-BFGS-B",
                           options={"maxiter": 100000, "maxfun": 200000,
                                    "gtol": 1e-10, "ftol": 1e-15})
        except (FloatingPointError, np.linalg.LinAlgError, ValueError):
            continue
        x = res.x
        if not np.isfinite(objective(x)):
            continue
        if polish is not None:
            x = polish(x)
        fx = objective(x)
        if np.isfinite(fx) and fx < best_f:
            best_x, best_f = x, fx
    if best_x is None:
        raise MapError(f"all {restarts} MAP restarts ended at non-finite values")
    return best_x


def _newton_polish(target, x, iters=8):
    """A few guarded Newton steps on the log-density (only where -H is SPD)."""
    for _ in range(iters):
        g = target.grad(x)
        if np.max(np.abs(g)) < 1e-12:
            break
        H = target.hessian(x)
        try:
            np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            break
        x_new = x - np.linalg.solve(H, g)
        if not (np.isfinite(target.log_density(x_new))
                and target.log_density(x_new) >= target.log_density(x) - 1e-12):
            break
        x = x_new
    return x


def find_map_euclidean(target: TargetModel, restarts: int = 20, seed: int = 0) -> np.ndarray:
    """Multi-start quasi-Newton maximisation of the log-density."""
    def obj(x):
        val = -target.log_density(x)
        return val if np.isfinite(val) else np.inf

    with np.errstate(over="ignore", invalid="ignore"):
        return _multistart(obj, lambda x: -target.grad(x), target.dim, restarts, seed,
                           polish=lambda x: _newton_polish(target, x))


def find_map_hausdorff(target: TargetModel, metric: MetricField, restarts: int = 20,
                       seed: int = 0) -> np.ndarray:
    """Maximise ``log pi(theta) - 1/2 log det G(theta)``, the density under the
    Riemannian volume measure."""
    def obj(x):
        try:
            val = -target.log_density(x) + 0.5 * metric.log_det(x)
        except np.linalg.LinAlgError:
            return np.inf
        return val if np.isfinite(val) else np.inf

    def jac(x):
        try:
            return -target.grad(x) + 0.5 * metric.log_det_grad(x)
        except np.linalg.LinAlgError:
            return np.zeros(target.dim)

    with np.errstate(over="ignore", invalid="ignore"):
        return _multistart(obj, jac, target.dim, restarts, seed)


def build_precision(target: TargetModel, theta_hat, kind=PrecisionKind.NEG_HESSIAN):
    kind = PrecisionKind(kind)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if not np.all(np.isfinite(theta_hat)):
        raise ValueError("theta_hat must be finite")
    if kind is PrecisionKind.NEG_HESSIAN:
        P = -target.hessian(theta_hat)
    else:
        P = target.fisher(theta_hat)
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NonSPDPrecisionError(_non_spd_message(kind, theta_hat)) from exc
    return P


def riemannian_metric(target: TargetModel, name: str = "fisher") -> MetricField:
    return empirical_fisher_metric(target) if name == "empirical_fisher" else fisher_metric(target)


def fit_laplace(target: TargetModel, config: ApproxConfig, theta_hat=None) -> LaplaceFit:
    """MAP point (unless given) plus the sampling precision chosen in ``config``."""
    if theta_hat is None:
        if config.map_kind is MapKind.HAUSDORFF:
            theta_hat = find_map_hausdorff(target, riemannian_metric(target, config.metric),
                                           config.restarts, config.seed)
        else:
            theta_hat = find_map_euclidean(target, config.restarts, config.seed)
    P = build_precision(target, theta_hat, config.precision_kind)
    return LaplaceFit.from_precision(theta_hat, P, config.precision_kind, config.map_kind)


def sample_stream(seed: int, index: int, dim: int) -> np.ndarray:
    """Standard-normal draw for sample ``index``; independent of scheduling."""
    return np.random.default_rng([int(seed), int(index)]).standard_normal(dim)


class _Worker:
    """Per-sample transformation; picklable so it can run in a process pool."""

    def __init__(self, fit: LaplaceFit, target: TargetModel, config: ApproxConfig):
        self.fit = fit
        self.config = config
        v = config.variant
        self.exp_metric = None
        if v in (Variant.RLA_B, Variant.RLA_BLOG):
            self.exp_metric = MongeMetric(target)
        elif v is Variant.RLA_F:
            self.exp_metric = riemannian_metric(target, config.metric)
        self.log_metric = (GaussianMongeMetric(fit.theta_hat, fit.precision)
                           if v is Variant.RLA_BLOG else None)

    def __call__(self, index):
        fit, cfg = self.fit, self.config
        D = fit.theta_hat.size
        v = fit.cov_chol @ sample_stream(cfg.seed, index, D)
        if cfg.variant is Variant.ELA:
            return fit.theta_hat + v, 0, STATUS_OK, v
        if cfg.variant is Variant.RLA_BLOG:
            try:
                v = log_map(self.log_metric, fit.theta_hat, fit.theta_hat + v,
                            cfg.integrator, cfg.shooting)
            except LogMapError as exc:
                best = exc.best_v if exc.best_v is not None else v
                return np.full(D, np.nan), 0, STATUS_LOG_MAP, best
        res = exp_map(self.exp_metric, fit.theta_hat, v, cfg.integrator)
        return res.endpoint, res.nfev, res.status, v

    def run(self, indices):
        return [self(i) for i in indices]


def sample(fit: LaplaceFit, target: TargetModel, config: ApproxConfig,
           workers: int = 1) -> SampleSet:
    """Draw ``config.n_samples`` points from the chosen (R)LA variant.

    Failed geodesics are recorded in ``statuses`` and never abort the batch.
    """
    worker = _Worker(fit, target, config)
    n = config.n_samples
    if workers <= 1:
        out = worker.run(range(n))
    else:
        chunks = [list(c) for c in np.array_split(np.arange(n), workers * 4) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = [r for part in pool.map(worker.run, chunks) for r in part]
    samples = np.array([o[0] for o in out])
    nfev = np.array([o[1] for o in out], dtype=int)
    statuses = [o[2] for o in out]
    velocities = np.array([o[3] for o in out])
    ss = SampleSet(samples, nfev, statuses, config.seed, velocities,
                   meta={"variant": config.variant.value})
    if ss.n_failed:
        log.warning("%s: %d of %d samples failed (%s)", config.variant.value, ss.n_failed, n,
                    ss.status_counts())
    return ss
