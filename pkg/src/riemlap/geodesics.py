"""Exponential map (adaptive Dormand-Prince 5(4)) and logarithmic map (shooting)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import MetricField

STATUS_OK = "ok"
STATUS_MAX_STEPS = "max_steps_exceeded"
STATUS_METRIC = "metric_failure"
STATUS_LOG_MAP = "log_map_failure"

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# Difference between the 5th and embedded 4th order weights (7 stages, FSAL).
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA
EVALS_PER_STEP = 6


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-3
    atol: float = 1e-6
    max_steps: int = 4096
    t_end: float = 1.0

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class ShootingConfig:
    max_iters: int = 50
    tol_factor: float = 10.0      # converged when |residual|_inf <= tol_factor * atol
    lam0: float = 1e-3


@dataclass
class GeodesicResult:
    endpoint: np.ndarray
    end_velocity: np.ndarray
    nfev: int
    status: str
    n_steps: int = 0
    n_accepted: int = 0
    times: np.ndarray | None = None
    positions: np.ndarray | None = None
    velocities: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


class LogMapError(RuntimeError):
    def __init__(self, message, best_v=None, best_residual=np.inf):
        super().__init__(message)
        self.best_v = best_v
        self.best_residual = best_residual


@dataclass
class LogMapResult:
    v: np.ndarray
    iterations: int
    residual: float
    nfev: int = 0
    history: list = field(default_factory=list)


def _rhs(metric, D):
    def f(y):
        return np.concatenate([y[D:], metric.accel(y[:D], y[D:])])
    return f


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(f, y0, f0, rtol, atol, t_span):
    """Starting-step heuristic of Hairer, Norsett and Wanner (order 5)."""
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_span)
    f1 = f(y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100.0 * h0, h1, t_span)


def _dopri_step(f, y, k1, h):
    K = np.empty((7, y.size))
    K[0] = k1
    for i, a in enumerate(_A):
        K[i + 1] = f(y + h * (a @ K[: i + 1]))
    y_new = y + h * (_B @ K[:6])
    K[6] = f(y_new)
    return y_new, K[6], h * (_E @ K)


def exp_map(metric: MetricField, theta0, v0, cfg: IntegratorConfig = IntegratorConfig(),
            record: bool = False) -> GeodesicResult:
    """Endpoint at ``t_end`` of the geodesic through ``theta0`` with velocity ``v0``.

    ``nfev`` counts six right-hand-side evaluations per attempted step, the
    usual convention for the FSAL 5(4) pair.
    """
    theta0 = np.asarray(theta0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    D = theta0.size
    f = _rhs(metric, D)
    y = np.concatenate([theta0, v0])
    t, t_end = 0.0, float(cfg.t_end)
    times, states = ([0.0], [y.copy()]) if record else (None, None)

    def result(status, n_steps, n_acc, message=""):
        out = GeodesicResult(y[:D].copy(), y[D:].copy(), EVALS_PER_STEP * n_steps, status,
                             n_steps, n_acc, message=message)
        if record:
            arr = np.array(states)
            out.times, out.positions, out.velocities = np.array(times), arr[:, :D], arr[:, D:]
        return out

    if t_end == 0.0 or not np.any(v0):
        return result(STATUS_OK, 0, 0)
    try:
        k1 = f(y)
        h = _initial_step(f, y, k1, cfg.rtol, cfg.atol, t_end)
    except np.linalg.LinAlgError as exc:
        return result(STATUS_METRIC, 0, 0, str(exc))
    if not np.all(np.isfinite(k1)):
        return result(STATUS_METRIC, 0, 0, "non-finite acceleration")

    n_steps = n_acc = 0
    err_old = 1e-4
    rejected = False
    while t < t_end:
        if n_steps >= cfg.max_steps:
            return result(STATUS_MAX_STEPS, n_steps, n_acc)
        h = min(h, t_end - t)
        n_steps += 1
        try:
            y_new, k_new, err = _dopri_step(f, y, k1, h)
        except np.linalg.LinAlgError as exc:
            return result(STATUS_METRIC, n_steps, n_acc, str(exc))
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = _rms(err / scale)
        if not np.isfinite(err_norm):
            h *= MIN_FACTOR
            rejected = True
            if h < 1e-14 * max(1.0, t_end):
                return result(STATUS_METRIC, n_steps, n_acc, "non-finite state")
            continue
        if err_norm <= 1.0:
            t = t_end if h >= t_end - t else t + h
            y, k1 = y_new, k_new
            n_acc += 1
            if record:
                times.append(t)
                states.append(y.copy())
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm ** -PI_ALPHA * err_old ** PI_BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            if rejected:
                factor = min(1.0, factor)
            err_old = max(err_norm, 1e-4)
            rejected = False
        else:
            factor = max(MIN_FACTOR, SAFETY * err_norm ** -PI_ALPHA)
            rejected = True
        h *= factor
    return result(STATUS_OK, n_steps, n_acc)


def integrate_on_grid(metric: MetricField, theta0, v0, times):
    """Dormand-Prince 5th-order propagation over a fixed sequence of times."""
    theta0 = np.asarray(theta0, dtype=float)
    D = theta0.size
    f = _rhs(metric, D)
    y = np.concatenate([theta0, np.asarray(v0, dtype=float)])
    k1 = f(y)
    for h in np.diff(times):
        y, k1, _ = _dopri_step(f, y, k1, h)
    return y[:D], y[D:]


def integrate_on_grid_batch(metric: MetricField, theta0, V, times):
    """Endpoints of several geodesics from ``theta0`` (velocities in rows of ``V``)
    propagated together on one fixed grid."""
    theta0 = np.asarray(theta0, dtype=float)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, D = V.shape

    def f(flat):
        Y = flat.reshape(n, 2 * D)
        return np.concatenate([Y[:, D:], metric.accel_batch(Y[:, :D], Y[:, D:])], axis=1).ravel()

    y = np.concatenate([np.broadcast_to(theta0, (n, D)), V], axis=1).ravel()
    k1 = f(y)
    for h in np.diff(times):
        y, k1, _ = _dopri_step(f, y, k1, h)
    return y.reshape(n, 2 * D)[:, :D]


def norm_trace(metric: MetricField, theta0, v0, cfg: IntegratorConfig = IntegratorConfig()):
    """Squared metric speed ``g(v, v)`` at every accepted step of the geodesic."""
    res = exp_map(metric, theta0, v0, cfg, record=True)
    if not res.ok:
        raise RuntimeError(f"geodesic integration failed: {res.status} {res.message}")
    return np.array([metric.norm_sq(th, v) for th, v in zip(res.positions, res.velocities)])


def _grid_endpoint(metric, theta0, vel, grid):
    with np.errstate(over="ignore", invalid="ignore"):
        end, _ = integrate_on_grid(metric, theta0, vel, grid)
    return end if np.all(np.isfinite(end)) else None


def _shoot(metric, theta0, target, v, cfg, shoot_cfg, tol, budget):
    """Levenberg-Marquardt on ``exp(v) - target``; returns (v, residual, iters, nfev).

    Each outer iteration freezes the accepted step grid of the adaptive
    solution at the current ``v``; the Jacobian and the trial steps are
    evaluated on that grid, so the residual being minimised is a smooth
    function of ``v``. Accepting a step refreshes the grid.
    """
    D = theta0.size
    nfev = 0
    lam = shoot_cfg.lam0
    it = 0
    while True:
        res = exp_map(metric, theta0, v, cfg, record=True)
        nfev += res.nfev
        if not res.ok:
            raise LogMapError(f"shot failed: {res.status}", v, np.inf)
        r = res.endpoint - target
        rnorm = float(np.max(np.abs(r)))
        if rnorm <= tol:
            return v, rnorm, it, nfev
        if it >= budget:
            raise LogMapError(f"log map did not converge in {it} iterations "
                              f"(best residual {rnorm:.3e})", v, rnorm)
        grid = res.times
        cost = EVALS_PER_STEP * (len(grid) - 1)
        delta = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(v))
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                ends = integrate_on_grid_batch(metric, theta0, v + delta * np.eye(D), grid)
        except np.linalg.LinAlgError as exc:
            raise LogMapError(f"Jacobian evaluation failed: {exc}", v, rnorm) from exc
        if not np.all(np.isfinite(ends)):
            raise LogMapError("non-finite Jacobian column", v, rnorm)
        J = (ends - res.endpoint).T / delta
        nfev += cost * D
        JtJ = J.T @ J
        g = J.T @ r
        while True:
            it += 1
            step = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ) + 1e-12), -g)
            try:
                end = _grid_endpoint(metric, theta0, v + step, grid)
            except np.linalg.LinAlgError:
                end = None
            nfev += cost
            if end is not None and np.sum((end - target) ** 2) < r @ r:
                v = v + step
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if it >= budget or lam > 1e12:
                raise LogMapError(f"log map stalled after {it} iterations "
                                  f"(best residual {rnorm:.3e})", v, rnorm)


def _side_guesses(metric, theta0, delta):
    """Initial velocities bent away from the straight segment.

    Near a conjugate locus the straight-line guess sits on a fold of the
    exponential map; minimising geodesics then leave at an angle, so the
    offsets are taken along the component of ``G(theta0)^-1``-distorted
    directions orthogonal to ``delta``.
    """
    D = delta.size
    nd = np.linalg.norm(delta)
    if D < 2 or nd == 0.0:
        return []
    u_hat = delta / nd
    cands = []
    for w in (metric.tensor(theta0 + delta) @ delta, *np.eye(D)):
        w = w - (w @ u_hat) * u_hat
        if np.linalg.norm(w) > 1e-8 * (1.0 + np.linalg.norm(w)):
            cands.append(w / np.linalg.norm(w))
            break
    out = []
    for beta in (0.25, 0.5, 1.0):
        for sign in (1.0, -1.0):
            out.extend(1.2 * delta + sign * beta * nd * w for w in cands)
    return out


def log_map(metric: MetricField, theta0, theta_target, cfg: IntegratorConfig = IntegratorConfig(),
            shoot_cfg: ShootingConfig = ShootingConfig(), full_output: bool = False):
    """Initial velocity whose geodesic from ``theta0`` ends at ``theta_target``.

    Single shooting from the Euclidean guess ``theta_target - theta0``. If that
    stalls, two globalisation passes follow: continuation along the straight
    segment (warm-starting each stage), then shots from guesses bent to either
    side of the segment, keeping the converged velocity of smallest metric norm.
    Every attempt gets its own ``max_iters`` budget.
    """
    theta0 = np.asarray(theta0, dtype=float)
    target = np.asarray(theta_target, dtype=float)
    tol = shoot_cfg.tol_factor * cfg.atol
    delta = target - theta0
    state = {"nfev": 0, "it": 0}
    best = LogMapError("log map failed", delta.copy(), np.inf)

    def attempt(t, guess):
        nonlocal best
        try:
            v, rnorm, it, nf = _shoot(metric, theta0, t, guess, cfg, shoot_cfg, tol,
                                      shoot_cfg.max_iters)
        except LogMapError as exc:
            if exc.best_residual < best.best_residual:
                best = exc
            raise
        state["it"] += it
        state["nfev"] += nf
        return v, rnorm

    def done(v, rnorm, history):
        if full_output:
            return LogMapResult(v, state["it"], rnorm, state["nfev"], history)
        return v

    try:
        v, rnorm = attempt(target, delta.copy())
        return done(v, rnorm, [rnorm])
    except LogMapError:
        pass

    n_stages = 4
    v = np.zeros_like(delta)
    history = []
    try:
        for k in range(1, n_stages + 1):
            tau = k / n_stages
            guess = v * k / (k - 1) if k > 1 else tau * delta
            v, rnorm = attempt(theta0 + tau * delta, guess)
            history.append(rnorm)
        return done(v, rnorm, history)
    except LogMapError:
        pass

    found = []
    for guess in _side_guesses(metric, theta0, delta):
        try:
            v, rnorm = attempt(target, guess)
        except LogMapError:
            continue
        found.append((metric.norm_sq(theta0, v), v, rnorm))
    if found:
        _, v, rnorm = min(found, key=lambda item: item[0])
        return done(v, rnorm, [rnorm])
    raise LogMapError(f"log map failed after globalisation (best residual "
                      f"{best.best_residual:.3e})", best.best_v, best.best_residual)
