import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemlap.geodesics import (STATUS_MAX_STEPS, STATUS_METRIC, IntegratorConfig, LogMapError,
                               ShootingConfig, exp_map, log_map, norm_trace)
from riemlap.geometry import (EuclideanMetric, GaussianMongeMetric, MongeMetric, TensorMetric,
                              fisher_metric)
from riemlap.targets import gaussian_target

TIGHT = IntegratorConfig(rtol=1e-10, atol=1e-12, max_steps=100000)


def rk4(accel, theta0, v0, h):
    """Fixed-step classical RK4 on (theta, v) from t=0 to t=1."""
    D = len(theta0)
    y = np.concatenate([theta0, v0]).astype(float)

    def f(y):
        return np.concatenate([y[D:], accel(y[:D], y[D:])])

    for _ in range(int(round(1.0 / h))):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[:D]


def _banana_start(banana, rng):
    th0 = np.array([0.5, 0.8]) + 0.2 * rng.standard_normal(2)
    L = np.linalg.cholesky(np.linalg.inv(banana.fisher(th0)))
    return th0, L @ rng.standard_normal(2)


# ---------------------------------------------------------------- exp_map

def test_euclidean_endpoint_exact():
    th0, v0 = np.array([1.0, -2.0, 0.5]), np.array([0.3, 4.0, -1.0])
    res = exp_map(EuclideanMetric(3), th0, v0)
    assert res.ok
    np.testing.assert_allclose(res.endpoint, th0 + v0, rtol=0, atol=1e-14)
    np.testing.assert_allclose(res.end_velocity, v0, rtol=0, atol=1e-14)
    assert res.nfev >= 6 and res.nfev % 6 == 0


def test_constant_tensor_metric_is_straight_line():
    G0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    m = TensorMetric(2, lambda th: G0, lambda th: np.zeros((2, 2, 2)))
    res = exp_map(m, np.array([0.2, 0.1]), np.array([-1.0, 3.0]))
    np.testing.assert_allclose(res.endpoint, [-0.8, 3.1], atol=1e-12)


def test_monge_standard_gaussian_matches_rk4_oracle():
    # Monge metric of N(0, I): g = -theta, H = -I, so a = -|v|^2 theta / (1 + |theta|^2).
    def accel(th, v):
        return -(v @ v) * th / (1.0 + th @ th)

    metric = MongeMetric(gaussian_target(np.zeros(2), np.eye(2)))
    th0, v0 = np.zeros(2), np.array([1.0, 0.0])
    oracle = rk4(accel, th0, v0, 1e-5)
    res = exp_map(metric, th0, v0)
    assert res.ok
    assert np.max(np.abs(res.endpoint - oracle)) <= 1e-4
    # The Monge geodesic is slower than the straight line.
    assert oracle[0] < 1.0


def test_exp_map_deterministic(banana):
    rng = np.random.default_rng(0)
    th0, v0 = _banana_start(banana, rng)
    m = fisher_metric(banana)
    a, b = exp_map(m, th0, v0), exp_map(m, th0, v0)
    assert a.endpoint.tobytes() == b.endpoint.tobytes() and a.nfev == b.nfev


def _max_reversal_ratio(metric, banana, cfg, n):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(n):
        th0, v0 = _banana_start(banana, rng)
        fwd = exp_map(metric, th0, v0, cfg)
        back = exp_map(metric, fwd.endpoint, -fwd.end_velocity, cfg)
        assert fwd.ok and back.ok
        tol = 10 * (cfg.atol + cfg.rtol * np.linalg.norm(th0))
        worst = max(worst, np.linalg.norm(back.endpoint - th0) / tol)
    return worst


@pytest.mark.xfail(strict=True, reason="bound scales with |theta0| only; long geodesics at "
                                       "rtol=1e-3 accumulate more global error (see notes)")
@pytest.mark.parametrize("kind", ["fisher", "monge"])
def test_time_reversal_default_tolerance(banana, kind):
    m = fisher_metric(banana) if kind == "fisher" else MongeMetric(banana)
    assert _max_reversal_ratio(m, banana, IntegratorConfig(), 50) <= 1.0


def test_time_reversal_tight_tolerance_fisher(banana):
    cfg = IntegratorConfig(rtol=1e-6, atol=1e-9)
    assert _max_reversal_ratio(fisher_metric(banana), banana, cfg, 50) <= 1.0


def _halving_errors(banana, n_halvings):
    m = fisher_metric(banana)
    rng = np.random.default_rng(2)
    out = []
    for _ in range(3):
        th0, v0 = _banana_start(banana, rng)
        oracle = exp_map(m, th0, v0, TIGHT).endpoint
        out.append([np.linalg.norm(exp_map(m, th0, v0, IntegratorConfig(
            rtol=1e-3 / 2**k, atol=1e-6 / 2**k)).endpoint - oracle) for k in range(n_halvings)])
    return out


@pytest.mark.xfail(strict=True, reason="adaptive step selection makes the error non-monotone "
                                       "under a single halving (see notes)")
def test_halving_tolerances_never_increases_error(banana):
    for errs in _halving_errors(banana, 5):
        assert all(e1 <= e0 for e0, e1 in zip(errs, errs[1:])), errs


def test_sixteenfold_tolerance_reduction_reduces_error(banana):
    for errs in _halving_errors(banana, 8):
        assert all(errs[k + 4] < errs[k] for k in range(4)), errs


def test_tight_run_agrees_with_rk4_on_banana(banana):
    # Anchors the tight Dormand-Prince oracle used above to an independent integrator.
    m = fisher_metric(banana)
    th0, v0 = _banana_start(banana, np.random.default_rng(3))
    np.testing.assert_allclose(exp_map(m, th0, v0, TIGHT).endpoint,
                               rk4(m.accel, th0, v0, 1e-3), atol=1e-9)


def test_max_steps_status(banana):
    res = exp_map(fisher_metric(banana), np.array([0.5, 0.8]), np.array([0.3, 0.2]),
                  IntegratorConfig(rtol=1e-12, atol=1e-14, max_steps=3))
    assert res.status == STATUS_MAX_STEPS and not res.ok
    assert res.nfev >= 18


def test_metric_failure_status():
    m = TensorMetric(1, lambda th: np.array([[1.0 - th[0]]]),
                     lambda th: np.array([[[-1.0]]]))
    res = exp_map(m, np.array([0.0]), np.array([3.0]))
    assert res.status == STATUS_METRIC


# ------------------------------------------------------------- norm trace

def test_norm_trace_euclidean_constant():
    v0 = np.array([1.0, 2.0])
    np.testing.assert_allclose(norm_trace(EuclideanMetric(2), np.zeros(2), v0), 5.0)


def _max_monge_drift(banana, cfg, n=20):
    m = MongeMetric(banana)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(n):
        th0, v0 = _banana_start(banana, rng)
        tr = norm_trace(m, th0, v0, cfg)
        worst = max(worst, np.max(np.abs(tr - tr[0])) / tr[0])
    return worst


@pytest.mark.xfail(strict=True, reason="5(4) error control at rtol=1e-3 leaves ~1e-1 drift in "
                                       "g(v,v) on the banana Monge metric (see notes)")
def test_monge_norm_conservation_default_tolerance(banana):
    assert _max_monge_drift(banana, IntegratorConfig()) <= 1e-2


def test_monge_norm_conservation_tight_tolerance(banana):
    assert _max_monge_drift(banana, IntegratorConfig(rtol=1e-6)) <= 1e-4


def test_fisher_norm_conservation(squiggle):
    m = fisher_metric(squiggle)
    rng = np.random.default_rng(5)
    for _ in range(10):
        tr = norm_trace(m, rng.standard_normal(2), rng.standard_normal(2))
        assert np.max(np.abs(tr - tr[0])) / tr[0] <= 1e-2


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_monge_isotropic_gaussian_speed_never_grows(c, d):
    # From the mode g = 0, so |v|^2 + (g.v)^2 conserved bounds |v(t)| by |v(0)|.
    metric = GaussianMongeMetric(np.zeros(2), 2.0 * np.eye(2))
    v0 = np.array([c, d])
    res = exp_map(metric, np.zeros(2), v0, record=True)
    assert res.ok
    speeds = np.linalg.norm(res.velocities, axis=1)
    assert np.all(speeds <= np.linalg.norm(v0) * (1 + 1e-6) + 1e-12)


# ---------------------------------------------------------------- log_map

def test_log_map_euclidean():
    out = log_map(EuclideanMetric(2), np.array([1.0, 1.0]), np.array([3.0, -2.0]),
                  full_output=True)
    np.testing.assert_allclose(out.v, [2.0, -3.0], atol=1e-12)
    assert out.iterations <= 1


def test_log_map_round_trip_banana_fisher(banana):
    m = fisher_metric(banana)
    rng = np.random.default_rng(6)
    for _ in range(10):
        th0, v = _banana_start(banana, rng)
        end = exp_map(m, th0, v).endpoint
        assert np.linalg.norm(log_map(m, th0, end) - v) <= 1e-2 * np.linalg.norm(v)


def test_log_map_gaussian_monge_needs_extra_speed():
    m = GaussianMongeMetric(np.zeros(2), np.eye(2))
    v = log_map(m, np.zeros(2), np.array([2.0, 0.0]))
    assert np.linalg.norm(v) > 2.0
    np.testing.assert_allclose(exp_map(m, np.zeros(2), v).endpoint, [2.0, 0.0], atol=1e-4)


def test_log_map_failure_reports_best_residual():
    m = TensorMetric(1, lambda th: np.array([[1.0 + 0.0 * th[0]]]),
                     lambda th: np.zeros((1, 1, 1)))
    # A zero iteration budget cannot converge from a wrong guess.
    with pytest.raises(LogMapError) as info:
        from riemlap.geodesics import _shoot
        _shoot(m, np.zeros(1), np.array([1.0]), np.array([0.0]), IntegratorConfig(),
               ShootingConfig(), 1e-5, 0)
    assert info.value.best_residual >= 0.9
