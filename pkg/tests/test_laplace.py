import numpy as np
import pytest

from riemlap.geometry import GaussianMongeMetric, TensorMetric, fisher_metric
from riemlap.laplace import (ApproxConfig, LaplaceFit, MapError, NonSPDPrecisionError,
                             PrecisionKind, Variant, build_precision, find_map_euclidean,
                             find_map_hausdorff, fit_laplace, sample, sample_stream)
from riemlap.targets import gaussian_target


def _fit(target, variant, precision="neg_hessian", map_kind="euclidean", n=200, seed=0, **kw):
    cfg = ApproxConfig(variant=variant, map_kind=map_kind, precision_kind=precision,
                       n_samples=n, seed=seed, **kw)
    return fit_laplace(target, cfg), cfg


# -------------------------------------------------------------------- MAP

def test_gaussian_map():
    t = gaussian_target(np.zeros(2), np.eye(2))
    assert np.linalg.norm(find_map_euclidean(t, 20, 0)) <= 1e-6


def test_banana_euclidean_map_pair(banana):
    m = find_map_euclidean(banana, 20, 0)
    assert abs(m[1]) > 0.1
    assert np.linalg.norm(banana.grad(m)) <= 1e-6
    assert np.linalg.norm(banana.grad(np.array([m[0], -m[1]]))) <= 1e-6


def test_ripley_map_first_order(ripley):
    assert np.linalg.norm(ripley.grad(find_map_euclidean(ripley, 20, 0))) <= 1e-6


def test_banana_hausdorff_map_on_axis(banana):
    m = find_map_hausdorff(banana, fisher_metric(banana), 20, 0)
    assert abs(m[1]) <= 1e-3


def test_squiggle_hausdorff_map_at_origin(squiggle):
    m = find_map_hausdorff(squiggle, fisher_metric(squiggle), 20, 0)
    np.testing.assert_allclose(m, 0.0, atol=1e-4)


def test_constant_metric_hausdorff_equals_euclidean(gauss2):
    G0 = np.array([[3.0, 1.0], [1.0, 2.0]])
    m = TensorMetric(2, lambda th: G0, lambda th: np.zeros((2, 2, 2)))
    np.testing.assert_allclose(find_map_hausdorff(gauss2, m, 10, 0),
                               find_map_euclidean(gauss2, 10, 0), atol=1e-6)


def test_map_failure_when_every_restart_is_non_finite():
    class Nowhere:
        dim = 2

        def log_density(self, x):
            return np.nan

        def grad(self, x):
            return np.full(2, np.nan)

        def hvp(self, x, v):
            return np.full(2, np.nan)

    with pytest.raises(MapError):
        find_map_euclidean(Nowhere(), 3, 0)


# -------------------------------------------------------------- precision

def test_gaussian_precision_either_kind(gauss2):
    P = np.linalg.inv(gauss2.cov)
    for kind in ("neg_hessian", "fisher"):
        np.testing.assert_allclose(build_precision(gauss2, np.zeros(2), kind), P, atol=1e-10)


def test_logistic_precision_kinds_agree(ripley):
    th = find_map_euclidean(ripley, 5, 0)
    a, b = build_precision(ripley, th, "neg_hessian"), build_precision(ripley, th, "fisher")
    assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(b))


def test_banana_fisher_precision_on_axis(banana):
    np.testing.assert_allclose(build_precision(banana, np.array([1.4, 0.0]), "fisher"),
                               np.diag([25.25, 0.25]))


def test_neg_hessian_non_spd_recommends_fisher(banana):
    # The Hessian is indefinite on the axis between the two Euclidean modes.
    with pytest.raises(NonSPDPrecisionError, match="fisher"):
        build_precision(banana, np.array([1.4, 0.0]), "neg_hessian")


def test_non_finite_theta_rejected(gauss2):
    with pytest.raises(ValueError):
        build_precision(gauss2, np.array([np.nan, 0.0]))


def test_cov_chol_reproduces_inverse_precision():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    P = A @ A.T + 0.5 * np.eye(4)
    fit = LaplaceFit.from_precision(np.zeros(4), P)
    L = fit.cov_chol
    np.testing.assert_array_equal(L, np.tril(L))
    Pinv = np.linalg.inv(P)
    assert np.linalg.norm(L @ L.T - Pinv) <= 1e-8 * np.linalg.norm(Pinv)


# --------------------------------------------------------------- sampling

def test_sample_stream_depends_only_on_seed_and_index():
    np.testing.assert_array_equal(sample_stream(3, 7, 4), sample_stream(3, 7, 4))
    assert not np.array_equal(sample_stream(3, 7, 4), sample_stream(3, 8, 4))


def test_rla_f_equals_ela_on_gaussian(gauss2):
    fit, cfg = _fit(gauss2, "RLA_F", n=300)
    ela = sample(fit, gauss2, ApproxConfig(variant="ELA", n_samples=300, seed=0))
    rla = sample(fit, gauss2, cfg)
    assert np.max(np.abs(rla.samples - ela.samples)) <= 1e-6


def test_ela_covariance_converges(gauss2):
    fit, _ = _fit(gauss2, "ELA")
    n = 20000
    ss = sample(fit, gauss2, ApproxConfig(variant="ELA", n_samples=n, seed=1))
    emp = np.cov(ss.samples.T)
    D = 2
    assert np.linalg.norm(emp - fit.cov) <= 5 * np.sqrt(D**2 / n) * np.linalg.norm(fit.cov)
    assert np.all(ss.nfev == 0) and ss.n_failed == 0


def test_rla_b_contraction_isotropic_gaussian():
    t = gaussian_target(np.array([1.0, -1.0]), 0.5 * np.eye(2))
    fit, cfg = _fit(t, "RLA_B", n=400)
    ss = sample(fit, t, cfg)
    assert ss.n_failed == 0
    disp = np.linalg.norm(ss.samples - fit.theta_hat, axis=1)
    speed = np.linalg.norm(ss.velocities, axis=1)
    assert np.all(disp <= speed * (1 + 1e-6))
    big = speed > 0.1
    assert np.mean(disp[big] < speed[big]) >= 0.99


def test_rla_blog_exact_on_gaussian(gauss2):
    fit, cfg = _fit(gauss2, "RLA_BLOG", n=100)
    ss = sample(fit, gauss2, cfg)
    ela = sample(fit, gauss2, ApproxConfig(variant="ELA", n_samples=100, seed=0))
    ok = ss.ok_mask
    assert ok.mean() >= 0.95
    assert np.max(np.abs(ss.samples[ok] - ela.samples[ok])) <= 1e-2


def test_rla_blog_uses_gaussian_monge_log_metric(gauss2):
    fit, _ = _fit(gauss2, "RLA_BLOG")
    gm = GaussianMongeMetric(fit.theta_hat, fit.precision)
    np.testing.assert_allclose(gm.tensor(fit.theta_hat), np.eye(2))


def test_determinism_across_worker_counts(banana):
    fit, cfg = _fit(banana, "RLA_F", precision="fisher", map_kind="hausdorff", n=40)
    a = sample(fit, banana, cfg, workers=1)
    b = sample(fit, banana, cfg, workers=2)
    assert a.samples.tobytes() == b.samples.tobytes()
    np.testing.assert_array_equal(a.nfev, b.nfev)
    assert a.statuses == b.statuses


def test_failed_samples_flagged_not_aborting(banana):
    from riemlap.geodesics import IntegratorConfig
    fit, _ = _fit(banana, "RLA_F", precision="fisher", map_kind="hausdorff")
    cfg = ApproxConfig(variant="RLA_F", n_samples=20, seed=0,
                       integrator=IntegratorConfig(max_steps=2))
    ss = sample(fit, banana, cfg)
    assert len(ss.statuses) == 20 and ss.n_failed > 0
    assert ss.ok_samples.shape[0] == 20 - ss.n_failed
    assert sum(ss.status_counts().values()) == 20


def test_config_validation():
    with pytest.raises(ValueError):
        ApproxConfig(variant="RLA_X")
    with pytest.raises(ValueError):
        ApproxConfig(n_samples=0)
    assert ApproxConfig(variant="RLA_F").variant is Variant.RLA_F
    assert ApproxConfig(precision_kind="fisher").precision_kind is PrecisionKind.FISHER
