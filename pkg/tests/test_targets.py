import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_grad, fd_jacobian, random_point, rel_err
from riemlap.targets import (BananaConfig, Dataset, DatasetError, MlpConfig, banana_target,
                             empirical_fisher, gaussian_target, generate_banana_data,
                             load_csv_dataset, load_logreg_dataset, logreg_target, mlp_forward,
                             mlp_target)

NAMES = ["banana", "squiggle", "funnel", "gaussian", "logreg", "mlp"]


# ------------------------------------------------------------ derivatives

@pytest.mark.parametrize("name", NAMES)
def test_grad_matches_finite_differences(all_targets, name):
    target = all_targets[name]
    rng = np.random.default_rng(11)
    for _ in range(32):
        x = random_point(name, target, rng)
        assert rel_err(target.grad(x), fd_grad(target.log_density, x)) <= 1e-4


@pytest.mark.parametrize("name", NAMES)
def test_hvp_matches_finite_differences_of_grad(all_targets, name):
    target = all_targets[name]
    rng = np.random.default_rng(12)
    for _ in range(32):
        x = random_point(name, target, rng)
        v = rng.standard_normal(target.dim)
        oracle = fd_jacobian(target.grad, x) @ v
        assert rel_err(target.hvp(x, v), oracle) <= 1e-4


@pytest.mark.parametrize("name", NAMES)
def test_fisher_symmetric_and_spd(all_targets, name):
    target = all_targets[name]
    rng = np.random.default_rng(13)
    for _ in range(32):
        G = target.fisher(random_point(name, target, rng))
        assert np.max(np.abs(G - G.T)) <= 1e-10 * np.max(np.abs(G))
        np.linalg.cholesky(G)


@pytest.mark.parametrize("name", ["banana", "squiggle", "funnel", "logreg"])
def test_fisher_derivative_matches_finite_differences(all_targets, name):
    target = all_targets[name]
    rng = np.random.default_rng(14)
    for _ in range(8):
        x = random_point(name, target, rng)
        oracle = np.moveaxis(fd_jacobian(target.fisher, x), -1, 0)
        assert rel_err(target.fisher_derivative(x), oracle) <= 1e-5


# --------------------------------------------------------------- gaussian

def test_gaussian_examples():
    t = gaussian_target(np.zeros(2), np.eye(2))
    np.testing.assert_allclose(t.grad(np.zeros(2)), 0.0)
    np.testing.assert_allclose(t.fisher(np.array([3.0, -7.0])), np.eye(2))
    t1 = gaussian_target(np.zeros(1), np.array([[4.0]]))
    assert t1.log_density(np.array([2.0])) - t1.log_density(np.array([0.0])) == pytest.approx(-0.5)


def test_gaussian_rejects_non_spd_cov():
    with pytest.raises(ValueError, match="Cholesky"):
        gaussian_target(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


# ----------------------------------------------------------------- banana

def banana_fisher_closed_form(theta, st=2.0, sy=2.0, n=100):
    t2 = theta[1]
    return np.array([[1 / st**2 + n / sy**2, 2 * n * t2 / sy**2],
                     [2 * n * t2 / sy**2, 1 / st**2 + 4 * n * t2**2 / sy**2]])


def test_banana_fisher_closed_form(banana):
    rng = np.random.default_rng(3)
    for _ in range(32):
        th = 2 * rng.standard_normal(2)
        np.testing.assert_allclose(banana.fisher(th), banana_fisher_closed_form(th), rtol=1e-12)
    for a in (-3.0, 0.0, 0.7, 10.0):
        np.testing.assert_allclose(banana.fisher(np.array([a, 0.0])), np.diag([25.25, 0.25]))


def test_banana_mode_symmetry(banana):
    from riemlap.laplace import find_map_euclidean
    m = find_map_euclidean(banana, 20, 0)
    assert abs(m[1]) > 0.1
    assert np.linalg.norm(banana.grad(np.array([m[0], -m[1]]))) <= 1e-6


def test_banana_data_generation():
    cfg = BananaConfig()
    a, b = generate_banana_data(cfg, 5), generate_banana_data(cfg, 5)
    np.testing.assert_array_equal(a, b)
    assert abs(a.mean() - 1.25) <= 3 * 2 / np.sqrt(100)
    zero = generate_banana_data(BananaConfig(sigma_y=0.0), 1)
    np.testing.assert_array_equal(zero, np.full(100, 1.25))


# --------------------------------------------------------------- squiggle

def test_squiggle_fisher_matches_expected_information_oracle(squiggle):
    S_inv = np.linalg.inv(np.diag([5.0, 0.05]))
    rng = np.random.default_rng(4)
    for th in [np.zeros(2), *(rng.standard_normal((8, 2)))]:
        J = fd_jacobian(squiggle.inverse_map, th)  # d psi / d theta
        np.testing.assert_allclose(squiggle.fisher(th), J.T @ S_inv @ J, rtol=1e-7, atol=1e-7)
    a = 1.5
    np.testing.assert_allclose(squiggle.fisher(np.zeros(2)),
                               np.array([[1, a], [0, 1]]) @ S_inv @ np.array([[1, 0], [a, 1]]))


@given(st.floats(-5, 5), st.floats(-3, 3))
def test_squiggle_periodicity(t1, t2):
    from riemlap.targets import squiggle_target
    t = squiggle_target(1.5, np.diag([5.0, 0.05]))
    shift = np.array([2 * np.pi / 1.5, 0.0])
    th = np.array([t1, t2])
    # Only the sine correction is periodic; the Gaussian in psi1 is not.
    psi_a, psi_b = t.inverse_map(th), t.inverse_map(th + shift)
    assert psi_a[1] == pytest.approx(psi_b[1], abs=1e-9)


def _base_logpdf(psi, cov):
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, psi)
    return -0.5 * z @ z - np.sum(np.log(np.diag(L))) - np.log(2 * np.pi)


def test_change_of_variables_consistency(squiggle, funnel):
    rng = np.random.default_rng(5)
    for _ in range(32):
        psi = rng.standard_normal(2) * np.array([2.0, 0.2])
        lhs = squiggle.log_density(squiggle.pushforward(psi))  # unit Jacobian
        assert lhs == pytest.approx(_base_logpdf(psi, np.diag([5.0, 0.05])), abs=1e-8)
        psi = rng.standard_normal(2)
        th = funnel.pushforward(psi)
        log_det = 3.0 * psi[1] / 2 + np.log(3.0)
        assert funnel.log_density(th) + log_det == pytest.approx(_base_logpdf(psi, np.eye(2)),
                                                                  abs=1e-8)


def test_funnel_fisher_at_origin(funnel):
    np.testing.assert_allclose(funnel.fisher(np.zeros(2)), np.diag([1.0, 1 / 9]))


# ----------------------------------------------------------------- logreg

def test_ripley_shape_and_fisher_at_zero(ripley):
    assert ripley.dim == 3 and ripley.data.n == 250
    X = ripley.data.X
    np.testing.assert_allclose(ripley.fisher(np.zeros(3)), 0.25 * X.T @ X + 0.01 * np.eye(3))


def test_logistic_neg_hessian_equals_fisher(ripley, pima_raw):
    rng = np.random.default_rng(6)
    for t in (ripley, pima_raw):
        for _ in range(16):
            th = 0.3 * rng.standard_normal(t.dim)
            G = t.fisher(th)
            assert rel_err(-t.hessian(th), G) <= 1e-10


def test_logreg_rejects_non_binary_labels():
    with pytest.raises(DatasetError):
        logreg_target(Dataset(np.ones((3, 1)), np.array([0.0, 1.0, 2.0])))


# ------------------------------------------------------------ CSV loading

def test_csv_two_row_standardize(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0\n3,1\n")
    ds = load_csv_dataset(p, standardize=True, add_intercept=False)
    np.testing.assert_allclose(ds.X[:, 0], [-1.0, 1.0])
    raw = load_csv_dataset(p, standardize=False, add_intercept=False)
    np.testing.assert_array_equal(raw.X[:, 0], [1.0, 3.0])
    with_icpt = load_csv_dataset(p, standardize=True, add_intercept=True)
    np.testing.assert_array_equal(with_icpt.X[:, 1], [1.0, 1.0])


def test_csv_header_detection(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b,label\n1,2,0\n3,5,1\n")
    ds = load_csv_dataset(p, add_intercept=False)
    assert ds.X.shape == (2, 2)


@pytest.mark.parametrize("content,needle", [
    ("1,0\nnan,1\n", "row 2, column 1"),
    ("1,0\n2,x\n", "row 2, column 2"),
    ("1,0\n2,1,3\n", "row 2"),
    ("1,0\n1,1\n", "constant"),
])
def test_csv_errors_are_descriptive(tmp_path, content, needle):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    with pytest.raises(DatasetError, match=needle):
        load_csv_dataset(p, standardize=True)


def test_missing_dataset_lists_expected_files(monkeypatch, tmp_path):
    monkeypatch.setenv("RIEMLAP_DATA_DIR", str(tmp_path))
    with pytest.raises(DatasetError, match="german.csv"):
        load_logreg_dataset("heart", standardize=True)


# -------------------------------------------------------------------- mlp

def test_mlp_dimension(mlp):
    assert mlp.dim == 31 and MlpConfig(hidden=10).n_params == 31


def test_mlp_jacobian_matches_finite_differences(mlp):
    rng = np.random.default_rng(7)
    for _ in range(8):
        th = 0.7 * rng.standard_normal(31)
        oracle = fd_jacobian(lambda t: mlp_forward(t, mlp.x, 10), th)
        assert rel_err(mlp.jacobian(th), oracle) <= 1e-4


def test_mlp_zero_weights(mlp):
    th = np.zeros(31)
    th[30] = 0.4
    np.testing.assert_allclose(mlp.predict(th), 0.4)
    oracle = fd_jacobian(lambda t: mlp_forward(t, mlp.x, 10), th)
    np.testing.assert_allclose(mlp.jacobian(th), oracle, atol=1e-8)


def test_mlp_curvature_matches_gradient_differences(mlp):
    """Second directional derivatives against central differences of the
    analytic per-datum gradient along v, step sqrt(eps) * (1 + |theta|)."""
    rng = np.random.default_rng(8)
    for _ in range(16):
        th = 0.7 * rng.standard_normal(31)
        v = rng.standard_normal(31)
        h = np.sqrt(np.finfo(float).eps) * (1 + np.linalg.norm(th))
        oracle = ((mlp.jacobian(th + h * v) - mlp.jacobian(th - h * v)) / (2 * h)) @ v
        assert rel_err(mlp.curvature(th, v), oracle) <= 1e-6


# ------------------------------------------------------- empirical fisher

def test_empirical_fisher_single_datum():
    t = logreg_target(Dataset(np.array([[0.5, 1.0]]), np.array([1.0])))
    th = np.array([0.2, -0.1])
    g = t.per_datum_scores(th)[0]
    np.testing.assert_allclose(empirical_fisher(t, th), np.outer(g, g) + 0.01 * np.eye(2))


def test_empirical_fisher_ripley_spd(ripley):
    G = empirical_fisher(ripley, np.zeros(3))
    np.testing.assert_allclose(G, G.T)
    np.linalg.cholesky(G)


def test_banana_rejects_bad_config():
    with pytest.raises(ValueError):
        BananaConfig(sigma_theta=0.0)
    with pytest.raises(ValueError):
        BananaConfig(n_obs=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_banana_target_logdensity_finite(seed):
    cfg = BananaConfig()
    t = banana_target(cfg, generate_banana_data(cfg, seed))
    assert np.isfinite(t.log_density(np.array([0.5, 0.9])))
