import numpy as np
import pytest

from riemlap.targets import (BananaConfig, MlpConfig, banana_target, funnel_target,
                             gaussian_target, generate_banana_data, load_logreg_dataset,
                             load_regression_1d, logreg_target, mlp_target, split_complete,
                             squiggle_target)


def fd_grad(f, x, h=1e-5):
    """Central-difference gradient with relative steps."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * (1.0 + abs(x[i]))
        out[i] = (f(x + e) - f(x - e)) / (2.0 * e[i])
    return out


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h * (1.0 + abs(x[i]))
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * e[i]))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@pytest.fixture(scope="session")
def banana():
    cfg = BananaConfig()
    return banana_target(cfg, generate_banana_data(cfg, 0))


@pytest.fixture(scope="session")
def squiggle():
    return squiggle_target(1.5, np.diag([5.0, 0.05]))


@pytest.fixture(scope="session")
def funnel():
    return funnel_target(3.0)


@pytest.fixture(scope="session")
def gauss2():
    return gaussian_target(np.array([1.0, -0.5]), np.array([[2.0, 0.6], [0.6, 1.0]]))


@pytest.fixture(scope="session")
def ripley():
    return logreg_target(load_logreg_dataset("ripley", standardize=True))


@pytest.fixture(scope="session")
def pima_raw():
    return logreg_target(load_logreg_dataset("pima", standardize=False))


@pytest.fixture(scope="session")
def mlp():
    train, _ = split_complete(load_regression_1d(0))
    return mlp_target(MlpConfig(), train)


@pytest.fixture(scope="session")
def all_targets(banana, squiggle, funnel, gauss2, ripley, mlp):
    return {"banana": banana, "squiggle": squiggle, "funnel": funnel, "gaussian": gauss2,
            "logreg": ripley, "mlp": mlp}


def random_point(name, target, rng):
    """Test points on a scale where each target is numerically well behaved."""
    scale = {"banana": 1.5, "squiggle": 1.5, "funnel": 1.0, "gaussian": 2.0, "logreg": 1.0,
             "mlp": 0.7}[name]
    return scale * rng.standard_normal(target.dim)
