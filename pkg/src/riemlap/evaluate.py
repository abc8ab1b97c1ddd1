"""Exact Wasserstein-1 distances, predictive metrics and run summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .targets import Dataset
from .targets.mlp import MlpTarget, mlp_forward_batch

MAX_PAIRS = 2**22


class SampleSizeError(ValueError):
    pass


def wasserstein1(A, B) -> float:
    """Exact optimal-transport cost between two empirical measures with uniform
    weights and Euclidean ground cost.

    Equal sizes reduce to an optimal assignment (the uniform transport
    polytope's vertices are permutations); otherwise the transport LP is solved
    with the HiGHS simplex.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    n, m = A.shape[0], B.shape[0]
    if n < 1 or m < 1:
        raise SampleSizeError("both sample sets must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if n * m > MAX_PAIRS:
        raise SampleSizeError(f"{n} x {m} transport problem exceeds the {MAX_PAIRS} pair cap; "
                              "subsample the inputs first")
    M = cdist(A, B)
    if n == m:
        rows, cols = linear_sum_assignment(M)
        return float(M[rows, cols].sum() / n)
    # Transport LP: variables gamma_ij >= 0, row sums 1/n, column sums 1/m.
    from scipy.sparse import coo_matrix, vstack
    idx = np.arange(n * m)
    row_eq = coo_matrix((np.ones(n * m), (idx // m, idx)), shape=(n, n * m))
    col_eq = coo_matrix((np.ones(n * m), (idx % m, idx)), shape=(m, n * m))
    A_eq = vstack([row_eq, col_eq]).tocsr()
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(M.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def wasserstein1_1d(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean(np.abs(a - b)))


def same_distribution_floor(sampler, n: int, seeds=(10_001, 10_002)) -> float:
    """W1 between two independent draws of size ``n`` from the same sampler."""
    return wasserstein1(sampler(n, seeds[0]), sampler(n, seeds[1]))


def predictive_metrics(samples, target: MlpTarget, test: Dataset):
    """Test MSE of the posterior-mean prediction and mixture NLL."""
    thetas = np.atleast_2d(np.asarray(samples, dtype=float))
    if thetas.shape[0] < 1 or thetas.size == 0:
        raise ValueError("predictive metrics need at least one sample")
    x, y = test.X[:, 0], test.y
    preds = mlp_forward_batch(thetas, x, target.H)
    mse = float(np.mean((preds.mean(axis=0) - y) ** 2))
    sigma = target.cfg.noise_std
    logp = -0.5 * ((y[None, :] - preds) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)
    nll = float(-np.mean(logsumexp(logp, axis=0) - np.log(thetas.shape[0])))
    return mse, nll


@dataclass
class EvaluationReport:
    metric_name: str
    value_mean: float
    value_std: float
    n_runs: int
    mean_nfev: float = float("nan")
    n_failed: int = 0
    wall_time_s: float = 0.0

    def as_pair(self, digits: int = 3) -> str:
        return f"[{round(self.value_mean, digits)}, {round(self.value_std, digits)}]"

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time_s")
        return d


def summarize(metric_name: str, values, nfevs=None, n_failed=None, wall_times=None
              ) -> EvaluationReport:
    """Population mean/std over runs; ``nfevs`` are per-run mean evaluation counts."""
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("summarize needs at least one run")
    mean_nfev = float(np.mean(nfevs)) if nfevs is not None and len(nfevs) else float("nan")
    return EvaluationReport(
        metric_name=metric_name,
        value_mean=float(values.mean()),
        value_std=float(values.std()),
        n_runs=int(values.size),
        mean_nfev=mean_nfev,
        n_failed=int(np.sum(n_failed)) if n_failed is not None else 0,
        wall_time_s=float(np.sum(wall_times)) if wall_times is not None else 0.0,
    )
