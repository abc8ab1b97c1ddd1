"""Ground-truth samplers: exact pushforwards and adaptive random-walk Metropolis."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geodesics import STATUS_OK
from .laplace import SampleSet
from .targets import TargetModel

log = logging.getLogger(__name__)

SCALE_GAIN = 2.0


@dataclass(frozen=True)
class McmcConfig:
    n_keep: int = 20000
    warmup: int = 50000
    thin: int = 10
    seed: int = 0
    target_accept: float = 0.234
    adapt_every: int = 500

    def __post_init__(self):
        if self.warmup < 0 or self.thin < 1 or self.n_keep < 1:
            raise ValueError("need warmup >= 0, thin >= 1 and n_keep >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


def exact_samples(target: TargetModel, n: int, seed: int) -> SampleSet:
    """Push base-normal draws through the target's diffeomorphism."""
    try:
        cov = target.base_covariance()
    except NotImplementedError:
        raise ValueError(f"target {target.name!r} has no exact sampler") from None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, target.dim))
    psi = z @ np.linalg.cholesky(cov).T
    samples = target.pushforward(psi)
    return SampleSet(samples, np.zeros(n, dtype=int), [STATUS_OK] * n, seed,
                     meta={"sampler": "exact"})


def rwm_samples(target: TargetModel, cfg: McmcConfig, x0=None, init_cov=None,
                record_proposals: bool = False) -> SampleSet:
    """Gaussian random-walk Metropolis with covariance adaptation during warmup.

    The proposal covariance is ``scale * 2.38^2 / D * C`` where ``C`` is the
    empirical covariance of the later half of the warmup states so far and
    ``log(scale)`` moves by ``SCALE_GAIN * (rate - target_accept)`` after every
    adaptation window. Both are frozen once warmup ends.
    """
    D = target.dim
    rng = np.random.default_rng(cfg.seed)
    x = np.zeros(D) if x0 is None else np.array(x0, dtype=float)
    logp = target.log_density(x)
    if not np.isfinite(logp):
        raise ValueError("RWM start point has non-finite log-density")
    C = np.eye(D) if init_cov is None else np.array(init_cov, dtype=float)
    base = 2.38**2 / D
    log_scale = 0.0
    chol = np.linalg.cholesky(base * C)

    n_total = cfg.warmup + cfg.n_keep * cfg.thin
    warm_states = np.empty((cfg.warmup, D)) if cfg.warmup else None
    kept = np.empty((cfg.n_keep, D))
    proposals = [] if record_proposals else None
    accepted_post = 0
    window_acc = 0
    block = 4096
    for start in range(0, n_total, block):
        m = min(block, n_total - start)
        noise = rng.standard_normal((m, D))
        log_u = np.log(rng.uniform(size=m))
        for j in range(m):
            it = start + j
            prop = x + chol @ noise[j]
            logp_prop = target.log_density(prop)
            log_ratio = logp_prop - logp if np.isfinite(logp_prop) else -np.inf
            accept = log_u[j] < log_ratio
            if record_proposals:
                proposals.append((logp, logp_prop, min(1.0, float(np.exp(min(log_ratio, 0.0)))),
                                  bool(accept)))
            if accept:
                x, logp = prop, logp_prop
            if it < cfg.warmup:
                warm_states[it] = x
                window_acc += accept
                if (it + 1) % cfg.adapt_every == 0:
                    rate = window_acc / cfg.adapt_every
                    window_acc = 0
                    # Constant gain: the covariance estimate keeps changing during
                    # warmup and a decaying gain cannot follow it.
                    log_scale += SCALE_GAIN * (rate - cfg.target_accept)
                    if it + 1 >= 2 * cfg.adapt_every:
                        hist = warm_states[(it + 1) // 2: it + 1]
                        emp = np.cov(hist, rowvar=False).reshape(D, D)
                        if np.all(np.isfinite(emp)) and np.trace(emp) > 0:
                            C = emp + 1e-10 * np.trace(emp) / D * np.eye(D)
                    try:
                        chol = np.linalg.cholesky(base * np.exp(log_scale) * C)
                    except np.linalg.LinAlgError:
                        pass
            else:
                accepted_post += accept
                post = it - cfg.warmup
                if (post + 1) % cfg.thin == 0:
                    kept[post // cfg.thin] = x

    rate = accepted_post / max(1, n_total - cfg.warmup)
    meta = {"sampler": "rwm", "acceptance_rate": rate,
            "proposal_scale": float(base * np.exp(log_scale))}
    if not 0.05 <= rate <= 0.7:
        meta["warning"] = f"post-warmup acceptance rate {rate:.3f} outside [0.05, 0.7]"
        log.warning(meta["warning"])
    if record_proposals:
        meta["proposals"] = proposals
    n = cfg.n_keep
    return SampleSet(kept, np.zeros(n, dtype=int), [STATUS_OK] * n, cfg.seed, meta=meta)


def save_samples_csv(path, samples) -> None:
    """One sample per row, no header, full-precision decimals."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in samples:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_samples_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"sample file not found: {path}")
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: non-finite sample values")
    return arr
