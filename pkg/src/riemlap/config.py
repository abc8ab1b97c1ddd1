"""Validated experiment configuration (JSON file plus CLI overrides)."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .geodesics import IntegratorConfig, ShootingConfig
from .laplace import ApproxConfig, MapKind, PrecisionKind, Variant
from .reference import McmcConfig
from .targets import (BananaConfig, MlpConfig, banana_target, funnel_target, gaussian_target,
                      generate_banana_data, load_csv_dataset, load_logreg_dataset,
                      load_regression_1d, logreg_target, mlp_target, split_complete, split_gap,
                      squiggle_target)
from .targets.datasets import LOGREG_FILES

TargetName = Literal["gaussian", "banana", "squiggle", "funnel", "logreg", "mlp"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TargetSpec(_Strict):
    name: TargetName
    # gaussian
    mean: Optional[list[float]] = None
    cov: Optional[list[list[float]]] = None
    # banana
    sigma_theta: float = Field(2.0, gt=0)
    sigma_y: float = Field(2.0, gt=0)
    n_obs: int = Field(100, ge=1)
    theta1_true: float = 0.5
    theta2sq_true: float = 0.75
    data_seed: Optional[int] = None
    # squiggle
    a: float = 1.5
    S: list[list[float]] = [[5.0, 0.0], [0.0, 0.05]]
    mu: list[float] = [0.0, 0.0]
    # funnel
    sigma: float = Field(3.0, gt=0)
    # logreg
    dataset: Optional[str] = None
    standardize: bool = True
    add_intercept: bool = True
    alpha: float = Field(100.0, gt=0)
    # mlp
    hidden: int = Field(10, ge=1)
    noise_std: float = Field(0.3, gt=0)
    prior_prec: float = Field(1.0, gt=0)
    split: Literal["complete", "gap"] = "complete"

    @model_validator(mode="after")
    def _check(self):
        if self.name == "gaussian":
            if self.mean is None or self.cov is None:
                raise ValueError("gaussian target needs 'mean' and 'cov'")
            if np.shape(self.cov) != (len(self.mean), len(self.mean)):
                raise ValueError("cov must be a square matrix matching mean")
        if self.name == "logreg":
            if not self.dataset:
                raise ValueError("logreg target needs 'dataset' (a known name or a CSV path)")
            if self.dataset not in LOGREG_FILES and not Path(self.dataset).exists():
                raise ValueError(f"dataset file {self.dataset!r} does not exist")
        if self.name == "mlp" and self.dataset and not Path(self.dataset).exists():
            raise ValueError(f"dataset file {self.dataset!r} does not exist")
        return self


class IntegratorSpec(_Strict):
    rtol: float = Field(1e-3, gt=0)
    atol: float = Field(1e-6, gt=0)
    max_steps: int = Field(4096, ge=1)


class ApproxSpec(_Strict):
    variant: Variant = Variant.RLA_F
    map_kind: MapKind = MapKind.EUCLIDEAN
    precision_kind: Optional[PrecisionKind] = None
    n_samples: int = Field(2000, ge=1)
    seed: int = Field(0, ge=0)
    metric: Literal["fisher", "empirical_fisher"] = "fisher"
    restarts: int = Field(20, ge=1)
    integrator: IntegratorSpec = IntegratorSpec()

    def resolved_precision(self) -> PrecisionKind:
        if self.precision_kind is not None:
            return self.precision_kind
        return PrecisionKind.FISHER if self.map_kind is MapKind.HAUSDORFF else PrecisionKind.NEG_HESSIAN


class ReferenceSpec(_Strict):
    kind: Literal["exact", "rwm", "csv"] = "exact"
    path: Optional[str] = None
    n_keep: int = Field(20000, ge=1)
    warmup: int = Field(50000, ge=0)
    thin: int = Field(10, ge=1)
    n_compare: int = Field(2000, ge=1)

    @field_validator("path")
    @classmethod
    def _exists(cls, v):
        if v is not None and not Path(v).exists():
            raise ValueError(f"reference file {v!r} does not exist")
        return v

    @model_validator(mode="after")
    def _need_path(self):
        if self.kind == "csv" and not self.path:
            raise ValueError("reference kind 'csv' needs 'path'")
        return self


class ExperimentConfig(_Strict):
    target: TargetSpec
    approx: ApproxSpec = ApproxSpec()
    reference: ReferenceSpec = ReferenceSpec()
    n_repeats: int = Field(5, ge=1)
    out: Optional[str] = None

    def approx_config(self, seed: Optional[int] = None) -> ApproxConfig:
        a = self.approx
        return ApproxConfig(
            variant=a.variant, map_kind=a.map_kind, precision_kind=a.resolved_precision(),
            n_samples=a.n_samples, seed=a.seed if seed is None else seed,
            integrator=IntegratorConfig(rtol=a.integrator.rtol, atol=a.integrator.atol,
                                        max_steps=a.integrator.max_steps),
            shooting=ShootingConfig(), metric=a.metric, restarts=a.restarts)

    def mcmc_config(self, seed: int) -> McmcConfig:
        r = self.reference
        return McmcConfig(n_keep=r.n_keep, warmup=r.warmup, thin=r.thin, seed=seed)


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def build_target(spec: TargetSpec, seed: int = 0):
    """Construct the target (and, for the MLP, the held-out test set)."""
    name = spec.name
    if name == "gaussian":
        return gaussian_target(np.array(spec.mean, dtype=float), np.array(spec.cov, dtype=float)), None
    if name == "banana":
        cfg = BananaConfig(spec.sigma_theta, spec.sigma_y, spec.n_obs, spec.theta1_true,
                           spec.theta2sq_true)
        data_seed = seed if spec.data_seed is None else spec.data_seed
        return banana_target(cfg, generate_banana_data(cfg, data_seed)), None
    if name == "squiggle":
        return squiggle_target(spec.a, np.array(spec.S, dtype=float), spec.mu), None
    if name == "funnel":
        return funnel_target(spec.sigma), None
    if name == "logreg":
        if spec.dataset in LOGREG_FILES:
            data = load_logreg_dataset(spec.dataset, spec.standardize, spec.add_intercept)
        else:
            data = load_csv_dataset(spec.dataset, spec.standardize, spec.add_intercept)
        return logreg_target(data, spec.alpha), None
    if name == "mlp":
        data = (load_csv_dataset(spec.dataset, standardize=False, add_intercept=False)
                if spec.dataset else load_regression_1d(seed=0))
        train, test = split_complete(data)
        if spec.split == "gap":
            train, _ = split_gap(train)
        cfg = MlpConfig(spec.hidden, spec.noise_std, spec.prior_prec)
        return mlp_target(cfg, train), test
    raise ValueError(f"unknown target {name!r}")
