"""Reproduction drivers for the banana, squiggle, funnel, logistic-regression,
bias-curve and MLP experiments.

Each driver returns a JSON-ready dict with ``rows`` (one per method and
setting), per-seed raw values and a ``timings`` entry kept separate so that
the numeric part of a report is byte-reproducible.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, replace

import numpy as np

from .evaluate import predictive_metrics, summarize, wasserstein1, wasserstein1_1d
from .geodesics import IntegratorConfig
from .laplace import (ApproxConfig, LaplaceFit, MapKind, NonSPDPrecisionError, PrecisionKind,
                      Variant, build_precision, find_map_euclidean, find_map_hausdorff,
                      riemannian_metric, sample)
from .reference import McmcConfig, exact_samples, rwm_samples
from .targets import (BananaConfig, MlpConfig, banana_target, funnel_target, gaussian_target,
                      generate_banana_data, load_logreg_dataset, load_regression_1d,
                      logreg_target, mlp_target, split_complete, split_gap, squiggle_target)

log = logging.getLogger(__name__)

ALL_VARIANTS = (Variant.ELA, Variant.RLA_B, Variant.RLA_BLOG, Variant.RLA_F)
ALL_MAPS = (MapKind.EUCLIDEAN, MapKind.HAUSDORFF)
EXPERIMENTS = ("banana", "squiggle", "funnel", "logreg", "bias", "mlp")
LABELS = {Variant.ELA: "ELA", Variant.RLA_B: "RLA-B", Variant.RLA_BLOG: "RLA-BLog",
          Variant.RLA_F: "RLA-F"}


def default_precision(map_kind: MapKind) -> PrecisionKind:
    """Hessian precision at the Euclidean MAP, Fisher precision at the Hausdorff MAP."""
    return PrecisionKind.FISHER if MapKind(map_kind) is MapKind.HAUSDORFF else PrecisionKind.NEG_HESSIAN


def find_map(target, map_kind, restarts=20, seed=0, metric="fisher"):
    if MapKind(map_kind) is MapKind.HAUSDORFF:
        return find_map_hausdorff(target, riemannian_metric(target, metric), restarts, seed)
    return find_map_euclidean(target, restarts, seed)


def _enums(variants=(), map_kinds=()):
    return tuple(Variant(v) for v in variants), tuple(MapKind(m) for m in map_kinds)


def _subsample(samples, n):
    """Evenly spaced rows (deterministic thinning) when there are more than ``n``."""
    if samples.shape[0] <= n:
        return samples
    idx = np.linspace(0, samples.shape[0] - 1, n).round().astype(int)
    return samples[idx]


class _Collector:
    """Per-row accumulation of per-seed values, nfev and failures."""

    def __init__(self):
        self.rows = {}
        self.order = []
        self.timings = {}

    def add(self, key, meta, value, nfev=np.nan, n_failed=0, seconds=0.0, error=None):
        if key not in self.rows:
            self.rows[key] = dict(meta, values=[], nfev=[], n_failed=[], errors=[])
            self.order.append(key)
            self.timings[key] = 0.0
        row = self.rows[key]
        row["values"].append(float(value))
        row["nfev"].append(float(nfev))
        row["n_failed"].append(int(n_failed))
        if error:
            row["errors"].append(error)
        self.timings[key] += seconds

    def finish(self, metric_name):
        out = []
        for key in self.order:
            row = self.rows[key]
            vals = np.array(row["values"])
            finite = vals[np.isfinite(vals)]
            nf = np.array(row["nfev"])
            nf = nf[np.isfinite(nf)]
            if finite.size:
                rep = summarize(metric_name, finite, nf if nf.size else None, row["n_failed"])
                rep_d = rep.to_dict(timing=False)
            else:
                rep_d = {"metric_name": metric_name, "value_mean": None, "value_std": None,
                         "n_runs": 0, "mean_nfev": None, "n_failed": int(sum(row["n_failed"]))}
            for k, v in list(rep_d.items()):
                if isinstance(v, float) and not np.isfinite(v):
                    rep_d[k] = None
            entry = {k: v for k, v in row.items() if k not in ("values", "nfev", "n_failed")}
            entry.update(rep_d)
            entry["per_seed"] = [None if not np.isfinite(v) else v for v in row["values"]]
            out.append(entry)
        timings = {"/".join(str(p) for p in k): round(v, 3) for k, v in self.timings.items()}
        return out, timings


def _run_methods(target, seed, variants, map_kinds, n_samples, integrator, workers,
                 precision_rule=default_precision, restarts=20, theta_hats=None):
    """Fit and sample every (map kind, variant) pair for one seed.

    Yields ``(map_kind, variant, SampleSet | None, seconds, error)``.
    """
    for mk in map_kinds:
        mk = MapKind(mk)
        t0 = time.perf_counter()
        try:
            theta_hat = (theta_hats or {}).get(mk)
            if theta_hat is None:
                theta_hat = find_map(target, mk, restarts, seed)
        except Exception as exc:  # MAP failures are reported per row, not fatal
            for v in variants:
                yield mk, Variant(v), None, 0.0, f"MAP failed: {exc}"
            continue
        map_time = time.perf_counter() - t0
        fits = {}
        for v in variants:
            v = Variant(v)
            kind = precision_rule(mk) if callable(precision_rule) else precision_rule
            cfg = ApproxConfig(variant=v, map_kind=mk, precision_kind=kind, n_samples=n_samples,
                               seed=seed, integrator=integrator)
            t0 = time.perf_counter()
            try:
                fit = fits.get(kind)
                if fit is None:
                    fit = LaplaceFit.from_precision(theta_hat, build_precision(target, theta_hat, kind),
                                                    kind, mk)
                    fits[kind] = fit
                ss = sample(fit, target, cfg, workers=workers)
            except NonSPDPrecisionError as exc:
                yield mk, v, None, 0.0, str(exc)
                continue
            yield mk, v, ss, time.perf_counter() - t0 + map_time, None


def _w1_against(ss, reference):
    ok = ss.ok_samples
    if ok.shape[0] == 0:
        return np.nan
    return wasserstein1(ok, reference)


def _base_config(**kw):
    out = {}
    for k, v in kw.items():
        if hasattr(v, "__dataclass_fields__"):
            v = asdict(v)
        elif isinstance(v, (tuple, list)):
            v = [x.value if hasattr(x, "value") else x for x in v]
        out[k] = v
    return out


# ---------------------------------------------------------------- banana

def run_banana(n_repeats=5, n_samples=2000, seed=0, variants=ALL_VARIANTS, map_kinds=ALL_MAPS,
               mcmc: McmcConfig = McmcConfig(), banana: BananaConfig = BananaConfig(),
               integrator: IntegratorConfig = IntegratorConfig(), workers=1, n_reference=2000):
    """W1 of each method against a per-seed RWM reference on freshly generated data."""
    variants, map_kinds = _enums(variants, map_kinds)
    col = _Collector()
    ref_meta = []
    for r in range(n_repeats):
        s = seed + r
        target = banana_target(banana, generate_banana_data(banana, s))
        theta_e = find_map_euclidean(target, 20, s)
        fit0 = LaplaceFit.from_precision(theta_e, build_precision(target, theta_e))
        t0 = time.perf_counter()
        ref = rwm_samples(target, replace(mcmc, seed=s), x0=theta_e, init_cov=fit0.cov)
        ref_meta.append({"seed": s, "acceptance_rate": ref.meta["acceptance_rate"],
                         "warning": ref.meta.get("warning")})
        col.timings.setdefault(("reference",), 0.0)
        col.timings[("reference",)] += time.perf_counter() - t0
        R = _subsample(ref.samples, n_reference)
        for mk, v, ss, secs, err in _run_methods(target, s, variants, map_kinds, n_samples,
                                                 integrator, workers,
                                                 theta_hats={MapKind.EUCLIDEAN: theta_e}):
            meta = {"map": mk.value, "variant": v.value, "precision": default_precision(mk).value}
            if ss is None:
                col.add((mk.value, v.value), meta, np.nan, error=err)
            else:
                col.add((mk.value, v.value), meta, _w1_against(ss, R), ss.mean_nfev,
                        ss.n_failed, secs)
    rows, timings = col.finish("wasserstein1")
    return {
        "experiment": "banana",
        "config": _base_config(n_repeats=n_repeats, n_samples=n_samples, seed=seed,
                               variants=variants, map_kinds=map_kinds, mcmc=mcmc, banana=banana,
                               integrator=integrator, n_reference=n_reference),
        "reference": ref_meta,
        "rows": rows,
        "timings": timings,
    }


# ------------------------------------------------------- squiggle / funnel

def _exact_experiment(name, target, n_repeats, n_samples, seed, variants, map_kinds, integrator,
                      workers, params):
    variants, map_kinds = _enums(variants, map_kinds)
    col = _Collector()
    floors = []
    theta_hats = {mk: find_map(target, mk, 20, seed) for mk in map_kinds}
    for r in range(n_repeats):
        s = seed + r
        R = exact_samples(target, n_samples, 1_000_003 + s).samples
        R2 = exact_samples(target, n_samples, 2_000_003 + s).samples
        floors.append(wasserstein1(R, R2))
        for mk, v, ss, secs, err in _run_methods(target, s, variants, map_kinds, n_samples,
                                                 integrator, workers, theta_hats=theta_hats):
            meta = {"map": mk.value, "variant": v.value, "precision": default_precision(mk).value}
            if ss is None:
                col.add((mk.value, v.value), meta, np.nan, error=err)
            else:
                col.add((mk.value, v.value), meta, _w1_against(ss, R), ss.mean_nfev,
                        ss.n_failed, secs)
    rows, timings = col.finish("wasserstein1")
    return {
        "experiment": name,
        "config": _base_config(n_repeats=n_repeats, n_samples=n_samples, seed=seed,
                               variants=variants, map_kinds=map_kinds, integrator=integrator,
                               **params),
        "theta_hat": {mk.value: th.tolist() for mk, th in theta_hats.items()},
        "floor": {"values": floors, "mean": float(np.mean(floors))},
        "rows": rows,
        "timings": timings,
    }


def run_squiggle(n_repeats=5, n_samples=2000, seed=0, a=1.5, S=((5.0, 0.0), (0.0, 0.05)),
                 variants=ALL_VARIANTS, map_kinds=ALL_MAPS,
                 integrator: IntegratorConfig = IntegratorConfig(), workers=1):
    target = squiggle_target(a, np.array(S, dtype=float))
    return _exact_experiment("squiggle", target, n_repeats, n_samples, seed, variants, map_kinds,
                             integrator, workers, {"a": a, "S": np.asarray(S).tolist()})


def run_funnel(n_repeats=5, n_samples=2000, seed=0, sigma=3.0, variants=ALL_VARIANTS,
               map_kinds=ALL_MAPS, integrator: IntegratorConfig = IntegratorConfig(), workers=1):
    return _exact_experiment("funnel", funnel_target(sigma), n_repeats, n_samples, seed, variants,
                             map_kinds, integrator, workers, {"sigma": sigma})


# ---------------------------------------------------------------- logreg

def run_logreg(datasets=("ripley", "pima"), standardizations=(True, False), n_repeats=5,
               n_samples=2000, seed=0, variants=ALL_VARIANTS, alpha=100.0,
               mcmc: McmcConfig = McmcConfig(), integrator: IntegratorConfig = IntegratorConfig(),
               workers=1, n_reference=2000):
    """Euclidean MAP, Hessian (= Fisher) precision, RWM reference per seed."""
    variants, _ = _enums(variants)
    col = _Collector()
    ref_meta = []
    for name in datasets:
        for stand in standardizations:
            data = load_logreg_dataset(name, standardize=stand)
            target = logreg_target(data, alpha)
            tag = "stand" if stand else "raw"
            theta_hat = find_map_euclidean(target, 20, seed)
            fit0 = LaplaceFit.from_precision(theta_hat, build_precision(target, theta_hat))
            for r in range(n_repeats):
                s = seed + r
                t0 = time.perf_counter()
                ref = rwm_samples(target, replace(mcmc, seed=s), x0=theta_hat, init_cov=fit0.cov)
                ref_meta.append({"dataset": name, "inputs": tag, "seed": s,
                                 "acceptance_rate": ref.meta["acceptance_rate"],
                                 "warning": ref.meta.get("warning")})
                col.timings.setdefault(("reference", name, tag), 0.0)
                col.timings[("reference", name, tag)] += time.perf_counter() - t0
                R = _subsample(ref.samples, n_reference)
                for mk, v, ss, secs, err in _run_methods(
                        target, s, variants, (MapKind.EUCLIDEAN,), n_samples, integrator, workers,
                        theta_hats={MapKind.EUCLIDEAN: theta_hat}):
                    meta = {"dataset": name, "inputs": tag, "variant": v.value,
                            "D": target.dim, "N": data.n}
                    key = (name, tag, v.value)
                    if ss is None:
                        col.add(key, meta, np.nan, error=err)
                    else:
                        col.add(key, meta, _w1_against(ss, R), ss.mean_nfev, ss.n_failed, secs)
    rows, timings = col.finish("wasserstein1")
    return {
        "experiment": "logreg",
        "config": _base_config(datasets=list(datasets), standardizations=list(standardizations),
                               n_repeats=n_repeats, n_samples=n_samples, seed=seed,
                               variants=variants, alpha=alpha, mcmc=mcmc, integrator=integrator,
                               n_reference=n_reference),
        "reference": ref_meta,
        "rows": rows,
        "timings": timings,
    }


# ------------------------------------------------------------------ bias

def run_bias(dims=tuple(range(1, 11)), n_repeats=5, n_samples=2000, seed=0,
             variants=(Variant.ELA, Variant.RLA_B),
             integrator: IntegratorConfig = IntegratorConfig(), workers=1):
    """First-coordinate W1 to exact draws on isotropic standard Gaussians."""
    variants, _ = _enums(variants)
    col = _Collector()
    floors = {}
    for D in dims:
        target = gaussian_target(np.zeros(D), np.eye(D))
        fl = []
        for r in range(n_repeats):
            s = seed + r
            R = exact_samples(target, n_samples, 1_000_003 + s).samples[:, 0]
            R2 = exact_samples(target, n_samples, 2_000_003 + s).samples[:, 0]
            fl.append(wasserstein1_1d(R, R2))
            for mk, v, ss, secs, err in _run_methods(
                    target, s, variants, (MapKind.EUCLIDEAN,), n_samples, integrator, workers,
                    theta_hats={MapKind.EUCLIDEAN: np.zeros(D)}):
                meta = {"D": D, "variant": v.value}
                ok = ss.ok_samples[:, 0] if ss is not None else np.empty(0)
                val = wasserstein1_1d(ok, R) if ok.size == R.size else (
                    wasserstein1(ok[:, None], R[:, None]) if ok.size else np.nan)
                col.add((D, v.value), meta, val, ss.mean_nfev if ss else np.nan,
                        ss.n_failed if ss else 0, secs, err)
        floors[D] = float(np.mean(fl))
    rows, timings = col.finish("wasserstein1_first_dim")
    for row in rows:
        if row["value_mean"] is not None:
            row["band"] = [row["value_mean"] - 2 * row["value_std"],
                           row["value_mean"] + 2 * row["value_std"]]
    return {
        "experiment": "bias",
        "config": _base_config(dims=list(dims), n_repeats=n_repeats, n_samples=n_samples,
                               seed=seed, variants=variants, integrator=integrator),
        "floor": {str(D): f for D, f in floors.items()},
        "rows": rows,
        "timings": timings,
    }


# ------------------------------------------------------------------- mlp

def run_mlp(splits=("complete", "gap"), n_repeats=5, n_samples=500, seed=0,
            variants=ALL_VARIANTS, mlp: MlpConfig = MlpConfig(),
            mcmc: McmcConfig = McmcConfig(), integrator: IntegratorConfig = IntegratorConfig(),
            workers=1, n_reference=2000):
    """Predictive MSE / NLL on held-out points with Fisher precision for every variant.

    The negative-Hessian precision is also attempted at each MAP and the outcome
    (success or the non-SPD error) is reported under ``neg_hessian_check``.
    """
    variants, _ = _enums(variants)
    data = load_regression_1d(seed=0)
    train_all, test = split_complete(data)
    col = _Collector()
    checks = []
    ref_meta = []
    for split in splits:
        if split == "complete":
            train = train_all
        elif split == "gap":
            train, _ = split_gap(train_all)
        else:
            raise ValueError(f"unknown split {split!r}")
        target = mlp_target(mlp, train)
        for r in range(n_repeats):
            s = seed + r
            theta_hat = find_map_euclidean(target, 20, s)
            try:
                build_precision(target, theta_hat, PrecisionKind.NEG_HESSIAN)
                checks.append({"split": split, "seed": s, "outcome": "ok"})
            except NonSPDPrecisionError as exc:
                checks.append({"split": split, "seed": s, "outcome": "non_spd_error",
                               "message": str(exc)})
            fitF = LaplaceFit.from_precision(theta_hat, build_precision(target, theta_hat,
                                                                        PrecisionKind.FISHER),
                                             PrecisionKind.FISHER)
            t0 = time.perf_counter()
            ref = rwm_samples(target, replace(mcmc, seed=s), x0=theta_hat, init_cov=fitF.cov)
            col.timings.setdefault(("reference", split), 0.0)
            col.timings[("reference", split)] += time.perf_counter() - t0
            ref_meta.append({"split": split, "seed": s,
                             "acceptance_rate": ref.meta["acceptance_rate"],
                             "warning": ref.meta.get("warning")})
            mse, nll = predictive_metrics(_subsample(ref.samples, n_reference), target, test)
            col.add((split, "reference", "mse"), {"split": split, "variant": "reference",
                                                  "metric": "mse"}, mse)
            col.add((split, "reference", "nll"), {"split": split, "variant": "reference",
                                                  "metric": "nll"}, nll)
            for mk, v, ss, secs, err in _run_methods(
                    target, s, variants, (MapKind.EUCLIDEAN,), n_samples, integrator, workers,
                    precision_rule=PrecisionKind.FISHER,
                    theta_hats={MapKind.EUCLIDEAN: theta_hat}):
                for metric_idx, metric in enumerate(("mse", "nll")):
                    meta = {"split": split, "variant": v.value, "metric": metric}
                    if ss is None or ss.ok_samples.shape[0] == 0:
                        col.add((split, v.value, metric), meta, np.nan,
                                n_failed=ss.n_failed if ss is not None else 0,
                                error=err or "no successful samples")
                        continue
                    val = predictive_metrics(ss.ok_samples, target, test)[metric_idx]
                    col.add((split, v.value, metric), meta, val, ss.mean_nfev, ss.n_failed,
                            secs if metric_idx == 0 else 0.0)
    rows, timings = col.finish("predictive")
    for row in rows:
        row["metric_name"] = row["metric"]
    return {
        "experiment": "mlp",
        "config": _base_config(splits=list(splits), n_repeats=n_repeats, n_samples=n_samples,
                               seed=seed, variants=variants, mlp=mlp, mcmc=mcmc,
                               integrator=integrator, n_reference=n_reference,
                               data=data.name, n_train=train_all.n, n_test=test.n),
        "neg_hessian_check": checks,
        "reference": ref_meta,
        "rows": rows,
        "timings": timings,
    }


# -------------------------------------------------------------- rendering

def _pair(row, digits=3):
    if row.get("value_mean") is None:
        return "n/a"
    return f"[{row['value_mean']:.{digits}f}, {row['value_std']:.{digits}f}]"


def _nfev(row):
    v = row.get("mean_nfev")
    return "-" if v is None or v == 0 else f"{v:.1f}"


def to_markdown(report: dict) -> str:
    exp = report["experiment"]
    rows = report["rows"]
    lines = [f"# {exp}", ""]
    if exp in ("banana", "squiggle", "funnel"):
        variants = [r["variant"] for r in rows if r["map"] == rows[0]["map"]]
        head = "| MAP | " + " | ".join(LABELS[Variant(v)] for v in variants) + " |"
        lines += ["Wasserstein-1 as [mean, std] (T = mean function evaluations)", "", head,
                  "|" + "---|" * (len(variants) + 1)]
        for mk in dict.fromkeys(r["map"] for r in rows):
            cells = []
            for v in variants:
                row = next(r for r in rows if r["map"] == mk and r["variant"] == v)
                cells.append(f"{_pair(row)} T={_nfev(row)} fail={row['n_failed']}")
            lines.append(f"| {mk} | " + " | ".join(cells) + " |")
        if "floor" in report:
            lines += ["", f"Same-distribution floor: {report['floor']['mean']:.3f}"]
    elif exp == "logreg":
        variants = list(dict.fromkeys(r["variant"] for r in rows))
        lines += ["| dataset | inputs | " + " | ".join(LABELS[Variant(v)] for v in variants)
                  + " |", "|" + "---|" * (len(variants) + 2)]
        for key in dict.fromkeys((r["dataset"], r["inputs"]) for r in rows):
            cells = []
            for v in variants:
                row = next(r for r in rows if (r["dataset"], r["inputs"]) == key
                           and r["variant"] == v)
                cells.append(f"{_pair(row)} T={_nfev(row)} fail={row['n_failed']}")
            lines.append(f"| {key[0]} | {key[1]} | " + " | ".join(cells) + " |")
    elif exp == "bias":
        lines += ["| D | variant | W1 first dim [mean, std] | mean - 2 std | mean + 2 std |",
                  "|---|---|---|---|---|"]
        for row in rows:
            band = row.get("band") or [float("nan")] * 2
            lines.append(f"| {row['D']} | {LABELS[Variant(row['variant'])]} | {_pair(row)} | "
                         f"{band[0]:.3f} | {band[1]:.3f} |")
    elif exp == "mlp":
        lines += ["| split | method | MSE | NLL | T | fail |", "|---|---|---|---|---|---|"]
        for key in dict.fromkeys((r["split"], r["variant"]) for r in rows):
            mse = next(r for r in rows if (r["split"], r["variant"]) == key and r["metric"] == "mse")
            nll = next(r for r in rows if (r["split"], r["variant"]) == key and r["metric"] == "nll")
            name = key[1] if key[1] == "reference" else LABELS[Variant(key[1])]
            lines.append(f"| {key[0]} | {name} | {_pair(mse)} | {_pair(nll)} | {_nfev(mse)} | "
                         f"{mse['n_failed']} |")
        lines += ["", "Negative-Hessian precision at the MAP:"]
        for c in report["neg_hessian_check"]:
            lines.append(f"- {c['split']} seed {c['seed']}: {c['outcome']}"
                         + (f" ({c['message']})" if "message" in c else ""))
    errors = [(r, e) for r in rows for e in r.get("errors", [])]
    if errors:
        lines += ["", "Errors:"]
        lines += [f"- {r.get('variant')}: {e}" for r, e in errors]
    return "\n".join(lines) + "\n"


RUNNERS = {
    "banana": run_banana,
    "squiggle": run_squiggle,
    "funnel": run_funnel,
    "logreg": run_logreg,
    "bias": run_bias,
    "mlp": run_mlp,
}
