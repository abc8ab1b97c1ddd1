"""``riemlap`` command line: sample, map, evaluate, plot and reproduce."""

from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import ExperimentConfig, build_target, format_validation_error
from .evaluate import predictive_metrics, wasserstein1
from .experiments import EXPERIMENTS, RUNNERS, _subsample, find_map, to_markdown
from .laplace import LaplaceFit, MapError, NonSPDPrecisionError, build_precision, sample
from .plot import write_svg
from .reference import exact_samples, load_samples_csv, rwm_samples, save_samples_csv
from .targets import DatasetError

log = logging.getLogger("riemlap")

MODULE_ERRORS = (MapError, NonSPDPrecisionError, DatasetError, np.linalg.LinAlgError, ValueError,
                 FileNotFoundError)


def dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if hasattr(obj, "value"):
        return obj.value
    return obj


def load_config(path, overrides: dict) -> ExperimentConfig:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"{path}: not valid JSON ({exc})") from exc
    approx = dict(raw.get("approx", {}))
    for key, val in overrides.items():
        if val is not None:
            approx[key] = val
    raw["approx"] = approx
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise click.UsageError(format_validation_error(exc)) from None


def _out_dir(out, cfg=None) -> Path:
    path = Path(out or (cfg.out if cfg and cfg.out else "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads(threads):
    return threads if threads else (os.cpu_count() or 1)


def _approx_options(f):
    f = click.option("--n-samples", type=int, default=None, help="Number of samples.")(f)
    f = click.option("--precision", "precision_kind", type=click.Choice(["neg_hessian", "fisher"]),
                     default=None, help="Precision used for the velocity distribution.")(f)
    f = click.option("--map-kind", type=click.Choice(["euclidean", "hausdorff"]), default=None,
                     help="Which MAP point to expand around.")(f)
    f = click.option("--variant", type=click.Choice(["ELA", "RLA_B", "RLA_BLOG", "RLA_F"]),
                     default=None, help="Approximation variant.")(f)
    f = click.option("--seed", type=int, default=None, help="Master seed.")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="JSON experiment configuration.")(f)
    return f


@click.group()
@click.version_option(__version__, prog_name="riemlap")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Riemannian Laplace approximations: sampling, evaluation and reproduction."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _fit(cfg: ExperimentConfig, target):
    approx = cfg.approx_config()
    theta_hat = find_map(target, approx.map_kind, approx.restarts, approx.seed, approx.metric)
    P = build_precision(target, theta_hat, approx.precision_kind)
    return approx, LaplaceFit.from_precision(theta_hat, P, approx.precision_kind, approx.map_kind)


@cli.command("sample")
@_approx_options
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--threads", type=int, default=None, help="Worker processes (default: all cores).")
def cmd_sample(config_path, seed, variant, map_kind, precision_kind, n_samples, out, threads):
    """Fit the approximation and write samples.csv, diagnostics.json and run.json."""
    cfg = load_config(config_path, dict(seed=seed, variant=variant, map_kind=map_kind,
                                        precision_kind=precision_kind, n_samples=n_samples))
    out_dir = _out_dir(out, cfg)
    t0 = time.perf_counter()
    try:
        target, _ = build_target(cfg.target, cfg.approx.seed)
        approx, fit = _fit(cfg, target)
        t_fit = time.perf_counter() - t0
        ss = sample(fit, target, approx, workers=_threads(threads))
    except MODULE_ERRORS as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from None
    t_sample = time.perf_counter() - t0 - t_fit
    save_samples_csv(out_dir / "samples.csv", ss.ok_samples)
    ok_nfev = ss.nfev[ss.ok_mask]
    diagnostics = {
        "variant": approx.variant, "map_kind": approx.map_kind,
        "precision_kind": approx.precision_kind,
        "n_requested": approx.n_samples, "n_ok": int(ss.ok_mask.sum()), "n_failed": ss.n_failed,
        "statuses": ss.status_counts(),
        "nfev": {"mean": ss.mean_nfev,
                 "min": int(ok_nfev.min()) if ok_nfev.size else None,
                 "max": int(ok_nfev.max()) if ok_nfev.size else None},
        "theta_hat": fit.theta_hat, "precision": fit.precision, "Sigma": fit.cov,
        "failed_indices": np.flatnonzero(~ss.ok_mask),
    }
    dump_json(out_dir / "diagnostics.json", diagnostics)
    dump_json(out_dir / "run.json", {"command": "sample", "version": __version__,
                                     "config": cfg.model_dump(mode="json")})
    dump_json(out_dir / "timings.json", {"fit_s": round(t_fit, 3), "sample_s": round(t_sample, 3)})
    click.echo(f"wrote {diagnostics['n_ok']} samples to {out_dir / 'samples.csv'} "
               f"(failed: {ss.n_failed}, mean nfev: {ss.mean_nfev:.1f})")


@cli.command("map")
@_approx_options
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
def cmd_map(config_path, seed, variant, map_kind, precision_kind, n_samples, out):
    """Compute the MAP point and precision; write map.json."""
    cfg = load_config(config_path, dict(seed=seed, variant=variant, map_kind=map_kind,
                                        precision_kind=precision_kind, n_samples=n_samples))
    out_dir = _out_dir(out, cfg)
    try:
        target, _ = build_target(cfg.target, cfg.approx.seed)
        approx, fit = _fit(cfg, target)
    except MODULE_ERRORS as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from None
    dump_json(out_dir / "map.json", {
        "map_kind": approx.map_kind, "precision_kind": approx.precision_kind,
        "theta_hat": fit.theta_hat, "grad_at_map": target.grad(fit.theta_hat),
        "precision": fit.precision, "Sigma": fit.cov})
    click.echo(f"theta_hat = {np.array2string(fit.theta_hat, precision=6)}")


def _reference(cfg: ExperimentConfig, target, seed: int):
    r = cfg.reference
    if r.kind == "csv":
        return load_samples_csv(r.path)
    if r.kind == "exact":
        return exact_samples(target, r.n_compare, 1_000_003 + seed).samples
    approx, fit = _fit(cfg, target)
    ref = rwm_samples(target, cfg.mcmc_config(seed), x0=fit.theta_hat, init_cov=fit.cov)
    return ref.samples


@cli.command("evaluate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="JSON experiment configuration (target and reference).")
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Samples CSV to evaluate.")
@click.option("--seed", type=int, default=None, help="Seed for the reference sampler.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
def cmd_evaluate(config_path, samples_path, seed, out):
    """Compare a sample file with the configured reference; write evaluation.json."""
    cfg = load_config(config_path, dict(seed=seed))
    out_dir = _out_dir(out, cfg)
    try:
        target, test = build_target(cfg.target, cfg.approx.seed)
        samples = load_samples_csv(samples_path)
        if samples.shape[1] != target.dim:
            raise ValueError(f"samples have {samples.shape[1]} columns, target has D={target.dim}")
        if cfg.target.name == "mlp":
            mse, nll = predictive_metrics(samples, target, test)
            result = {"mse": mse, "nll": nll, "n_samples": samples.shape[0]}
        else:
            ref = _subsample(_reference(cfg, target, cfg.approx.seed), cfg.reference.n_compare)
            A = _subsample(samples, cfg.reference.n_compare)
            result = {"wasserstein1": wasserstein1(A, ref), "n_samples": A.shape[0],
                      "n_reference": ref.shape[0], "reference": cfg.reference.kind}
            if cfg.reference.kind == "exact":
                floor = wasserstein1(exact_samples(target, A.shape[0], 2_000_003).samples,
                                     exact_samples(target, A.shape[0], 3_000_003).samples)
                result["floor"] = floor
    except MODULE_ERRORS as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from None
    dump_json(out_dir / "evaluation.json", result)
    click.echo(json.dumps(_jsonable(result), sort_keys=True))


@cli.command("plot")
@click.argument("samples_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON configuration naming the target.")
@click.option("--target", "target_name", type=click.Choice(["banana", "squiggle", "funnel"]),
              default=None, help="Built-in 2-D target with default parameters.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output SVG path.")
@click.option("--title", default="", help="Plot title.")
def cmd_plot(samples_path, config_path, target_name, out, title):
    """Scatter samples over density contours of a 2-D target as SVG."""
    if not config_path and not target_name:
        raise click.UsageError("give --config or --target")
    if config_path:
        cfg = load_config(config_path, {})
    else:
        cfg = ExperimentConfig.model_validate({"target": {"name": target_name}})
    try:
        target, _ = build_target(cfg.target, cfg.approx.seed)
        write_svg(out, load_samples_csv(samples_path), target, title=title)
    except MODULE_ERRORS as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from None
    click.echo(f"wrote {out}")


@cli.command("reproduce")
@click.argument("experiment", type=click.Choice(EXPERIMENTS))
@click.option("--out", type=click.Path(file_okay=False), default="reports",
              help="Output directory.")
@click.option("--seed", type=int, default=0, help="First seed; repeat r uses seed + r.")
@click.option("--n-repeats", type=int, default=5, help="Number of seeds.")
@click.option("--n-samples", type=int, default=None, help="Samples per method and seed.")
@click.option("--variant", "variants", multiple=True,
              type=click.Choice(["ELA", "RLA_B", "RLA_BLOG", "RLA_F"]),
              help="Restrict to these variants (repeatable).")
@click.option("--dataset", "datasets", multiple=True,
              help="logreg only: dataset names (repeatable; default ripley and pima).")
@click.option("--threads", type=int, default=None, help="Worker processes (default: all cores).")
def cmd_reproduce(experiment, out, seed, n_repeats, n_samples, variants, datasets, threads):
    """Run one experiment over several seeds; write <name>.json, <name>.md and timings."""
    out_dir = _out_dir(out)
    kwargs = {"n_repeats": n_repeats, "seed": seed, "workers": _threads(threads)}
    if n_samples is not None:
        kwargs["n_samples"] = n_samples
    if variants:
        kwargs["variants"] = tuple(variants)
    if datasets:
        if experiment != "logreg":
            raise click.UsageError("--dataset applies to the logreg experiment only")
        kwargs["datasets"] = tuple(datasets)
    try:
        report = RUNNERS[experiment](**kwargs)
    except MODULE_ERRORS as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from None
    timings = report.pop("timings")
    dump_json(out_dir / f"{experiment}.json", report)
    (out_dir / f"{experiment}.md").write_text(to_markdown(report), encoding="utf-8")
    dump_json(out_dir / f"{experiment}_timings.json", timings)
    click.echo(to_markdown(report))


def main():
    cli(prog_name="riemlap")


if __name__ == "__main__":
    main()
