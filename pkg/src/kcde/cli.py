"""Command line interface: benchmark runs, one-shot fits, density queries.

Every ``bench`` flag can also come from a flat key-value config file
(``key = value`` per line, ``#`` comments); explicit flags win over the
file, the file wins over built-in defaults.  The default thread count can
be set with the ``KCDE_THREADS`` environment variable; the ``--threads``
flag wins.
"""

from __future__ import annotations

import os
import pickle
import sys
from pathlib import Path

import click
import numpy as np

from .datagen import MODEL_NAMES, even_aux, make_model, sample_aux
from .harness import DEFAULT_ESTIMATORS, ExperimentConfig, _one_split, run_experiment
from .selection import SELECTION_KINDS, HyperGrid, build_grids, select

THREADS_ENV = "KCDE_THREADS"

_INT_KEYS = {"d", "n_train", "n_val", "n_test", "n_u", "n_mc", "seed", "threads",
             "l_x", "l_y", "l_lam", "t1", "t2", "report_scale"}
_FLOAT_KEYS = {"p_x", "p_y", "p_lam"}
_BOOL_KEYS = {"normalize"}

_DEFAULTS = {
    "model": None,
    "d": 1,
    "n_train": 100,
    "n_val": 100,
    "n_test": 100,
    "n_u": 50,
    "n_mc": 100,
    "seed": 0,
    "estimators": ",".join(DEFAULT_ESTIMATORS),
    "normalize": False,
    "aux_design": "even",
    "out": ".",
    "threads": None,
    "csv_path": None,
    "response": None,
    "covariates": None,
    "p_x": 2.0,
    "p_y": 1.6,
    "p_lam": 3.0,
    "l_x": 3,
    "l_y": 3,
    "l_lam": 6,
    "t1": 40,
    "t2": 10,
    "report_scale": 0,
}


def _read_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.ClickException(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip().lower().replace("-", "_")] = val.strip()
    return values


def _coerce(key: str, val: str):
    if key in _BOOL_KEYS:
        low = val.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise click.ClickException(f"config key {key}: expected a boolean, got {val!r}")
    try:
        if key in _INT_KEYS:
            return int(val)
        if key in _FLOAT_KEYS:
            return float(val)
    except ValueError as exc:
        raise click.ClickException(f"config key {key}: {exc}") from None
    return val


def _resolve(flags: dict, config_file: str | None) -> dict:
    """Merge flag values, config-file values, and defaults (in that order)."""
    merged = dict(_DEFAULTS)
    if config_file:
        file_vals = _read_config_file(config_file)
        unknown = [k for k in file_vals if k not in _DEFAULTS]
        if unknown:
            raise click.ClickException(f"unknown config keys: {unknown}")
        for k, v in file_vals.items():
            merged[k] = _coerce(k, v)
    for k, v in flags.items():
        if v is not None:
            merged[k] = v
    if merged["threads"] is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        merged["threads"] = int(env) if env else 1
    return merged


def _split_list(text: str | None) -> tuple | None:
    if text is None:
        return None
    items = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    return items or None


def _build_config(v: dict, n_mc: int | None = None) -> ExperimentConfig:
    if not v["model"]:
        raise click.ClickException("--model is required (flag or config file)")
    if v["model"] not in MODEL_NAMES:
        raise click.ClickException(f"unknown model {v['model']!r}")
    hyper = HyperGrid(p_x=v["p_x"], p_y=v["p_y"], p_lam=v["p_lam"],
                      L_x=v["l_x"], L_y=v["l_y"], L_lam=v["l_lam"],
                      T1=v["t1"], T2=v["t2"])
    estimators = _split_list(v["estimators"]) or DEFAULT_ESTIMATORS
    try:
        return ExperimentConfig(
            model=make_model(v["model"], v["d"]),
            n_train=v["n_train"], n_val=v["n_val"], n_test=v["n_test"],
            n_u=v["n_u"], n_mc=n_mc if n_mc is not None else v["n_mc"],
            hyper=hyper, estimators=estimators, seed=v["seed"],
            normalize=bool(v["normalize"]), report_scale=v["report_scale"],
            aux_design=v["aux_design"],
            output=Path(v["out"]), csv_path=v["csv_path"],
            csv_response=v["response"], csv_covariates=_split_list(v["covariates"]),
        )
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None


def _grid_options(fn):
    opts = [
        click.option("--p-x", type=float, default=None, help="Covariate bandwidth grid ratio."),
        click.option("--p-y", type=float, default=None, help="Response bandwidth grid ratio."),
        click.option("--p-lam", type=float, default=None, help="Penalty grid ratio."),
        click.option("--l-x", type=int, default=None, help="Covariate grid half-width."),
        click.option("--l-y", type=int, default=None, help="Response grid half-width."),
        click.option("--l-lam", type=int, default=None, help="Penalty grid length."),
        click.option("--t1", type=int, default=None, help="Iteration budget, fixed step."),
        click.option("--t2", type=int, default=None, help="Iteration budget, line search."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _data_options(fn):
    opts = [
        click.option("--model", type=click.Choice(MODEL_NAMES), default=None,
                     help="Data model or 'csv' for a file."),
        click.option("--d", type=int, default=None, help="Covariate dimension."),
        click.option("--n-train", type=int, default=None),
        click.option("--n-val", type=int, default=None),
        click.option("--n-test", type=int, default=None),
        click.option("--n-u", type=int, default=None, help="Auxiliary sample size."),
        click.option("--aux-design", type=click.Choice(["even", "iid"]), default=None,
                     help="Auxiliary points: evenly spaced or i.i.d. uniform."),
        click.option("--seed", type=int, default=None),
        click.option("--csv-path", type=click.Path(), default=None, help="Input file for --model csv."),
        click.option("--response", type=str, default=None, help="Response column name."),
        click.option("--covariates", type=str, default=None, help="Comma-separated covariate columns."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Kernel-based conditional density estimation benchmarks."""


@main.command()
@_data_options
@_grid_options
@click.option("--n-mc", type=int, default=None, help="Number of replications.")
@click.option("--estimators", type=str, default=None,
              help="Comma-separated subset of " + ",".join(SELECTION_KINDS) + ".")
@click.option("--normalize/--no-normalize", default=None,
              help="Score the clipped-and-renormalised estimators.")
@click.option("--report-scale", type=int, default=None,
              help="Print table values multiplied by 10^k.")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="Flat key=value config file; flags win.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--threads", type=int, default=None,
              help=f"Replication-level processes (default ${THREADS_ENV} or 1).")
def bench(config_file, threads, **flags):
    """Run a Monte-Carlo benchmark and write per-replication and summary CSVs."""
    flags["threads"] = threads
    v = _resolve(flags, config_file)
    config = _build_config(v)
    try:
        run_experiment(config, threads=v["threads"])
    except Exception as exc:  # noqa: BLE001 - diagnostic line plus nonzero exit
        raise click.ClickException(str(exc)) from exc


@main.command()
@_data_options
@_grid_options
@click.option("--estimator", type=click.Choice(SELECTION_KINDS), default="grs-els",
              help="Estimator kind to fit.")
@click.option("--normalize/--no-normalize", default=None)
@click.option("--out", type=click.Path(), required=True, help="Path for the fitted-model file.")
def fit(estimator, out, **flags):
    """Fit one estimator on a single seeded draw and save it."""
    v = _resolve(flags, None)
    v["out"] = "."
    config = _build_config(v, n_mc=1)
    try:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
        split, support = _one_split(config, rng, None)
        if config.aux_design == "even":
            aux = even_aux(support, config.n_u)
        else:
            aux = sample_aux(support, config.n_u, rng)
        grids = build_grids(split.train, config.hyper)
        sel = select(estimator, split.train, split.val, aux, grids, f0=config.f0)
        fitted = sel.fit.with_normalize(True) if config.normalize else sel.fit
        payload = {"fit": fitted, "kind": estimator, "params": sel.params,
                   "val_loss": sel.best_loss}
        with open(out, "wb") as fh:
            pickle.dump(payload, fh)
    except click.ClickException:
        raise
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc)) from exc
    pieces = [f"{k}={v}" for k, v in sel.params.items() if k != "h_x"]
    click.echo(f"saved {estimator} fit to {out} ({', '.join(pieces)}, "
               f"val_loss={sel.best_loss:.6g})")


@main.command("eval")
@click.option("--fit", "fit_path", type=click.Path(exists=True), required=True,
              help="Fitted-model file from the fit subcommand.")
@click.option("--x", "x_text", type=str, required=True, help="Comma-separated covariate vector.")
@click.option("--y", "y_text", type=str, required=True, help="Response value(s), comma-separated.")
def eval_cmd(fit_path, x_text, y_text):
    """Evaluate a saved fit at covariate --x and response value(s) --y."""
    try:
        with open(fit_path, "rb") as fh:
            payload = pickle.load(fh)
        fitted = payload["fit"]
        x = [float(tok) for tok in x_text.split(",") if tok.strip()]
        ys = [float(tok) for tok in y_text.split(",") if tok.strip()]
        if not ys:
            raise ValueError("no response values given")
        X = np.tile(np.asarray(x, dtype=float), (len(ys), 1))
        vals = fitted.pdf_points(X, np.asarray(ys))
    except click.ClickException:
        raise
    except Exception as exc:  # noqa: BLE001
        raise click.ClickException(str(exc)) from exc
    for val in vals:
        click.echo(f"{val:.17g}")


if __name__ == "__main__":
    main()
