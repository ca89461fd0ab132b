"""Command-line surface for the fitting pipeline.

Commands: fit (CSV -> chain file), compare (chains -> marginal
likelihood report), ppc (predictive block summaries), simulate
(synthetic CSV), recover (model-recovery grid). Exit code 0 on success,
2 on validation problems (bad files, bad options), 3 on numerical
failures (degenerate filters, singular fits).
"""

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import (chainstore, data, designs, dynamics, experiments, is2,
               pmwg, streams)
from .dynamics import GroupParams, ModelKind, Priors

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

MODEL_NAMES = [k.value for k in ModelKind]


def _fail(code, msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, OSError, KeyError, TypeError,
                json.JSONDecodeError) as err:
            _fail(EXIT_VALIDATION, err)
        except (RuntimeError, ArithmeticError,
                np.linalg.LinAlgError) as err:
            _fail(EXIT_NUMERICAL, err)
    return wrapper


def _set_threads(n):
    os.environ.setdefault("OMP_NUM_THREADS", str(n))
    os.environ.setdefault("OPENBLAS_NUM_THREADS", str(n))
    try:
        import numba
        numba.set_num_threads(max(1, min(n, numba.get_num_threads())))
    except ImportError:
        pass


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fit_settings(config_path):
    """MCMCConfig + Priors from one JSON file (flat sampler fields, with
    an optional "priors" sub-object)."""
    if not config_path:
        return pmwg.MCMCConfig(), Priors()
    raw = _load_json(config_path)
    priors = Priors(**raw.pop("priors", {}))
    raw.pop("comment", None)
    if "sample_weights" in raw:
        raw["sample_weights"] = tuple(raw["sample_weights"])
    return pmwg.MCMCConfig(**raw), priors


def _is2_settings(config_path):
    if not config_path:
        return is2.IS2Config()
    raw = _load_json(config_path)
    raw.pop("comment", None)
    return is2.IS2Config(**raw)


def _echo_progress(it, n_total, stage, degen):
    if it % 100 == 0 or it == n_total - 1:
        click.echo(f"  iter {it + 1}/{n_total} stage={stage}", err=True)
    for subj, block in degen:
        click.echo(f"  degenerate refresh: subject {subj} block {block}",
                   err=True)


def _ingest(data_path, design, rt_unit, colmap, force):
    cmap = json.loads(colmap) if colmap else None
    ds = data.ingest_csv(data_path, design, colmap=cmap, rt_unit=rt_unit,
                         force=force)
    d = ds.meta["dropped"]
    click.echo(f"ingested {ds.n_trials} trials from "
               f"{len(ds.subjects)} subjects "
               f"(dropped: missing={d['missing']} rt-low={d['rt-low']} "
               f"rt-high={d['rt-high']})", err=True)
    return ds


@click.group()
@click.option("--threads", type=int, default=None, envvar="TVLBA_THREADS",
              help="Cap worker threads (also honors TVLBA_THREADS).")
def main(threads):
    """Time-varying hierarchical accumulator models: fitting, model
    comparison, and simulation studies."""
    if threads is not None:
        if threads < 1:
            _fail(EXIT_VALIDATION, "--threads must be >= 1")
        _set_threads(threads)


@main.command()
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--model", required=True, type=click.Choice(MODEL_NAMES))
@click.option("--design", "design_spec", required=True,
              help="Built-in design name or a design JSON path.")
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False),
              help="Sampler settings JSON.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rt-unit", default="s", type=click.Choice(["s", "ms"]),
              show_default=True)
@click.option("--colmap", default=None,
              help='JSON renaming canonical columns, e.g. '
                   '\'{"subject": "pid"}\'.')
@click.option("--force", is_flag=True,
              help="Proceed past the 5% dropped-row guard.")
@click.option("--quiet", is_flag=True, help="No progress lines.")
@_guarded
def fit(data_path, model, design_spec, config_path, seed, out_path,
        rt_unit, colmap, force, quiet):
    """Fit one model to a trial CSV and write a chain file."""
    design = designs.load_design(design_spec)
    ds = _ingest(data_path, design, rt_unit, colmap, force)
    kind = ModelKind(model)
    obs = ds.to_obs(merge=kind is ModelKind.STATIC)
    config, priors = _fit_settings(config_path)
    chain = pmwg.run_pmwg(
        obs, design.dim, kind, config, priors, seed=seed,
        subj_labels=ds.subjects, design_name=design.name,
        progress=None if quiet else _echo_progress)
    chainstore.save_chain(chain, out_path)
    degen = chain.extra["degen_total"]
    click.echo(f"wrote {out_path}: {chain.sampling_theta_x.shape[0]} "
               f"sampling draws, phi acceptance "
               f"{chain.phi_accept:.2f}, degenerate refreshes "
               f"{int(np.sum(degen))}")


@main.command()
@click.option("--chains", "chain_paths", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--design", "design_spec", default=None,
              help="Override design resolution (needed for custom JSON).")
@click.option("--is2-config", "is2_config_path",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(),
              help="Also write the report as CSV.")
@click.option("--rt-unit", default="s", type=click.Choice(["s", "ms"]),
              show_default=True)
@click.option("--colmap", default=None)
@click.option("--force", is_flag=True)
@_guarded
def compare(chain_paths, data_path, design_spec, is2_config_path, seed,
            out_path, rt_unit, colmap, force):
    """Estimate log marginal likelihood for each chain on one dataset."""
    config = _is2_settings(is2_config_path)
    rows = []
    ds = None
    for path in chain_paths:
        chain = chainstore.load_chain(path)
        if ds is None:
            design = designs.load_design(design_spec or chain.design_name)
            ds = _ingest(data_path, design, rt_unit, colmap, force)
        obs = ds.to_obs(merge=chain.kind is ModelKind.STATIC)
        est = is2.is2_estimate(obs, chain, config, seed=seed)
        rows.append({"chain": str(path), "model": chain.kind.value,
                     "log_ml": est.log_ml, "se": est.bootstrap_se,
                     "ess": est.ess})
    best = max(range(len(rows)), key=lambda i: rows[i]["log_ml"])
    click.echo(f"{'model':10s} {'log ML (SE)':>22s}")
    for i, r in enumerate(rows):
        mark = "  <- preferred" if i == best else ""
        click.echo(f"{r['model']:10s} "
                   f"{r['log_ml']:15.2f} ({r['se']:.2f}){mark}")
    if out_path:
        import pandas as pd
        pd.DataFrame(rows).to_csv(out_path, index=False)
        click.echo(f"wrote {out_path}", err=True)


@main.command()
@click.option("--chain", "chain_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--design", "design_spec", default=None)
@click.option("--draws", default=100, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
@click.option("--rt-unit", default="s", type=click.Choice(["s", "ms"]),
              show_default=True)
@click.option("--colmap", default=None)
@click.option("--force", is_flag=True)
@_guarded
def ppc(chain_path, data_path, design_spec, draws, seed, out_dir,
        rt_unit, colmap, force):
    """Posterior predictive block summaries with 95% bands."""
    chain = chainstore.load_chain(chain_path)
    design = designs.load_design(design_spec or chain.design_name)
    ds = _ingest(data_path, design, rt_unit, colmap, force)
    rep = experiments.posterior_predictive(chain, ds, n_draws=draws,
                                           seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep["observed"].to_jsonl(out / "observed_group.jsonl")
    rep["observed_subject"].to_jsonl(out / "observed_subject.jsonl")
    rep["predicted"].to_csv(out / "predicted_group.csv", index=False)
    rep["predicted_subject"].to_csv(out / "predicted_subject.csv",
                                    index=False)
    click.echo(f"wrote predictive summaries ({rep['n_draws']} draws) "
               f"to {out}")


def _sim_from_dict(raw):
    design = designs.load_design(raw["design"])
    kind = ModelKind(raw["kind"])
    if "params" in raw:
        p = raw["params"]
        params = GroupParams(
            kind=kind, Sigma=np.asarray(p["Sigma"], dtype=float),
            mu=(np.asarray(p["mu"], dtype=float)
                if "mu" in p else None),
            beta=(np.asarray(p["beta"], dtype=float)
                  if "beta" in p else None),
            phi=p.get("phi"))
    else:
        params = experiments.default_generator(kind)
        if params.dim != design.dim:
            raise ValueError(
                f"no default generating parameters for design "
                f"{design.name!r}; supply \"params\"")
    return experiments.SimDesign(
        design=design, kind=kind, params=params,
        n_subjects=raw.get("subjects", 19),
        n_blocks=raw.get("blocks", 100),
        trials_per_block=raw.get("trials", 20),
        schedule=raw.get("schedule", "per-trial"),
        label=raw.get("label", ""))


@main.command()
@click.option("--sim-design", "sim_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Synthetic-experiment recipe JSON.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@_guarded
def simulate(sim_path, seed, out_path):
    """Generate a synthetic trial CSV (plus a .truth.json sidecar)."""
    sim = _sim_from_dict(_load_json(sim_path))
    ds = experiments.simulate_dataset(sim, seed)
    data.export_dataset(ds, out_path)
    truth = ds.meta["truth"]
    record = {"kind": sim.kind.value, "seed": seed,
              "Sigma": truth["params"].Sigma.tolist(),
              "alpha": truth["alpha"].tolist()}
    if truth["params"].mu is not None:
        record["mu"] = truth["params"].mu.tolist()
    if truth["params"].beta is not None:
        record["beta"] = truth["params"].beta.tolist()
    if truth["params"].phi is not None:
        record["phi"] = truth["params"].phi
    with open(str(out_path) + ".truth.json", "w") as fh:
        json.dump(record, fh)
    click.echo(f"wrote {ds.n_trials} trials for {len(ds.subjects)} "
               f"subjects to {out_path}")


@main.command()
@click.option("--grid", "grid_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON: rows (sim recipes), models, fit/is2 settings.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--cache-dir", "cache_dir", default=None, type=click.Path())
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
@click.option("--quiet", is_flag=True)
@_guarded
def recover(grid_path, seed, cache_dir, out_dir, quiet):
    """Run a model-recovery grid and write the difference tables."""
    raw = _load_json(grid_path)
    sims = [_sim_from_dict(r) for r in raw["rows"]]
    models = [ModelKind(m) for m in raw.get("models", MODEL_NAMES)]
    fit_raw = dict(raw.get("fit_config", {}))
    priors = Priors(**fit_raw.pop("priors", {}))
    if "sample_weights" in fit_raw:
        fit_raw["sample_weights"] = tuple(fit_raw["sample_weights"])
    fit_config = pmwg.MCMCConfig(**fit_raw)
    is2_config = is2.IS2Config(**raw.get("is2_config", {}))

    def prog(label, model, status):
        if not quiet:
            click.echo(f"  [{label} / {model}] {status}", err=True)

    res = experiments.model_recovery(
        sims, models, fit_config, is2_config, seed=seed,
        cache_dir=cache_dir, priors=priors, progress=prog)
    res.to_csv(out_dir)
    click.echo("log ML differences vs generator:")
    click.echo(res.diff.round(2).to_string())
    failed = [(lab, m) for (lab, m), c in res.cells.items()
              if "error" in c]
    if failed:
        for lab, m in failed:
            click.echo(f"cell failed: {lab}/{m}: "
                       f"{res.cells[(lab, m)]['error']}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"wrote tables to {out_dir}")


if __name__ == "__main__":
    main()
