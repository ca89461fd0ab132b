"""Synthetic studies built on the fitting pipeline.

simulate_dataset draws per-subject effect trajectories from a generator
model and then trials from the accumulator race, reproducibly for a
fixed seed. model_recovery fits a list of models to each generated
dataset and tabulates log marginal likelihood differences relative to
the generator; parameter_recovery scores credible-interval coverage of
the generating values; posterior_predictive overlays observed block
summaries with predictive bands.
"""

import json
import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import (chainstore, data, designs, dynamics, is2, lba, pmwg, smc,
               streams)
from .dynamics import GroupParams, ModelKind, Priors

# Default generating regime for the seven-parameter three-condition
# design: group means, a dense covariance with strong threshold
# correlations, a sticky autoregression, and mild practice trends
# (thresholds and non-decision time fall, correct drift rises).
GEN_MU = np.array([-0.43, -0.55, -1.16, -0.40, 0.30, 1.12, -1.74])
GEN_SIGMA_TRIL = [
    [0.048],
    [0.047, 0.048],
    [0.044, 0.046, 0.048],
    [0.040, 0.038, 0.035, 0.048],
    [0.027, 0.031, 0.032, 0.015, 0.048],
    [0.0028, 0.0055, 0.0080, -0.0009, 0.0084, 0.048],
    [-0.036, -0.039, -0.041, -0.026, -0.033, -0.0025, 0.048]]
GEN_PHI = 0.87
GEN_SLOPE = np.array([-0.3, -0.3, -0.3, 0.0, 0.0, 0.2, -0.2])
GEN_CURVE = np.array([0.1, 0.1, 0.1, 0.0, 0.0, -0.1, 0.1])


def gen_sigma():
    S = np.zeros((7, 7))
    for i, row in enumerate(GEN_SIGMA_TRIL):
        S[i, :i + 1] = row
    return S + np.tril(S, -1).T


def default_generator(kind):
    """Generating parameters for the built-in seven-parameter regime."""
    kind = ModelKind(kind)
    Sigma = gen_sigma()
    kw = {}
    if kind.has_trend:
        kw["beta"] = np.column_stack([GEN_MU, GEN_SLOPE, GEN_CURVE])
    else:
        kw["mu"] = GEN_MU.copy()
    if kind.has_phi:
        kw["phi"] = GEN_PHI
    return GroupParams(kind=kind, Sigma=Sigma, **kw)


@dataclass
class SimDesign:
    """One synthetic-experiment recipe."""
    design: designs.DesignMap
    kind: ModelKind
    params: GroupParams
    n_subjects: int = 19
    n_blocks: int = 100
    trials_per_block: int = 20
    schedule: str = "per-trial"   # condition assignment: per-trial|per-block
    label: str = ""

    def __post_init__(self):
        if isinstance(self.design, str):
            self.design = designs.load_design(self.design)
        self.kind = ModelKind(self.kind)
        if min(self.n_subjects, self.n_blocks, self.trials_per_block) < 1:
            raise ValueError("subjects, blocks, and trials must be >= 1")
        if self.schedule not in ("per-trial", "per-block"):
            raise ValueError('schedule must be "per-trial" or "per-block"')
        if self.params.kind is not self.kind:
            raise ValueError("generating params do not match the model kind")
        if self.params.dim != self.design.dim:
            raise ValueError("generating params do not match the design")
        if not self.label:
            self.label = self.kind.value

    def describe(self):
        d = {"design": self.design.name, "kind": self.kind.value,
             "S": self.n_subjects, "T": self.n_blocks,
             "n": self.trials_per_block, "schedule": self.schedule,
             "Sigma": self.params.Sigma.tolist()}
        if self.params.mu is not None:
            d["mu"] = self.params.mu.tolist()
        if self.params.beta is not None:
            d["beta"] = self.params.beta.tolist()
        if self.params.phi is not None:
            d["phi"] = self.params.phi
        return d


def simulate_dataset(sim, seed, index=0):
    """Generate one dataset; bit-reproducible for fixed (seed, index).

    The static generator draws a single effect vector per subject and
    uses it for every block. Generating parameters and trajectories ride
    along in meta["truth"] for recovery scoring (they are not exported
    to CSV).
    """
    rng = streams.substream(seed, streams.SIM, index)
    design, T, n = sim.design, sim.n_blocks, sim.trials_per_block
    conds = np.asarray(design.conditions, dtype=object)
    stims = np.asarray(design.stimuli, dtype=object)
    labels = [f"s{j:02d}" for j in range(sim.n_subjects)]
    alphas = np.empty((sim.n_subjects, T, design.dim))
    frames = []
    for j in range(sim.n_subjects):
        if sim.kind is ModelKind.STATIC:
            alphas[j] = dynamics.simulate_trajectory(rng, sim.params, 1)
        else:
            alphas[j] = dynamics.simulate_trajectory(rng, sim.params, T)
        blocks = []
        for t in range(1, T + 1):
            if sim.schedule == "per-trial":
                cond = conds[rng.integers(0, conds.size, n)]
            else:
                cond = np.repeat(conds[(t - 1) % conds.size], n)
            stim = stims[rng.integers(0, stims.size, n)]
            sched = designs.compile_schedule(design, cond, stim)
            b, a, v, tau = lba.natural_params(alphas[j, t - 1], sched)
            rt, ch = lba.sample_trials(rng, b, a, v, tau)
            blocks.append({
                "condition": cond, "stimulus": stim,
                "choice": [design.response_labels[c] for c in ch],
                "rt": rt})
        frames.append(blocks)
    ds = data.dataset_from_blocks(
        design, labels, frames,
        meta={"simulated": True, "seed": int(seed), "index": int(index),
              "generator": sim.kind.value})
    ds.meta["truth"] = {"params": sim.params, "alpha": alphas}
    return ds


@dataclass
class SummarySeries:
    """Accuracy / mean RT / RT spread per (block, condition)."""
    level: str                 # group | subject
    frame: pd.DataFrame

    def to_jsonl(self, path):
        self.frame.to_json(path, orient="records", lines=True)
        return path


def _with_accuracy(ds):
    df = ds.trials
    label_idx = {lab: k for k, lab in enumerate(ds.design.response_labels)}
    correct = np.fromiter(
        (ds.design.cells[(c, s)].correct
         for c, s in zip(df["condition"], df["stimulus"])),
        dtype=np.int64, count=len(df))
    chosen = np.fromiter((label_idx[c] for c in df["choice"]),
                         dtype=np.int64, count=len(df))
    out = df.copy()
    out["acc"] = (chosen == correct).astype(float)
    return out


def summary_series(ds, level="group"):
    """Observed per-block summaries; group level pools trials over
    subjects."""
    if level not in ("group", "subject"):
        raise ValueError('level must be "group" or "subject"')
    df = _with_accuracy(ds)
    keys = (["subject"] if level == "subject" else []) + \
        ["block", "condition"]
    g = df.groupby(keys, sort=False)["acc"].agg(["mean", "size"])
    rt = df.groupby(keys, sort=False)["rt"].agg(["mean", "std"])
    frame = pd.DataFrame({
        "accuracy": g["mean"], "mean_rt": rt["mean"],
        "sd_rt": rt["std"].fillna(0.0), "n": g["size"]}).reset_index()
    frame = frame.sort_values(keys, kind="stable").reset_index(drop=True)
    return SummarySeries(level=level, frame=frame)


def _draw_indices(kept, n_draws):
    if kept < 1:
        raise ValueError("chain holds no sampling-stage trajectories")
    return np.unique(np.linspace(0, kept - 1,
                                 min(n_draws, kept)).astype(np.int64))


def posterior_predictive(chain, ds, n_draws=100, seed=0):
    """Predictive block summaries from retained trajectory draws.

    Replays the observed trial schedule under each retained effect
    trajectory; a chain fitted on merged blocks predicts every block
    from its single vector. Returns observed SummarySeries plus
    predictive 2.5/50/97.5 bands, at group and subject level.
    """
    if list(map(str, chain.subj_labels)) != list(map(str, ds.subjects)):
        raise ValueError("chain and dataset subject rosters differ")
    rng = streams.substream(seed, streams.PPC)
    idx = _draw_indices(chain.traj.shape[0], n_draws)
    scheds = {}
    for s_i, lab in enumerate(ds.subjects):
        sub = ds.subject_frame(lab)
        for t, blk in sub.groupby("block", sort=True):
            scheds[(s_i, int(t))] = (
                designs.compile_schedule(ds.design,
                                         blk["condition"].to_numpy(),
                                         blk["stimulus"].to_numpy()),
                blk)
    group_stats, subj_stats = [], []
    for s in idx:
        rows = []
        for (s_i, t), (sched, blk) in scheds.items():
            alpha = chain.traj[s, s_i, min(t, int(chain.T_j[s_i])) - 1]
            b, a, v, tau = lba.natural_params(alpha, sched)
            rt, ch = lba.sample_trials(rng, b, a, v, tau)
            rows.append(pd.DataFrame({
                "subject": blk["subject"].to_numpy(),
                "block": np.int64(t),
                "condition": blk["condition"].to_numpy(),
                "stimulus": blk["stimulus"].to_numpy(),
                "choice": [ds.design.response_labels[c] for c in ch],
                "rt": rt}))
        rep = data.Dataset(design=ds.design,
                           trials=pd.concat(rows, ignore_index=True))
        group_stats.append(summary_series(rep, "group").frame)
        subj_stats.append(summary_series(rep, "subject").frame)

    def bands(stack, keys):
        allf = pd.concat(stack, ignore_index=True)
        out = allf.groupby(keys, sort=False)[
            ["accuracy", "mean_rt", "sd_rt"]].quantile(
                [0.025, 0.5, 0.975]).unstack()
        out.columns = [f"{stat}_{int(q * 1000) / 10:g}"
                       for stat, q in out.columns]
        return out.reset_index()

    return {
        "observed": summary_series(ds, "group"),
        "observed_subject": summary_series(ds, "subject"),
        "predicted": bands(group_stats, ["block", "condition"]),
        "predicted_subject": bands(subj_stats,
                                   ["subject", "block", "condition"]),
        "n_draws": int(idx.size),
    }


def _natural_names(kind, dim, design=None):
    pnames = (list(design.param_names) if design is not None
              and design.dim == dim else [f"p{i}" for i in range(dim)])
    names = []
    if kind.has_trend:
        for c in ("const", "slope", "curve"):
            names += [f"beta[{p},{c}]" for p in pnames]
    else:
        names += [f"mu[{p}]" for p in pnames]
    groups = ["mean"] * len(names)
    diag = [False] * len(names)
    for i, jj in zip(*np.tril_indices(dim)):
        names.append(f"Sigma[{pnames[i]},{pnames[jj]}]")
        groups.append("cov")
        diag.append(i == jj)
    if kind.has_phi:
        names.append("phi")
        groups.append("phi")
        diag.append(False)
    return names, groups, diag


def parameter_recovery(chain, truth_params, truth_alpha=None, design=None):
    """Coverage of generating values by the chain's credible intervals.

    Returns a table with one row per natural-scale parameter (generating
    value, 2.5/50/97.5 posterior percentiles, inside flag) plus 50%
    interval coverage of the generating trajectories when provided.
    """
    nat = chain.theta_nat[chain.stage_bounds[1]:]
    if nat.shape[0] == 0:
        raise ValueError("chain holds no sampling-stage draws")
    truth = pmwg.pack_natural(truth_params)
    if truth.shape[0] != nat.shape[1]:
        raise ValueError("generating parameters do not match the chain")
    if design is None and chain.design_name:
        try:
            design = designs.load_design(chain.design_name)
        except (ValueError, FileNotFoundError):
            design = None
    names, groups, diag = _natural_names(chain.kind, chain.dim, design)
    lo, mid, hi = np.percentile(nat, [2.5, 50.0, 97.5], axis=0)
    inside = (truth >= lo) & (truth <= hi)
    table = pd.DataFrame({
        "name": names, "group": groups, "diag": diag, "truth": truth,
        "q2.5": lo, "q50": mid, "q97.5": hi, "inside": inside})
    out = {"table": table}
    for grp, key in (("mean", "mean_inside"), ("phi", "phi_inside")):
        sel = table[table["group"] == grp]
        out[key] = (int(sel["inside"].sum()), len(sel))
    sel = table[table["diag"]]
    out["var_inside"] = (int(sel["inside"].sum()), len(sel))

    if truth_alpha is not None:
        kept = chain.traj
        S = len(chain.subj_labels)
        cov = np.zeros(S)
        for j in range(S):
            T_j = int(chain.T_j[j])
            q25, q75 = np.percentile(kept[:, j, :T_j, :], [25.0, 75.0],
                                     axis=0)
            ins = (truth_alpha[j, :T_j] >= q25) & \
                (truth_alpha[j, :T_j] <= q75)
            cov[j] = ins.mean()
        out["traj_coverage"] = float(cov.mean())
        out["traj_by_subject"] = cov
    return out


def _cell_hash(sim, kind, fit_config, is2_config, priors, seed, index):
    blob = json.dumps({
        "sim": sim.describe(), "model": ModelKind(kind).value,
        "fit": asdict(fit_config), "is2": asdict(is2_config),
        "priors": asdict(priors), "seed": int(seed), "index": int(index)},
        sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RecoveryResult:
    log_ml: pd.DataFrame       # rows: sim labels; columns: fitted models
    diff: pd.DataFrame         # log ML minus the generator's column
    se: pd.DataFrame
    cells: dict = field(default_factory=dict)

    @property
    def preferred(self):
        return self.log_ml.idxmax(axis=1)

    def generator_preferred(self):
        """Whether every row's generator attains the maximum log ML."""
        gens = [self.cells[(lab, self.log_ml.columns[0])]["generator"]
                for lab in self.log_ml.index]
        return all(self.preferred[lab] == g
                   for lab, g in zip(self.log_ml.index, gens))

    def to_csv(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.log_ml.to_csv(out / "log_ml.csv")
        self.diff.to_csv(out / "log_ml_diff.csv")
        self.se.to_csv(out / "log_ml_se.csv")
        with open(out / "cells.jsonl", "w") as fh:
            for (lab, m), cell in self.cells.items():
                fh.write(json.dumps({"row": lab, "model": m, **cell},
                                    default=str) + "\n")
        return out


def model_recovery(sims, models, fit_config, is2_config, seed=0,
                   cache_dir=None, priors=None, progress=None,
                   fit_progress=None):
    """Fit each model to each generated dataset and tabulate log ML.

    Cells are cached under cache_dir (chain file plus a result record
    keyed by a hash of the full cell recipe), so an interrupted grid
    resumes where it stopped. A failing cell records its error and the
    grid continues.
    """
    priors = priors or Priors()
    models = [ModelKind(m) for m in models]
    cache = Path(cache_dir) if cache_dir else None
    if cache:
        cache.mkdir(parents=True, exist_ok=True)
    cells = {}
    for r, sim in enumerate(sims):
        ds = None
        for mi, kind in enumerate(models):
            label = sim.label
            cell_seed = seed + 7919 * (r * len(models) + mi)
            h = _cell_hash(sim, kind, fit_config, is2_config, priors,
                           seed, r)
            rec_path = cache / f"cell{r}_{kind.value}.json" if cache else None
            if rec_path and rec_path.exists():
                rec = json.loads(rec_path.read_text())
                if rec.get("hash") == h:
                    cells[(label, kind.value)] = rec
                    if progress:
                        progress(label, kind.value, "cached")
                    continue
            if ds is None:
                ds = simulate_dataset(sim, seed, index=r)
            obs = ds.to_obs(merge=kind is ModelKind.STATIC)
            rec = {"hash": h, "generator": sim.kind.value,
                   "seed": cell_seed}
            try:
                if progress:
                    progress(label, kind.value, "fit")
                chain = pmwg.run_pmwg(
                    obs, ds.design.dim, kind, fit_config, priors,
                    seed=cell_seed, subj_labels=ds.subjects,
                    design_name=ds.design.name, progress=fit_progress)
                if cache:
                    chainstore.save_chain(
                        chain, cache / f"cell{r}_{kind.value}.bin")
                if progress:
                    progress(label, kind.value, "is2")
                est = is2.is2_estimate(obs, chain, is2_config,
                                       seed=cell_seed)
                rec.update(log_ml=est.log_ml, se=est.bootstrap_se,
                           ess=est.ess, n_outside=est.n_outside,
                           n_degenerate=est.n_degenerate)
            except Exception as err:   # keep the rest of the grid running
                rec["error"] = f"{type(err).__name__}: {err}"
            cells[(label, kind.value)] = rec
            if rec_path:
                rec_path.write_text(json.dumps(rec, indent=1))
            if progress:
                progress(label, kind.value,
                         "error" if "error" in rec else "done")

    labels = [s.label for s in sims]
    cols = [m.value for m in models]
    log_ml = pd.DataFrame(
        [[cells[(lab, c)].get("log_ml", np.nan) for c in cols]
         for lab in labels], index=labels, columns=cols)
    se = pd.DataFrame(
        [[cells[(lab, c)].get("se", np.nan) for c in cols]
         for lab in labels], index=labels, columns=cols)
    diff = log_ml.copy()
    for r, sim in enumerate(sims):
        base = log_ml.loc[sim.label, sim.kind.value] \
            if sim.kind.value in cols else log_ml.loc[sim.label].max()
        diff.loc[sim.label] = log_ml.loc[sim.label] - base
    return RecoveryResult(log_ml=log_ml, diff=diff, se=se, cells=cells)
