"""Trial-table ingestion, validation, and export.

A Dataset is a canonical trials frame (subject, block, condition,
stimulus, choice, rt) bound to a design map, with provenance metadata.
Ingestion drops rows with missing fields or out-of-bounds response times
and reports the counts per reason; everything else about the data is
validated, never silently repaired.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import designs, lba

REQUIRED = ("subject", "block", "condition", "stimulus", "choice", "rt")
RT_LO = 0.15    # seconds
RT_HI = 10.0
DROP_FRAC = 0.05


@dataclass
class Dataset:
    design: designs.DesignMap
    trials: pd.DataFrame               # canonical columns, sorted
    meta: dict = field(default_factory=dict)

    @property
    def subjects(self):
        return list(dict.fromkeys(self.trials["subject"]))

    @property
    def T_j(self):
        g = self.trials.groupby("subject", sort=False)["block"].max()
        return np.asarray([g[s] for s in self.subjects], dtype=np.int64)

    @property
    def n_trials(self):
        return len(self.trials)

    def subject_frame(self, label):
        return self.trials[self.trials["subject"] == label]

    def to_obs(self, merge=False):
        """Observation objects per subject, in roster order.

        merge=True concatenates each subject's blocks into one, for
        models with a single shared effect vector.
        """
        label_idx = {lab: k for k, lab in
                     enumerate(self.design.response_labels)}
        out = []
        for s in self.subjects:
            sub = self.subject_frame(s)
            blocks = []
            for t in range(1, int(sub["block"].max()) + 1):
                blk = sub[sub["block"] == t]
                sched = designs.compile_schedule(
                    self.design, blk["condition"].to_numpy(),
                    blk["stimulus"].to_numpy())
                choice = np.fromiter((label_idx[c] for c in blk["choice"]),
                                     dtype=np.int64, count=len(blk))
                blocks.append(designs.attach_data(
                    sched, blk["rt"].to_numpy(), choice))
            if merge and len(blocks) > 1:
                blocks = [designs.merge_blocks(blocks)]
            out.append(lba.LbaObs(blocks))
        return out

    def equals(self, other):
        return (self.design.name == other.design.name
                and self.trials.reset_index(drop=True).equals(
                    other.trials.reset_index(drop=True)))


def _strtod(v):
    """Exact decimal-to-double parse; pandas' fast parser can be an ulp
    off, which would break export/ingest bit-equality."""
    try:
        return float(v)
    except (TypeError, ValueError):
        return np.nan


def _canonical_choice(raw, labels):
    """Map a choice entry (label or accumulator index) to its label."""
    if raw in labels:
        return raw
    if raw in ("0", "1", 0, 1):
        return labels[int(raw)]
    raise ValueError(f"unknown choice value {raw!r}; expected one of "
                     f"{labels} or 0/1")


def ingest_csv(path, design, colmap=None, rt_unit="s", rt_lo=RT_LO,
               rt_hi=RT_HI, force=False):
    """Read a UTF-8 trial CSV into a validated Dataset.

    colmap renames canonical column names to the file's headers, e.g.
    {"subject": "participant"}. rt_unit is "s" or "ms"; bounds are in
    seconds and rows outside them are dropped (counted per reason). More
    than 5% dropped rows is an error unless force is set.
    """
    if isinstance(design, str):
        design = designs.load_design(design)
    if rt_unit not in ("s", "ms"):
        raise ValueError('rt_unit must be "s" or "ms"')
    if not 0.0 < rt_lo < rt_hi:
        raise ValueError("need 0 < rt_lo < rt_hi")
    with open(path, "rb") as fh:
        raw_bytes = fh.read()
    sha = hashlib.sha256(raw_bytes).hexdigest()
    df = pd.read_csv(path, dtype=str, encoding="utf-8",
                     skipinitialspace=True)
    colmap = colmap or {}
    rename = {src: canon for canon, src in colmap.items()}
    df = df.rename(columns=rename)
    missing_cols = [c for c in REQUIRED if c not in df.columns]
    if missing_cols:
        raise ValueError(f"missing required columns: {missing_cols}")
    df = df[list(REQUIRED)]
    n_raw = len(df)
    if n_raw == 0:
        raise ValueError("no trials")

    drops = {"missing": 0, "rt-low": 0, "rt-high": 0}
    rt = df["rt"].map(_strtod).astype(float)
    if rt_unit == "ms":
        rt = rt / 1000.0
    block = pd.to_numeric(df["block"], errors="coerce")
    bad_block = block.notna() & (block != block.round())
    missing = (df[list(REQUIRED)].isna().any(axis=1) | rt.isna()
               | block.isna() | bad_block)
    drops["missing"] = int(missing.sum())
    low = ~missing & (rt < rt_lo)
    high = ~missing & (rt > rt_hi)
    drops["rt-low"] = int(low.sum())
    drops["rt-high"] = int(high.sum())
    keep = ~(missing | low | high)

    n_drop = n_raw - int(keep.sum())
    if n_drop > DROP_FRAC * n_raw and not force:
        raise ValueError(
            f"{n_drop} of {n_raw} rows dropped "
            f"({100 * n_drop / n_raw:.1f}%, report {drops}); inspect the "
            f"file or pass force to proceed")
    if keep.sum() == 0:
        raise ValueError("no trials")

    out = pd.DataFrame({
        "subject": df.loc[keep, "subject"].astype(str),
        "block": block[keep].astype(np.int64),
        "condition": df.loc[keep, "condition"].astype(str),
        "stimulus": df.loc[keep, "stimulus"].astype(str),
        "choice": [_canonical_choice(c, design.response_labels)
                   for c in df.loc[keep, "choice"]],
        "rt": rt[keep].astype(float),
    })
    for cond, stim in zip(out["condition"], out["stimulus"]):
        if (cond, stim) not in design.cells:
            raise ValueError(
                f"design {design.name!r} has no cell for "
                f"condition={cond!r} stimulus={stim!r}")
    if (out["block"] < 1).any():
        raise ValueError("blocks are numbered from 1")
    out = out.sort_values(["subject", "block"],
                          kind="stable").reset_index(drop=True)
    for s, grp in out.groupby("subject", sort=False):
        have = set(grp["block"])
        want = set(range(1, max(have) + 1))
        if have != want:
            gap = sorted(want - have)
            raise ValueError(f"subject {s!r} is missing block(s) {gap}; "
                             f"blocks must cover 1..T without gaps")

    meta = {"source": str(path), "sha256": sha, "rt_unit": rt_unit,
            "rt_bounds": (rt_lo, rt_hi), "n_raw": n_raw,
            "n_kept": int(keep.sum()), "dropped": drops, "force": force}
    return Dataset(design=design, trials=out, meta=meta)


def export_dataset(ds, path):
    """Write the canonical trials table as CSV; ingest reads it back
    exactly (floats are printed in shortest round-trip form)."""
    ds.trials[list(REQUIRED)].to_csv(path, index=False)
    return path


def dataset_from_blocks(design, labels, subj_trials, meta=None):
    """Assemble a Dataset from per-subject lists of trial frames.

    subj_trials[j] is a list over blocks of (condition, stimulus,
    choice_label, rt) column dicts; used by the simulator.
    """
    rows = []
    for lab, blocks in zip(labels, subj_trials):
        for t, cols in enumerate(blocks, start=1):
            n = len(cols["rt"])
            rows.append(pd.DataFrame({
                "subject": [str(lab)] * n, "block": np.int64(t),
                "condition": cols["condition"],
                "stimulus": cols["stimulus"],
                "choice": cols["choice"],
                "rt": np.asarray(cols["rt"], dtype=float)}))
    trials = pd.concat(rows, ignore_index=True)
    return Dataset(design=design, trials=trials, meta=dict(meta or {}))
