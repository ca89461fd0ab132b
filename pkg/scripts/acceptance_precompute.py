"""Populate the acceptance-study caches (chains + marginal likelihoods).

Run A holds the primary desk-scale artifacts; run B is a full rerun with
the identical recipe, used to check byte-level determinism. Both resume
from whatever is already cached, so interrupting and restarting is safe.

    python3 scripts/acceptance_precompute.py [--cache a|b|both]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import accept_config as ac


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cache", choices=["a", "b", "both"], default="both")
    args = ap.parse_args()
    t0 = time.time()

    def prog(label, model, status):
        print(f"[{time.time() - t0:8.0f}s] {label}/{model}: {status}",
              flush=True)

    def fit_prog(it, n_total, stage, degen):
        if it % 500 == 0:
            print(f"[{time.time() - t0:8.0f}s]   iter {it}/{n_total} "
                  f"({stage})", flush=True)
        for subj, block in degen:
            print(f"[{time.time() - t0:8.0f}s]   degenerate refresh "
                  f"subj={subj} block={block}", flush=True)

    for which, cache in (("a", ac.CACHE_A), ("b", ac.CACHE_B)):
        if args.cache not in (which, "both"):
            continue
        print(f"=== populating cache {which.upper()} at {cache}",
              flush=True)
        res = ac.run_grid(cache, progress=prog, fit_progress=fit_prog)
        print(res.log_ml.round(2).to_string(), flush=True)
        print("differences vs generator:", flush=True)
        print(res.diff.round(2).to_string(), flush=True)
        errs = {k: c["error"] for k, c in res.cells.items()
                if "error" in c}
        if errs:
            print(f"FAILED CELLS: {errs}", flush=True)
    print(f"done in {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
