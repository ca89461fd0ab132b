"""Shared recipe for the desk-scale acceptance study.

One place defines the grid (generators, fitted models, sampler and
marginal-likelihood settings, seed) so the precompute script and the
acceptance tests cannot drift apart. Artifacts land in two cache
directories; the second exists only to check rerun determinism.
"""

import os
from pathlib import Path

from tvlba import (IS2Config, MCMCConfig, ModelKind, SimDesign,
                   default_generator, model_recovery)

SEED = 11
N_SUBJECTS = 10
N_BLOCKS = 30
TRIALS_PER_BLOCK = 25

# AR first so the parameter-recovery criterion has its row earliest
ROWS = [ModelKind.AR, ModelKind.STATIC, ModelKind.TREND, ModelKind.ARTREND]
MODELS = [ModelKind.STATIC, ModelKind.AR, ModelKind.TREND,
          ModelKind.ARTREND]

FIT_CONFIG = MCMCConfig(n_particles=100, burnin=500, adapt=1500,
                        sample=3000)
IS2_CONFIG = IS2Config(M=2000, R=200)

CACHE_ROOT = Path(os.environ.get(
    "TVLBA_ACCEPT_CACHE", str(Path(__file__).parent / "acceptance_cache")))
CACHE_A = CACHE_ROOT / "runA"
CACHE_B = CACHE_ROOT / "runB"


def sim_designs():
    return [SimDesign(design="forstmann", kind=k,
                      params=default_generator(k),
                      n_subjects=N_SUBJECTS, n_blocks=N_BLOCKS,
                      trials_per_block=TRIALS_PER_BLOCK, label=k.value)
            for k in ROWS]


def ar_row_index():
    return ROWS.index(ModelKind.AR)


def run_grid(cache_dir, progress=None, fit_progress=None):
    return model_recovery(sim_designs(), MODELS, FIT_CONFIG, IS2_CONFIG,
                          seed=SEED, cache_dir=cache_dir,
                          progress=progress, fit_progress=fit_progress)
