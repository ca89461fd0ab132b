"""Deterministic RNG substreams keyed by integer context tuples.

Every random draw in the pipeline comes from a Generator built here, keyed
by (seed, stage, iteration, subject, ...) integers, so results are
bit-reproducible for a fixed seed regardless of execution order.
"""

import numpy as np

# stage codes used as the first key element
INIT = 0
BURNIN = 1
ADAPT = 2
SAMPLE = 3
IS2 = 4
SIM = 5
PPC = 6


def substream(seed, *key):
    """Generator for the stream identified by (seed, *key)."""
    entropy = (int(seed),) + tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))
