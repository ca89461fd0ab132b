"""Small shared fixtures for the suite.

The five-parameter design keeps end-to-end paths (fit, evidence, CLI) in
the seconds range while exercising the same code as the built-in designs.
"""

import numpy as np

from tvlba.designs import Cell, DesignMap
from tvlba.dynamics import GroupParams, ModelKind
from tvlba.pmwg import MCMCConfig

MICRO_MU = np.array([-0.4, -0.5, 0.2, 1.0, -1.7])


def micro_design():
    cells = {
        ("one", "left"): Cell(b=("B", "B"), v=("v_corr", "v_err"), correct=0),
        ("one", "right"): Cell(b=("B", "B"), v=("v_err", "v_corr"), correct=1),
    }
    return DesignMap(name="micro",
                     param_names=("B", "A", "v_err", "v_corr", "tau"),
                     start_param="A", tau_param="tau",
                     response_labels=("left", "right"), cells=cells)


def micro_design_dict():
    return {
        "name": "micro",
        "params": ["B", "A", "v_err", "v_corr", "tau"],
        "start": "A", "tau": "tau",
        "response_labels": ["left", "right"],
        "cells": {
            "one|left": {"b": ["B", "B"], "v": ["v_corr", "v_err"],
                         "correct": 0},
            "one|right": {"b": ["B", "B"], "v": ["v_err", "v_corr"],
                          "correct": 1},
        },
    }


def micro_params(kind=ModelKind.STATIC, phi=0.8, var=0.04):
    kind = ModelKind(kind)
    dim = MICRO_MU.shape[0]
    kw = {"Sigma": var * np.eye(dim)}
    if kind.has_trend:
        kw["beta"] = np.column_stack(
            [MICRO_MU, np.full(dim, -0.2), np.full(dim, 0.1)])
    else:
        kw["mu"] = MICRO_MU.copy()
    if kind.has_phi:
        kw["phi"] = phi
    return GroupParams(kind=kind, **kw)


def tiny_mcmc(**kw):
    base = dict(n_particles=30, burnin=30, adapt=60, sample=80,
                traj_thin=2, min_fit_draws=40)
    base.update(kw)
    return MCMCConfig(**base)
