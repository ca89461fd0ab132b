"""Design maps from (condition, stimulus) cells to accumulator parameters.

A DesignMap names the log-scale random-effect vector for an experiment and
says, for every design cell, which vector entries supply each accumulator's
threshold gap and drift mean. Built-ins cover a three-condition
speed/accuracy manipulation with two response sides ("forstmann", 7
parameters), a lexical-decision task with a speed/accuracy instruction and
four stimulus classes ("ldt-sat", 12 parameters), and a lexical-decision
task with word-frequency bias blocks and per-accumulator thresholds
("ldt-bias", 14 parameters). Custom maps load from JSON.
"""

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Cell:
    """Parameter names feeding each accumulator in one design cell."""
    b: tuple[str, str]
    v: tuple[str, str]
    correct: int  # accumulator index counted as the correct response


@dataclass(frozen=True)
class DesignMap:
    name: str
    param_names: tuple[str, ...]
    start_param: str
    tau_param: str
    response_labels: tuple[str, str]
    cells: dict[tuple[str, str], Cell] = field(repr=False)

    def __post_init__(self):
        names = set(self.param_names)
        used = {self.start_param, self.tau_param}
        for cell in self.cells.values():
            used.update(cell.b)
            used.update(cell.v)
        missing = used - names
        if missing:
            raise ValueError(f"cells reference unknown parameters {sorted(missing)}")
        unused = names - used
        if unused:
            raise ValueError(f"parameters never used by any cell: {sorted(unused)}")

    @property
    def dim(self):
        return len(self.param_names)

    @property
    def conditions(self):
        return tuple(dict.fromkeys(c for c, _ in self.cells))

    @property
    def stimuli(self):
        return tuple(dict.fromkeys(s for _, s in self.cells))

    def index(self, name):
        return self.param_names.index(name)


@dataclass
class Schedule:
    """Trial schedule for one block, compiled to kernel-ready index arrays.

    cells_* enumerate the design cells appearing in the design (fixed
    order); cellid maps each trial to its row in those tables.
    """
    design_name: str
    dim: int               # length of the effect vector
    cells_ib: np.ndarray   # (C, 2) threshold-gap columns per accumulator
    cells_iv: np.ndarray   # (C, 2) drift columns per accumulator
    ia: int                # start-point column
    itau: int              # non-decision column
    cellid: np.ndarray     # (n,) design-cell row per trial
    correct: np.ndarray    # (n,) correct accumulator index
    condition: np.ndarray  # (n,) condition code into design.conditions

    @property
    def n(self):
        return self.cellid.shape[0]


@dataclass
class TrialBlock:
    """A schedule together with observed (rt, choice) data."""
    sched: Schedule
    rt: np.ndarray
    choice: np.ndarray

    @property
    def n(self):
        return self.rt.shape[0]


def compile_schedule(design, condition, stimulus):
    """Compile per-trial condition/stimulus labels against a design map."""
    condition = np.asarray(condition, dtype=object)
    stimulus = np.asarray(stimulus, dtype=object)
    n = condition.shape[0]
    idx = design.index
    cell_keys = list(design.cells)
    cell_row = {key: k for k, key in enumerate(cell_keys)}
    cells_ib = np.empty((len(cell_keys), 2), dtype=np.int64)
    cells_iv = np.empty((len(cell_keys), 2), dtype=np.int64)
    for k, key in enumerate(cell_keys):
        cell = design.cells[key]
        cells_ib[k] = (idx(cell.b[0]), idx(cell.b[1]))
        cells_iv[k] = (idx(cell.v[0]), idx(cell.v[1]))
    cellid = np.empty(n, dtype=np.int64)
    correct = np.empty(n, dtype=np.int64)
    cond_code = np.empty(n, dtype=np.int64)
    cond_order = {c: k for k, c in enumerate(design.conditions)}
    for i in range(n):
        key = (condition[i], stimulus[i])
        try:
            cellid[i] = cell_row[key]
        except KeyError:
            raise ValueError(f"design {design.name!r} has no cell for "
                             f"condition={key[0]!r} stimulus={key[1]!r}") from None
        correct[i] = design.cells[key].correct
        cond_code[i] = cond_order[condition[i]]
    return Schedule(design_name=design.name, dim=design.dim,
                    cells_ib=cells_ib, cells_iv=cells_iv,
                    ia=idx(design.start_param), itau=idx(design.tau_param),
                    cellid=cellid, correct=correct, condition=cond_code)


def attach_data(sched, rt, choice):
    """Bind observed (rt, choice) arrays to a schedule."""
    if np.any(choice < 0) or np.any(choice > 1):
        raise ValueError("choice must be an accumulator index, 0 or 1")
    return TrialBlock(sched=sched,
                      rt=np.ascontiguousarray(rt, dtype=float),
                      choice=np.ascontiguousarray(choice, dtype=np.int64))


def merge_blocks(blocks):
    """Concatenate blocks of one subject into a single block.

    Used when fitting the single-time-step model to multi-block data; all
    blocks must come from the same design.
    """
    first = blocks[0].sched
    for b in blocks[1:]:
        if (b.sched.design_name != first.design_name
                or not np.array_equal(b.sched.cells_ib, first.cells_ib)
                or not np.array_equal(b.sched.cells_iv, first.cells_iv)):
            raise ValueError("cannot merge blocks from different designs")
    sched = Schedule(
        design_name=first.design_name, dim=first.dim,
        cells_ib=first.cells_ib, cells_iv=first.cells_iv,
        ia=first.ia, itau=first.itau,
        cellid=np.concatenate([b.sched.cellid for b in blocks]),
        correct=np.concatenate([b.sched.correct for b in blocks]),
        condition=np.concatenate([b.sched.condition for b in blocks]))
    return TrialBlock(sched=sched,
                      rt=np.concatenate([b.rt for b in blocks]),
                      choice=np.concatenate([b.choice for b in blocks]))


def _forstmann():
    cells = {}
    for cond, bcol in (("accuracy", "B_acc"), ("neutral", "B_neu"),
                       ("speed", "B_spd")):
        for stim, corr in (("left", 0), ("right", 1)):
            v = ("v_corr", "v_err") if corr == 0 else ("v_err", "v_corr")
            cells[(cond, stim)] = Cell(b=(bcol, bcol), v=v, correct=corr)
    return DesignMap(
        name="forstmann",
        param_names=("B_acc", "B_neu", "B_spd", "A", "v_err", "v_corr", "tau"),
        start_param="A", tau_param="tau",
        response_labels=("left", "right"),
        cells=cells)


_LDT_STIMULI = ("hf", "lf", "vlf", "nw")


def _ldt_cells(bcols_by_cond):
    cells = {}
    for cond, bcols in bcols_by_cond.items():
        for stim in _LDT_STIMULI:
            cells[(cond, stim)] = Cell(
                b=bcols, v=(f"v_w_{stim}", f"v_nw_{stim}"),
                correct=1 if stim == "nw" else 0)
    return cells


def _ldt_sat():
    drift = tuple(f"v_{acc}_{s}" for acc in ("w", "nw") for s in _LDT_STIMULI)
    return DesignMap(
        name="ldt-sat",
        param_names=("B_spd", "B_acc", "A") + drift + ("tau",),
        start_param="A", tau_param="tau",
        response_labels=("word", "nonword"),
        cells=_ldt_cells({"speed": ("B_spd", "B_spd"),
                          "accuracy": ("B_acc", "B_acc")}))


def _ldt_bias():
    drift = tuple(f"v_{acc}_{s}" for acc in ("w", "nw") for s in _LDT_STIMULI)
    return DesignMap(
        name="ldt-bias",
        param_names=("B_w75_w", "B_w75_nw", "B_nw75_w", "B_nw75_nw", "A")
        + drift + ("tau",),
        start_param="A", tau_param="tau",
        response_labels=("word", "nonword"),
        cells=_ldt_cells({"w75": ("B_w75_w", "B_w75_nw"),
                          "nw75": ("B_nw75_w", "B_nw75_nw")}))


BUILTIN_DESIGNS = {
    "forstmann": _forstmann,
    "ldt-sat": _ldt_sat,
    "ldt-bias": _ldt_bias,
}


def load_design(spec):
    """Resolve a built-in design name or a path to a custom JSON map."""
    if isinstance(spec, DesignMap):
        return spec
    if spec in BUILTIN_DESIGNS:
        return BUILTIN_DESIGNS[spec]()
    try:
        with open(spec, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValueError(
            f"unknown design {spec!r}: not a built-in "
            f"({', '.join(BUILTIN_DESIGNS)}) and no such JSON file"
        ) from None
    return design_from_dict(raw)


def design_from_dict(raw):
    """Build a DesignMap from the custom JSON schema.

    Expected keys: name, params (list), start, tau, response_labels (2),
    cells: {"<condition>|<stimulus>": {"b": [p0, p1], "v": [p0, p1],
    "correct": 0 or 1}}.
    """
    try:
        cells = {}
        for key, val in raw["cells"].items():
            cond, _, stim = key.partition("|")
            if not stim:
                raise ValueError(f"cell key {key!r} is not 'condition|stimulus'")
            cells[(cond, stim)] = Cell(b=tuple(val["b"]), v=tuple(val["v"]),
                                       correct=int(val["correct"]))
        return DesignMap(
            name=raw["name"],
            param_names=tuple(raw["params"]),
            start_param=raw["start"], tau_param=raw["tau"],
            response_labels=tuple(raw["response_labels"]),
            cells=cells)
    except KeyError as exc:
        raise ValueError(f"custom design is missing key {exc}") from None
