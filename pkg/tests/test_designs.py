import json

import numpy as np
import pytest

from helpers import micro_design, micro_design_dict
from tvlba.designs import (Cell, DesignMap, attach_data, compile_schedule,
                           design_from_dict, load_design, merge_blocks)


def test_builtins_load_with_expected_dimensions():
    assert load_design("forstmann").dim == 7
    assert load_design("ldt-sat").dim == 12
    assert load_design("ldt-bias").dim == 14


def test_builtin_cells_cover_condition_stimulus_grid():
    for name in ("forstmann", "ldt-sat", "ldt-bias"):
        d = load_design(name)
        assert set(d.cells) == {(c, s) for c in d.conditions
                                for s in d.stimuli}


def test_forstmann_correct_side_tracks_stimulus():
    d = load_design("forstmann")
    assert d.cells[("speed", "left")].correct == 0
    assert d.cells[("speed", "right")].correct == 1
    # the correct accumulator gets the matching drift column
    assert d.cells[("accuracy", "left")].v == ("v_corr", "v_err")
    assert d.cells[("accuracy", "right")].v == ("v_err", "v_corr")


def test_design_map_passthrough():
    d = micro_design()
    assert load_design(d) is d


def test_unknown_design_name_lists_builtins():
    with pytest.raises(ValueError, match="forstmann"):
        load_design("nosuchdesign")


def test_design_json_round_trip(tmp_path):
    path = tmp_path / "micro.json"
    path.write_text(json.dumps(micro_design_dict()))
    d = load_design(str(path))
    assert d.param_names == micro_design().param_names
    assert d.cells == micro_design().cells


def test_design_from_dict_missing_key():
    raw = micro_design_dict()
    del raw["start"]
    with pytest.raises(ValueError, match="missing key"):
        design_from_dict(raw)


def test_design_from_dict_bad_cell_key():
    raw = micro_design_dict()
    raw["cells"]["oneleft"] = raw["cells"].pop("one|left")
    with pytest.raises(ValueError, match="condition"):
        design_from_dict(raw)


def test_design_map_rejects_unknown_and_unused_parameters():
    with pytest.raises(ValueError, match="unknown parameters"):
        DesignMap(name="x", param_names=("B", "A", "tau"),
                  start_param="A", tau_param="tau",
                  response_labels=("l", "r"),
                  cells={("c", "s"): Cell(b=("B", "B"), v=("vv", "vv"),
                                          correct=0)})
    with pytest.raises(ValueError, match="never used"):
        DesignMap(name="x", param_names=("B", "A", "v", "spare", "tau"),
                  start_param="A", tau_param="tau",
                  response_labels=("l", "r"),
                  cells={("c", "s"): Cell(b=("B", "B"), v=("v", "v"),
                                          correct=0)})


def test_compile_schedule_indexes_match_design():
    d = micro_design()
    conds = np.array(["one", "one", "one"], dtype=object)
    stims = np.array(["left", "right", "left"], dtype=object)
    sched = compile_schedule(d, conds, stims)
    assert sched.dim == 5
    assert sched.ia == d.index("A") and sched.itau == d.index("tau")
    np.testing.assert_array_equal(sched.correct, [0, 1, 0])
    row = sched.cellid[1]
    np.testing.assert_array_equal(
        sched.cells_iv[row], [d.index("v_err"), d.index("v_corr")])


def test_compile_schedule_unknown_cell():
    d = micro_design()
    with pytest.raises(ValueError, match="no cell"):
        compile_schedule(d, np.array(["two"], dtype=object),
                         np.array(["left"], dtype=object))


def test_attach_data_rejects_bad_choice():
    d = micro_design()
    sched = compile_schedule(d, np.array(["one"], dtype=object),
                             np.array(["left"], dtype=object))
    with pytest.raises(ValueError, match="accumulator index"):
        attach_data(sched, np.array([0.5]), np.array([2]))


def test_merge_blocks_concatenates_in_order(rng):
    d = micro_design()
    blocks = []
    for _ in range(3):
        stims = np.array(rng.choice(["left", "right"], size=4), dtype=object)
        sched = compile_schedule(d, np.array(["one"] * 4, dtype=object), stims)
        blocks.append(attach_data(sched, rng.uniform(0.3, 1.0, 4),
                                  rng.integers(0, 2, 4)))
    merged = merge_blocks(blocks)
    assert merged.n == 12
    np.testing.assert_array_equal(
        merged.rt, np.concatenate([b.rt for b in blocks]))
    np.testing.assert_array_equal(
        merged.sched.cellid, np.concatenate([b.sched.cellid for b in blocks]))


def test_merge_blocks_rejects_mixed_designs(rng):
    d1 = micro_design()
    d2 = load_design("forstmann")
    s1 = compile_schedule(d1, np.array(["one"], dtype=object),
                          np.array(["left"], dtype=object))
    s2 = compile_schedule(d2, np.array(["speed"], dtype=object),
                          np.array(["left"], dtype=object))
    b1 = attach_data(s1, np.array([0.5]), np.array([0]))
    b2 = attach_data(s2, np.array([0.5]), np.array([0]))
    with pytest.raises(ValueError, match="different designs"):
        merge_blocks([b1, b2])
