import json
import math

import numpy as np
import pytest

from krental.model import (Fixed, Instance, Request, RunTrace, SchemaError, Variable, check_feasible,
                           check_fractional_feasible, fixed_instance, instance_from_json, instance_to_json,
                           occupancy, validate_instance, variable_instance)
from krental.rounding import dependent_round_1ocr


def test_valid_fixed_instance_has_no_violations():
    inst = fixed_instance(3, 5.0, 1.0, math.e, [0, 1, 2, 3], [1.0, 1.5, 2.0, math.e])
    assert validate_instance(inst) == []


def test_value_above_range_is_reported_once():
    inst = fixed_instance(3, 5.0, 1.0, math.e, [0, 1, 2], [1.0, math.e * 1.5, 2.0])
    out = validate_instance(inst)
    assert len(out) == 1
    assert out[0].index == 2
    assert "v_max" in out[0].message


def test_variable_value_must_equal_duration():
    inst = variable_instance(2, 1.0, 5.0, [0, 1, 2, 3], [1, 2, 3, 4])
    reqs = list(inst.requests)
    reqs[2] = Request(3, reqs[2].arrival, 3.0, 3.5)
    out = validate_instance(inst.with_requests(reqs))
    assert [v.index for v in out] == [3]


def test_decreasing_arrivals_and_bad_ranges_are_flagged():
    inst = Instance(0, Fixed(1.0, 2.0, 1.0), (Request(1, 3.0, 1.0, 1.5), Request(2, 1.0, 1.0, 1.5)))
    msgs = [str(v) for v in validate_instance(inst)]
    assert any("positive integer" in m for m in msgs)
    assert any("v_min <= v_max" in m for m in msgs)
    assert any("precedes" in m for m in msgs)


def _trace(accepted, units=None):
    accepted = np.asarray(accepted, bool)
    units = np.where(accepted, 1, 0) if units is None else np.asarray(units)
    return RunTrace.build(accepted.astype(float), accepted, units, np.ones(len(accepted)))


def test_occupancy_empty_trace():
    inst = Instance(1, Fixed(5.0, 1.0, 1.0))
    assert occupancy(_trace([]), inst, 3.0) == 0


def test_occupancy_is_half_open():
    inst = fixed_instance(1, 5.0, 1.0, 1.0, [0.0], [1.0])
    tr = _trace([True])
    assert occupancy(tr, inst, 4.9) == 1
    assert occupancy(tr, inst, 5.0) == 0


def test_occupancy_on_worked_example_trace(worked_example):
    tr = dependent_round_1ocr(worked_example, 0.45)
    inst = fixed_instance(2, 5.0, 1.0, 1.0, worked_example.arrivals, [1.0] * 4)
    # only player 2 (arrived at t=2) holds a unit at t=2.5
    assert occupancy(tr, inst, 2.5) == 1
    assert occupancy(tr, inst, 3.0) == 2


def test_check_feasible_examples():
    inst2 = fixed_instance(2, 5.0, 1.0, 1.0, [0.0, 1.0], [1.0, 1.0])
    assert check_feasible(_trace([True, True], [1, 2]), inst2)
    inst1 = Instance(1, inst2.kind, inst2.requests)
    assert not check_feasible(_trace([True, True], [1, 1]), inst1)


def test_check_feasible_catches_double_booked_unit():
    inst = fixed_instance(2, 5.0, 1.0, 1.0, [0.0, 1.0], [1.0, 1.0])
    assert not check_feasible(_trace([True, True], [1, 1]), inst)


def test_unit_can_be_reused_at_return_time():
    inst = fixed_instance(1, 5.0, 1.0, 1.0, [0.0, 5.0], [1.0, 1.0])
    assert check_feasible(_trace([True, True], [1, 1]), inst)


def test_fractional_feasibility():
    inst = fixed_instance(1, 5.0, 1.0, 1.0, [0.0, 1.0], [1.0, 1.0])
    ok = RunTrace.build([0.5, 0.5], [False, False], [0, 0], [1, 1], integral=False)
    bad = RunTrace.build([0.6, 0.5], [False, False], [0, 0], [1, 1], integral=False)
    assert check_fractional_feasible(ok, inst)
    assert not check_fractional_feasible(bad, inst)


def test_objective_recomputes():
    inst = fixed_instance(2, 1.0, 1.0, 3.0, [0, 0.5, 1.0], [1.0, 2.0, 3.0])
    tr = RunTrace.build([1, 1, 1], [True, False, True], [1, 0, 2], [1.0, 2.0, 3.0])
    assert tr.objective == 4.0
    assert abs(tr.recompute_objective(inst) - tr.objective) <= 1e-12


def test_json_roundtrip_and_strictness():
    inst = variable_instance(3, 1.0, 4.0, [0.0, 0.5], [1.5, 4.0])
    obj = instance_to_json(inst)
    again = instance_from_json(json.loads(json.dumps(obj)))
    assert again == inst
    obj["requests"][0]["extra"] = 1
    with pytest.raises(SchemaError, match="unknown field"):
        instance_from_json(obj)
    with pytest.raises(SchemaError):
        instance_from_json({"k": 1, "kind": {"weird": {}}, "requests": []})
    with pytest.raises(SchemaError, match="unknown field"):
        instance_from_json({"k": 1, "kind": {"variable": {"d_min": 1, "d_max": 2}}, "requests": [], "x": 0})
