import math

import numpy as np
import pytest

from krental.algorithms import (_flp_step_bisect, _flp_step_closed, dop_fixed_fraction, dop_variable_objectives,
                                induced_ocr_input, plan_dop_variable, run_dop_fixed, run_dop_variable,
                                run_dop_variable_fractional, run_flp_variable)
from krental.harness import gen_hard_fixed, gen_hard_variable, gen_random, ratio_report
from krental.model import (Request, Variable, check_feasible, check_fractional_feasible, fixed_instance,
                           variable_instance)
from krental.offline import opt_flow
from krental.pricing import ExponentialPrice, FlpExp, flp_parameters, solve_phi_discretized
from krental.rounding import check_ocr_condition, exact_allocation_probabilities

E = math.e


# ------------------------------------------------------------ fixed durations


def test_fraction_zero_when_price_exceeds_value():
    phi = ExponentialPrice(1.0, E)
    # price at utilisation 0.9 is above 2
    assert dop_fixed_fraction(2.0, 1.8, 2, phi) == 0.0


def test_fraction_half_inverse_example():
    assert dop_fixed_fraction(1.0, 0.0, 2, ExponentialPrice(1.0, E)) == pytest.approx(1.0)


def test_fraction_capacity_clamp():
    assert dop_fixed_fraction(E, 2 - 0.3, 2, ExponentialPrice(1.0, E)) == pytest.approx(0.3)
    assert dop_fixed_fraction(E, 2.0, 2, ExponentialPrice(1.0, E)) == 0.0


def test_low_value_batch_hand_simulation():
    inst = fixed_instance(2, 1.0, 1.0, E, [0.0, 0.001], [1.0, 1.0])
    tr = run_dop_fixed(inst, r=0.3)
    assert tr.fractional.tolist() == pytest.approx([1.0, 0.0])
    assert tr.info["expected"] == pytest.approx(1.0)


def test_empty_fixed_instance():
    inst = fixed_instance(3, 1.0, 1.0, E, [], [])
    tr = run_dop_fixed(inst, r=0.5)
    assert len(tr) == 0 and tr.objective == 0.0


def test_fixed_traces_are_feasible_for_both_histories(rng):
    for _ in range(20):
        inst = gen_random("fixed", int(rng.integers(1, 5)), 40, seed=int(rng.integers(1 << 30)))
        for history in ("fractional", "integral"):
            tr = run_dop_fixed(inst, r=float(rng.random()), history=history)
            assert check_feasible(tr, inst)
            assert tr.objective <= opt_flow(inst) + 1e-9


def test_fixed_expectation_is_exact_through_lossless_rounding(rng):
    for _ in range(10):
        inst = gen_random("fixed", int(rng.integers(1, 4)), 30, seed=int(rng.integers(1 << 30)))
        tr = run_dop_fixed(inst, r=0.0)
        ocr = induced_ocr_input(inst, tr)
        assert check_ocr_condition(ocr)
        rep = exact_allocation_probabilities(ocr)
        assert rep.violations == []
        assert rep.max_abs_error() <= 1e-12
        v = np.array([q.valuation for q in inst.requests])[tr.info["fed"]]
        assert float(v @ np.array(rep.probabilities, float)) == pytest.approx(tr.info["expected"], abs=1e-9)


def test_fixed_plan_does_not_depend_on_seed():
    inst = gen_random("fixed", 3, 40, seed=8)
    plans = [run_dop_fixed(inst, r=r).fractional for r in (0.0, 0.4, 0.9)]
    assert all(np.array_equal(plans[0], p) for p in plans[1:])


def test_hard_fixed_family_satisfies_rounding_condition():
    for inst in gen_hard_fixed(4, 1.0, E, 10):
        assert check_ocr_condition(induced_ocr_input(inst, run_dop_fixed(inst, r=0.0)))


def _mutate_future(inst, n, rng):
    reqs = list(inst.requests)
    for j in range(n, len(reqs)):
        q = reqs[j]
        if isinstance(inst.kind, Variable):
            d = float(rng.uniform(inst.kind.d_min, inst.kind.d_max))
            reqs[j] = Request(q.index, q.arrival, d, d)
        else:
            reqs[j] = Request(q.index, q.arrival, q.duration, float(rng.uniform(inst.kind.v_min, inst.kind.v_max)))
    return inst.with_requests(reqs)


@pytest.mark.parametrize("kind", ["fixed", "variable"])
def test_decisions_ignore_future_requests(kind, rng):
    inst = gen_random(kind, 3, 40, seed=4)
    other = _mutate_future(inst, 20, rng)
    if kind == "fixed":
        runs = [run_dop_fixed(x, r=0.25) for x in (inst, other)]
        assert np.array_equal(runs[0].unit[:20], runs[1].unit[:20])
    else:
        plans = [plan_dop_variable(x) for x in (inst, other)]
        assert np.array_equal(plans[0].x_hat[:20], plans[1].x_hat[:20])
        runs = [run_dop_variable_fractional(x) for x in (inst, other)]
    assert np.array_equal(runs[0].fractional[:20], runs[1].fractional[:20])


# ------------------------------------------------------------ variable durations


def test_single_longest_request_always_accepted():
    inst = variable_instance(1, 1.0, 4.0, [0.0], [4.0])
    for s in range(20):
        tr = run_dop_variable(inst, seed=s)
        assert tr.fractional[0] == pytest.approx(1.0) and tr.accepted[0]


def test_request_below_starting_price_is_rejected():
    inst = variable_instance(1, 0.5, 5.0, [0.0], [0.6])
    phi = ExponentialPrice(2.0, 5.0)  # starts at 2/e > 0.6
    for s in range(20):
        tr = run_dop_variable(inst, phi, seed=s)
        assert tr.fractional[0] == 0.0 and not tr.accepted[0]


def test_variable_traces_feasible_and_normalised(rng):
    for _ in range(20):
        inst = gen_random("variable", int(rng.integers(1, 5)), 50, seed=int(rng.integers(1 << 30)))
        plan = plan_dop_variable(inst)
        assert np.all(plan.x_hat <= 1 - plan.level + 1e-12)
        assert np.all((plan.thresh >= 0) & (plan.thresh <= 1))
        assert np.all(plan.level <= 1 + 1e-9)
        for s in range(5):
            tr = run_dop_variable(inst, seed=s, plan=plan)
            assert check_feasible(tr, inst)
            assert tr.objective <= opt_flow(inst) + 1e-9


def test_variable_objectives_match_single_runs():
    inst = gen_random("variable", 2, 15, seed=3)
    plan = plan_dop_variable(inst)
    # the batched sampler and the per-run path agree in distribution; compare means
    batched = dop_variable_objectives(inst, 40_000, seed=1, plan=plan).mean()
    singles = np.mean([run_dop_variable(inst, seed=s, plan=plan).objective for s in range(4000)])
    expected = float(np.array([q.valuation for q in inst.requests]) @ plan.x_hat)
    assert batched == pytest.approx(expected, rel=0.02)
    assert singles == pytest.approx(expected, rel=0.05)


def test_fractional_zero_when_full():
    inst = variable_instance(1, 1.0, E, [0.0, 0.5], [E, E])
    tr = run_dop_variable_fractional(inst)
    assert tr.fractional.tolist() == pytest.approx([1.0, 0.0])


def test_fractional_traces_feasible(rng):
    for _ in range(20):
        inst = gen_random("variable", int(rng.integers(1, 5)), 60, seed=int(rng.integers(1 << 30)))
        tr = run_dop_variable_fractional(inst)
        assert check_fractional_feasible(tr, inst)
        assert tr.objective <= opt_flow(inst) + 1e-9


@pytest.mark.parametrize("r", [2.0, E, 5.0])
def test_fractional_hard_family_within_solved_ratio(r):
    res = solve_phi_discretized(0.01, 1.0, r, "fractional")
    rep = ratio_report("dop-variable-frac", gen_hard_variable(10, 1.0, r, 50), phi=res.prices,
                       bound=res.alpha_star, tol=0.1)
    assert rep.all_within
    assert rep.max_ratio <= res.alpha_star + 0.1


# ------------------------------------------------------------ forward-looking pricing


def test_flp_closed_form_matches_bisection(rng):
    for _ in range(200):
        k = int(rng.integers(1, 6))
        phi = FlpExp(float(rng.uniform(0.1, 3)), float(rng.uniform(1.5, 20)), k)
        y = rng.uniform(0, k, size=int(rng.integers(1, 8)))
        d = float(rng.integers(1, 10))
        assert _flp_step_closed(d, y, phi) == pytest.approx(_flp_step_bisect(d, y, phi), abs=1e-8)


def test_flp_fresh_single_slot():
    eta, beta, _ = flp_parameters(1)
    inst = variable_instance(1, 1.0, 1.0, [0.0], [1.0])
    tr = run_flp_variable(inst, eta, beta)
    assert tr.fractional[0] == pytest.approx(math.log(1 + 1 / eta, beta), abs=1e-12)


def test_flp_zero_when_slots_already_expensive():
    phi = FlpExp(1.0, E, 1)
    assert _flp_step_closed(1.0, np.array([1.0]), phi) == 0.0
    assert _flp_step_bisect(1.0, np.array([1.0]), phi) == 0.0


def test_flp_needs_integer_times():
    inst = variable_instance(1, 1.0, 3.0, [0.5], [2.0])
    with pytest.raises(ValueError):
        run_flp_variable(inst, 1.0, E)


@pytest.mark.parametrize("d_max", [1, 5])
def test_flp_load_stays_within_capacity(d_max, rng):
    eta, beta, _ = flp_parameters(d_max)
    for _ in range(50):
        k = int(rng.integers(1, 4))
        inst = gen_random("variable", k, 40, seed=int(rng.integers(1 << 30)),
                          params={"integral": True, "d_min": 1, "d_max": d_max, "horizon": 15})
        tr = run_flp_variable(inst, eta, beta)
        assert tr.info["load"].max() <= k + 1e-9
        assert check_fractional_feasible(tr, inst)
