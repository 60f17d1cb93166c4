import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krental.model import check_feasible, fixed_instance
from krental.rounding import (OcrInput, active_load, check_ocr_condition, dependent_round_1ocr,
                              exact_allocation_probabilities, gamma_lower_bound, heuristic_f,
                              independent_round, independent_round_frequencies, optimal_f, pointer_log,
                              random_ocr_input, variable_duration_counterexample)
from krental.harness import sweep_heuristic_threshold

F = Fraction


# ------------------------------------------------------------ capacity condition


def test_condition_holds_on_worked_example(worked_example):
    assert check_ocr_condition(worked_example)


def test_condition_fails_when_overlapping_targets_exceed_one_unit():
    assert not check_ocr_condition(OcrInput(1, 5, (0, 1), (0.6, 0.6)))


@given(st.floats(0, 1), st.integers(1, 5))
def test_single_player_always_fits(x, k):
    assert check_ocr_condition(OcrInput(k, 1.0, (0.0,), (x,)))


# ------------------------------------------------------------ independent rounding


def test_gamma_formula_endpoints():
    assert gamma_lower_bound(7, 0.0) == 0.0
    assert gamma_lower_bound(7, 1.0) == 0.0


def test_gamma_formula_large_k():
    expected = 0.9 * (1 - math.exp(-(100.0 ** 2) / 1900.0))  # (k - fk)^2 / (fk + k) with k = 1000
    assert abs(expected - 0.89534) < 1e-5
    assert gamma_lower_bound(1000, 0.9) == pytest.approx(expected, abs=1e-15)


@given(st.integers(1, 10_000), st.floats(0, 1))
def test_gamma_between_zero_and_f(k, f):
    g = gamma_lower_bound(k, f)
    assert -1e-15 <= g <= f + 1e-15


def test_optimal_f_matches_fine_grid_for_one_unit():
    grid = np.arange(0, 1 + 1e-12, 1e-5)
    vals = [gamma_lower_bound(1, f) for f in grid]
    f_star, g_star = optimal_f(1)
    assert g_star >= max(vals) - 1e-12
    assert abs(f_star - grid[int(np.argmax(vals))]) < 2e-5


def test_optimal_gamma_nondecreasing_over_powers_of_two():
    gs = [optimal_f(2 ** i)[1] for i in range(17)]
    assert all(b >= a - 1e-12 for a, b in zip(gs, gs[1:]))


def test_heuristic_scale_close_to_optimal_from_small_k_on():
    # the 95% claim fails for one and two units; it holds from k0 upward
    k0 = sweep_heuristic_threshold(10_000)
    assert k0 == 3
    assert gamma_lower_bound(1, heuristic_f(1)) == 0.0
    assert gamma_lower_bound(2, heuristic_f(2)) < 0.95 * optimal_f(2)[1]
    for k in range(k0, 10_001):
        assert gamma_lower_bound(k, heuristic_f(k)) >= 0.95 * optimal_f(k)[1]


def test_zero_scale_serves_nobody(worked_example):
    for seed in range(20):
        assert not independent_round(worked_example, 0.0, seed).accepted.any()


def test_full_scale_single_player_always_served():
    inp = OcrInput(10, 1.0, (0.0,), (1.0,))
    assert all(independent_round(inp, 1.0, s).accepted[0] for s in range(50))


def test_independent_round_is_feasible(rng):
    for _ in range(30):
        inp = random_ocr_input(rng, n_max=30, k_max=3)
        tr = independent_round(inp, 1.0, int(rng.integers(1 << 30)))
        inst = fixed_instance(inp.k, inp.d, 1.0, 1.0, inp.arrivals, [1.0] * inp.n)
        assert check_feasible(tr, inst)


def test_independent_frequencies_respect_guarantee(worked_example):
    f, M = 0.8, 100_000
    gamma = gamma_lower_bound(2, f)
    freq = independent_round_frequencies(worked_example, f, M, seed=11)
    for x, p in zip(worked_example.targets, freq):
        target = gamma * float(x)
        sigma = math.sqrt(target * (1 - target) / M)
        assert p >= target - 3 * sigma


# ------------------------------------------------------------ dependent rounding


def test_worked_example_seed_045(worked_example):
    tr = dependent_round_1ocr(worked_example, 0.45)
    assert tr.unit.tolist() == [0, 1, 2, 0]


def test_worked_example_seed_005(worked_example):
    tr = dependent_round_1ocr(worked_example, 0.05)
    assert tr.unit[0] == 1
    assert tr.unit[3] == 1  # unit 1 returned by player 1 at t = 6


@pytest.mark.parametrize("r", [0.0, 0.3, 0.7, 0.999999])
def test_full_target_served_for_every_seed(r):
    tr = dependent_round_1ocr(OcrInput(1, 1.0, (0.0,), (1.0,)), r)
    assert tr.accepted[0]


def test_pointers_do_not_depend_on_seed(rng):
    for _ in range(20):
        inp = random_ocr_input(rng, n_max=40, k_max=4)
        logs = [dependent_round_1ocr(inp, r).info["pointers"] for r in (0.0, 0.3, 0.7, 1 - 1e-12)]
        assert all(log == logs[0] for log in logs[1:])
        assert logs[0] == pointer_log(inp)


def test_guard_rejects_over_capacity_player():
    inp = OcrInput(1, 5.0, (0.0, 1.0), (0.6, 0.6))
    for r in np.linspace(0, 0.999, 37):
        tr = dependent_round_1ocr(inp, float(r))
        assert not tr.accepted[1]
        assert tr.info["rejected"].tolist() == [False, True]


def test_seed_outside_unit_interval_is_an_error(worked_example):
    with pytest.raises(ValueError):
        dependent_round_1ocr(worked_example, 1.0)


def test_dependent_traces_are_feasible(rng):
    for _ in range(40):
        inp = random_ocr_input(rng, n_max=40, k_max=4)
        inst = fixed_instance(inp.k, inp.d, 1.0, 1.0, inp.arrivals, [1.0] * inp.n)
        for r in rng.random(5):
            assert check_feasible(dependent_round_1ocr(inp, float(r)), inst)


# ------------------------------------------------------------ exact analysis


def test_worked_example_probabilities_exact(worked_example):
    rep = exact_allocation_probabilities(worked_example)
    assert rep.exact
    assert rep.probabilities == [F(2, 5), F(1, 2), F(3, 5), F(3, 5)]
    assert rep.violations == []
    # player 4 takes unit 1 on [0, 1/10) and unit 2 on [1/2, 1)
    assert rep.intervals[3] == [(F(0), F(1, 10), 1), (F(1, 2), F(1), 2)]


def test_single_full_player_probability_one():
    rep = exact_allocation_probabilities(OcrInput(1, 1.0, (0.0,), (F(1),)))
    assert rep.probabilities == [F(1)]


def test_probabilities_equal_interval_lengths(rng):
    for _ in range(20):
        inp = random_ocr_input(rng, n_max=30, k_max=3)
        rep = exact_allocation_probabilities(inp)
        for p, runs in zip(rep.probabilities, rep.intervals):
            assert p == sum((hi - lo for lo, hi, _ in runs), F(0))
            assert 0 <= p <= 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lossless_on_random_rational_inputs(seed):
    inp = random_ocr_input(np.random.default_rng(seed), n_max=50, k_max=5)
    assert check_ocr_condition(inp)
    rep = exact_allocation_probabilities(inp)
    assert rep.violations == []
    assert rep.probabilities == list(inp.targets)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lossless_with_float_targets(seed):
    exact = random_ocr_input(np.random.default_rng(seed), n_max=50, k_max=5)
    inp = OcrInput(exact.k, exact.d, exact.arrivals, tuple(float(x) for x in exact.targets))
    rep = exact_allocation_probabilities(inp)
    assert not rep.exact
    assert rep.violations == []
    assert rep.max_abs_error() <= 1e-12


def test_sampled_frequencies_agree_with_exact_analysis(worked_example):
    rs = np.random.default_rng(5).random(20_000)
    hits = np.zeros(4)
    for r in rs:
        hits += dependent_round_1ocr(worked_example, float(r)).accepted
    freq = hits / len(rs)
    for p, x in zip(freq, worked_example.targets):
        assert abs(p - float(x)) < 4 * math.sqrt(float(x) * (1 - float(x)) / len(rs))


# ------------------------------------------------------------ variable durations


def test_counterexample_data_verbatim():
    ce = variable_duration_counterexample()
    assert ce.k == 2
    triples = list(zip(ce.arrivals, ce.targets, ce.durations))
    assert triples == [(1, F(1, 2), 5), (2, F(1, 2), 7), (F(11, 2), F(2, 3), 9), (6, F(1, 3), 8),
                       (8, F(1, 2), 10), (14, F(5, 6), 10)]


def test_counterexample_respects_fractional_capacity():
    ce = variable_duration_counterexample()
    assert check_ocr_condition(ce)


def test_counterexample_load_before_fifth_player():
    ce = variable_duration_counterexample()
    # returns at time 8 count as still in service for this tally
    load = sum((x for a, x, d in list(zip(ce.arrivals, ce.targets, ce.durations))[:4] if a + d >= 8), F(0))
    assert load == F(3, 2)
    assert active_load(ce, 4) == F(3, 2)


def test_counterexample_clash_names_player_six():
    rep = exact_allocation_probabilities(variable_duration_counterexample())
    assert len(rep.violations) == 1
    v = rep.violations[0]
    assert (v.player, v.unit, v.holder, v.r_lo, v.r_hi) == (6, 2, 3, F(0), F(1, 3))


def test_counterexample_deficit_when_busy_units_are_refused():
    rep = exact_allocation_probabilities(variable_duration_counterexample(), check_availability=True)
    assert rep.deficits() == [(6, F(1, 3))]
    assert rep.probabilities[5] == F(1, 2)


def test_ocr_json_roundtrip(worked_example, tmp_path):
    p = tmp_path / "in.json"
    p.write_text(json.dumps(worked_example.to_json()))
    from krental.rounding import load_ocr_input

    again = load_ocr_input(p)
    assert again.targets == worked_example.targets
    ce = variable_duration_counterexample()
    again = OcrInput.from_json(json.loads(json.dumps(ce.to_json())))
    assert again.targets == ce.targets and again.durations == tuple(float(d) for d in ce.durations)
