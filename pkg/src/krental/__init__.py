"""Online k-rental: rounding schemes, price-based algorithms and a verification harness."""
from ._jit import USE_NUMBA
from .algorithms import (dop_fixed_fraction, plan_dop_variable, run_dop_fixed, run_dop_variable,
                         run_dop_variable_fractional, run_flp_variable)
from .model import (Fixed, Instance, Request, RunTrace, Variable, check_feasible, fixed_instance, occupancy,
                    validate_instance, variable_instance)
from .offline import opt_bruteforce, opt_flow, opt_fractional
from .pricing import (ExponentialPrice, FlpExp, Piecewise, check_theorem4_constraints, flp_parameters, phi_fixed,
                      phi_fixed_inverse, phi_star, phi_variable_closed, solve_phi_discretized)
from .rounding import (OcrInput, check_ocr_condition, dependent_round_1ocr, exact_allocation_probabilities,
                       gamma_lower_bound, independent_round, optimal_f, variable_duration_counterexample)

__version__ = "0.1.0"
