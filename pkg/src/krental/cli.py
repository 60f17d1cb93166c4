"""Command-line entry point (``krental``).

Exit status is 0 on success and 2 when a check finds a constraint
violation, so the commands can gate CI jobs.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .model import load_instance, save_instance, Variable
from .offline import opt_bruteforce, solve_flow
from .pricing import (ExponentialPrice, check_theorem4_constraints, load_prices, save_prices,
                      solve_phi_discretized)
from .rounding import exact_allocation_probabilities, load_ocr_input, variable_duration_counterexample

EXIT_OK = 0
EXIT_VIOLATION = 2


def _out_path(args, name):
    p = Path(name)
    if not p.is_absolute() and args.out_dir:
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, text: str, out=None):
    if out:
        path = _out_path(args, out)
        path.write_text(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_phi(spec, instance):
    if spec in (None, "closed"):
        return None  # each algorithm falls back to its exponential price
    if spec.startswith("file:"):
        return load_prices(spec[5:])
    raise SystemExit(f"--phi must be 'closed' or 'file:prices.json', got {spec!r}")


def _flp_args(args):
    if args.eta is not None and args.beta is not None:
        return args.eta, args.beta
    return None


# ------------------------------------------------------------------ commands


def cmd_generate(args):
    fam = args.family
    if fam == "hard-fixed":
        insts = harness.gen_hard_fixed(args.k, args.vmin, args.vmax, args.m, args.epsilon)
    elif fam == "hard-variable":
        insts = harness.gen_hard_variable(args.k, args.dmin, args.dmax, args.m, args.epsilon)
    else:
        kind = fam.split("-", 1)[1]
        params = {"horizon": args.horizon, "d": args.d, "v_min": args.vmin, "v_max": args.vmax,
                  "d_min": args.dmin, "d_max": args.dmax, "integral": args.integral}
        insts = [harness.gen_random(kind, args.k, args.n, seed=[args.seed, i], params=params)
                 for i in range(args.count)]
    for i, inst in enumerate(insts, start=1):
        path = _out_path(args, f"{args.prefix}{i:03d}.json")
        save_instance(inst, path)
    print(f"wrote {len(insts)} instance(s) to {Path(args.out_dir or '.').resolve()}")
    return EXIT_OK


def cmd_run(args):
    inst = load_instance(args.instance)
    phi = _load_phi(args.phi, inst)
    if args.trials > 1 or (args.out and args.out.endswith(".csv")):
        st = harness.evaluate(args.alg, inst, phi, args.trials, seed=args.seed, params=_flp_args(args))
        header = "mean,std,ci,trials,exact\n"
        _emit(args, header + f"{st.mean!r},{st.std!r},{st.ci!r},{st.trials},{int(st.exact)}\n", args.out)
        return EXIT_OK
    tr = harness.run_once(args.alg, inst, phi, seed=args.seed, params=_flp_args(args))
    _emit(args, json.dumps(tr.to_json(), indent=1), args.out)
    return EXIT_OK


def cmd_evaluate(args):
    inst = load_instance(args.instance)
    st = harness.evaluate(args.alg, inst, _load_phi(args.phi, inst), args.trials, seed=args.seed,
                          params=_flp_args(args))
    _emit(args, json.dumps(st.to_dict(), indent=1), args.out)
    return EXIT_OK


def cmd_ratio_report(args):
    if args.family == "hard-fixed":
        fam = harness.gen_hard_fixed(args.k, args.vmin, args.vmax, args.m, args.epsilon)
        bound = 1.0 + math.log(args.vmax / args.vmin)
    else:
        fam = harness.gen_hard_variable(args.k, args.dmin, args.dmax, args.m, args.epsilon)
        bound = 3.0 * (1.0 + math.log(args.dmax / args.dmin))
    phi = _load_phi(args.phi, fam[0])
    if args.bound is not None:
        bound = args.bound
    elif phi is not None:
        data = json.loads(Path(args.phi[5:]).read_text())
        bound = data.get("alpha") or bound
    rep = harness.ratio_report(args.alg, fam, phi, args.trials, seed=args.seed, bound=bound, tol=args.tol,
                               threads=args.threads, params=_flp_args(args))
    _emit(args, rep.to_csv(), args.out)
    print(f"max ratio {rep.max_ratio:.6f} (bound {bound:.6f})", file=sys.stderr)
    return EXIT_OK if rep.all_within else EXIT_VIOLATION


def cmd_solve_phi(args):
    res = solve_phi_discretized(args.epsilon, args.dmin, args.dmax, args.variant, args.convention)
    path = _out_path(args, args.out)
    save_prices(res, path)
    c = res.certificate
    print(f"alpha* = {res.alpha_star:.6f}  min slacks: first {c.first:.3e}, second {c.second:.3e}  -> {path}")
    return EXIT_OK if c.passed else EXIT_VIOLATION


def cmd_check_phi(args):
    if args.phi == "closed":
        phi = ExponentialPrice(args.dmin, args.dmax)
    else:
        phi = load_prices(args.phi[5:] if args.phi.startswith("file:") else args.phi)
    alpha = args.alpha if args.alpha is not None else 3.0 * (1.0 + math.log(args.dmax / args.dmin))
    c = check_theorem4_constraints(phi, alpha, d_min=args.dmin, d_max=args.dmax, n_d=args.n_d, n_y=args.n_y,
                                   variant=args.variant)
    print(json.dumps(c.to_json(), indent=1))
    return EXIT_OK if c.passed else EXIT_VIOLATION


def cmd_gamma_curve(args):
    ks = args.k_values or [2 ** i for i in range(0, args.max_exp + 1)]
    text = harness.rows_to_csv(harness.gamma_curve(ks))
    _emit(args, text, args.out)
    if args.out:
        svg = _out_path(args, Path(args.out).with_suffix(".svg").name)
        harness.plot_curve(text, "k", ["gamma_heuristic", "gamma_star"], svg, logx=True,
                           title="guaranteed service ratio of independent rounding")
        print(f"wrote {svg}")
    return EXIT_OK


def cmd_cr_curve(args):
    rows = harness.cr_curve(args.ratios, args.epsilon, args.convention)
    text = harness.rows_to_csv(rows)
    _emit(args, text, args.out)
    if args.out:
        svg = _out_path(args, Path(args.out).with_suffix(".svg").name)
        harness.plot_curve(text, "r", ["alpha_integral", "alpha_fractional", "closed_form_bound",
                                       "fractional_benchmark", "lower_bound"], svg, title="competitive ratio vs d_max/d_min")
        print(f"wrote {svg}")
    bad = [r for r in rows if r["alpha_integral"] > r["closed_form_bound"] + 1e-6
           or r["alpha_integral"] < r["lower_bound"] - 1e-6]
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_opt(args):
    inst = load_instance(args.instance)
    if args.method == "flow":
        sol = solve_flow(inst)
        value, chosen = sol.value, [int(i) + 1 for i in np.flatnonzero(sol.accepted)]
    else:
        value, chosen = opt_bruteforce(inst)
    _emit(args, json.dumps({"value": value, "accepted": list(chosen)}), args.out)
    return EXIT_OK


def _report_json(rep):
    return {
        "probabilities": [str(p) for p in rep.probabilities],
        "targets": [str(x) for x in rep.targets],
        "violations": [str(v) for v in rep.violations],
        "deficits": [[n, str(g)] for n, g in rep.deficits()],
        "offenders": rep.offenders(),
    }


def cmd_counterexample(args):
    inp = variable_duration_counterexample()
    rep = exact_allocation_probabilities(inp, check_availability=args.check_availability)
    print(rep.summary())
    if args.out:
        _emit(args, json.dumps(_report_json(rep), indent=1), args.out)
    found = bool(rep.violations or rep.deficits(1e-3))
    print("demonstrated: " + ("yes, offending player(s) " + ", ".join(map(str, rep.offenders())) if found else "no"))
    return EXIT_OK if found else EXIT_VIOLATION


def cmd_analyze_ocr(args):
    inp = load_ocr_input(args.input)
    rep = exact_allocation_probabilities(inp, check_availability=args.check_availability)
    print(rep.summary())
    if args.out:
        _emit(args, json.dumps(_report_json(rep), indent=1), args.out)
    return EXIT_OK if not rep.violations and not rep.deficits() else EXIT_VIOLATION


# ------------------------------------------------------------------ parser


def _global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="base RNG seed")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads for family sweeps")
    p.add_argument("--out-dir", default=d(None), help="directory for relative output paths")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="krental", description="Online k-rental simulation and verification")
    _global_flags(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    def ranges(p):
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--vmin", type=float, default=1.0)
        p.add_argument("--vmax", type=float, default=math.e)
        p.add_argument("--dmin", type=float, default=1.0)
        p.add_argument("--dmax", type=float, default=math.e)

    def flp(p):
        p.add_argument("--eta", type=float, default=None, help="forward-looking price scale (default: optimised)")
        p.add_argument("--beta", type=float, default=None, help="forward-looking price base (default: optimised)")

    p = add("generate", cmd_generate, "write instances as JSON")
    p.add_argument("--family", choices=["hard-fixed", "hard-variable", "random-fixed", "random-variable"],
                   default="random-fixed")
    ranges(p)
    p.add_argument("--m", type=int, default=50, help="number of batches (hard families)")
    p.add_argument("--epsilon", type=float, default=0.01, help="arrival window of hard families")
    p.add_argument("--n", type=int, default=20, help="requests per random instance")
    p.add_argument("--count", type=int, default=1, help="number of random instances")
    p.add_argument("--horizon", type=float, default=20.0)
    p.add_argument("--d", type=float, default=5.0, help="duration of random fixed instances")
    p.add_argument("--integral", action="store_true", help="integer arrivals and durations")
    p.add_argument("--prefix", default="instance_")

    for name, fn, help_ in (("run", cmd_run, "run one algorithm on an instance"),
                            ("evaluate", cmd_evaluate, "expected objective of an algorithm")):
        p = add(name, fn, help_)
        p.add_argument("--alg", choices=harness.ALGORITHMS, required=True)
        p.add_argument("--instance", required=True)
        p.add_argument("--phi", default="closed", help="'closed' or 'file:prices.json'")
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--out", default=None, help="trace.json or stats.csv (default: stdout)")
        flp(p)

    p = add("ratio-report", cmd_ratio_report, "OPT/E[ALG] over a hard family, as CSV")
    p.add_argument("--alg", choices=harness.ALGORITHMS, required=True)
    p.add_argument("--family", choices=["hard-fixed", "hard-variable"], default="hard-fixed")
    ranges(p)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--phi", default="closed")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--bound", type=float, default=None)
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--out", default=None)
    flp(p)

    p = add("solve-phi", cmd_solve_phi, "optimal step price for variable durations")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--dmin", type=float, default=1.0)
    p.add_argument("--dmax", type=float, default=math.e)
    p.add_argument("--variant", choices=["integral", "fractional"], default="integral")
    p.add_argument("--convention", choices=["exact", "literal"], default="exact",
                   help="exact: constraints for every value/utilisation; literal: the index-sum system taken level by level")
    p.add_argument("--out", default="prices.json")

    p = add("check-phi", cmd_check_phi, "grid-check the design inequalities for a price function")
    p.add_argument("--phi", default="closed")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--dmin", type=float, default=1.0)
    p.add_argument("--dmax", type=float, default=math.e)
    p.add_argument("--variant", choices=["integral", "fractional"], default="integral")
    p.add_argument("--n-d", type=int, default=50)
    p.add_argument("--n-y", type=int, default=200)

    p = add("gamma-curve", cmd_gamma_curve, "independent-rounding guarantee vs k (CSV + SVG)")
    p.add_argument("--k-values", type=int, nargs="*", default=None)
    p.add_argument("--max-exp", type=int, default=20, help="default k values are 2**0 .. 2**max-exp")
    p.add_argument("--out", default=None)

    p = add("cr-curve", cmd_cr_curve, "solved ratios vs d_max/d_min (CSV + SVG)")
    p.add_argument("--ratios", type=float, nargs="+", default=[1, 2, math.e, 5, 10, 20, 50, 100])
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--convention", choices=["exact", "literal"], default="exact")
    p.add_argument("--out", default=None)

    p = add("opt", cmd_opt, "offline optimum of an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", choices=["flow", "brute"], default="flow")
    p.add_argument("--out", default=None)

    p = add("counterexample", cmd_counterexample, "show shared-seed rounding failing with variable durations")
    p.add_argument("--check-availability", action="store_true",
                   help="refuse busy units (shows a deficit) instead of replaying as written (shows a clash)")
    p.add_argument("--out", default=None)

    p = add("analyze-ocr", cmd_analyze_ocr, "exact serve probabilities of shared-seed rounding on an input")
    p.add_argument("--input", required=True)
    p.add_argument("--check-availability", action="store_true")
    p.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args) or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
