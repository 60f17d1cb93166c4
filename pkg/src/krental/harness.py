"""Instance generators, evaluation and report/figure helpers."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import algorithms as alg
from .model import Fixed, Instance, Request, Variable
from .offline import opt_flow
from .pricing import ExponentialPrice, flp_parameters, solve_phi_discretized
from .rounding import gamma_lower_bound, heuristic_f, optimal_f

ALGORITHMS = ("dop-fixed", "dop-variable", "dop-variable-frac", "flp")


# ------------------------------------------------------------------ generators


def _batch_arrivals(m: int, k: int, epsilon: float) -> np.ndarray:
    """``m*k`` strictly increasing times inside ``[0, epsilon)``."""
    return np.arange(m * k) * (epsilon / (m * k))


def gen_hard_fixed(k: int, v_min: float, v_max: float, m: int, epsilon: float = 0.01, d: float = 1.0) -> list:
    """Nested batches of ``k`` identical requests with rising values.

    Instance ``i`` holds batches ``1..i``; batch ``j`` has value
    ``v_min + (j-1) (v_max - v_min)/(m-1)``.  All requests overlap.
    """
    if m < 2:
        raise ValueError("need m >= 2")
    if not epsilon < d:
        raise ValueError("batches must arrive within one rental duration (epsilon < d)")
    values = v_min + np.arange(m) * (v_max - v_min) / (m - 1)
    times = _batch_arrivals(m, k, epsilon)
    kind = Fixed(float(d), float(v_min), float(v_max))
    reqs = [Request(n + 1, float(times[n]), float(d), float(values[n // k])) for n in range(m * k)]
    return [Instance(k, kind, tuple(reqs[: i * k])) for i in range(1, m + 1)]


def gen_hard_variable(k: int, d_min: float, d_max: float, m: int, epsilon: float = 0.01) -> list:
    """Nested batches with rising durations (value equals duration)."""
    if m < 2:
        raise ValueError("need m >= 2")
    if not epsilon < d_min:
        raise ValueError("need epsilon < d_min")
    durs = d_min + np.arange(m) * (d_max - d_min) / (m - 1)
    times = _batch_arrivals(m, k, epsilon)
    kind = Variable(float(d_min), float(d_max))
    reqs = [Request(n + 1, float(times[n]), float(durs[n // k]), float(durs[n // k])) for n in range(m * k)]
    return [Instance(k, kind, tuple(reqs[: i * k])) for i in range(1, m + 1)]


DEFAULT_PARAMS = {"horizon": 20.0, "d": 5.0, "v_min": 1.0, "v_max": math.e, "d_min": 1.0, "d_max": math.e,
                  "integral": False}


def gen_random(kind: str, k: int, n: int, seed=0, params: Optional[dict] = None) -> Instance:
    """Uniform random instance; ``integral=True`` gives integer times and durations."""
    p = dict(DEFAULT_PARAMS)
    p.update(params or {})
    rng = np.random.default_rng(seed)
    if p["integral"]:
        a = np.sort(rng.integers(0, int(p["horizon"]) + 1, size=n)).astype(float)
    else:
        a = np.sort(rng.uniform(0.0, p["horizon"], size=n))
    if kind == "fixed":
        v = rng.uniform(p["v_min"], p["v_max"], size=n)
        d = float(p["d"])
        ks = Fixed(d, float(p["v_min"]), float(p["v_max"]))
        reqs = [Request(i + 1, float(a[i]), d, float(v[i])) for i in range(n)]
    elif kind == "variable":
        if p["integral"]:
            d = rng.integers(int(p["d_min"]), int(p["d_max"]) + 1, size=n).astype(float)
        else:
            d = rng.uniform(p["d_min"], p["d_max"], size=n)
        ks = Variable(float(p["d_min"]), float(p["d_max"]))
        reqs = [Request(i + 1, float(a[i]), float(d[i]), float(d[i])) for i in range(n)]
    else:
        raise ValueError(f"kind must be 'fixed' or 'variable', got {kind!r}")
    return Instance(int(k), ks, tuple(reqs))


# ------------------------------------------------------------------ evaluation


@dataclass
class EvalStats:
    mean: float
    std: float
    ci: float  # 95% half-width
    trials: int
    exact: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _flp_params(instance: Instance, params):
    if params is not None:
        return params
    eta, beta, _ = flp_parameters(int(round(instance.kind.d_max)))
    return eta, beta


def evaluate(name: str, instance: Instance, phi=None, trials: int = 1, seed=0, params=None) -> EvalStats:
    """Expected objective of an algorithm on one instance.

    Exact for the fixed-duration algorithm (lossless rounding makes the
    expectation ``sum v * x_hat``) and for the fractional algorithms.
    The limited-correlation algorithm is sampled ``trials`` times.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if name == "dop-fixed":
        tr = alg.run_dop_fixed(instance, phi, r=0.0)
        return EvalStats(tr.info["expected"], 0.0, 0.0, trials, True)
    if name == "dop-variable":
        obj = alg.dop_variable_objectives(instance, trials, phi, seed=seed)
        std = float(obj.std(ddof=1)) if trials > 1 else 0.0
        return EvalStats(float(obj.mean()), std, 1.96 * std / math.sqrt(trials), trials, False)
    if name == "dop-variable-frac":
        return EvalStats(alg.run_dop_variable_fractional(instance, phi).objective, 0.0, 0.0, trials, True)
    if name == "flp":
        eta, beta = _flp_params(instance, params)
        return EvalStats(alg.run_flp_variable(instance, eta, beta).objective, 0.0, 0.0, trials, True)
    raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")


def run_once(name: str, instance: Instance, phi=None, seed=0, params=None):
    if name == "dop-fixed":
        return alg.run_dop_fixed(instance, phi, seed=seed)
    if name == "dop-variable":
        return alg.run_dop_variable(instance, phi, seed=seed)
    if name == "dop-variable-frac":
        return alg.run_dop_variable_fractional(instance, phi)
    if name == "flp":
        eta, beta = _flp_params(instance, params)
        return alg.run_flp_variable(instance, eta, beta)
    raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")


# ------------------------------------------------------------------ ratio reports


@dataclass
class RatioRow:
    instance: int
    opt: float
    alg: float
    ci: float
    ratio: float
    bound: float
    within: bool


@dataclass
class RatioReport:
    rows: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.rows), default=1.0)

    @property
    def all_within(self) -> bool:
        return all(r.within for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "opt", "alg", "ci", "ratio", "bound", "within"])
        for r in self.rows:
            w.writerow([r.instance, repr(r.opt), repr(r.alg), repr(r.ci), repr(r.ratio), repr(r.bound), int(r.within)])
        return buf.getvalue()


def ratio_report(name: str, family: Sequence[Instance], phi=None, trials: int = 1, seed=0, bound: float = np.inf,
                 tol: float = 0.0, threads: int = 1, params=None) -> RatioReport:
    """OPT / E[ALG] for every instance of a family.

    A row is within bound when the ratio, with E[ALG] raised by its CI
    half-width, stays below ``bound + tol``.  Instances are evaluated in
    parallel when ``threads > 1``; seeds are ``(seed, index)`` so the output
    does not depend on the thread count.
    """

    def one(i):
        inst = family[i]
        st = evaluate(name, inst, phi, trials, seed=[seed, i], params=params)
        opt = opt_flow(inst)
        ratio = opt / st.mean if st.mean > 0 else (1.0 if opt == 0 else np.inf)
        adj = opt / (st.mean + st.ci) if st.mean + st.ci > 0 else ratio
        return RatioRow(i + 1, opt, st.mean, st.ci, ratio, float(bound), bool(adj <= bound + tol))

    idx = range(len(family))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, idx))
    else:
        rows = [one(i) for i in idx]
    return RatioReport(rows, tol)


def hard_family_online_bound(values: Sequence[float]) -> float:
    """Best ratio any online algorithm can guarantee on nested batch families.

    With batches of rising values ``v_1 < ... < v_m`` the algorithm must
    commit ``(1 - v_{i-1}/v_i)/alpha`` of the capacity to batch ``i`` to stay
    within ``alpha`` on every prefix; the shares fit iff
    ``alpha >= 1 + sum_i (1 - v_{i-1}/v_i)``.
    """
    v = np.asarray(values, dtype=float)
    return float(1.0 + np.sum(1.0 - v[:-1] / v[1:]))


def family_ratios_for_shares(values: Sequence[float], shares: np.ndarray) -> np.ndarray:
    """Prefix ratios ``v_i / sum_{j<=i} v_j z_j`` for per-batch capacity shares ``z``."""
    v = np.asarray(values, dtype=float)
    got = np.cumsum(v * np.asarray(shares, float), axis=-1)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(got > 0, v / np.where(got > 0, got, 1.0), np.inf)


# ------------------------------------------------------------------ curves


def gamma_curve(k_values: Sequence[int]) -> list:
    rows = []
    for k in k_values:
        fh = heuristic_f(k)
        fs, gs = optimal_f(k)
        rows.append({"k": int(k), "f_heuristic": fh, "f_star": fs,
                     "gamma_heuristic": gamma_lower_bound(k, fh), "gamma_star": gs})
    return rows


def cr_curve(ratios: Sequence[float], epsilon: float = 0.01, convention: str = "exact") -> list:
    rows = []
    for r in ratios:
        a_int = solve_phi_discretized(epsilon, 1.0, float(r), "integral", convention).alpha_star
        a_frac = solve_phi_discretized(epsilon, 1.0, float(r), "fractional", convention).alpha_star
        lr = math.log(r)
        rows.append({"r": float(r), "alpha_integral": a_int, "alpha_fractional": a_frac,
                     "lower_bound": 1.0 + lr, "closed_form_bound": 3.0 * (1.0 + lr), "fractional_benchmark": 4.0 + lr})
    return rows


def rows_to_csv(rows: list) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def read_csv_rows(text: str) -> list:
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def plot_curve(csv_text: str, x: str, ys: Sequence[str], path, *, logx: bool = False, title: str = "") -> None:
    """Line plot (SVG) drawn only from the CSV text, so it can be regenerated."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_csv_rows(csv_text)
    xs = [r[x] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for y in ys:
        ax.plot(xs, [r[y] for r in rows], marker="o", ms=3, label=y)
    if logx:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(x)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def sweep_gamma_threshold(level: float = 0.99, k_max: int = 2 ** 30) -> int:
    """Smallest power of two ``k`` with optimal guarantee at least ``level``."""
    k = 1
    while k <= k_max:
        if optimal_f(k)[1] >= level:
            return k
        k *= 2
    raise ValueError(f"no k <= {k_max} reaches {level}")


def sweep_heuristic_threshold(k_max: int = 10_000, share: float = 0.95) -> int:
    """Smallest ``k0`` such that the heuristic scale keeps ``share`` of the
    optimal guarantee for every ``k`` in ``k0..k_max``."""
    last_bad = 0
    for k in range(1, k_max + 1):
        if gamma_lower_bound(k, heuristic_f(k)) < share * optimal_f(k)[1]:
            last_bad = k
    return last_bad + 1
