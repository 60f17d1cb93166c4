"""Marginal pricing functions and the tools that design and verify them.

A pricing function maps a utilisation level to the marginal price of one
more unit of capacity.  Three shapes are provided:

* :class:`ExponentialPrice`: ``lo * exp((1 + ln(hi/lo)) y - 1)`` on [0, 1].
* :class:`Piecewise`: a step function with steps of width ``epsilon``,
  as produced by :func:`solve_phi_discretized`.
* :class:`FlpExp`: ``eta * (beta**(u/k) - 1)`` on [0, k], used by the
  forward-looking baseline.

:func:`check_theorem4_constraints` evaluates the two families of design
inequalities a price function must satisfy to certify a ratio ``alpha``
for variable-duration rentals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels

INTEGRAL_COEFFS = (2.0 / 3.0, 1.0 / 3.0)
FRACTIONAL_COEFFS = (1.0, 0.5)


def _coeffs(variant: str):
    if variant == "integral":
        return INTEGRAL_COEFFS
    if variant == "fractional":
        return FRACTIONAL_COEFFS
    raise ValueError(f"unknown variant {variant!r} (expected 'integral' or 'fractional')")


# ------------------------------------------------------------------ shapes


@dataclass(frozen=True)
class ExponentialPrice:
    """``lo * exp(c*y - 1)`` with ``c = 1 + ln(hi/lo)``; rises from lo/e to hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo <= self.hi:
            raise ValueError(f"need 0 < lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def rate(self) -> float:
        return 1.0 + math.log(self.hi / self.lo)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
            raise ValueError("utilisation outside [0, 1]")
        out = self.lo * np.exp(self.rate * y - 1.0)
        return float(out) if out.ndim == 0 else out

    def inverse(self, v):
        """Utilisation at which the price equals ``v``, clamped into [0, 1]."""
        v = np.asarray(v, dtype=float)
        y = (1.0 + np.log(np.maximum(v, 1e-300) / self.lo)) / self.rate
        out = np.clip(y, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def star(self, d):
        """``sup {x in [0,1] : price(x) <= d}``, 0 when even price(0) > d."""
        d = np.asarray(d, dtype=float)
        out = np.where(d < self.lo / math.e, 0.0, self.inverse(d))
        return float(out) if out.ndim == 0 else out

    def integral(self, y0, y1):
        """Exact integral of the price over ``[y0, y1]``."""
        c = self.rate
        return self.lo / c * (np.exp(c * np.asarray(y1, float) - 1.0) - np.exp(c * np.asarray(y0, float) - 1.0))


@dataclass(frozen=True)
class Piecewise:
    """Step prices: ``phi(y) = prices[ceil(y/epsilon) - 1]`` and ``phi(0) = prices[0]``."""

    epsilon: float
    prices: tuple

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        L = levels(self.epsilon)
        if len(self.prices) != L:
            raise ValueError(f"epsilon={self.epsilon} needs {L} prices, got {len(self.prices)}")

    @property
    def L(self) -> int:
        return len(self.prices)

    def edges(self) -> np.ndarray:
        """Level boundaries ``b_0 = 0 < b_1 < ... < b_L = 1``."""
        return np.minimum(np.arange(self.L + 1) * self.epsilon, 1.0)

    def _level(self, y):
        j = np.ceil(np.asarray(y, float) / self.epsilon - 1e-9).astype(np.int64)
        return np.clip(j, 1, self.L)

    def __call__(self, y):
        out = np.asarray(self.prices)[self._level(y) - 1]
        return float(out) if np.ndim(out) == 0 else out

    def star(self, d):
        pi = np.asarray(self.prices)
        count = np.searchsorted(pi, np.asarray(d, float), side="right")
        out = self.edges()[count]
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, y0, y1):
        b = self.edges()
        pi = np.asarray(self.prices)
        cum = np.concatenate([[0.0], np.cumsum(pi * np.diff(b))])

        def F(y):
            y = np.asarray(y, float)
            j = self._level(y)
            return cum[j - 1] + pi[j - 1] * (y - b[j - 1])

        return F(y1) - F(y0)

    def to_json(self, alpha: Optional[float] = None) -> dict:
        return {"epsilon": self.epsilon, "alpha": alpha, "pi": list(self.prices)}

    @classmethod
    def from_json(cls, obj: dict) -> "Piecewise":
        from .model import _expect_keys

        _expect_keys(obj, ("epsilon", "pi"), optional=("alpha",), where="prices")
        return cls(float(obj["epsilon"]), tuple(obj["pi"]))


@dataclass(frozen=True)
class FlpExp:
    """``eta * (beta**(u/k) - 1)`` on ``u in [0, k]``; zero at empty."""

    eta: float
    beta: float
    k: int

    def __call__(self, u):
        out = self.eta * (np.power(self.beta, np.asarray(u, float) / self.k) - 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, u0, u1):
        lb = math.log(self.beta)
        prim = lambda u: self.eta * (self.k / lb * np.power(self.beta, np.asarray(u, float) / self.k) - u)
        return prim(u1) - prim(u0)


def levels(epsilon: float) -> int:
    return int(math.ceil(1.0 / epsilon - 1e-9))


# ------------------------------------------------------------------ closed forms


def phi_fixed(y, v_min: float, v_max: float):
    """Exponential price for fixed durations, valuations in ``[v_min, v_max]``."""
    return ExponentialPrice(v_min, v_max)(y)


def phi_fixed_inverse(v, v_min: float, v_max: float):
    """Inverse of :func:`phi_fixed`; below range gives 0, above gives 1."""
    return ExponentialPrice(v_min, v_max).inverse(v)


def phi_variable_closed(y, d_min: float, d_max: float):
    """Exponential price for variable durations in ``[d_min, d_max]``."""
    return ExponentialPrice(d_min, d_max)(y)


def phi_star(phi, d, tol: float = 1e-12):
    """``sup {x in [0,1] : phi(x) <= d}``.

    Uses the shape's own closed form when it has one, bisection otherwise.
    """
    if hasattr(phi, "star"):
        return phi.star(d)
    if phi(0.0) > d:
        return 0.0
    if phi(1.0) <= d:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) <= d:
            lo = mid
        else:
            hi = mid
    return lo


def is_monotone(phi, lo: float = 0.0, hi: float = 1.0, points: int = 10_000) -> bool:
    vals = np.asarray(phi(np.linspace(lo, hi, points)), dtype=float)
    return bool(np.all(np.diff(vals) >= -1e-12 * np.maximum(1.0, np.abs(vals[1:]))))


# ------------------------------------------------------------------ design inequalities


@dataclass
class ConstraintCertificate:
    """Smallest slack seen in each family of design inequalities.

    ``first`` is the integral-window family, ``second`` the linear family.
    ``*_at`` hold the ``(d, y)`` where each minimum was found.
    """

    alpha: float
    first: float
    second: float
    first_at: tuple
    second_at: tuple
    tol: float = 1e-9

    @property
    def min_slack(self) -> float:
        return min(self.first, self.second)

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tol

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "first": self.first, "second": self.second,
                "first_at": list(self.first_at), "second_at": list(self.second_at), "passed": self.passed}


def design_slacks(phi, alpha: float, d, y1, y2, coeffs=INTEGRAL_COEFFS):
    """Pointwise slacks of both inequality families.

    ``d`` has shape (D,), ``y1`` and ``y2`` shape (D, Y).  Returns two (D, Y)
    arrays; a negative entry is a violated inequality.
    """
    ca, cb = coeffs
    d = np.asarray(d, float)[:, None]
    s = np.asarray(phi_star(phi, d[:, 0]), float)[:, None]
    first = ca * alpha * phi.integral(y1, 2.0 * y1) + cb * alpha * d * (s - 2.0 * y1) - d
    second = cb * alpha * d * s - cb * alpha * y2 * (d - phi(y2)) - d
    return first, second


def check_theorem4_constraints(phi, alpha: float, d_grid=None, y_grid=None, *, d_min=None, d_max=None,
                               n_d: int = 50, n_y: int = 200, variant: str = "integral",
                               tol: float = 1e-9) -> ConstraintCertificate:
    """Evaluate both design inequalities on a grid and report minimum slacks.

    ``d_grid`` defaults to ``n_d`` log-spaced values on ``[d_min, d_max]``.
    ``y_grid`` holds relative positions in [0, 1]; the first family is
    sampled at ``y1 = t * phi*(d) / 2`` and the second at ``y2 = t * phi*(d)``.
    """
    if d_grid is None:
        if d_min is None or d_max is None:
            d_min, d_max = getattr(phi, "lo", None), getattr(phi, "hi", None)
        if d_min is None:
            raise ValueError("need d_grid or (d_min, d_max)")
        d_grid = np.geomspace(d_min, d_max, n_d) if d_max > d_min else np.array([float(d_min)])
    d_grid = np.asarray(d_grid, float)
    t = np.linspace(0.0, 1.0, n_y) if y_grid is None else np.asarray(y_grid, float)
    s = np.asarray(phi_star(phi, d_grid), float)
    y1 = s[:, None] * t[None, :] / 2.0
    y2 = s[:, None] * t[None, :]
    first, second = design_slacks(phi, alpha, d_grid, y1, y2, _coeffs(variant))
    i1 = np.unravel_index(np.argmin(first), first.shape)
    i2 = np.unravel_index(np.argmin(second), second.shape)
    return ConstraintCertificate(
        alpha=float(alpha),
        first=float(first[i1]), second=float(second[i2]),
        first_at=(float(d_grid[i1[0]]), float(y1[i1])),
        second_at=(float(d_grid[i2[0]]), float(y2[i2])),
        tol=tol,
    )


# ------------------------------------------------------------------ discretised solver


@dataclass
class PhiSolveResult:
    alpha_star: float
    prices: Piecewise
    certificate: ConstraintCertificate
    variant: str
    convention: str
    bracket: tuple
    iterations: int
    info: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return self.prices.to_json(alpha=self.alpha_star)


def phi_feasible(alpha: float, epsilon: float, d_min: float, d_max: float, variant: str = "integral",
                 convention: str = "exact"):
    """Whether a monotone step price certifies ``alpha``; returns ``(ok, prices)``.

    ``convention='exact'`` enforces the design inequalities for every value
    and utilisation under the step function.  ``convention='literal'`` enforces
    the index-sum system level by level, leaving a level flat when it cannot
    rise.
    """
    ca, cb = _coeffs(variant)
    L = levels(epsilon)
    cap = d_max * (1.0 + 1e-9)
    if convention == "exact":
        pi, bound = kernels.phi_greedy_exact(float(alpha), float(epsilon), L, float(d_min), cap, ca, cb)
        last = pi[L - 1]
        ok = last >= d_max and (last > d_max or bound[L - 1] >= d_max)
    elif convention == "literal":
        pi, active = kernels.phi_greedy_literal(float(alpha), float(epsilon), L, float(d_min), cap, ca, cb)
        ok = (L == 1 or bool(active[1:].any())) and pi[L - 1] >= d_max
    else:
        raise ValueError(f"unknown convention {convention!r} (expected 'exact' or 'literal')")
    return bool(ok), np.asarray(pi, float)


def solve_phi_discretized(epsilon: float, d_min: float, d_max: float, variant: str = "integral",
                          convention: str = "exact", rtol: float = 1e-10, max_alpha: float = 1e6) -> PhiSolveResult:
    """Smallest ratio ``alpha`` admitting a step price with step ``epsilon``.

    Bisection on ``alpha`` around the known bracket ``[1 + ln r, 3(1 + ln r)]``
    (``r = d_max/d_min``), each probe answered by :func:`phi_feasible`.  The
    upper end is doubled until feasible, up to ``max_alpha``.  The returned
    ``alpha_star`` is the feasible end of the final bracket, so it lies at
    most a relative ``rtol`` above the true threshold.
    """
    if not 0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5], got {epsilon}")
    if not 0 < d_min <= d_max:
        raise ValueError("need 0 < d_min <= d_max")
    _coeffs(variant)
    lr = math.log(d_max / d_min)
    lo = max(lr, 1e-3)
    hi = 3.0 * (1.0 + lr) + 1.0
    widened = 0
    ok, pi = phi_feasible(hi, epsilon, d_min, d_max, variant, convention)
    while not ok:
        lo, hi = hi, 2.0 * hi
        widened += 1
        if hi > max_alpha:
            raise RuntimeError(f"no feasible alpha below {max_alpha} for epsilon={epsilon}, r={d_max / d_min}")
        ok, pi = phi_feasible(hi, epsilon, d_min, d_max, variant, convention)
    start = (lo, hi)
    if phi_feasible(lo, epsilon, d_min, d_max, variant, convention)[0]:
        hi, lo = lo, 0.0
    it = 0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        ok, cand = phi_feasible(mid, epsilon, d_min, d_max, variant, convention)
        if ok:
            hi, pi = mid, cand
        else:
            lo = mid
        it += 1
    prices = Piecewise(float(epsilon), tuple(pi))
    cert = check_theorem4_constraints(prices, hi, d_min=d_min, d_max=d_max, variant=variant)
    return PhiSolveResult(hi, prices, cert, variant, convention, start, it, {"widened": widened})


def save_prices(result: PhiSolveResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_json(), indent=1))


def load_prices(path) -> Piecewise:
    return Piecewise.from_json(json.loads(Path(path).read_text()))


# ------------------------------------------------------------------ forward-looking baseline


def flp_log_beta(eta: float, d_max: int) -> float:
    """Smallest admissible ``ln beta`` for ``eta``: at least 1, and at least
    ``-sum_i ln(1 - 1/(i (1 + eta)))`` over ``i = 1..d_max``."""
    i = np.arange(1, int(d_max) + 1, dtype=float)
    need = -np.log1p(-1.0 / (i * (1.0 + eta))).sum()
    return max(1.0, float(need))


def flp_ratio(eta: float, d_max: int) -> float:
    return (1.0 + eta) * flp_log_beta(eta, d_max)


def flp_parameters(d_max: int, eta: Optional[float] = None, eta_bounds=(1e-6, 1e3)):
    """``(eta, beta, ratio)`` minimising ``(1 + eta) ln beta``.

    The search runs over ``ln eta`` with a coarse grid followed by a bounded
    scalar refinement.  Passing ``eta`` skips the search.
    """
    if d_max < 1:
        raise ValueError("d_max must be at least 1")
    if eta is None:
        lo, hi = math.log(eta_bounds[0]), math.log(eta_bounds[1])
        grid = np.linspace(lo, hi, 401)
        vals = np.array([flp_ratio(math.exp(g), d_max) for g in grid])
        i = int(np.argmin(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = minimize_scalar(lambda g: flp_ratio(math.exp(g), d_max), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12})
        eta = math.exp(res.x) if res.fun <= vals[i] else math.exp(grid[i])
    lb = flp_log_beta(eta, d_max)
    return float(eta), math.exp(lb), (1.0 + eta) * lb
