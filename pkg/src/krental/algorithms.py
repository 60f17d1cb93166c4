"""Online price-based allocation algorithms.

* :func:`run_dop_fixed`: fixed durations; fractional allocation from the
  exponential price, made integral by the shared-seed rounder.
* :func:`run_dop_variable`: variable durations; each request is routed to
  its least utilised unit and accepted by a private coin.
* :func:`run_dop_variable_fractional`: fractional counterpart with an
  aggregate utilisation level.
* :func:`run_flp_variable`: forward-looking baseline that prices every
  time slot of the requested interval (fractional only).

The first three are duration oblivious: a request's fractional decision
depends only on its value and on the utilisation at its arrival.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import Fixed, Instance, RunTrace, Variable
from .pricing import ExponentialPrice, FlpExp, phi_star
from .rounding import DependentRounder, OcrInput

GUARD = 1e-12


def _active(end, upto, t):
    """Mask of requests ``j < upto`` still renting at time ``t``."""
    return end[:upto] > t


# ------------------------------------------------------------------ fixed durations


def dop_fixed_fraction(v: float, y: float, k: int, phi) -> float:
    """Fraction allotted to a request of value ``v`` at aggregate utilisation ``y``."""
    room = min(1.0, k - y)
    if room <= 0.0:
        return 0.0
    return float(min(max(k * phi.inverse(v) - y, 0.0), room))


def run_dop_fixed(instance: Instance, phi=None, r=None, seed=None, history: str = "fractional") -> RunTrace:
    """Price-based allocation with lossless rounding, fixed durations.

    ``history`` picks how utilisation is accumulated: ``"fractional"`` sums
    past fractional allocations (so the fractional plan, and hence the
    expected objective, does not depend on the seed); ``"integral"`` sums
    realised acceptances instead.  ``info["expected"]`` holds the exact
    expectation ``sum v * x_hat`` of the fractional plan.
    """
    if not isinstance(instance.kind, Fixed):
        raise TypeError("run_dop_fixed needs a fixed-duration instance")
    if history not in ("fractional", "integral"):
        raise ValueError(f"history must be 'fractional' or 'integral', got {history!r}")
    kind = instance.kind
    phi = phi if phi is not None else ExponentialPrice(kind.v_min, kind.v_max)
    if r is None:
        r = float(np.random.default_rng(seed).random())
    a, d, v = instance.arrays()
    end = a + d
    N, k = instance.n, instance.k
    x_hat = np.zeros(N)
    accepted = np.zeros(N, dtype=bool)
    unit = np.zeros(N, dtype=np.int64)
    fed = np.zeros(N, dtype=bool)
    rounder = DependentRounder(k)
    for n in range(N):
        live = _active(end, n, a[n])
        y = float((x_hat[:n] if history == "fractional" else accepted[:n].astype(float))[live].sum())
        if y >= k:
            continue
        x_hat[n] = dop_fixed_fraction(v[n], y, k, phi)
        u, _ = rounder.step(a[n], x_hat[n], kind.d, r)
        fed[n] = True
        unit[n] = u
        accepted[n] = u > 0
    info = {"r": r, "expected": float(v @ x_hat) if N else 0.0, "history": history, "fed": fed}
    return RunTrace.build(x_hat, accepted, unit, v, info=info)


def induced_ocr_input(instance: Instance, trace: RunTrace) -> OcrInput:
    """The ``(arrival, x_hat)`` stream the rounder saw during ``trace``."""
    fed = trace.info.get("fed", np.ones(len(trace), dtype=bool))
    a, _, _ = instance.arrays()
    return OcrInput(instance.k, instance.kind.d, tuple(a[fed]), tuple(trace.fractional[fed]))


# ------------------------------------------------------------------ variable durations


def _default_variable_phi(instance: Instance):
    kind = instance.kind
    if not isinstance(kind, Variable):
        raise TypeError("needs a variable-duration instance")
    return ExponentialPrice(kind.d_min, kind.d_max)


@dataclass
class VariablePlan:
    """Seed-independent part of the limited-correlation algorithm.

    ``unit`` is the 1-based routed unit (0 when the request is never
    offered), ``level`` that unit's utilisation at arrival and ``thresh``
    the acceptance probability given the unit is free.
    """

    x_hat: np.ndarray
    unit: np.ndarray
    level: np.ndarray
    thresh: np.ndarray

    @property
    def expected(self) -> np.ndarray:
        return self.x_hat


def plan_dop_variable(instance: Instance, phi=None) -> VariablePlan:
    phi = phi if phi is not None else _default_variable_phi(instance)
    a, d, _ = instance.arrays()
    end = a + d
    N, k = instance.n, instance.k
    x_hat = np.zeros(N)
    routed = np.zeros(N, dtype=np.int64)  # argmin unit, kept even when x_hat is 0
    unit = np.zeros(N, dtype=np.int64)
    level = np.zeros(N)
    thresh = np.zeros(N)
    for n in range(N):
        live = _active(end, n, a[n])
        y_units = np.bincount(routed[:n][live], weights=x_hat[:n][live], minlength=k + 1)[1:]
        i_star = int(np.argmin(y_units))  # ties go to the lowest index
        y = float(y_units[i_star])
        routed[n] = i_star + 1
        level[n] = y
        if y >= 1.0 - GUARD:
            continue
        x = min(max(float(phi_star(phi, d[n])) - y, 0.0), 1.0)
        x_hat[n] = x
        if x > 0.0:
            unit[n] = i_star + 1
            thresh[n] = min(x / (1.0 - y), 1.0)
    return VariablePlan(x_hat, unit, level, thresh)


def run_dop_variable(instance: Instance, phi=None, seed=None, plan: VariablePlan = None) -> RunTrace:
    """One run of the limited-correlation algorithm.

    A request is accepted on its routed unit when its private uniform falls
    below ``thresh`` and the unit is not rented out.
    """
    plan = plan if plan is not None else plan_dop_variable(instance, phi)
    a, d, v = instance.arrays()
    S = np.random.default_rng(seed).random(instance.n)
    busy = np.full(instance.k + 1, -np.inf)
    accepted = np.zeros(instance.n, dtype=bool)
    for n in range(instance.n):
        u = plan.unit[n]
        if u and S[n] <= plan.thresh[n] and busy[u] <= a[n]:
            busy[u] = a[n] + d[n]
            accepted[n] = True
    unit = np.where(accepted, plan.unit, 0)
    info = {"expected": float(v @ plan.x_hat) if instance.n else 0.0, "level": plan.level}
    return RunTrace.build(plan.x_hat, accepted, unit, v, info=info)


def dop_variable_objectives(instance: Instance, trials: int, phi=None, seed=0, chunk: int = 20000,
                            plan: VariablePlan = None) -> np.ndarray:
    """Objective of ``trials`` independent runs (uniforms from ``default_rng([seed, chunk])``)."""
    plan = plan if plan is not None else plan_dop_variable(instance, phi)
    a, d, v = instance.arrays()
    out = np.empty(trials)
    done, c = 0, 0
    while done < trials:
        m = min(chunk, trials - done)
        U = np.random.default_rng([seed, c]).random((m, instance.n))
        out[done:done + m] = kernels.limited_mc(a, a + d, plan.unit, plan.thresh, v, instance.k, U)
        done += m
        c += 1
    return out


def run_dop_variable_fractional(instance: Instance, phi=None) -> RunTrace:
    """Fractional allocation against the aggregate utilisation level."""
    phi = phi if phi is not None else _default_variable_phi(instance)
    a, d, v = instance.arrays()
    end = a + d
    N, k = instance.n, instance.k
    x_hat = np.zeros(N)
    for n in range(N):
        y = float(x_hat[:n][_active(end, n, a[n])].sum())
        room = min(1.0, k - y)
        if room <= 0.0:
            continue
        x_hat[n] = min(max(k * float(phi_star(phi, d[n])) - y, 0.0), room)
    return RunTrace.build(x_hat, np.zeros(N, bool), np.zeros(N, np.int64), v, integral=False)


# ------------------------------------------------------------------ forward-looking pricing


def _flp_step_closed(d, y_slots, phi: FlpExp) -> float:
    """Root of ``d = sum_t phi(y_t + x)``, clamped into [0, 1]."""
    powers = np.power(phi.beta, y_slots / phi.k)
    x = phi.k * np.log((d / phi.eta + len(y_slots)) / powers.sum()) / np.log(phi.beta)
    return float(min(max(x, 0.0), 1.0))


def _flp_step_bisect(d, y_slots, phi: FlpExp, tol: float = 1e-10) -> float:
    g = lambda x: d - phi(y_slots + x).sum()
    if g(0.0) <= 0.0:
        return 0.0
    if g(1.0) >= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def run_flp_variable(instance: Instance, eta: float, beta: float, solver: str = "closed") -> RunTrace:
    """Forward-looking pricing over integer time slots.

    Each request maximises ``x*d - sum_t integral_{y_t}^{y_t + x} phi``
    over its slots ``a, ..., a + d - 1``.  ``info["load"]`` holds the final
    slot utilisation profile.
    """
    a, d, v = instance.arrays()
    if instance.n and (np.any(a != np.round(a)) or np.any(d != np.round(d))):
        raise ValueError("forward-looking pricing needs integer arrivals and durations")
    step = {"closed": _flp_step_closed, "bisect": _flp_step_bisect}[solver]
    phi = FlpExp(float(eta), float(beta), instance.k)
    T = int((a + d).max()) if instance.n else 0
    y = np.zeros(T)
    x_hat = np.zeros(instance.n)
    for n in range(instance.n):
        s, e = int(a[n]), int(a[n] + d[n])
        x = step(d[n], y[s:e], phi)
        x_hat[n] = x
        y[s:e] += x
    return RunTrace.build(x_hat, np.zeros(instance.n, bool), np.zeros(instance.n, np.int64), v, integral=False,
                          info={"load": y, "eta": eta, "beta": beta})
