"""Online correlated rounding for k-rental.

Two schemes turn a stream of target probabilities ``x_n`` into integral
unit assignments:

* :func:`independent_round` draws a private coin per player and serves it
  with probability ``f * x_n`` when a unit is free.
* :class:`DependentRounder` shares a single seed ``r`` across all players and
  carves ``[0, 1)`` into consecutive slices, wrapping onto the next unit
  whenever a slice crosses 1.  On inputs satisfying :func:`check_ocr_condition`
  each player is served with probability exactly ``x_n``.

:func:`exact_allocation_probabilities` verifies the second claim without
sampling, by sweeping over the elementary seed intervals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .model import RunTrace, SchemaError, _expect_keys

GUARD_TOL = 1e-9
DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class OcrInput:
    """Players ``(arrival, target)`` sharing ``k`` units.

    ``d`` is the common rental duration.  For the variable-duration variant
    leave ``d`` as None and give per-player ``durations``.  Targets may be
    :class:`fractions.Fraction` for exact analysis.
    """

    k: int
    d: Optional[float]
    arrivals: tuple
    targets: tuple
    durations: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple(self.arrivals))
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.durations is not None:
            object.__setattr__(self, "durations", tuple(self.durations))
            if len(self.durations) != len(self.arrivals):
                raise ValueError("durations and arrivals differ in length")
        elif self.d is None:
            raise ValueError("need a common duration d or per-player durations")
        if len(self.targets) != len(self.arrivals):
            raise ValueError("targets and arrivals differ in length")

    @property
    def n(self) -> int:
        return len(self.arrivals)

    def duration(self, n: int):
        return self.durations[n] if self.durations is not None else self.d

    def ends(self) -> list:
        return [a + self.duration(i) for i, a in enumerate(self.arrivals)]

    @property
    def is_rational(self) -> bool:
        return all(isinstance(x, Rational) for x in self.targets)

    def to_json(self) -> dict:
        players = []
        for i, (a, x) in enumerate(zip(self.arrivals, self.targets)):
            p = {"a": float(a), "x": _json_number(x)}
            if self.durations is not None:
                p["d"] = float(self.durations[i])
            players.append(p)
        out = {"k": self.k, "players": players}
        if self.d is not None:
            out["d"] = float(self.d)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "OcrInput":
        variable = isinstance(obj, dict) and "d" not in obj
        _expect_keys(obj, ("k", "players") if variable else ("k", "d", "players"), where="ocr input")
        arr, xs, ds = [], [], []
        for i, p in enumerate(obj["players"]):
            _expect_keys(p, ("a", "x", "d") if variable else ("a", "x"), where=f"players[{i}]")
            arr.append(float(p["a"]))
            xs.append(_parse_number(p["x"]))
            if variable:
                ds.append(float(p["d"]))
        if variable:
            return cls(int(obj["k"]), None, arr, xs, ds)
        return cls(int(obj["k"]), float(obj["d"]), arr, xs)


def _json_number(x):
    if isinstance(x, Fraction) and x.denominator != 1:
        return f"{x.numerator}/{x.denominator}"
    return float(x)


def _parse_number(x):
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return x
    raise SchemaError(f"expected a number or 'p/q' string, got {x!r}")


def load_ocr_input(path) -> OcrInput:
    return OcrInput.from_json(json.loads(Path(path).read_text()))


def active_load(inp: OcrInput, n: int, include_self: bool = False):
    """``sum_j x_j [a_j + d_j > a_n]`` over ``j < n`` (or ``j <= n``)."""
    a_n = inp.arrivals[n]
    stop = n + 1 if include_self else n
    total = 0
    for j in range(stop):
        if inp.arrivals[j] + inp.duration(j) > a_n:
            total = total + inp.targets[j]
    return total


def check_ocr_condition(inp: OcrInput, tol: float = GUARD_TOL) -> bool:
    """True iff every target fits under the remaining fractional capacity."""
    for n in range(inp.n):
        x = inp.targets[n]
        room = min(1, inp.k - active_load(inp, n))
        if x < 0 or x - room > tol:
            return False
    return True


# ------------------------------------------------------------ independent


def gamma_lower_bound(k: int, f: float) -> float:
    """Guaranteed service ratio of independent rounding with scale ``f``."""
    f = float(f)
    if f <= 0.0:
        return 0.0
    return f * (1.0 - math.exp(-((k - f * k) ** 2) / (f * k + k)))


def optimal_f(k: int, grid_step: float = 1e-3, xtol: float = 1e-10):
    """Scale ``f`` maximising :func:`gamma_lower_bound` for inventory ``k``.

    A grid scan locates the peak and confirms the objective rises then
    falls; a bounded scalar search then refines inside the winning cell.
    If the grid shows more than one local maximum the grid argmax is kept
    and only refined locally.
    """
    grid = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    vals = grid * -np.expm1(-((k - grid * k) ** 2) / (grid * k + k))
    i = int(np.argmax(vals))
    steps = np.sign(np.diff(vals))
    steps = steps[steps != 0]
    unimodal = np.count_nonzero(np.diff(steps) != 0) <= 1
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda f: -gamma_lower_bound(k, f), bounds=(lo, hi), method="bounded",
                          options={"xatol": xtol})
    f_star, g_star = float(res.x), -float(res.fun)
    if g_star < vals[i]:  # never return worse than the grid
        f_star, g_star = float(grid[i]), float(vals[i])
    if not unimodal:
        f_star = float(np.clip(f_star, lo, hi))
    return f_star, g_star


def heuristic_f(k: int) -> float:
    return 1.0 - k ** (-1.0 / 3.0)


def independent_round(inp: OcrInput, f: float, seed=None) -> RunTrace:
    """One run of independent rounding; the lowest free unit is used."""
    rng = np.random.default_rng(seed)
    S = rng.random(inp.n)
    x = np.array([float(t) for t in inp.targets])
    ends = [float(e) for e in inp.ends()]
    busy = [-math.inf] * inp.k
    unit = np.zeros(inp.n, dtype=np.int64)
    for n in range(inp.n):
        if S[n] > f * x[n]:
            continue
        a = float(inp.arrivals[n])
        for u in range(inp.k):
            if busy[u] <= a:
                busy[u] = ends[n]
                unit[n] = u + 1
                break
    return RunTrace.build(x, unit > 0, unit, np.ones(inp.n), info={"f": f})


def independent_round_frequencies(inp: OcrInput, f: float, trials: int, seed=0, chunk: int = 20000) -> np.ndarray:
    """Empirical per-player service frequency over ``trials`` runs.

    Uniforms for chunk ``c`` come from ``default_rng([seed, c])`` so results
    do not depend on which kernel flavour is active.
    """
    arr = np.array([float(a) for a in inp.arrivals])
    end = np.array([float(e) for e in inp.ends()])
    thresh = f * np.array([float(t) for t in inp.targets])
    counts = np.zeros(inp.n, dtype=np.int64)
    done = 0
    c = 0
    while done < trials:
        m = min(chunk, trials - done)
        U = np.random.default_rng([seed, c]).random((m, inp.n))
        counts += kernels.independent_mc(arr, end, thresh, inp.k, U)
        done += m
        c += 1
    return counts / float(trials)


# ------------------------------------------------------------ dependent


@dataclass(frozen=True)
class Offer:
    """Seed-independent outcome of presenting one player to the rounder.

    ``pieces`` are ``(lo, hi, unit)`` slices of ``[0, 1)``; the player gets
    ``unit`` when the seed falls in ``[lo, hi)``.  ``m`` and ``p`` are the
    pointers before the player was processed.
    """

    pieces: tuple
    rejected: bool
    load: object
    m: int
    p: object

    def unit_for(self, r) -> int:
        if self.rejected:
            return 0
        for lo, hi, u in self.pieces:
            if lo <= r < hi:
                return u
        return 0


class DependentRounder:
    """Shared-seed rounding with a unit pointer ``m`` and a slice pointer ``p``.

    The pointer trajectory depends only on the targets, never on the seed.
    A player whose overlapping load (itself included) exceeds ``k`` is
    rejected, but the pointers still advance past its slice.
    """

    def __init__(self, k: int, exact: bool = False, tol: float = GUARD_TOL):
        self.k = int(k)
        self.m = 1
        self.p = Fraction(0) if exact else 0.0
        self.tol = tol
        self._live: list = []  # (end, target) of earlier players

    def offer(self, arrival, target, duration) -> Offer:
        self._live = [(e, x) for e, x in self._live if e > arrival]
        self._live.append((arrival + duration, target))
        load = sum((x for _, x in self._live), 0)
        rejected = load - self.k > self.tol
        m, p = self.m, self.p
        if p + target < 1:
            pieces = ((p, p + target, m),)
            self.p = p + target
        else:
            nxt = m % self.k + 1
            pieces = ((p, 1, m), (0, p + target - 1, nxt))
            self.p = p + target - 1
            self.m = nxt
        return Offer(pieces, bool(rejected), load, m, p)

    def step(self, arrival, target, duration, r):
        off = self.offer(arrival, target, duration)
        return off.unit_for(r), off


def pointer_log(inp: OcrInput) -> list:
    """``(m, p)`` before each player.  Identical for every seed."""
    rounder = DependentRounder(inp.k, exact=inp.is_rational)
    out = []
    for n in range(inp.n):
        off = rounder.offer(inp.arrivals[n], inp.targets[n], inp.duration(n))
        out.append((off.m, off.p))
    return out


def dependent_round_1ocr(inp: OcrInput, r: float) -> RunTrace:
    """Run the shared-seed rounding for one seed ``r`` in ``[0, 1)``.

    With per-player durations this is the naive transplant of the fixed
    duration scheme (no availability check), used to exhibit its failure.
    """
    if not 0.0 <= r < 1.0:
        raise ValueError(f"seed must lie in [0, 1), got {r}")
    rounder = DependentRounder(inp.k, exact=inp.is_rational)
    unit = np.zeros(inp.n, dtype=np.int64)
    log = []
    rejected = np.zeros(inp.n, dtype=bool)
    for n in range(inp.n):
        u, off = rounder.step(inp.arrivals[n], inp.targets[n], inp.duration(n), r)
        unit[n] = u
        rejected[n] = off.rejected
        log.append((off.m, off.p))
    x = np.array([float(t) for t in inp.targets])
    return RunTrace.build(x, unit > 0, unit, np.ones(inp.n),
                          info={"r": r, "pointers": log, "rejected": rejected})


# ------------------------------------------------------------ exact analysis


@dataclass(frozen=True)
class Conflict:
    player: int  # 1-based
    unit: int
    holder: int  # earlier player (1-based) still renting the unit
    r_lo: object
    r_hi: object

    def __str__(self):
        return (f"player {self.player} is given unit {self.unit} for r in [{self.r_lo}, {self.r_hi}) "
                f"while player {self.holder} still holds it")


@dataclass
class AllocationProbabilityReport:
    """Exact per-player service probabilities of the shared-seed rounding.

    ``intervals[n]`` lists the ``(lo, hi, unit)`` seed ranges in which player
    ``n + 1`` is served.  ``violations`` are unit clashes (as-written mode
    serves them anyway; availability-checked mode refuses them).
    """

    targets: list
    probabilities: list
    intervals: list
    violations: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    exact: bool = False
    check_availability: bool = False

    def deficits(self, tol: float = 1e-9) -> list:
        """``(player, shortfall)`` for players served less often than targeted."""
        out = []
        for n, (x, p) in enumerate(zip(self.targets, self.probabilities), start=1):
            gap = x - p
            if gap > tol:
                out.append((n, gap))
        return out

    def max_abs_error(self) -> float:
        if not self.targets:
            return 0.0
        return max(abs(float(x - p)) for x, p in zip(self.targets, self.probabilities))

    @property
    def lossless(self) -> bool:
        return not self.violations and self.max_abs_error() <= 1e-12

    def offenders(self) -> list:
        """Players named by a violation or a deficit, in order."""
        names = {v.player for v in self.violations} | {n for n, _ in self.deficits()}
        return sorted(names)

    def summary(self) -> str:
        lines = []
        for n, (x, p) in enumerate(zip(self.targets, self.probabilities), start=1):
            lines.append(f"player {n}: target {x}  probability {p}")
        for v in self.violations:
            lines.append(f"violation: {v}")
        for n, gap in self.deficits():
            lines.append(f"deficit: player {n} short by {gap}")
        return "\n".join(lines)


def _breakpoint_grid(values, exact: bool):
    """Sorted distinct breakpoints, their lengths and an index lookup."""
    if exact:
        pts = sorted(set(Fraction(v) for v in values) | {Fraction(0), Fraction(1)})
        den = 1
        for q in pts:
            den = den * q.denominator // math.gcd(den, q.denominator)
        nums = [q.numerator * (den // q.denominator) for q in pts]
        index = {q: i for i, q in enumerate(pts)}
        if den < 2 ** 62:
            lengths = np.diff(np.array(nums, dtype=np.int64))
        else:
            lengths = np.diff(np.array(nums, dtype=object))
        return pts, lengths, den, (lambda v: index[Fraction(v)])
    raw = np.unique(np.concatenate([[0.0, 1.0], np.asarray(values, dtype=float)]))
    keep = np.concatenate([[True], np.diff(raw) > DEDUP_TOL])
    pts = raw[keep]
    pts[-1] = 1.0

    def lookup(v):
        i = int(np.searchsorted(pts, float(v) - DEDUP_TOL))
        return min(i, len(pts) - 1)

    return list(pts), np.diff(pts), None, lookup


def exact_allocation_probabilities(inp: OcrInput, check_availability: bool = False) -> AllocationProbabilityReport:
    """Serve probabilities of the shared-seed rounding, computed exactly.

    The pointer evolution fixes finitely many slice endpoints; between two
    consecutive endpoints every seed yields the same run.  Each elementary
    interval is replayed once and its length credited to the players served.
    Rational targets give exact :class:`~fractions.Fraction` results.
    """
    exact = inp.is_rational
    rounder = DependentRounder(inp.k, exact=exact)
    offers = [rounder.offer(inp.arrivals[n], inp.targets[n], inp.duration(n)) for n in range(inp.n)]
    values = [v for off in offers for lo, hi, _ in off.pieces for v in (lo, hi)]
    pts, lengths, den, lookup = _breakpoint_grid(values, exact)
    B = len(pts) - 1

    N = inp.n
    lo = np.zeros((N, 2), dtype=np.int64)
    hi = np.zeros((N, 2), dtype=np.int64)
    unit = np.zeros((N, 2), dtype=np.int64)
    rejected = np.zeros(N, dtype=bool)
    for n, off in enumerate(offers):
        rejected[n] = off.rejected
        for q, (a, b, u) in enumerate(off.pieces):
            lo[n, q], hi[n, q], unit[n, q] = lookup(a), lookup(b), u
    arr = np.array([float(a) for a in inp.arrivals])
    end = np.array([float(e) for e in inp.ends()])
    assigned, conflict = kernels.ocr_sweep(arr, end, rejected, lo, hi, unit, inp.k, B, check_availability)

    served = (assigned > 0).astype(lengths.dtype if lengths.dtype != object else np.int64)
    if exact:
        tot = lengths @ served if lengths.dtype != object else np.dot(lengths, served.astype(object))
        probs = [Fraction(int(t), den) for t in tot]
    else:
        probs = [float(t) for t in lengths @ served]

    intervals = []
    for n in range(N):
        runs = []
        for e in range(B):
            u = int(assigned[e, n])
            if u == 0:
                continue
            if runs and runs[-1][2] == u and runs[-1][1] == pts[e]:
                runs[-1] = (runs[-1][0], pts[e + 1], u)
            else:
                runs.append((pts[e], pts[e + 1], u))
        intervals.append(runs)

    violations = []
    for e, n in zip(*np.nonzero(conflict)):
        u = int(_clash_unit(offers[n], e, lo, hi, unit, n))
        holder = 0
        for j in range(n - 1, -1, -1):
            if assigned[e, j] == u and end[j] > arr[n]:
                holder = j + 1
                break
        violations.append(Conflict(int(n) + 1, u, holder, pts[e], pts[e + 1]))
    violations = _merge_conflicts(violations)

    return AllocationProbabilityReport(
        targets=list(inp.targets), probabilities=probs, intervals=intervals, violations=violations,
        rejected=[int(i) + 1 for i in np.flatnonzero(rejected)], exact=exact,
        check_availability=check_availability,
    )


def _clash_unit(offer, e, lo, hi, unit, n):
    for q in range(2):
        if unit[n, q] and lo[n, q] <= e < hi[n, q]:
            return unit[n, q]
    return 0


def _merge_conflicts(items):
    items = sorted(items, key=lambda c: (c.player, c.unit, c.holder, c.r_lo))
    out = []
    for c in items:
        if out and (out[-1].player, out[-1].unit, out[-1].holder) == (c.player, c.unit, c.holder) and out[-1].r_hi == c.r_lo:
            prev = out[-1]
            out[-1] = Conflict(prev.player, prev.unit, prev.holder, prev.r_lo, c.r_hi)
        else:
            out.append(c)
    return out


def variable_duration_counterexample() -> OcrInput:
    """Six players, two units, per-player durations.

    Fractional capacity is respected throughout, yet no interval-based
    rounding of the fixed-duration kind can serve everyone at their target.
    """
    F = Fraction
    a = (F(1), F(2), F(11, 2), F(6), F(8), F(14))
    x = (F(1, 2), F(1, 2), F(2, 3), F(1, 3), F(1, 2), F(5, 6))
    d = (F(5), F(7), F(9), F(8), F(10), F(10))
    return OcrInput(2, None, a, x, d)


def random_ocr_input(rng: np.random.Generator, n_max: int = 50, k_max: int = 5, d: float = 5.0,
                     denominators: Sequence[int] = (2, 3, 4, 5, 6, 8, 10, 12), k: Optional[int] = None) -> OcrInput:
    """Random input meeting the capacity condition, with rational targets.

    Each target either fills the remaining room or is a random share of it,
    rounded down to a multiple of ``1/q`` for a random denominator ``q``.
    """
    k = int(k if k is not None else rng.integers(1, k_max + 1))
    n = int(rng.integers(1, n_max + 1))
    gaps = rng.integers(0, 5, size=n)
    arrivals = np.cumsum(gaps) * Fraction(1, 2)
    targets = []
    for i in range(n):
        load = sum((targets[j] for j in range(i) if arrivals[j] + d > arrivals[i]), Fraction(0))
        room = min(Fraction(1), k - load)
        q = int(rng.choice(denominators))
        if rng.random() < 0.3:
            x = room  # saturate: exercises slices ending exactly at 1
        else:
            x = Fraction(int(math.floor(room * q * Fraction(rng.random()))), q)
        targets.append(x)
    return OcrInput(k, float(d), tuple(float(a) for a in arrivals), tuple(targets))
