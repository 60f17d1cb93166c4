"""Clairvoyant optimum for k-rental.

Accepting a set of requests is feasible when at most ``k`` of them are in
service at every arrival time.  Because each request occupies a contiguous
block of arrival epochs, the constraint matrix has the consecutive-ones
property: the LP relaxation is integral and the problem is a min-cost flow
along the timeline.

* :func:`opt_flow`: successive shortest paths with potentials (exact).
* :func:`opt_bruteforce`: enumeration of all subsets, for small oracles.
* :func:`lp_vertex_optimum`: enumeration of basic solutions of the LP
  relaxation, an independent check that relaxing integrality gains nothing.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .model import Instance

BRUTE_LIMIT = 22
LP_LIMIT = 8


# ------------------------------------------------------------------ min-cost flow


class MinCostFlow:
    """Integer-capacity min-cost flow via successive shortest paths.

    Arcs are stored in flat lists, each paired with its reverse arc at
    index ``e ^ 1``.  Nodes must be numbered so every arc points forward
    (a DAG); that lets the initial potentials come from one linear pass even
    with negative costs.
    """

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list = []
        self.cap: list = []
        self.cost: list = []
        self.adj = [[] for _ in range(n_nodes)]

    def add_arc(self, u: int, v: int, cap: int, cost: float) -> int:
        if v <= u:
            raise ValueError("arcs must point forward in node order")
        e = len(self.head)
        self.head += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.cap[e ^ 1]

    def _dag_potentials(self, s: int) -> list:
        pot = [float("inf")] * self.n
        pot[s] = 0.0
        for u in range(self.n):
            if pot[u] == float("inf"):
                continue
            for e in self.adj[u]:
                if e & 1 == 0 and self.cap[e] > 0:
                    v = self.head[e]
                    if pot[u] + self.cost[e] < pot[v]:
                        pot[v] = pot[u] + self.cost[e]
        return pot

    def solve(self, s: int, t: int, amount: int):
        """Send ``amount`` units from ``s`` to ``t`` at least cost; returns ``(flow, cost)``."""
        inf = float("inf")
        pot = self._dag_potentials(s)
        big = max((p for p in pot if p < inf), default=0.0)
        pot = [p if p < inf else big for p in pot]
        sent, total = 0, 0.0
        while sent < amount:
            dist = [inf] * self.n
            prev = [-1] * self.n
            dist[s] = 0.0
            heap = [(0.0, s)]
            while heap:
                du, u = heapq.heappop(heap)
                if du > dist[u]:
                    continue
                for e in self.adj[u]:
                    if self.cap[e] <= 0:
                        continue
                    v = self.head[e]
                    nd = du + self.cost[e] + pot[u] - pot[v]
                    if nd < dist[v] - 1e-12:
                        dist[v] = nd
                        prev[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[t] == inf:
                break
            reach = max(x for x in dist if x < inf)
            for v in range(self.n):
                pot[v] += dist[v] if dist[v] < inf else reach  # keeps reduced costs non-negative
            push, v = amount - sent, t
            while v != s:
                e = prev[v]
                push = min(push, self.cap[e])
                v = self.head[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                total += push * self.cost[e]
                v = self.head[e ^ 1]
            sent += push
        return sent, total


@dataclass
class FlowSolution:
    value: float
    accepted: np.ndarray  # bool per request
    request_flow: np.ndarray  # flow on each request arc (0 or 1)


def build_network(instance: Instance):
    """Timeline network: node i is the i-th distinct arrival, last node the sink."""
    a, d, v = instance.arrays()
    times = np.unique(a)
    T = len(times)
    net = MinCostFlow(T + 1)
    for i in range(T):
        net.add_arc(i, i + 1, instance.k, 0.0)
    start = np.searchsorted(times, a)
    stop = np.searchsorted(times, a + d, side="left")  # first arrival at or after the return
    arcs = [net.add_arc(int(s), int(e), 1, -float(val)) for s, e, val in zip(start, stop, v)]
    return net, arcs, T


def solve_flow(instance: Instance) -> FlowSolution:
    if instance.n == 0:
        return FlowSolution(0.0, np.zeros(0, bool), np.zeros(0, np.int64))
    net, arcs, T = build_network(instance)
    _, cost = net.solve(0, T, instance.k)
    flow = np.array([net.flow_on(e) for e in arcs], dtype=np.int64)
    _, _, v = instance.arrays()
    acc = flow > 0
    return FlowSolution(float(v[acc].sum()), acc, flow)


def opt_flow(instance: Instance) -> float:
    """Optimal offline objective."""
    return solve_flow(instance).value


# ------------------------------------------------------------------ exhaustive oracle


def cover_matrix(instance: Instance) -> np.ndarray:
    """``C[i, n]`` is True when request n is in service at the i-th arrival."""
    a, d, _ = instance.arrays()
    return (a[None, :] <= a[:, None]) & (a[:, None] < (a + d)[None, :])


def opt_bruteforce(instance: Instance, limit: int = BRUTE_LIMIT):
    """``(value, chosen)`` by checking all ``2**N`` subsets.

    ``chosen`` is a sorted tuple of 1-based request indices.  Among optimal
    subsets the lexicographically smallest is returned.
    """
    N = instance.n
    if N > limit:
        raise ValueError(f"brute force limited to N <= {limit}, got {N}")
    if N == 0:
        return 0.0, ()
    _, _, v = instance.arrays()
    C = cover_matrix(instance)
    bits = np.left_shift(np.uint64(1), np.arange(N, dtype=np.uint64))
    row_masks = np.unique((C * bits[None, :]).sum(axis=1).astype(np.uint64))
    masks = np.arange(2 ** N, dtype=np.uint64)
    ok = np.ones(masks.shape, dtype=bool)
    for rm in row_masks:
        ok &= np.bitwise_count(masks & rm) <= instance.k
    feasible = masks[ok]
    member = ((feasible[:, None] >> np.arange(N, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(bool)
    values = member.astype(float) @ v
    best = values.max()
    tie = np.flatnonzero(values >= best - 1e-9 * max(1.0, abs(best)))
    sets = [tuple(int(i) + 1 for i in np.flatnonzero(member[t])) for t in tie]
    chosen = min(sets)
    return float(v[[i - 1 for i in chosen]].sum()) if chosen else 0.0, chosen


# ------------------------------------------------------------------ LP relaxation


def lp_vertex_optimum(instance: Instance, limit: int = LP_LIMIT) -> float:
    """Optimum of the LP relaxation by enumerating its basic feasible solutions.

    Every vertex fixes some variables at 0 or 1 and solves for the rest
    (set F) from |F| capacity rows held tight.  All such systems with a
    nonsingular matrix are solved in batches and the best feasible point is
    kept.  Exponential; meant for ``N <= 8``.
    """
    N = instance.n
    if N > limit:
        raise ValueError(f"vertex enumeration limited to N <= {limit}, got {N}")
    if N == 0:
        return 0.0
    _, _, v = instance.arrays()
    C = cover_matrix(instance).astype(float)
    rows = np.unique(C, axis=0)
    # a row dominated by another is never the only binding one; keep maximal rows
    keep = [i for i, r in enumerate(rows)
            if not any(j != i and np.all(rows[j] >= r) and np.any(rows[j] > r) for j in range(len(rows)))]
    rows = rows[keep]
    k = float(instance.k)
    best = -np.inf
    idx = np.arange(N)
    for f in range(0, min(N, len(rows)) + 1):
        for F in itertools.combinations(idx, f):
            F = list(F)
            rest = np.setdiff1d(idx, F)
            fixed = np.array(list(itertools.product((0.0, 1.0), repeat=len(rest))), dtype=float).reshape(2 ** len(rest), len(rest))
            if f == 0:
                X = np.zeros((len(fixed), N))
                X[:, rest] = fixed
            else:
                R = np.array(list(itertools.combinations(range(len(rows)), f)))
                A = rows[R][:, :, F]  # (nR, f, f)
                good = np.abs(np.linalg.det(A)) > 1e-9
                if not good.any():
                    continue
                A, R = A[good], R[good]
                rhs = k - np.einsum("rij,bj->rbi", rows[R][:, :, rest], fixed)  # (nR, nB, f)
                sol = np.linalg.solve(A[:, None, :, :], rhs[..., None])[..., 0]  # (nR, nB, f)
                X = np.zeros(sol.shape[:2] + (N,))
                X[:, :, rest] = fixed[None, :, :]
                X[:, :, F] = sol
                X = X.reshape(-1, N)
            inside = np.all((X >= -1e-9) & (X <= 1 + 1e-9), axis=1) & np.all(X @ rows.T <= k + 1e-9, axis=1)
            if inside.any():
                best = max(best, float((X[inside] @ v).max()))
    return best


def opt_fractional(instance: Instance, verify: bool = False) -> float:
    """Optimum of the LP relaxation, equal to :func:`opt_flow` by integrality.

    ``verify=True`` additionally runs :func:`lp_vertex_optimum` (small N only)
    and raises if the two disagree.
    """
    value = opt_flow(instance)
    if verify:
        other = lp_vertex_optimum(instance)
        if abs(other - value) > 1e-9 * max(1.0, abs(value)):
            raise AssertionError(f"LP vertex optimum {other} differs from flow optimum {value}")
    return value
