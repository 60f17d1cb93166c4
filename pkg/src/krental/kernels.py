"""Hot loops, each in two flavours.

Every kernel exists as a scalar-loop version compiled with numba (``*_nb``)
and a vectorised numpy version (``*_np``).  The public names dispatch on
:data:`krental._jit.USE_NUMBA`; both flavours are importable so that tests
can compare them and ``benchmarks/bench_kernels.py`` can time them.

Random numbers never get drawn inside a kernel.  Callers pass uniform
matrices in, which keeps the two flavours bit-for-bit comparable.
"""
import math

import numpy as np

from ._jit import USE_NUMBA, njit

__all__ = [
    "independent_mc",
    "limited_mc",
    "ocr_sweep",
    "phi_greedy_exact",
    "phi_greedy_literal",
    "IMPLEMENTATIONS",
]


# ------------------------------------------------------------------
# Independent rounding Monte Carlo: counts how often each player is served.


@njit
def _independent_mc_nb(arrival, end, thresh, k, U):
    M, N = U.shape
    counts = np.zeros(N, dtype=np.int64)
    busy = np.empty(k)
    for t in range(M):
        busy[:] = -np.inf
        for n in range(N):
            if U[t, n] > thresh[n]:
                continue
            a = arrival[n]
            for u in range(k):
                if busy[u] <= a:
                    busy[u] = end[n]
                    counts[n] += 1
                    break
    return counts


def _independent_mc_np(arrival, end, thresh, k, U):
    M, N = U.shape
    counts = np.zeros(N, dtype=np.int64)
    busy = np.full((M, k), -np.inf)
    rows = np.arange(M)
    for n in range(N):
        free = busy <= arrival[n]
        want = (U[:, n] <= thresh[n]) & free.any(axis=1)
        unit = free.argmax(axis=1)  # lowest free unit
        busy[rows[want], unit[want]] = end[n]
        counts[n] = int(want.sum())
    return counts


# ------------------------------------------------------------------
# Limited-correlation rounding Monte Carlo: objective of every trial.


@njit
def _limited_mc_nb(arrival, end, unit, thresh, value, k, U):
    M, N = U.shape
    out = np.zeros(M)
    busy = np.empty(k + 1)
    for t in range(M):
        busy[:] = -np.inf
        total = 0.0
        for n in range(N):
            u = unit[n]
            if u == 0 or U[t, n] > thresh[n]:
                continue
            if busy[u] <= arrival[n]:
                busy[u] = end[n]
                total += value[n]
        out[t] = total
    return out


def _limited_mc_np(arrival, end, unit, thresh, value, k, U):
    M, N = U.shape
    out = np.zeros(M)
    busy = np.full((M, k + 1), -np.inf)
    for n in range(N):
        u = unit[n]
        if u == 0:
            continue
        take = (U[:, n] <= thresh[n]) & (busy[:, u] <= arrival[n])
        busy[take, u] = end[n]
        out[take] += value[n]
    return out


# ------------------------------------------------------------------
# Breakpoint sweep for dependent rounding.
#
# The seed interval [0, 1) is cut into B elementary pieces.  Player n owns
# up to two index ranges [lo, hi) of those pieces, each tied to a unit.
# ``check_availability`` False replays the rounding as written and flags a
# conflict whenever the unit is still rented; True refuses the unit instead
# (the player then loses that piece, which shows up as a deficit).


@njit
def _ocr_sweep_nb(arrival, end, rejected, lo, hi, unit, k, B, check_availability):
    N = arrival.shape[0]
    assigned = np.zeros((B, N), dtype=np.int64)
    conflict = np.zeros((B, N), dtype=np.bool_)
    busy = np.empty(k + 1)
    for e in range(B):
        busy[:] = -np.inf
        for n in range(N):
            if rejected[n]:
                continue
            u = 0
            for q in range(2):
                if unit[n, q] != 0 and lo[n, q] <= e < hi[n, q]:
                    u = unit[n, q]
            if u == 0:
                continue
            if busy[u] > arrival[n]:
                conflict[e, n] = True
                if check_availability:
                    continue
            busy[u] = end[n]
            assigned[e, n] = u
    return assigned, conflict


def _ocr_sweep_np(arrival, end, rejected, lo, hi, unit, k, B, check_availability):
    N = arrival.shape[0]
    assigned = np.zeros((B, N), dtype=np.int64)
    conflict = np.zeros((B, N), dtype=bool)
    busy = np.full((B, k + 1), -np.inf)
    e = np.arange(B)
    for n in range(N):
        if rejected[n]:
            continue
        u = np.zeros(B, dtype=np.int64)
        for q in range(2):
            if unit[n, q] != 0:
                u[(lo[n, q] <= e) & (e < hi[n, q])] = unit[n, q]
        has = u != 0
        clash = has & (busy[e, u] > arrival[n])
        conflict[:, n] = clash
        take = has & ~clash if check_availability else has
        busy[e[take], u[take]] = end[n]
        assigned[take, n] = u[take]
    return assigned, conflict


# ------------------------------------------------------------------
# Feasibility oracle for piecewise-constant prices, exact convention.
#
# Level l has utilisation s = b_l and covers the values d in
# [pi_l, pi_{l+1}).  Both constraint families are affine in d with a
# non-negative intercept, so each yields an upper bound on pi_{l+1}; the
# greedy choice pi_{l+1} = max(pi_l, bound) is the most permissive one for
# every later level.  ``ca``/``cb`` are the integral and linear coefficients
# (2/3, 1/3 for integral rounding; 1, 1/2 for the fractional variant).


@njit
def _phi_greedy_exact_nb(alpha, eps, L, d_min, cap, ca, cb):
    b = np.empty(L + 1)
    for i in range(L + 1):
        b[i] = min(i * eps, 1.0)
    pi = np.zeros(L + 1)
    bound = np.zeros(L + 1)
    cum = np.zeros(L + 1)  # cum[j] = integral of phi over [0, b_j]
    pi[1] = d_min
    cum[1] = d_min * b[1]
    for l in range(1, L + 1):
        s = b[l]
        best = np.inf
        for j in range(l + 1):
            c = cb * alpha * (s - b[j]) - 1.0
            if c < 0.0:
                K = cb * alpha * b[j] * pi[max(j, 1)]
                best = min(best, K / -c)
        h = 0
        while True:
            y1 = h * eps / 2.0
            done = False
            if y1 >= s / 2.0 - 1e-15:
                y1 = s / 2.0
                done = True
            c = cb * alpha * (s - 2.0 * y1) - 1.0
            if c < 0.0:
                F2 = _integral_nb(2.0 * y1, eps, l, pi, b, cum)
                F1 = _integral_nb(y1, eps, l, pi, b, cum)
                best = min(best, ca * alpha * (F2 - F1) / -c)
            if done:
                break
            h += 1
        bound[l] = best
        if l < L:
            pi[l + 1] = max(pi[l], min(best, cap))
            cum[l + 1] = cum[l] + pi[l + 1] * (b[l + 1] - b[l])
    return pi[1:], bound[1:]


@njit
def _integral_nb(y, eps, l, pi, b, cum):
    j = int(math.ceil(y / eps - 1e-9))
    j = min(max(j, 1), l)
    return cum[j - 1] + pi[j] * (y - b[j - 1])


def _phi_greedy_exact_np(alpha, eps, L, d_min, cap, ca, cb):
    b = np.minimum(np.arange(L + 1) * eps, 1.0)
    pi = np.zeros(L + 1)
    bound = np.zeros(L + 1)
    cum = np.zeros(L + 1)
    pi[1] = d_min
    cum[1] = d_min * b[1]

    def integral(y, l):
        j = np.clip(np.ceil(y / eps - 1e-9).astype(np.int64), 1, l)
        return cum[j - 1] + pi[j] * (y - b[j - 1])

    for l in range(1, L + 1):
        s = b[l]
        j = np.arange(l + 1)
        c = cb * alpha * (s - b[j]) - 1.0
        K = cb * alpha * b[j] * pi[np.maximum(j, 1)]
        y1 = np.arange(l + 2) * eps / 2.0
        y1 = np.append(y1[y1 < s / 2.0 - 1e-15], s / 2.0)
        c2 = cb * alpha * (s - 2.0 * y1) - 1.0
        K2 = ca * alpha * (integral(2.0 * y1, l) - integral(y1, l))
        cc = np.concatenate([c, c2])
        KK = np.concatenate([K, K2])
        neg = cc < 0.0
        best = float(np.min(KK[neg] / -cc[neg])) if neg.any() else np.inf
        bound[l] = best
        if l < L:
            pi[l + 1] = max(pi[l], min(best, cap))
            cum[l + 1] = cum[l] + pi[l + 1] * (b[l + 1] - b[l])
    return pi[1:], bound[1:]


# ------------------------------------------------------------------
# Same oracle for the literal index-sum constraint system, with pi_0 := pi_1.
# A level whose largest admissible price falls below the previous price is
# left flat (no value lands on it) instead of being declared infeasible.


@njit
def _phi_greedy_literal_nb(alpha, eps, L, d_min, cap, ca, cb):
    pi = np.zeros(L + 1)
    pi[0] = d_min
    pi[1] = d_min
    active = np.zeros(L + 1, dtype=np.bool_)
    for l in range(2, L + 1):
        best = np.inf
        for i in range(1, l // 2 + 1):
            acc = 0.0
            for j in range(i, 2 * i + 1):
                acc += pi[j - 1]
            lhs = ca * alpha * acc * eps + cb * alpha * (eps * l - 2.0 * eps * (i + 1)) * pi[l - 1]
            best = min(best, lhs)
        for i in range(1, l + 1):
            m = min(i + 1, l)
            if m < l:
                w = cb * alpha * eps * (i + 1)
                best = min(best, (cb * alpha * pi[l - 1] * eps * l + w * pi[m]) / (1.0 + w))
            else:
                best = min(best, cb * alpha * pi[l - 1] * eps * l)
        if best >= pi[l - 1]:
            pi[l] = min(best, max(cap, pi[l - 1]))
            active[l] = True
        else:
            pi[l] = pi[l - 1]
    return pi[1:], active[1:]


def _phi_greedy_literal_np(alpha, eps, L, d_min, cap, ca, cb):
    pi = np.zeros(L + 1)
    pi[0] = pi[1] = d_min
    active = np.zeros(L + 1, dtype=bool)
    for l in range(2, L + 1):
        csum = np.concatenate([[0.0], np.cumsum(pi[: l])])  # csum[t] = pi_0 + ... + pi_{t-1}
        i = np.arange(1, l // 2 + 1)
        window = csum[2 * i] - csum[i - 1]  # pi_{i-1} + ... + pi_{2i-1}
        lhs4 = ca * alpha * window * eps + cb * alpha * (eps * l - 2.0 * eps * (i + 1)) * pi[l - 1]
        i5 = np.arange(1, l + 1)
        m = np.minimum(i5 + 1, l)
        w = np.where(m < l, cb * alpha * eps * (i5 + 1), 0.0)
        lhs5 = (cb * alpha * pi[l - 1] * eps * l + w * pi[m]) / (1.0 + w)
        best = min(lhs4.min() if lhs4.size else np.inf, lhs5.min())
        if best >= pi[l - 1]:
            pi[l] = min(best, max(cap, pi[l - 1]))
            active[l] = True
        else:
            pi[l] = pi[l - 1]
    return pi[1:], active[1:]


IMPLEMENTATIONS = {
    "numba": {
        "independent_mc": _independent_mc_nb,
        "limited_mc": _limited_mc_nb,
        "ocr_sweep": _ocr_sweep_nb,
        "phi_greedy_exact": _phi_greedy_exact_nb,
        "phi_greedy_literal": _phi_greedy_literal_nb,
    },
    "numpy": {
        "independent_mc": _independent_mc_np,
        "limited_mc": _limited_mc_np,
        "ocr_sweep": _ocr_sweep_np,
        "phi_greedy_exact": _phi_greedy_exact_np,
        "phi_greedy_literal": _phi_greedy_literal_np,
    },
}

_active = IMPLEMENTATIONS["numba" if USE_NUMBA else "numpy"]
independent_mc = _active["independent_mc"]
limited_mc = _active["limited_mc"]
ocr_sweep = _active["ocr_sweep"]
phi_greedy_exact = _active["phi_greedy_exact"]
phi_greedy_literal = _active["phi_greedy_literal"]
