"""Problem data, JSON I/O and occupancy/feasibility accounting.

Rental intervals are half-open, ``[a_n, a_n + d_n)``: a unit returned at time
``t`` can serve a request arriving at ``t``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Request:
    index: int  # 1-based arrival order
    arrival: float
    duration: float
    valuation: float

    @property
    def end(self) -> float:
        return self.arrival + self.duration


@dataclass(frozen=True)
class Fixed:
    d: float
    v_min: float
    v_max: float


@dataclass(frozen=True)
class Variable:
    d_min: float
    d_max: float


Kind = Union[Fixed, Variable]


@dataclass(frozen=True)
class Instance:
    k: int
    kind: Kind
    requests: tuple[Request, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))

    @property
    def n(self) -> int:
        return len(self.requests)

    @property
    def is_fixed(self) -> bool:
        return isinstance(self.kind, Fixed)

    def arrays(self):
        """``(arrivals, durations, valuations)`` as float64 arrays."""
        a = np.array([r.arrival for r in self.requests], dtype=float)
        d = np.array([r.duration for r in self.requests], dtype=float)
        v = np.array([r.valuation for r in self.requests], dtype=float)
        return a, d, v

    def prefix(self, n: int) -> "Instance":
        return Instance(self.k, self.kind, self.requests[:n])

    def with_requests(self, requests: Sequence[Request]) -> "Instance":
        return Instance(self.k, self.kind, tuple(requests))


def fixed_instance(k, d, v_min, v_max, arrivals, valuations) -> Instance:
    reqs = [Request(i + 1, float(a), float(d), float(v)) for i, (a, v) in enumerate(zip(arrivals, valuations))]
    return Instance(int(k), Fixed(float(d), float(v_min), float(v_max)), tuple(reqs))


def variable_instance(k, d_min, d_max, arrivals, durations) -> Instance:
    reqs = [Request(i + 1, float(a), float(d), float(d)) for i, (a, d) in enumerate(zip(arrivals, durations))]
    return Instance(int(k), Variable(float(d_min), float(d_max)), tuple(reqs))


@dataclass
class RunTrace:
    """Per-request decisions of one run.

    ``unit`` holds 1-based unit ids, 0 meaning no unit.  For a fractional
    trace ``accepted`` is all False and the objective is ``sum(v * fractional)``.
    """

    fractional: np.ndarray
    accepted: np.ndarray
    unit: np.ndarray
    objective: float
    integral: bool = True
    info: dict = field(default_factory=dict)

    @classmethod
    def build(cls, fractional, accepted, unit, valuations, integral=True, info=None) -> "RunTrace":
        fractional = np.asarray(fractional, dtype=float)
        accepted = np.asarray(accepted, dtype=bool)
        unit = np.asarray(unit, dtype=np.int64)
        valuations = np.asarray(valuations, dtype=float)
        if integral:
            objective = float(valuations[accepted].sum())
        else:
            objective = float(valuations @ fractional) if len(fractional) else 0.0
        return cls(fractional, accepted, unit, objective, integral, dict(info or {}))

    def __len__(self):
        return len(self.fractional)

    def recompute_objective(self, instance: Instance) -> float:
        _, _, v = instance.arrays()
        if self.integral:
            return float(v[self.accepted].sum())
        return float(v @ self.fractional) if len(v) else 0.0

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "integral": self.integral,
            "decisions": [
                {"x_hat": float(x), "accepted": bool(acc), "unit": int(u)}
                for x, acc, u in zip(self.fractional, self.accepted, self.unit)
            ],
        }


@dataclass(frozen=True)
class Violation:
    index: Optional[int]  # offending request (1-based), None for instance-level problems
    message: str

    def __str__(self):
        return self.message if self.index is None else f"request {self.index}: {self.message}"


def validate_instance(instance: Instance) -> list[Violation]:
    """Every broken instance invariant, as data.  Empty list means valid."""
    out: list[Violation] = []
    kind = instance.kind
    if not (isinstance(instance.k, (int, np.integer)) and instance.k >= 1):
        out.append(Violation(None, f"k must be a positive integer, got {instance.k!r}"))
    if isinstance(kind, Fixed):
        if not 0 < kind.v_min <= kind.v_max:
            out.append(Violation(None, f"need 0 < v_min <= v_max, got [{kind.v_min}, {kind.v_max}]"))
        if not kind.d > 0:
            out.append(Violation(None, f"duration d must be positive, got {kind.d}"))
    else:
        if not 0 < kind.d_min <= kind.d_max:
            out.append(Violation(None, f"need 0 < d_min <= d_max, got [{kind.d_min}, {kind.d_max}]"))

    prev = -np.inf
    for pos, r in enumerate(instance.requests, start=1):
        if r.index != pos:
            out.append(Violation(r.index, f"index {r.index} out of order (position {pos})"))
        if r.arrival < 0:
            out.append(Violation(r.index, f"arrival {r.arrival} is negative"))
        if r.arrival < prev:
            out.append(Violation(r.index, f"arrival {r.arrival} precedes previous arrival {prev}"))
        prev = max(prev, r.arrival)
        if isinstance(kind, Fixed):
            if r.duration != kind.d:
                out.append(Violation(r.index, f"duration {r.duration} differs from fixed d={kind.d}"))
            if not kind.v_min <= r.valuation <= kind.v_max:
                out.append(Violation(r.index, f"valuation {r.valuation} outside [v_min, v_max]=[{kind.v_min}, {kind.v_max}]"))
        else:
            if not kind.d_min <= r.duration <= kind.d_max:
                out.append(Violation(r.index, f"duration {r.duration} outside [d_min, d_max]=[{kind.d_min}, {kind.d_max}]"))
            if r.valuation != r.duration:
                out.append(Violation(r.index, f"valuation {r.valuation} differs from duration {r.duration}"))
    return out


def occupancy(trace: RunTrace, instance: Instance, t: float) -> int:
    """Number of accepted requests holding a unit at time ``t``."""
    if len(trace) == 0:
        return 0
    a, d, _ = instance.arrays()
    held = trace.accepted & (a <= t) & (t < a + d)
    return int(held.sum())


def check_feasible(trace: RunTrace, instance: Instance) -> bool:
    """Capacity respected at every arrival and no unit double-booked."""
    if len(trace) != instance.n:
        return False
    if instance.n == 0:
        return True
    a, d, _ = instance.arrays()
    acc = np.asarray(trace.accepted, dtype=bool)
    end = a + d
    # occupancy only rises at arrivals, so checking there is enough
    load = ((a[None, :] <= a[:, None]) & (a[:, None] < end[None, :]) & acc[None, :]).sum(axis=1)
    if np.any(load > instance.k):
        return False
    units = np.asarray(trace.unit)
    for u in np.unique(units[acc]):
        if u == 0:
            continue
        if not 1 <= u <= instance.k:
            return False
        idx = np.flatnonzero(acc & (units == u))
        idx = idx[np.argsort(a[idx], kind="stable")]
        if np.any(a[idx[1:]] < end[idx[:-1]]):
            return False
    return True


def fractional_load(trace: RunTrace, instance: Instance) -> np.ndarray:
    """``sum_j x_hat_j * [a_j <= a_n < a_j + d_j]`` at every arrival ``a_n``."""
    if instance.n == 0:
        return np.zeros(0)
    a, d, _ = instance.arrays()
    cover = (a[None, :] <= a[:, None]) & (a[:, None] < (a + d)[None, :])
    return cover.astype(float) @ np.asarray(trace.fractional, dtype=float)


def check_fractional_feasible(trace: RunTrace, instance: Instance, tol: float = 1e-9) -> bool:
    return bool(np.all(fractional_load(trace, instance) <= instance.k + tol))


# ---------------------------------------------------------------- JSON I/O


class SchemaError(ValueError):
    pass


def _expect_keys(obj, required, optional=(), where="object"):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object, got {type(obj).__name__}")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise SchemaError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")


def instance_to_json(instance: Instance) -> dict:
    kind = instance.kind
    if isinstance(kind, Fixed):
        kj = {"fixed": {"d": kind.d, "v_min": kind.v_min, "v_max": kind.v_max}}
    else:
        kj = {"variable": {"d_min": kind.d_min, "d_max": kind.d_max}}
    return {
        "k": instance.k,
        "kind": kj,
        "requests": [{"a": r.arrival, "d": r.duration, "v": r.valuation} for r in instance.requests],
    }


def instance_from_json(obj: dict) -> Instance:
    _expect_keys(obj, ("k", "kind", "requests"), where="instance")
    k = obj["k"]
    if not isinstance(k, int) or isinstance(k, bool):
        raise SchemaError(f"instance: k must be an integer, got {k!r}")
    kind_obj = obj["kind"]
    if not isinstance(kind_obj, dict) or len(kind_obj) != 1:
        raise SchemaError("instance.kind: expected exactly one of 'fixed' or 'variable'")
    (tag, body), = kind_obj.items()
    if tag == "fixed":
        _expect_keys(body, ("d", "v_min", "v_max"), where="kind.fixed")
        kind: Kind = Fixed(float(body["d"]), float(body["v_min"]), float(body["v_max"]))
    elif tag == "variable":
        _expect_keys(body, ("d_min", "d_max"), where="kind.variable")
        kind = Variable(float(body["d_min"]), float(body["d_max"]))
    else:
        raise SchemaError(f"instance.kind: unknown kind {tag!r}")
    reqs = []
    for i, r in enumerate(obj["requests"], start=1):
        _expect_keys(r, ("a", "d", "v"), where=f"requests[{i - 1}]")
        reqs.append(Request(i, float(r["a"]), float(r["d"]), float(r["v"])))
    return Instance(k, kind, tuple(reqs))


def load_instance(path) -> Instance:
    return instance_from_json(json.loads(Path(path).read_text()))


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_json(instance), indent=1))
