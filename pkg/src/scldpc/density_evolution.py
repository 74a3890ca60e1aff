"""Protograph density evolution on the binary erasure channel.

Messages are per directed edge; parallel edges count as distinct edges, and
each excludes only its own reverse message from the update products.
Punctured variable nodes have channel erasure probability 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .protograph import BaseMatrix, InvalidProtographError, validate

__all__ = [
    "DEParams",
    "DEState",
    "Probe",
    "ThresholdResult",
    "de_step",
    "decodes",
    "threshold",
]


@dataclass(frozen=True)
class DEParams:
    """Channel parameter and solver settings for one DE run.

    require_punctured_resolved controls whether punctured nodes enter the
    success criterion (the a-posteriori erasure probability of every counted
    node must fall below residual_target).
    """

    epsilon: float = 0.0
    residual_target: float = 1e-10
    max_iterations: int = 200_000
    bisection_tolerance: float = 1e-5
    require_punctured_resolved: bool = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon outside [0, 1]")
        if self.residual_target <= 0:
            raise ValueError("residual_target must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.bisection_tolerance <= 0:
            raise ValueError("bisection_tolerance must be positive")


@dataclass
class DEState:
    """Per-edge erasure probabilities of both message directions.

    Edges are enumerated row-major over (check, variable) with multiplicity
    copies consecutive; v2c holds the variable-to-check messages, c2v the
    check-to-variable messages.
    """

    v2c: np.ndarray
    c2v: np.ndarray
    iteration: int = 0


class Probe(NamedTuple):
    epsilon: float
    decoded: bool
    iterations: int


@dataclass
class ThresholdResult:
    """Bisection result: threshold = lower end of the final bracket."""

    threshold: float
    bracket: tuple
    probes: list
    params: DEParams
    decodes_at_one: bool = False


class _EdgeStructure:
    """Precomputed scatter/gather indices for vectorized DE updates."""

    def __init__(self, entries: np.ndarray, punctured: frozenset):
        n_c, n_v = entries.shape
        edge_check = []
        edge_var = []
        for j in range(n_c):
            for k in range(n_v):
                edge_check.extend([j] * int(entries[j, k]))
                edge_var.extend([k] * int(entries[j, k]))
        self.n_c, self.n_v = n_c, n_v
        self.edge_check = np.array(edge_check, dtype=np.int64)
        self.edge_var = np.array(edge_var, dtype=np.int64)
        self.E = len(edge_check)
        self.var_degree = np.bincount(self.edge_var, minlength=n_v)
        self.check_degree = np.bincount(self.edge_check, minlength=n_c)
        # slot of each edge within its node's edge list
        self.var_slot = _slots(self.edge_var, n_v)
        self.check_slot = _slots(self.edge_check, n_c)
        self.Dv = int(self.var_degree.max())
        self.Dc = int(self.check_degree.max())
        self.punctured_mask = np.zeros(n_v, dtype=bool)
        for k in punctured:
            self.punctured_mask[k] = True

    def eps_per_var(self, eps: float) -> np.ndarray:
        return np.where(self.punctured_mask, 1.0, eps)


def _slots(node_of_edge: np.ndarray, n_nodes: int) -> np.ndarray:
    counters = np.zeros(n_nodes, dtype=np.int64)
    slots = np.empty_like(node_of_edge)
    for i, v in enumerate(node_of_edge):
        slots[i] = counters[v]
        counters[v] += 1
    return slots


@lru_cache(maxsize=128)
def _cached_structure(key, shape, punctured):
    entries = np.frombuffer(key, dtype=np.int64).reshape(shape)
    return _EdgeStructure(entries, punctured)


def _structure(b: BaseMatrix) -> _EdgeStructure:
    return _cached_structure(b.entries.tobytes(), b.entries.shape, b.punctured)


def _exclusive_products(vals: np.ndarray) -> np.ndarray:
    """Per row: product of all entries except the one at each position."""
    n, d = vals.shape
    out = np.ones_like(vals)
    if d > 1:
        out[:, 1:] = np.cumprod(vals[:, :-1], axis=1)
        suffix = np.cumprod(vals[:, :0:-1], axis=1)[:, ::-1]
        out[:, :-1] *= suffix
    return out


def _var_update(st: _EdgeStructure, c2v: np.ndarray, eps_var: np.ndarray, pad: np.ndarray) -> np.ndarray:
    pad.fill(1.0)
    pad[st.edge_var, st.var_slot] = c2v
    excl = _exclusive_products(pad)
    return eps_var[st.edge_var] * excl[st.edge_var, st.var_slot]


def _check_update(st: _EdgeStructure, v2c: np.ndarray, pad: np.ndarray) -> np.ndarray:
    pad.fill(1.0)
    pad[st.edge_check, st.check_slot] = 1.0 - v2c
    excl = _exclusive_products(pad)
    return 1.0 - excl[st.edge_check, st.check_slot]


def _residuals(st: _EdgeStructure, c2v: np.ndarray, eps_var: np.ndarray, pad: np.ndarray) -> np.ndarray:
    pad.fill(1.0)
    pad[st.edge_var, st.var_slot] = c2v
    return eps_var * np.prod(pad, axis=1)


def de_step(state: DEState, b: BaseMatrix, eps: float) -> DEState:
    """One flooding iteration: all variable updates, then all check updates."""
    st = _structure(b)
    if state.v2c.shape != (st.E,) or state.c2v.shape != (st.E,):
        raise ValueError("state inconsistent with base matrix edge count")
    eps_var = st.eps_per_var(eps)
    vpad = np.empty((st.n_v, st.Dv))
    cpad = np.empty((st.n_c, st.Dc))
    x = _var_update(st, state.c2v, eps_var, vpad)
    y = _check_update(st, x, cpad)
    return DEState(v2c=x, c2v=y, iteration=state.iteration + 1)


def initial_state(b: BaseMatrix) -> DEState:
    """All check-to-variable messages start at erasure probability 1."""
    st = _structure(b)
    return DEState(v2c=np.ones(st.E), c2v=np.ones(st.E), iteration=0)


def decodes(b: BaseMatrix, params: DEParams) -> tuple[bool, int]:
    """Run DE at params.epsilon; success when every counted node's residual
    erasure probability falls below residual_target within max_iterations.

    A bitwise-stationary message state cannot evolve further, so iteration
    stops early on an exact fixed point (reported iteration count is the
    iteration at which the state repeated).
    """
    violations = validate(b)
    if violations:
        raise InvalidProtographError(f"invalid base matrix: {', '.join(violations)}")
    st = _structure(b)
    eps_var = st.eps_per_var(params.epsilon)
    if params.require_punctured_resolved:
        counted = np.ones(st.n_v, dtype=bool)
    else:
        counted = ~st.punctured_mask
    vpad = np.empty((st.n_v, st.Dv))
    cpad = np.empty((st.n_c, st.Dc))
    y = np.ones(st.E)
    x_prev = None
    for it in range(1, params.max_iterations + 1):
        x = _var_update(st, y, eps_var, vpad)
        y = _check_update(st, x, cpad)
        q = _residuals(st, y, eps_var, vpad)
        if float(q[counted].max(initial=0.0)) < params.residual_target:
            return True, it
        if x_prev is not None and np.array_equal(x, x_prev):
            return False, it
        x_prev = x
    return False, params.max_iterations


def threshold(b: BaseMatrix, params: DEParams | None = None) -> ThresholdResult:
    """Iterative-decoding threshold by bisection on the channel parameter.

    Maintains (decodes(lo), not decodes(hi)) until the bracket width is at
    most bisection_tolerance; the reported threshold is the bracket's lower
    end.  Every probe is run independently from the all-ones initialization.
    """
    if params is None:
        params = DEParams()
    probes = []

    def probe(eps: float) -> bool:
        ok, its = decodes(b, replace(params, epsilon=eps))
        probes.append(Probe(eps, ok, its))
        return ok

    if not probe(0.0):
        raise InvalidProtographError("undecodable at zero erasure")
    if probe(1.0):
        return ThresholdResult(
            threshold=1.0,
            bracket=(1.0, 1.0),
            probes=probes,
            params=params,
            decodes_at_one=True,
        )
    lo, hi = 0.0, 1.0
    while hi - lo > params.bisection_tolerance:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return ThresholdResult(threshold=lo, bracket=(lo, hi), probes=probes, params=params)
