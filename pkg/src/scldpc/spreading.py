"""Edge spreading of a base matrix into component submatrices and termination.

Splitting a base matrix B into components B_0..B_ms distributes the edges of
each variable node over m_s + 1 consecutive time instants of a convolutional
protograph.  Restricting the chain to L time instants and deleting the
all-zero check rows produced at the boundary yields a terminated block
protograph whose rate loss vanishes as L grows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .protograph import BaseMatrix, InvalidProtographError, shannon_limit

__all__ = [
    "EdgeSpreading",
    "TerminatedProtograph",
    "check_spreading",
    "terminate",
    "ar4ja_family",
    "ar4ja_spreading",
    "fractional_gap",
]

# The rate-1/2 member of the family: columns are (degree-1 accumulate,
# punctured degree-6, two jagged-accumulate, repeat-by-4) nodes.
_CORE_BASE = [
    [1, 2, 0, 0, 0],
    [0, 3, 1, 1, 1],
    [0, 1, 2, 1, 2],
]
_CORE_B0 = [
    [1, 2, 0, 0, 0],
    [0, 1, 1, 1, 0],
    [0, 0, 1, 0, 2],
]
_CORE_B1 = [
    [0, 0, 0, 0, 0],
    [0, 2, 0, 0, 1],
    [0, 1, 1, 1, 0],
]
# Each extension pair adds two degree-4 variable nodes avoiding check row 0.
_EXT_PAIR = [[0, 0], [3, 1], [1, 3]]
# Default split of an extension pair over the two components.  Chosen so the
# components sum to the extension columns, every extension node has edges in
# both components, and row 0 of B_1 stays all-zero.  Overridable through a
# spreading JSON document.
_EXT_PAIR_B0 = [[0, 0], [2, 1], [0, 1]]
_EXT_PAIR_B1 = [[0, 0], [1, 0], [1, 2]]


@dataclass(frozen=True)
class EdgeSpreading:
    """Ordered component matrices [B_0, ..., B_ms] of one base matrix.

    punctured_columns gives the punctured variable positions within a single
    time instant; extension records the family parameter e when known.
    """

    components: tuple
    punctured_columns: frozenset = frozenset()
    name: str = ""
    extension: int | None = None

    def __post_init__(self):
        comps = []
        for c in self.components:
            arr = np.asarray(c, dtype=np.int64)
            arr.flags.writeable = False
            comps.append(arr)
        if len(comps) < 2:
            raise ValueError("a spreading needs at least two components (memory >= 1)")
        shape = comps[0].shape
        for c in comps:
            if c.shape != shape:
                raise ValueError("component shape mismatch")
            if np.any(c < 0):
                raise ValueError("negative component entry")
        object.__setattr__(self, "components", tuple(comps))
        object.__setattr__(
            self, "punctured_columns", frozenset(int(i) for i in self.punctured_columns)
        )

    @property
    def memory(self) -> int:
        return len(self.components) - 1

    @property
    def b_c(self) -> int:
        return self.components[0].shape[0]

    @property
    def b_v(self) -> int:
        return self.components[0].shape[1]

    def component_sum(self) -> np.ndarray:
        return np.sum(self.components, axis=0)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "memory": self.memory,
            "components": [c.tolist() for c in self.components],
            "punctured_columns": sorted(self.punctured_columns),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EdgeSpreading":
        comps = [np.array(c, dtype=np.int64) for c in doc["components"]]
        if doc.get("memory") is not None and doc["memory"] != len(comps) - 1:
            raise ValueError("memory field inconsistent with component count")
        return cls(
            components=tuple(comps),
            punctured_columns=frozenset(doc.get("punctured_columns", [])),
            name=doc.get("name", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "EdgeSpreading":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class TerminatedProtograph:
    """Terminated block protograph annotated with its construction parameters.

    dropped_rows holds the indices, in the pre-deletion block-band matrix, of
    the all-zero check rows removed by the termination.
    """

    base: BaseMatrix
    termination_factor: int
    dropped_rows: tuple
    extension: int | None = None


def check_spreading(s: EdgeSpreading, b: BaseMatrix) -> list[str]:
    """Validate a spreading against its target base matrix.

    Returns a list of violations; raises on incompatible shapes.
    """
    if (s.b_c, s.b_v) != (b.n_c, b.n_v):
        raise ValueError(
            f"shape mismatch: components are {s.b_c}x{s.b_v}, base is {b.n_c}x{b.n_v}"
        )
    violations = []
    total = s.component_sum()
    for c in s.components:
        if np.any(c > b.entries):
            violations.append("component exceeds base")
            break
    if not np.array_equal(total, b.entries):
        violations.append("component sum differs from base")
    if np.any(s.components[0].sum(axis=1) == 0):
        violations.append("all-zero row in leading component")
    if s.punctured_columns != b.punctured:
        violations.append("punctured columns differ from base puncturing")
    return violations


def terminate(s: EdgeSpreading, L: int) -> TerminatedProtograph:
    """Terminate the convolutional protograph after L time instants.

    Block column t (t = 0..L-1) stacks B_0 at block row t through B_ms at
    block row t + m_s; every all-zero row of the resulting band matrix is
    deleted and recorded.
    """
    if L < 2:
        raise ValueError("termination factor L must be at least 2")
    ms, b_c, b_v = s.memory, s.b_c, s.b_v
    full = np.zeros(((L + ms) * b_c, L * b_v), dtype=np.int64)
    for t in range(L):
        for i, comp in enumerate(s.components):
            full[(t + i) * b_c : (t + i + 1) * b_c, t * b_v : (t + 1) * b_v] = comp
    if np.any(full.sum(axis=0) == 0):
        raise InvalidProtographError("termination produced a zero column")
    row_sums = full.sum(axis=1)
    dropped = tuple(int(j) for j in np.flatnonzero(row_sums == 0))
    kept = full[row_sums > 0]
    punctured = frozenset(
        t * b_v + c for t in range(L) for c in s.punctured_columns
    )
    name = f"{s.name}-L{L}" if s.name else f"terminated-L{L}"
    base = BaseMatrix(entries=kept, punctured=punctured, name=name)
    return TerminatedProtograph(
        base=base,
        termination_factor=L,
        dropped_rows=dropped,
        extension=s.extension,
    )


def ar4ja_family(e: int) -> BaseMatrix:
    """Block base matrix of the rate-(1+e)/(2+e) family member."""
    if e < 0:
        raise ValueError("extension parameter e must be nonnegative")
    cols = [list(row) for row in _CORE_BASE]
    for _ in range(e):
        for j in range(3):
            cols[j] = cols[j] + list(_EXT_PAIR[j])
    return BaseMatrix(
        entries=np.array(cols, dtype=np.int64),
        punctured=frozenset({1}),
        name=f"ar4ja-e{e}",
    )


def ar4ja_spreading(e: int) -> EdgeSpreading:
    """Memory-1 component split of ar4ja_family(e)."""
    if e < 0:
        raise ValueError("extension parameter e must be nonnegative")
    b0 = [list(row) for row in _CORE_B0]
    b1 = [list(row) for row in _CORE_B1]
    for _ in range(e):
        for j in range(3):
            b0[j] = b0[j] + list(_EXT_PAIR_B0[j])
            b1[j] = b1[j] + list(_EXT_PAIR_B1[j])
    return EdgeSpreading(
        components=(np.array(b0, dtype=np.int64), np.array(b1, dtype=np.int64)),
        punctured_columns=frozenset({1}),
        name=f"ar4ja-e{e}",
        extension=e,
    )


def fractional_gap(threshold: float, rate) -> float:
    """Fractional gap to capacity (eps_sh - eps*) / eps_sh."""
    eps_sh = float(shannon_limit(rate))
    if threshold < 0:
        raise ValueError("negative threshold")
    if threshold > eps_sh + 1e-12:
        raise ValueError("threshold above capacity")
    return (eps_sh - threshold) / eps_sh
