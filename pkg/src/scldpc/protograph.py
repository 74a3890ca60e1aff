"""Protograph base matrices with puncturing, and derived structural quantities.

A protograph is a small bipartite graph between variable nodes and check
nodes; entry (j, k) of its base matrix counts the edges between check j and
variable k.  Punctured variable nodes are kept in the graph but excluded
from transmission.
"""

from __future__ import annotations

import json
import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "BaseMatrix",
    "DegreeProfile",
    "InvalidProtographError",
    "validate",
    "degree_profile",
    "design_rate",
    "shannon_limit",
    "gv_bound",
    "binary_entropy",
]


class InvalidProtographError(ValueError):
    """Raised when an operation is applied to an invalid base matrix."""


@dataclass(frozen=True)
class BaseMatrix:
    """Nonnegative integer biadjacency matrix plus a puncture mask.

    Attributes
    ----------
    entries : np.ndarray
        Shape (n_c, n_v) integer matrix; entry = edge multiplicity.
    punctured : frozenset[int]
        Indices of variable nodes excluded from transmission.
    name : str
        Free-form label used in output documents and RNG seeding.
    """

    entries: np.ndarray
    punctured: frozenset = frozenset()
    name: str = ""

    def __post_init__(self):
        arr = np.asarray(self.entries)
        if arr.ndim != 2:
            raise InvalidProtographError("base matrix must be two-dimensional")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == np.floor(arr)):
                raise InvalidProtographError("base matrix entries must be integers")
            arr = arr.astype(np.int64)
        else:
            arr = arr.astype(np.int64)
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "punctured", frozenset(int(i) for i in self.punctured))

    @property
    def n_c(self) -> int:
        return self.entries.shape[0]

    @property
    def n_v(self) -> int:
        return self.entries.shape[1]

    @property
    def u(self) -> int:
        """Number of transmitted variable nodes."""
        return self.n_v - len(self.punctured)

    @property
    def transmitted(self) -> list[int]:
        return [k for k in range(self.n_v) if k not in self.punctured]

    @property
    def edge_count(self) -> int:
        return int(self.entries.sum())

    def ident(self) -> str:
        """Stable identifier used to derive deterministic RNG seeds."""
        h = zlib.crc32(self.entries.tobytes())
        h = zlib.crc32(np.array(sorted(self.punctured), dtype=np.int64).tobytes(), h)
        return f"{self.name}:{self.n_c}x{self.n_v}:{h:08x}"

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "base": self.entries.tolist(),
            "punctured": sorted(self.punctured),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BaseMatrix":
        return cls(
            entries=np.array(doc["base"], dtype=np.int64),
            punctured=frozenset(doc.get("punctured", [])),
            name=doc.get("name", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "BaseMatrix":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class DegreeProfile:
    """Multisets of check-node and variable-node degrees."""

    check_degrees: Counter
    variable_degrees: Counter

    @property
    def total_edges(self) -> int:
        return sum(d * m for d, m in self.check_degrees.items())


def validate(b: BaseMatrix) -> list[str]:
    """Return the list of invariant violations (empty list means valid)."""
    violations = []
    arr = b.entries
    if np.any(arr < 0):
        violations.append("negative entry")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        violations.append("empty matrix")
        return violations
    row_sums = arr.sum(axis=1)
    col_sums = arr.sum(axis=0)
    if np.any(row_sums == 0):
        violations.append("zero row")
    if np.any(col_sums == 0):
        violations.append("zero column")
    if any(k < 0 or k >= b.n_v for k in b.punctured):
        violations.append("punctured index out of range")
    if b.n_v - len(b.punctured) < 1:
        violations.append("no transmitted variable node")
    return violations


def _require_valid(b: BaseMatrix) -> None:
    violations = validate(b)
    if violations:
        raise InvalidProtographError(f"invalid base matrix: {', '.join(violations)}")


def degree_profile(b: BaseMatrix) -> DegreeProfile:
    """Row/column sums of the base matrix, counted with multiplicity."""
    _require_valid(b)
    return DegreeProfile(
        check_degrees=Counter(int(d) for d in b.entries.sum(axis=1)),
        variable_degrees=Counter(int(d) for d in b.entries.sum(axis=0)),
    )


def design_rate(b: BaseMatrix) -> Fraction:
    """Exact design rate (n_v - n_c) / u, with u the transmitted node count."""
    _require_valid(b)
    if b.n_v <= b.n_c:
        raise InvalidProtographError("nonpositive design rate")
    return Fraction(b.n_v - b.n_c, b.u)


def shannon_limit(rate) -> Fraction:
    """BEC capacity bound 1 - R for a rate-R code."""
    r = Fraction(rate)
    if r < 0 or r > 1:
        raise ValueError("rate outside [0, 1]")
    return 1 - r


def binary_entropy(x: float) -> float:
    """Base-2 binary entropy; 0 at the endpoints."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def gv_bound(rate) -> float:
    """Gilbert-Varshamov relative distance: delta in [0, 1/2] with H2(delta) = 1 - R.

    Solved by bisection to an interval of width 1e-10.
    """
    r = Fraction(rate)
    if r < 0 or r > 1:
        raise ValueError("rate outside [0, 1]")
    target = float(1 - r)
    if target >= 1.0:
        return 0.5
    if target <= 0.0:
        return 0.0
    lo, hi = 0.0, 0.5
    # binary_entropy is increasing on [0, 1/2]
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
