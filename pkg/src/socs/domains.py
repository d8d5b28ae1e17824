"""Variables and their domains."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Finite:
    """Categorical domain {0, ..., size-1}; Boolean is ``Finite(2)``."""

    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("finite domain needs at least one value")

    def contains(self, x) -> bool:
        return float(x).is_integer() and 0 <= x < self.size

    def to_json(self):
        return "boolean" if self.size == 2 else {"finite": self.size}


@dataclass(frozen=True)
class Interval:
    """Real interval; the default is the whole line."""

    low: float = -math.inf
    high: float = math.inf

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.low) and math.isfinite(self.high)

    @property
    def is_line(self) -> bool:
        return self.low == -math.inf and self.high == math.inf

    def contains(self, x) -> bool:
        return self.low <= x <= self.high

    def to_json(self):
        if self.is_line:
            return "real"
        return {"interval": [self.low, self.high]}


BOOLEAN = Finite(2)
REAL = Interval()


@dataclass(frozen=True)
class Variable:
    name: str
    domain: Finite | Interval = BOOLEAN

    @property
    def is_finite(self) -> bool:
        return isinstance(self.domain, Finite)


def domain_from_json(obj) -> Finite | Interval:
    if obj == "boolean":
        return BOOLEAN
    if obj == "real":
        return REAL
    if isinstance(obj, dict):
        if "finite" in obj:
            return Finite(int(obj["finite"]))
        if "interval" in obj:
            lo, hi = obj["interval"]
            return Interval(float(lo), float(hi))
    raise ValueError(f"unknown domain descriptor {obj!r}")


def boolean_variables(names) -> tuple[Variable, ...]:
    return tuple(Variable(n, BOOLEAN) for n in names)
