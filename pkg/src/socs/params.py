"""Logical parameters and the weight expressions that reference them.

A circuit never stores trainable numbers directly.  Sum weights are
``Weight`` expressions: a constant times a product of *sites*, where a site
points at one scalar of a named ``ParamGroup`` and may be conjugated.  This
lets a squared circuit reuse the parameters of its base circuit, so gradients
of the square flow back to the single logical copy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

_names = itertools.count()


def fresh_name(prefix: str = "p") -> str:
    """Return a process-unique group name."""
    return f"_{prefix}{next(_names)}"


@dataclass(eq=False)
class ParamGroup:
    """A flat array of scalars plus the map from raw storage to value.

    ``transform`` is ``"identity"`` or ``"exp"``; the latter stores
    logarithms of nonnegative quantities (monotone weights, categorical
    probabilities).
    """

    name: str
    values: np.ndarray
    transform: str = "identity"
    trainable: bool = True

    def __post_init__(self):
        arr = np.asarray(self.values)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128)
        else:
            arr = arr.astype(np.float64)
        self.values = arr.reshape(-1).copy()
        if self.transform not in ("identity", "exp"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform == "exp" and self.is_complex:
            raise ValueError("exp-transformed groups must be real")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def size(self) -> int:
        return self.values.size

    def value(self) -> np.ndarray:
        if self.transform == "exp":
            return np.exp(self.values)
        return self.values

    def derivative(self) -> np.ndarray:
        """Holomorphic derivative of ``value`` w.r.t. the raw storage."""
        if self.transform == "exp":
            return np.exp(self.values)
        return np.ones_like(self.values)

    def num_real(self) -> int:
        return self.size * (2 if self.is_complex else 1)


class ParamStore(dict):
    """Mapping from group name to ``ParamGroup``."""

    def add(self, group: ParamGroup) -> ParamGroup:
        other = self.get(group.name)
        if other is not None and other is not group:
            raise ValueError(f"parameter group name clash: {group.name}")
        self[group.name] = group
        return group

    def merged(self, *others: Mapping[str, ParamGroup]) -> "ParamStore":
        out = ParamStore(self)
        for o in others:
            for g in o.values():
                out.add(g)
        return out

    def trainable(self) -> list[ParamGroup]:
        return [g for g in self.values() if g.trainable]

    def num_trainable(self) -> int:
        return sum(g.num_real() for g in self.trainable())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: g.values.copy() for n, g in self.items()}

    def restore(self, snap: Mapping[str, np.ndarray]) -> None:
        for n, v in snap.items():
            self[n].values[...] = v


class Site(NamedTuple):
    group: str
    index: int
    conj: bool = False


class Weight(NamedTuple):
    """``const * prod(site values)``; an empty site list is a constant."""

    const: complex = 1.0
    sites: tuple[Site, ...] = ()

    def times(self, other: "Weight") -> "Weight":
        return Weight(self.const * other.const, self.sites + other.sites)

    def scaled(self, k: complex) -> "Weight":
        return Weight(self.const * k, self.sites)

    def conjugated(self) -> "Weight":
        return Weight(np.conj(self.const),
                      tuple(Site(s.group, s.index, not s.conj) for s in self.sites))

    def value(self, params: Mapping[str, ParamGroup]) -> complex:
        v = complex(self.const)
        for s in self.sites:
            x = params[s.group].value()[s.index]
            v *= np.conj(x) if s.conj else x
        return v


def const_weight(x: complex) -> Weight:
    return Weight(x, ())


class GradientAccumulator:
    """Collects Wirtinger-style partials and converts them to real gradients.

    For every raw scalar p, ``plain`` holds dF/dp contributed by unconjugated
    sites and ``conj`` holds dF/d(conj p) contributed by conjugated sites.
    For a real objective the gradient w.r.t. Re p is Re(plain + conj) and
    w.r.t. Im p is Re(i (plain - conj)).
    """

    def __init__(self, params: Mapping[str, ParamGroup]):
        self.params = params
        self.plain: dict[str, np.ndarray] = {}
        self.conj: dict[str, np.ndarray] = {}

    def _buf(self, table, name):
        buf = table.get(name)
        if buf is None:
            buf = np.zeros(self.params[name].size, dtype=np.complex128)
            table[name] = buf
        return buf

    def deposit(self, group: str, index, adjoint, conj: bool = False) -> None:
        """Add ``adjoint`` (dF/d value) at raw ``index`` of ``group``."""
        g = self.params[group]
        if not g.trainable:
            return
        index = np.asarray(index)
        dv = g.derivative()[index]
        if conj:
            np.add.at(self._buf(self.conj, group), index, adjoint * np.conj(dv))
        else:
            np.add.at(self._buf(self.plain, group), index, adjoint * dv)

    def merge(self, other: "GradientAccumulator", scale: complex = 1.0) -> None:
        for src, dst in ((other.plain, self.plain), (other.conj, self.conj)):
            for name, buf in src.items():
                self._buf(dst, name)[...] += scale * buf

    def gradients(self) -> dict[str, np.ndarray]:
        """Real gradients; complex groups return ``d/dRe + 1j * d/dIm``."""
        out = {}
        for g in self.params.values():
            if not g.trainable:
                continue
            p = self.plain.get(g.name)
            c = self.conj.get(g.name)
            p = np.zeros(g.size, np.complex128) if p is None else p
            c = np.zeros(g.size, np.complex128) if c is None else c
            d_re = np.real(p + c)
            if g.is_complex:
                d_im = np.real(1j * (p - c))
                out[g.name] = d_re + 1j * d_im
            else:
                out[g.name] = d_re
        return out

