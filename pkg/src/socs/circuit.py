"""Circuit IR: units, scopes, builder and structural checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domains import Variable
from .errors import FieldError, StructureError
from .leaves import (Embedding, Categorical, Gaussian, Indicator, LeafTerm, as_term,
                     pair_supported, term_family, term_groups, term_nonnegative)
from .params import ParamGroup, ParamStore, Site, Weight, fresh_name

INPUT, SUM, PRODUCT = "input", "sum", "product"


@dataclass(frozen=True)
class Unit:
    kind: str
    inputs: tuple[int, ...] = ()
    weights: tuple[Weight, ...] = ()
    var: int = -1
    term: LeafTerm = ()


def scope_vars(scope: int) -> list[int]:
    out, i = [], 0
    while scope:
        if scope & 1:
            out.append(i)
        scope >>= 1
        i += 1
    return out


def min_var(scope: int) -> int:
    return (scope & -scope).bit_length() - 1


class Circuit:
    """Immutable rooted DAG.  Unit ids are positions in topological order."""

    def __init__(self, variables: Sequence[Variable], units: Sequence[Unit], output: int,
                 field: str, params: Mapping[str, ParamGroup], meta: dict | None = None):
        if field not in ("real", "complex"):
            raise FieldError(f"unsupported field {field!r}")
        self.variables = tuple(variables)
        self.units = tuple(units)
        self.output = int(output)
        self.field = field
        self.params = ParamStore(params)
        self.meta = dict(meta or {})
        self._monotone: bool | None = None
        self._compiled = None
        self.scopes = self._compute_scopes()

    def _compute_scopes(self) -> tuple[int, ...]:
        scopes = []
        nv = len(self.variables)
        for uid, u in enumerate(self.units):
            if u.kind == INPUT:
                if not 0 <= u.var < nv:
                    raise StructureError(f"unit {uid}: variable {u.var} not in table")
                if not u.term:
                    raise StructureError(f"unit {uid}: empty leaf")
                scopes.append(1 << u.var)
                continue
            if any(not 0 <= i < uid for i in u.inputs):
                raise StructureError(f"unit {uid}: inputs must precede it in topological order")
            if u.kind == SUM:
                if not u.inputs or len(u.inputs) != len(u.weights):
                    raise StructureError(f"unit {uid}: sum needs matching inputs and weights")
            elif u.kind == PRODUCT:
                if len(u.inputs) != 2:
                    raise StructureError(f"unit {uid}: product must be binary")
            else:
                raise StructureError(f"unit {uid}: unknown kind {u.kind!r}")
            s = 0
            for i in u.inputs:
                s |= scopes[i]
            scopes.append(s)
        if not 0 <= self.output < len(self.units):
            raise StructureError("output id out of range")
        return tuple(scopes)

    @property
    def num_units(self) -> int:
        return len(self.units)

    @property
    def size(self) -> int:
        """Number of edges."""
        return sum(len(u.inputs) for u in self.units)

    @property
    def scope(self) -> int:
        return self.scopes[self.output]

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def weight_values(self, uid: int) -> np.ndarray:
        return np.array([w.value(self.params) for w in self.units[uid].weights],
                        dtype=np.complex128)

    def used_groups(self) -> set[str]:
        used = set()
        for u in self.units:
            for w in u.weights:
                used.update(s.group for s in w.sites)
            used.update(term_groups(u.term))
        return used

    def num_parameters(self) -> int:
        """Count of trainable real scalars reachable from this circuit."""
        return sum(self.params[g].num_real() for g in self.used_groups()
                   if self.params[g].trainable)

    @property
    def monotone_flag(self) -> bool | None:
        return self._monotone

    def __repr__(self):
        return (f"Circuit(field={self.field}, vars={self.num_vars}, units={self.num_units}, "
                f"size={self.size})")


class CircuitBuilder:
    """Append-only construction.  Products with more than two inputs are
    left-folded into binary products."""

    def __init__(self, variables: Sequence[Variable], field: str = "real",
                 params: Mapping[str, ParamGroup] | None = None):
        self.variables = tuple(variables)
        self.field = field
        self.params = ParamStore(params or {})
        self.units: list[Unit] = []
        self._scopes: list[int] = []

    def _add(self, unit: Unit, scope: int) -> int:
        self.units.append(unit)
        self._scopes.append(scope)
        return len(self.units) - 1

    def scope(self, uid: int) -> int:
        return self._scopes[uid]

    # parameters -----------------------------------------------------------
    def group(self, values, transform="identity", trainable=True, name=None) -> ParamGroup:
        g = ParamGroup(name or fresh_name(), np.asarray(values), transform, trainable)
        if g.is_complex and self.field == "real":
            self.field = "complex"
        return self.params.add(g)

    def weights(self, values, trainable=True, transform="identity", name=None) -> list[Weight]:
        values = np.asarray(values)
        g = self.group(values, transform, trainable, name)
        return [Weight(1.0, (Site(g.name, i),)) for i in range(g.size)]

    # units ----------------------------------------------------------------
    def input(self, var: int, f) -> int:
        term = as_term(f)
        for f_, _ in term:
            for gname in f_.groups():
                if gname not in self.params:
                    raise KeyError(f"leaf references unknown parameter group {gname}")
        return self._add(Unit(INPUT, var=var, term=term), 1 << var)

    def indicator(self, var: int, value: int) -> int:
        return self.input(var, Indicator(int(value)))

    def embedding(self, var: int, entries, trainable=True) -> int:
        g = self.group(np.asarray(entries), trainable=trainable)
        return self.input(var, Embedding(g.name, 0, g.size))

    def categorical(self, var: int, probs, trainable=True) -> int:
        with np.errstate(divide="ignore"):
            g = self.group(np.log(np.asarray(probs, dtype=float)), "exp", trainable)
        return self.input(var, Categorical(g.name, 0, g.size))

    def gaussian(self, var: int, mean: float, log_stddev: float, trainable=True) -> int:
        g = self.group(np.array([mean, log_stddev], dtype=float), trainable=trainable)
        return self.input(var, Gaussian(g.name, 0))

    def sum(self, inputs: Sequence[int], weights, trainable: bool = False) -> int:
        inputs = tuple(int(i) for i in inputs)
        if weights is None:
            weights = [1.0] * len(inputs)
        if len(weights) and isinstance(weights[0], Weight):
            ws = tuple(weights)
        elif trainable:
            ws = tuple(self.weights(weights))
        else:
            ws = tuple(Weight(complex(w), ()) for w in weights)
            if any(w.const.imag != 0 for w in ws):
                self.field = "complex"
        if len(ws) != len(inputs) or not inputs:
            raise StructureError("sum needs one weight per input and at least one input")
        s = 0
        for i in inputs:
            s |= self._scopes[i]
        return self._add(Unit(SUM, inputs, ws), s)

    def product(self, inputs: Sequence[int]) -> int:
        inputs = [int(i) for i in inputs]
        if len(inputs) == 1:
            return inputs[0]
        if not inputs:
            raise StructureError("product needs at least one input")
        acc = inputs[0]
        for nxt in inputs[1:]:
            acc = self._add(Unit(PRODUCT, (acc, nxt)), self._scopes[acc] | self._scopes[nxt])
        return acc

    def copy_from(self, c: Circuit, memo: dict | None = None) -> dict[int, int]:
        """Import every unit of ``c``; returns the id map."""
        self.params = self.params.merged(c.params)
        if c.field == "complex":
            self.field = "complex"
        mapping = {} if memo is None else memo
        for uid, u in enumerate(c.units):
            if uid in mapping:
                continue
            if u.kind == INPUT:
                mapping[uid] = self._add(u, c.scopes[uid])
            else:
                mapping[uid] = self._add(Unit(u.kind, tuple(mapping[i] for i in u.inputs),
                                              u.weights), c.scopes[uid])
        return mapping

    def build(self, output: int, meta: dict | None = None, field: str | None = None) -> Circuit:
        """Keep only units reachable from ``output`` and freeze."""
        keep = set()
        stack = [output]
        while stack:
            n = stack.pop()
            if n in keep:
                continue
            keep.add(n)
            stack.extend(self.units[n].inputs)
        order = sorted(keep)
        remap = {old: new for new, old in enumerate(order)}
        units = []
        for old in order:
            u = self.units[old]
            if u.kind == INPUT:
                units.append(u)
            else:
                units.append(Unit(u.kind, tuple(remap[i] for i in u.inputs), u.weights))
        c = Circuit(self.variables, units, remap[output], field or self.field, {}, meta)
        used = c.used_groups()
        c.params = ParamStore({n: g for n, g in self.params.items() if n in used})
        return c


def with_units(c: Circuit, units: Sequence[Unit], field: str | None = None,
               meta: dict | None = None) -> Circuit:
    return Circuit(c.variables, units, c.output, field or c.field, c.params,
                   c.meta if meta is None else meta)


# structural checks ----------------------------------------------------------

@dataclass
class StructuralReport:
    smooth: bool
    decomposable: bool
    witnesses: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.smooth and self.decomposable


@dataclass
class CompatReport:
    compatible: bool
    witnesses: list[tuple] = field(default_factory=list)


def check_smooth_decomposable(c: Circuit) -> StructuralReport:
    smooth, decomposable, wit = True, True, []
    for uid, u in enumerate(c.units):
        if u.kind == SUM:
            s0 = c.scopes[u.inputs[0]]
            if any(c.scopes[i] != s0 for i in u.inputs[1:]):
                smooth = False
                wit.append(uid)
        elif u.kind == PRODUCT:
            a, b = u.inputs
            if c.scopes[a] & c.scopes[b]:
                decomposable = False
                wit.append(uid)
    return StructuralReport(smooth, decomposable, wit)


def _require_valid(c: Circuit) -> None:
    rep = check_smooth_decomposable(c)
    if not rep.ok:
        raise StructureError(f"circuit is not smooth and decomposable; units {rep.witnesses}")


def product_split(c: Circuit, uid: int) -> tuple[int, int]:
    """Child scopes of a product ordered by their minimum variable index."""
    a, b = (c.scopes[i] for i in c.units[uid].inputs)
    return (a, b) if min_var(a) <= min_var(b) else (b, a)


def _splits_by_scope(c: Circuit) -> dict[int, dict[tuple[int, int], int]]:
    out: dict[int, dict[tuple[int, int], int]] = {}
    for uid, u in enumerate(c.units):
        if u.kind == PRODUCT:
            out.setdefault(c.scopes[uid], {}).setdefault(product_split(c, uid), uid)
    return out


def _terms_by_var(c: Circuit) -> dict[int, dict[tuple, int]]:
    out: dict[int, dict[tuple, int]] = {}
    for uid, u in enumerate(c.units):
        if u.kind == INPUT:
            key = tuple((type(f).__name__, getattr(f, "interval", None)) for f, _ in u.term)
            out.setdefault(u.var, {}).setdefault(key, uid)
    return out


def compat_signature(c: Circuit) -> tuple:
    """Everything check_compatible looks at; equal signatures give equal verdicts."""
    splits = frozenset((scope, split) for scope, d in _splits_by_scope(c).items() for split in d)
    terms = frozenset((var, key) for var, d in _terms_by_var(c).items() for key in d)
    return c.variables, splits, terms


def check_compatible(c1: Circuit, c2: Circuit) -> CompatReport:
    _require_valid(c1)
    if c2 is not c1:
        _require_valid(c2)
    if c1.variables != c2.variables:
        raise StructureError("circuits are defined over different variable tables")
    wit = []
    s1, s2 = _splits_by_scope(c1), _splits_by_scope(c2)
    for scope in sorted(set(s1) & set(s2)):
        for split1, u1 in s1[scope].items():
            for split2, u2 in s2[scope].items():
                if split1 != split2:
                    wit.append(("product", u1, u2, scope))
    t1, t2 = _terms_by_var(c1), _terms_by_var(c2)
    for var in sorted(set(t1) & set(t2)):
        dom = c1.variables[var].domain
        for u1 in t1[var].values():
            for u2 in t2[var].values():
                if not pair_supported(c1.units[u1].term, c2.units[u2].term, dom):
                    wit.append(("input", u1, u2, 1 << var))
    return CompatReport(not wit, wit)


def structured_decomposable(c: Circuit) -> bool:
    try:
        return check_compatible(c, c).compatible
    except StructureError:
        return False


def check_monotone(c: Circuit) -> bool:
    if c.field != "real":
        raise FieldError("monotonicity is defined for real circuits only")
    if c._monotone is not None:
        return c._monotone
    ok = True
    for uid, u in enumerate(c.units):
        if u.kind == SUM:
            w = c.weight_values(uid)
            if np.any(w.real < 0) or np.any(w.imag != 0):
                ok = False
                break
        elif u.kind == INPUT:
            if not term_nonnegative(u.term, c.params, c.variables[u.var].domain):
                ok = False
                break
    c._monotone = ok
    return ok


def recompute_scopes(c: Circuit) -> list[int]:
    """Scopes by explicit recursion from the leaves (used as an audit)."""
    memo: dict[int, frozenset] = {}

    def rec(uid):
        if uid in memo:
            return memo[uid]
        u = c.units[uid]
        if u.kind == INPUT:
            s = frozenset([u.var])
        else:
            s = frozenset().union(*(rec(i) for i in u.inputs))
        memo[uid] = s
        return s

    return [sum(1 << v for v in rec(uid)) for uid in range(c.num_units)]


def leaf_families(c: Circuit) -> set[str]:
    return {term_family(u.term) for u in c.units if u.kind == INPUT}
