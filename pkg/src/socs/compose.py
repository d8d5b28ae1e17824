"""Products of compatible circuits, conjugation, squares, SOCS and conditioning."""

from __future__ import annotations

import sys
from typing import Mapping, Sequence

import numpy as np

from .circuit import (INPUT, PRODUCT, SUM, Circuit, CircuitBuilder, Unit, check_compatible,
                      check_monotone, compat_signature, check_smooth_decomposable, min_var, scope_vars,
                      structured_decomposable, with_units)
from .domains import Finite, Variable
from .errors import DomainError, IncompatibleError, MonotonicityError, StructureError
from .leaves import conjugate_term, polynomial, term_value
from .params import Weight, const_weight

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))


def _join_field(*cs: Circuit) -> str:
    return "complex" if any(c.field == "complex" for c in cs) else "real"


def multiply(c1: Circuit, c2: Circuit, memo: bool = True, check: bool = True) -> Circuit:
    """Circuit computing c1(x) * c2(x) for compatible inputs."""
    if check:
        rep = check_compatible(c1, c2)
        if not rep.compatible:
            kind, u1, u2, scope = rep.witnesses[0]
            raise IncompatibleError(
                f"{kind} units {u1} and {u2} disagree on scope {scope_vars(scope)}")
    b = CircuitBuilder(c1.variables, _join_field(c1, c2), c1.params.merged(c2.params))
    copies = ({}, {})
    cache: dict[tuple[int, int], int] = {}
    sources = (c1, c2)

    def copy(side: int, uid: int) -> int:
        m = copies[side]
        if uid in m:
            return m[uid]
        u = sources[side].units[uid]
        if u.kind == INPUT:
            new = b.input(u.var, u.term)
        elif u.kind == SUM:
            new = b.sum([copy(side, i) for i in u.inputs], list(u.weights))
        else:
            new = b.product([copy(side, i) for i in u.inputs])
        m[uid] = new
        return new

    def mul(n: int, m: int) -> int:
        key = (n, m)
        if memo and key in cache:
            return cache[key]
        out = _mul(n, m)
        if memo:
            cache[key] = out
        return out

    def _mul(n: int, m: int) -> int:
        u, v = c1.units[n], c2.units[m]
        s1, s2 = c1.scopes[n], c2.scopes[m]
        if not s1 & s2:
            return b.product([copy(0, n), copy(1, m)])
        if u.kind == INPUT and v.kind == INPUT:
            return b.input(u.var, u.term + v.term)
        if u.kind == SUM and v.kind == SUM:
            ins, ws = [], []
            for i, wi in zip(u.inputs, u.weights):
                for j, wj in zip(v.inputs, v.weights):
                    ins.append(mul(i, j))
                    ws.append(wi.times(wj))
            return b.sum(ins, ws)
        if u.kind == SUM:
            return b.sum([mul(i, m) for i in u.inputs], list(u.weights))
        if v.kind == SUM:
            return b.sum([mul(n, j) for j in v.inputs], list(v.weights))
        if u.kind == PRODUCT and v.kind == PRODUCT:
            return _mul_products(n, m, s1 & s2)
        if u.kind == PRODUCT:
            x, y = u.inputs
            if not c1.scopes[y] & s2:
                return b.product([mul(x, m), copy(0, y)])
            if not c1.scopes[x] & s2:
                return b.product([copy(0, x), mul(y, m)])
        else:
            x, y = v.inputs
            if not c2.scopes[y] & s1:
                return b.product([mul(n, x), copy(1, y)])
            if not c2.scopes[x] & s1:
                return b.product([copy(1, x), mul(n, y)])
        raise IncompatibleError(f"cannot multiply units {n} and {m} over {scope_vars(s1 & s2)}")

    def _mul_products(n: int, m: int, overlap: int) -> int:
        a, bb = c1.units[n].inputs
        a2, b2 = c2.units[m].inputs
        ra, rb = c1.scopes[a] & overlap, c1.scopes[bb] & overlap
        ra2, rb2 = c2.scopes[a2] & overlap, c2.scopes[b2] & overlap
        if not ra:
            return b.product([copy(0, a), mul(bb, m)])
        if not rb:
            return b.product([mul(a, m), copy(0, bb)])
        if not ra2:
            return b.product([copy(1, a2), mul(n, b2)])
        if not rb2:
            return b.product([mul(n, a2), copy(1, b2)])
        # pair children canonically by minimum variable index
        left1, right1 = (a, bb) if min_var(ra) <= min_var(rb) else (bb, a)
        left2, right2 = (a2, b2) if min_var(ra2) <= min_var(rb2) else (b2, a2)
        if (c1.scopes[left1] & overlap) != (c2.scopes[left2] & overlap) or \
                (c1.scopes[right1] & overlap) != (c2.scopes[right2] & overlap):
            raise IncompatibleError(
                f"products {n} and {m} split {scope_vars(overlap)} differently")
        return b.product([mul(left1, left2), mul(right1, right2)])

    root = mul(c1.output, c2.output)
    return b.build(root, field=_join_field(c1, c2))


def conjugate(c: Circuit) -> Circuit:
    """Complex conjugate; parameters stay shared through conjugated sites."""
    if c.field == "real":
        return c
    units = []
    for u in c.units:
        if u.kind == INPUT:
            units.append(Unit(INPUT, var=u.var, term=conjugate_term(u.term)))
        elif u.kind == SUM:
            units.append(Unit(SUM, u.inputs, tuple(w.conjugated() for w in u.weights)))
        else:
            units.append(u)
    return with_units(c, units, meta={})


def square(c: Circuit, conjugate_first: bool | None = None) -> Circuit:
    """|c|^2 as a circuit; complex inputs use conj(c) * c unless told otherwise."""
    if not structured_decomposable(c):
        raise IncompatibleError("squaring needs a structured-decomposable circuit")
    use_conj = c.field == "complex" if conjugate_first is None else conjugate_first
    left = conjugate(c) if use_conj else c
    out = multiply(left, c, check=False)
    out.meta["square_of"] = c
    return out


def _same_scope(cs: Sequence[Circuit]) -> None:
    scopes = {c.scope for c in cs}
    if len(scopes) != 1:
        raise StructureError("all components must share one scope")


def check_pairwise(cs: Sequence[Circuit]) -> None:
    # one representative per structural signature keeps this quadratic in
    # the number of distinct structures rather than components
    reps: dict[tuple, int] = {}
    for k, c in enumerate(cs):
        reps.setdefault((compat_signature(c), check_smooth_decomposable(c).ok), k)
    idx = sorted(reps.values())
    for a, i in enumerate(idx):
        for j in idx[a:]:
            rep = check_compatible(cs[i], cs[j])
            if not rep.compatible:
                raise IncompatibleError(f"components {i} and {j} are not compatible: "
                                        f"{rep.witnesses[0]}")


def combine(parts: Sequence[Circuit], weights: Sequence, meta: dict | None = None) -> Circuit:
    """Single root sum over the outputs of several same-scope circuits."""
    _same_scope(parts)
    field = _join_field(*parts)
    if any(not isinstance(w, Weight) and complex(w).imag != 0 for w in weights):
        field = "complex"
    b = CircuitBuilder(parts[0].variables, field)
    roots = []
    for p in parts:
        mapping = b.copy_from(p)
        roots.append(mapping[p.output])
    ws = [w if isinstance(w, Weight) else const_weight(complex(w)) for w in weights]
    out = b.build(b.sum(roots, ws), meta=meta)
    return out


def socs_sum(cs: Sequence[Circuit], coefficients: Sequence[float] | None = None,
             conjugate_first: bool | None = None) -> Circuit:
    """sum_i lambda_i c_i(x)^2 with one root sum over materialized squares."""
    cs = list(cs)
    if not cs:
        raise ValueError("need at least one component")
    lam = [1.0] * len(cs) if coefficients is None else [float(x) for x in coefficients]
    if len(lam) != len(cs) or any(x < 0 for x in lam):
        raise ValueError("coefficients must be nonnegative, one per component")
    _same_scope(cs)
    check_pairwise(cs)
    squares = [square(c, conjugate_first) for c in cs]
    field = "real" if all(c.field == "real" for c in cs) else "complex"
    out = combine(squares, lam, meta={"socs": {"components": cs, "coefficients": lam,
                                               "conjugate_first": conjugate_first}})
    if field == "real":
        out.field = "real"
    return out


def num_squares(c: Circuit) -> int:
    return len(c.meta["socs"]["components"]) if "socs" in c.meta else 0


def musocs(mono: Circuit, socs: Circuit) -> Circuit:
    """Product of a monotone circuit with a SOCS circuit."""
    if mono.field != "real" or not check_monotone(mono):
        raise MonotonicityError("the first factor must be a monotone real circuit")
    out = multiply(mono, socs)
    out.meta["musocs"] = {"mono": mono, "socs": socs}
    return out


def split_log_evaluate(c: Circuit, X) -> np.ndarray:
    """log c(x) for μSOCS/SOCS circuits without touching the materialized product."""
    from .evaluate import log_evaluate
    if "musocs" in c.meta:
        mono, socs = c.meta["musocs"]["mono"], c.meta["musocs"]["socs"]
        return log_evaluate(mono, X).real + split_log_evaluate(socs, X)
    if "socs" in c.meta:
        info = c.meta["socs"]
        terms = []
        for comp, lam in zip(info["components"], info["coefficients"]):
            z = log_evaluate(comp, X)
            if info.get("conjugate_first") is False:
                terms.append(np.log(lam + 0j) + 2 * z)
            else:
                terms.append(np.log(lam + 0j) + 2 * z.real)
        t = np.stack(terms)
        m = np.max(t.real, axis=0)
        m = np.where(np.isfinite(m), m, 0.0)
        return (m + np.log(np.sum(np.exp(t - m), axis=0))).real
    return log_evaluate(c, X).real


# constants and conditioning --------------------------------------------------

def one_leaf(b: CircuitBuilder, var: int) -> int:
    """A unit computing 1 over one variable (the smoothing gadget)."""
    dom = b.variables[var].domain
    if isinstance(dom, Finite):
        return b.sum([b.indicator(var, k) for k in range(dom.size)], [1.0] * dom.size)
    iv = (dom.low, dom.high) if dom.bounded else None
    return b.input(var, polynomial([1.0], iv))


def constant_one(variables: Sequence[Variable], scope: Sequence[int] | None = None,
                 vtree=None) -> Circuit:
    """delta(S) = prod_{X in S} (sum_k 1[X=k]); the identity for multiply.

    Products follow ``vtree`` (nested pairs of variable indices) when given,
    so the constant is compatible with circuits structured by it; otherwise
    they form a left chain over ``scope``.
    """
    b = CircuitBuilder(variables)
    if vtree is not None:
        def rec(vt):
            if isinstance(vt, tuple):
                return b.product([rec(vt[0]), rec(vt[1])])
            return one_leaf(b, int(vt))
        return b.build(rec(vtree))
    idx = list(range(len(variables))) if scope is None else sorted(scope)
    return b.build(b.product([one_leaf(b, v) for v in idx]))


def condition(c: Circuit, assignment: Mapping) -> Circuit:
    """Substitute observed values; the result is over the remaining variables."""
    obs: dict[int, float] = {}
    for k, v in assignment.items():
        idx = c.var_index(k) if isinstance(k, str) else int(k)
        if not c.variables[idx].domain.contains(v):
            raise DomainError(f"value {v} outside the domain of {c.variables[idx].name}")
        obs[idx] = float(v)
    rep = check_smooth_decomposable(c)
    if not rep.ok:
        raise StructureError(f"conditioning needs a smooth decomposable circuit; units {rep.witnesses}")
    b = CircuitBuilder(c.variables, c.field, c.params)
    # each unit maps to (scale, new id or None); None means a pure constant
    res: list[tuple[complex, int | None]] = []
    for uid, u in enumerate(c.units):
        if u.kind == INPUT:
            if u.var in obs:
                dom = c.variables[u.var].domain
                val = term_value(u.term, c.params, np.array([obs[u.var]]), dom)[0]
                res.append((complex(val), None))
            else:
                res.append((1.0, b.input(u.var, u.term)))
        elif u.kind == PRODUCT:
            (ka, ia), (kb, ib) = res[u.inputs[0]], res[u.inputs[1]]
            k = ka * kb
            if ia is None:
                res.append((k, ib))
            elif ib is None:
                res.append((k, ia))
            else:
                res.append((k, b.product([ia, ib])))
        else:
            kids = [res[i] for i in u.inputs]
            if all(i is None for _, i in kids):
                total = sum(w.value(c.params) * k for w, (k, _) in zip(u.weights, kids))
                res.append((complex(total), None))
            elif any(i is None for _, i in kids):
                raise StructureError(f"sum unit {uid} mixes observed and free scopes")
            else:
                res.append((1.0, b.sum([i for _, i in kids],
                                       [w.scaled(k) for w, (k, _) in zip(u.weights, kids)])))
    k, root = res[c.output]
    if root is None:
        raise DomainError("conditioning assigned every variable; use evaluate instead")
    if k != 1.0:
        root = b.sum([root], [const_weight(k)])
    meta = {}
    if "socs" in c.meta:
        info = dict(c.meta["socs"])
        info["components"] = [condition(x, assignment) for x in info["components"]]
        meta["socs"] = info
    return b.build(root, meta=meta, field=c.field)


def perturb_first_weight(c: Circuit, factor: float = 1.001) -> Circuit:
    """Return a copy whose first sum weight is scaled; used to exercise failure paths."""
    units = list(c.units)
    for uid, u in enumerate(units):
        if u.kind == SUM:
            ws = list(u.weights)
            ws[0] = ws[0].scaled(factor)
            units[uid] = Unit(SUM, u.inputs, tuple(ws))
            break
    return with_units(c, units)
