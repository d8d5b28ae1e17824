"""Separating-function families as explicit circuits, with direct formulas.

Every builder works from a vtree (nested tuples of variable indices) and a
list of monomial *terms*.  A term maps variable index -> factor, where a
Boolean factor is the value the variable must take and a real factor is a
polynomial exponent.  Variables a term leaves out are smoothed with the
constant-one gadget, so all circuits built on the same vtree are compatible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, CircuitBuilder
from .compose import one_leaf, socs_sum, square
from .domains import BOOLEAN, Finite, Interval, Variable
from .leaves import polynomial

MOTZKIN_INTERVAL = (-3.0, 3.0)


@dataclass(frozen=True)
class GraphSpec:
    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("a graph needs at least one vertex")
        seen = set()
        norm = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise ValueError(f"edge ({u}, {v}) references a missing vertex")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))

    @classmethod
    def from_json(cls, obj: Mapping) -> "GraphSpec":
        return cls(int(obj["vertices"]), tuple(tuple(e) for e in obj["edges"]))

    def to_json(self) -> dict:
        return {"vertices": self.num_vertices, "edges": [list(e) for e in self.edges]}


# vtrees and term circuits ----------------------------------------------------

def chain_vtree(order: Sequence[int]):
    """Right-linear vtree (x0, (x1, (x2, ...)))."""
    order = list(order)
    vt = order[-1]
    for v in reversed(order[:-1]):
        vt = (v, vt)
    return vt


def vtree_vars(vt) -> list[int]:
    if isinstance(vt, tuple):
        return vtree_vars(vt[0]) + vtree_vars(vt[1])
    return [vt]


class TermBuilder:
    """Builds one product circuit per monomial along a fixed vtree, sharing
    every sub-product it has already built."""

    def __init__(self, b: CircuitBuilder, vtree):
        self.b = b
        self.vtree = vtree
        self._cache: dict = {}
        self._vars: dict[int, frozenset] = {}

    def _node_vars(self, node) -> frozenset:
        key = id(node)
        if key not in self._vars:
            self._vars[key] = frozenset(vtree_vars(node))
        return self._vars[key]

    def _leaf(self, var: int, factor) -> int:
        dom = self.b.variables[var].domain
        if factor is None:
            return one_leaf(self.b, var)
        if isinstance(dom, Finite):
            return self.b.indicator(var, int(factor))
        iv = (dom.low, dom.high) if dom.bounded else None
        return self.b.input(var, polynomial([0.0] * int(factor) + [1.0], iv))

    def term(self, factors: Mapping[int, object], node=None) -> int:
        node = self.vtree if node is None else node
        local = tuple(sorted((v, f) for v, f in factors.items() if v in self._node_vars(node)))
        key = (id(node), local)
        if key in self._cache:
            return self._cache[key]
        if isinstance(node, tuple):
            out = self.b.product([self.term(factors, node[0]), self.term(factors, node[1])])
        else:
            out = self._leaf(node, dict(local).get(node))
        self._cache[key] = out
        return out

    def polynomial(self, terms: Sequence[tuple[float, Mapping[int, object]]]) -> int:
        """Sum unit over monomials with constant coefficients."""
        return self.b.sum([self.term(f) for _, f in terms], [float(k) for k, _ in terms])


def polynomial_circuit(variables: Sequence[Variable], vtree,
                       terms: Sequence[tuple[float, Mapping[int, object]]]) -> Circuit:
    b = CircuitBuilder(variables)
    tb = TermBuilder(b, vtree)
    return b.build(tb.polynomial(terms))


def _edge_sum(edges, prefix: Mapping[int, object] | None = None, sign: float = -1.0):
    base = dict(prefix or {})
    out = []
    for u, v in edges:
        f = dict(base)
        f.update({u: 1, v: 1})
        out.append((sign, f))
    return out


# uniqueness disjointness -----------------------------------------------------

def graph_variables(g: GraphSpec) -> tuple[Variable, ...]:
    return tuple(Variable(f"X{v + 1}", BOOLEAN) for v in range(g.num_vertices))


def eval_fudisj(g: GraphSpec, x: Sequence[int]) -> float:
    s = sum(x[u] * x[v] for u, v in g.edges)
    return float((1 - s) ** 2)


def _udisj_root(g: GraphSpec, variables) -> Circuit:
    terms = [(1.0, {})] + _edge_sum(g.edges)
    return polynomial_circuit(variables, chain_vtree(range(len(variables))), terms)


def build_fudisj(g: GraphSpec) -> Circuit:
    """Squared circuit computing (1 - sum_{uv in E} X_u X_v)^2."""
    return square(_udisj_root(g, graph_variables(g)))


# sum function ----------------------------------------------------------------

def fsum_variables(k: int) -> tuple[Variable, ...]:
    """Blocks [X_i, X_i_1 .. X_i_k] for i = 1..k."""
    out = []
    for i in range(1, k + 1):
        out.append(Variable(f"X{i}", BOOLEAN))
        out.extend(Variable(f"X{i}_{j}", BOOLEAN) for j in range(1, k + 1))
    return tuple(out)


def fsum_index(k: int, i: int, j: int = 0, offset: int = 0) -> int:
    """Position of X_i (j = 0) or X_{i,j}; i and j are 1-based."""
    return offset + (i - 1) * (k + 1) + j


def eval_fsum(k: int, x: Sequence[int], offset: int = 0) -> float:
    total = 0
    for i in range(1, k + 1):
        inner = sum(2 ** (j - 1) * x[fsum_index(k, i, j, offset)] for j in range(1, k + 1))
        total += x[fsum_index(k, i, 0, offset)] * inner
    return float(total)


def fsum_vtree(k: int, offset: int = 0):
    blocks = [(fsum_index(k, i, 0, offset),
               chain_vtree([fsum_index(k, i, j, offset) for j in range(1, k + 1)]))
              for i in range(1, k + 1)]
    vt = blocks[-1]
    for blk in reversed(blocks[:-1]):
        vt = (blk, vt)
    return vt


def _additive(b: CircuitBuilder, tb: TermBuilder, node, local) -> int | None:
    """Circuit for sum_t f_t over ``node`` where ``local(node)`` gives the
    circuit of the summands living strictly inside a base node, or None."""
    own = local(node)
    if own is not None or not isinstance(node, tuple):
        return own
    left = _additive(b, tb, node[0], local)
    right = _additive(b, tb, node[1], local)
    parts = []
    if left is not None:
        parts.append(b.product([left, tb.term({}, node[1])]))
    if right is not None:
        parts.append(b.product([tb.term({}, node[0]), right]))
    if not parts:
        return None
    return parts[0] if len(parts) == 1 else b.sum(parts, [1.0] * len(parts))


def build_fsum(k: int) -> Circuit:
    """Monotone structured circuit of size O(k^2) for the sum function."""
    if k < 1:
        raise ValueError("k must be at least 1")
    variables = fsum_variables(k)
    vt = fsum_vtree(k)
    b = CircuitBuilder(variables)
    tb = TermBuilder(b, vt)
    heads = {fsum_index(k, i): i for i in range(1, k + 1)}

    def bits(node):
        # node is the chain over X_{i,1..k}; weights 2^(j-1) on X_{i,j} = 1
        i = vtree_vars(node)[0] // (k + 1) + 1
        weights = {fsum_index(k, i, j): 2.0 ** (j - 1) for j in range(1, k + 1)}

        def local(n):
            if isinstance(n, tuple):
                return None
            return b.sum([tb.term({n: 1}, n)], [weights[n]])
        return _additive(b, tb, node, local)

    def block(node):
        if isinstance(node, tuple) and not isinstance(node[0], tuple) and node[0] in heads:
            return b.product([tb.term({node[0]: 1}, node[0]), bits(node[1])])
        return None

    root = _additive(b, tb, vt, block)
    return b.build(root)


def build_fsum_sos(k: int) -> Circuit:
    """sum_{i,j} (2^((j-1)/2) X_i X_{i,j})^2 as a SOCS circuit."""
    variables = fsum_variables(k)
    vt = fsum_vtree(k)
    comps = []
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            f = {fsum_index(k, i): 1, fsum_index(k, i, j): 1}
            comps.append(polynomial_circuit(variables, vt, [(2.0 ** ((j - 1) / 2), f)]))
    return socs_sum(comps)


# bsum ------------------------------------------------------------------------

def bsum_fixed(k: int, y_rank: Mapping[int, int], z_rank: Mapping[int, int]) -> dict[int, int]:
    """Assignment of every X_{i,j} for the binary sum obtained from fsum.

    ``y_rank`` and ``z_rank`` map 1-based i to the bit position pi(X_i)."""
    ranks = dict(y_rank)
    ranks.update(z_rank)
    if sorted(ranks) != list(range(1, k + 1)):
        raise ValueError("the two permutations must cover X_1..X_k exactly once")
    fixed = {}
    for i, p in ranks.items():
        for j in range(1, k + 1):
            fixed[fsum_index(k, i, j)] = int(j == p)
    return fixed


def eval_bsum(k: int, y_rank: Mapping[int, int], z_rank: Mapping[int, int],
              x: Mapping[int, int]) -> float:
    """Binary sum over X_1..X_k, with ``x`` keyed by fsum variable index."""
    full = [0] * (k * (k + 1))
    for idx, v in bsum_fixed(k, y_rank, z_rank).items():
        full[idx] = v
    for i in range(1, k + 1):
        full[fsum_index(k, i)] = int(x[fsum_index(k, i)])
    return eval_fsum(k, full)


# fups ------------------------------------------------------------------------

def fups_variables(g: GraphSpec) -> tuple[Variable, ...]:
    n = g.num_vertices
    out = [Variable("Z1", BOOLEAN), Variable("Z2", BOOLEAN)]
    for v in range(1, n + 1):
        out.append(Variable(f"X{v}", BOOLEAN))
        out.extend(Variable(f"X{v}_{j}", BOOLEAN) for j in range(1, n + 1))
    return tuple(out)


def fups_vertex(g: GraphSpec, v: int, j: int = 0) -> int:
    """Index of X_v (j = 0) or X_{v,j}; v is 0-based, j 1-based."""
    return fsum_index(g.num_vertices, v + 1, j, offset=2)


def eval_fups(g: GraphSpec, x: Sequence[int]) -> float:
    n = g.num_vertices
    xv = [x[fups_vertex(g, v)] for v in range(n)]
    return x[0] * eval_fudisj(g, xv) + x[1] * eval_fsum(n, x, offset=2)


def build_fups(g: GraphSpec) -> Circuit:
    """SOCS with |V|^2 + 1 squares for the udisj-plus-sum function."""
    variables = fups_variables(g)
    vt = chain_vtree(range(len(variables)))
    edges = [(fups_vertex(g, u), fups_vertex(g, v)) for u, v in g.edges]
    comps = [polynomial_circuit(variables, vt, [(1.0, {0: 1})] + _edge_sum(edges, {0: 1}))]
    for v in range(g.num_vertices):
        for j in range(1, g.num_vertices + 1):
            f = {1: 1, fups_vertex(g, v): 1, fups_vertex(g, v, j): 1}
            comps.append(polynomial_circuit(variables, vt, [(2.0 ** ((j - 1) / 2), f)]))
    return socs_sum(comps)


# futq ------------------------------------------------------------------------

def eval_futq(g: GraphSpec, x: Sequence[int]) -> float:
    s = sum(x[u] * x[v] for u, v in g.edges)
    return float((1 - s) ** 2 * (1 + s))


def build_futq(g: GraphSpec) -> Circuit:
    """SOCS with |E| + 1 squares for udisj times a quadratic polynomial."""
    variables = graph_variables(g)
    vt = chain_vtree(range(len(variables)))
    comps = [polynomial_circuit(variables, vt, [(1.0, {})] + _edge_sum(g.edges))]
    for u, v in g.edges:
        # X_u X_v (1 - sum X_u' X_v'), with idempotent indicator products merged
        comps.append(polynomial_circuit(variables, vt, [(1.0, {u: 1, v: 1})]
                                        + _edge_sum(g.edges, {u: 1, v: 1})))
    return socs_sum(comps)


# Motzkin family --------------------------------------------------------------

def motzkin_variables(d: int, interval=MOTZKIN_INTERVAL) -> tuple[Variable, ...]:
    dom = Interval(float(interval[0]), float(interval[1]))
    names = ["X1", "X2"] + [f"Y{i}" for i in range(1, d + 1)]
    return tuple(Variable(n, dom) for n in names)


def eval_motzkin(x1: float, x2: float) -> float:
    return 1 + x1 ** 4 * x2 ** 2 + x1 ** 2 * x2 ** 4 - 3 * x1 ** 2 * x2 ** 2


def eval_motzkin_family(x: Sequence[float]) -> float:
    return eval_motzkin(x[0], x[1]) + float(sum(y * y for y in x[2:]))


def build_motzkin_family(d: int, interval=MOTZKIN_INTERVAL) -> Circuit:
    """Structured non-monotone circuit with polynomial leaves for
    F_M(X1, X2) + sum_i Y_i^2."""
    if d < 0:
        raise ValueError("d must be nonnegative")
    variables = motzkin_variables(d, interval)
    terms = [(1.0, {}), (1.0, {0: 4, 1: 2}), (1.0, {0: 2, 1: 4}), (-3.0, {0: 2, 1: 2})]
    terms += [(1.0, {2 + i: 2}) for i in range(d)]
    return polynomial_circuit(variables, chain_vtree(range(len(variables))), terms)


def all_bits(n: int) -> np.ndarray:
    """Every Boolean assignment of n variables, first variable slowest."""
    return np.indices((2,) * n).reshape(n, -1).T
