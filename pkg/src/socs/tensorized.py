"""Region graphs and CP-layered circuit models built on them."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import Circuit, CircuitBuilder
from .compose import musocs, socs_sum, square
from .domains import Finite, Variable
from .errors import ConfigError
from .leaves import Categorical, Embedding, Gaussian
from .params import ParamStore, Site, Weight


@dataclass(frozen=True)
class Region:
    scope: tuple[int, ...]
    children: tuple["Region", "Region"] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def to_json(self):
        if self.is_leaf:
            return list(self.scope)
        return [self.children[0].to_json(), self.children[1].to_json()]


def _region_from_json(obj) -> Region:
    if isinstance(obj[0], list):
        left, right = _region_from_json(obj[0]), _region_from_json(obj[1])
        return Region(tuple(sorted(left.scope + right.scope)), (left, right))
    return Region(tuple(int(v) for v in obj))


@dataclass(frozen=True)
class RegionGraph:
    """Rooted binary tree of scope partitions; leaves hold one variable or
    the channels of one pixel."""

    root: Region
    num_vars: int

    def __post_init__(self):
        if tuple(sorted(self.root.scope)) != tuple(range(self.num_vars)):
            raise ConfigError("the root region must cover every variable exactly once")
        for r in self.regions():
            if r.is_leaf:
                continue
            a, b = r.children
            if set(a.scope) & set(b.scope) or sorted(a.scope + b.scope) != sorted(r.scope):
                raise ConfigError(f"children of region {r.scope} do not partition it")

    def regions(self) -> list[Region]:
        """Post-order listing."""
        out = []

        def rec(r):
            if not r.is_leaf:
                rec(r.children[0])
                rec(r.children[1])
            out.append(r)
        rec(self.root)
        return out

    def leaves(self) -> list[Region]:
        return [r for r in self.regions() if r.is_leaf]

    def to_json(self):
        return {"num_vars": self.num_vars, "tree": self.root.to_json()}

    @classmethod
    def from_json(cls, obj) -> "RegionGraph":
        return cls(_region_from_json(obj["tree"]), int(obj["num_vars"]))

    def structure_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json()).encode()).hexdigest()[:16]


def random_binary_tree(num_vars: int, seed: int = 0) -> RegionGraph:
    """Shuffle the variables once, then halve recursively (left gets the extra one)."""
    if num_vars < 1:
        raise ConfigError("num_vars must be at least 1")
    order = np.random.default_rng(seed).permutation(num_vars).tolist()

    def rec(vs):
        if len(vs) == 1:
            return Region((vs[0],))
        h = (len(vs) + 1) // 2
        left, right = rec(vs[:h]), rec(vs[h:])
        return Region(tuple(sorted(vs)), (left, right))
    return RegionGraph(rec(order), num_vars)


def pixel_vars(row: int, col: int, width: int, channels: int) -> tuple[int, ...]:
    base = (row * width + col) * channels
    return tuple(range(base, base + channels))


def quad_tree(height: int, width: int, channels: int = 1) -> RegionGraph:
    """Recursive four-way patch splits, realized as a horizontal then a
    vertical binary split.  Variable index = (row * width + col) * channels + ch."""
    if height < 1 or width < 1 or channels < 1:
        raise ConfigError("image dimensions must be positive")

    def patch(r0, r1, c0, c1):
        if r1 - r0 == 1 and c1 - c0 == 1:
            return Region(pixel_vars(r0, c0, width, channels))
        if r1 - r0 == 1:
            m = (c0 + c1 + 1) // 2
            return _join(patch(r0, r1, c0, m), patch(r0, r1, m, c1))
        if c1 - c0 == 1:
            m = (r0 + r1 + 1) // 2
            return _join(patch(r0, m, c0, c1), patch(m, r1, c0, c1))
        rm = (r0 + r1 + 1) // 2
        cm = (c0 + c1 + 1) // 2
        top = _join(patch(r0, rm, c0, cm), patch(r0, rm, cm, c1))
        bottom = _join(patch(rm, r1, c0, cm), patch(rm, r1, cm, c1))
        return _join(top, bottom)

    return RegionGraph(patch(0, height, 0, width), height * width * channels)


def _join(a: Region, b: Region) -> Region:
    return Region(tuple(sorted(a.scope + b.scope)), (a, b))


# layer spec ------------------------------------------------------------------

MODEL_CLASSES = ("monotone", "squared_real", "squared_complex", "socs", "socs_complex", "musocs")
FAMILIES = ("auto", "categorical", "embedding", "gaussian")
_SOCS = re.compile(r"^(socs|socs_complex)\((\d+)\)$")


def parse_model_class(name: str) -> tuple[str, int]:
    """("socs", 4) for "socs(4)"; other classes carry one component."""
    m = _SOCS.match(name)
    if m:
        r = int(m.group(2))
        if r < 1:
            raise ConfigError("model_class socs(r) needs r >= 1")
        return m.group(1), r
    if name in ("monotone", "squared_real", "squared_complex", "musocs"):
        return name, 1
    raise ConfigError(f"unknown model_class {name!r}")


@dataclass(frozen=True)
class LayerSpec:
    sum_units: int = 2
    input_units: int = 2
    model_class: str = "squared_complex"
    input_family: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.sum_units < 1 or self.input_units < 1:
            raise ConfigError("sum_units and input_units must be at least 1")
        parse_model_class(self.model_class)
        if self.input_family not in FAMILIES:
            raise ConfigError(f"unknown input_family {self.input_family!r}")


# circuits --------------------------------------------------------------------

def _leaf_family(spec_family: str, domain, monotone: bool) -> str:
    finite = isinstance(domain, Finite)
    fam = spec_family
    if fam == "auto":
        fam = ("categorical" if monotone else "embedding") if finite else "gaussian"
    if fam in ("categorical", "embedding") and not finite:
        raise ConfigError(f"input_family {fam!r} needs finite variables")
    if fam == "gaussian" and finite:
        raise ConfigError("input_family 'gaussian' needs real-valued variables")
    if fam == "embedding" and monotone:
        raise ConfigError("monotone models use categorical or gaussian leaves")
    if fam == "categorical" and not monotone:
        raise ConfigError("squared components use embedding or gaussian leaves")
    return fam


def build_circuit(rg: RegionGraph, variables: Sequence[Variable], sum_units: int,
                  input_units: int, kind: str, family: str, rng: np.random.Generator,
                  prefix: str) -> Circuit:
    """CP-layered circuit over ``rg``; ``kind`` is "monotone", "real" or "complex"."""
    monotone = kind == "monotone"
    b = CircuitBuilder(variables, "complex" if kind == "complex" else "real")
    counter = [0]
    K_S, K_I = sum_units, input_units

    def name():
        counter[0] += 1
        return f"{prefix}.{counter[0]}"

    def weights(n_in, n_out):
        if monotone:
            vals = rng.normal(0.0, 0.1, size=(n_out, n_in))
            g = b.group(vals.reshape(-1), "exp", name=name())
        elif kind == "real":
            vals = rng.normal(0.0, 1.0 / np.sqrt(K_S), size=(n_out, n_in))
            g = b.group(vals.reshape(-1), name=name())
        else:
            s = 1.0 / np.sqrt(2 * K_S)
            vals = rng.normal(0.0, s, size=(n_out, n_in)) + 1j * rng.normal(0.0, s, size=(n_out, n_in))
            g = b.group(vals.reshape(-1), name=name())
        return [[Weight(1.0, (Site(g.name, o * n_in + i),)) for i in range(n_in)]
                for o in range(n_out)]

    def var_leaves(v):
        dom = variables[v].domain
        fam = _leaf_family(family, dom, monotone)
        if fam == "gaussian":
            vals = np.zeros(2 * K_I)
            vals[0::2] = rng.normal(0.0, 1.0, K_I)
            g = b.group(vals, name=name())
            return [b.input(v, Gaussian(g.name, 2 * k)) for k in range(K_I)]
        n = dom.size
        if fam == "categorical":
            g = b.group(rng.normal(0.0, 0.1, K_I * n), "exp", name=name())
            return [b.input(v, Categorical(g.name, k * n, n)) for k in range(K_I)]
        vals = rng.normal(0.0, 1.0, K_I * n)
        if kind == "complex":
            vals = (vals + 1j * rng.normal(0.0, 1.0, K_I * n)) / np.sqrt(2)
        g = b.group(vals, name=name())
        return [b.input(v, Embedding(g.name, k * n, n)) for k in range(K_I)]

    def layer(inputs, n_out):
        W = weights(len(inputs), n_out)
        return [b.sum(inputs, W[o]) for o in range(n_out)]

    def region(r: Region, n_out: int) -> list[int]:
        if r.is_leaf:
            per_var = [var_leaves(v) for v in r.scope]
            units = [b.product([pv[k] for pv in per_var]) for k in range(K_I)]
            if K_I != n_out or r is rg.root:
                units = layer(units, n_out)
            return units
        left = region(r.children[0], K_S)
        right = region(r.children[1], K_S)
        prods = [b.product([left[k], right[k]]) for k in range(K_S)]
        return layer(prods, n_out)

    root = region(rg.root, 1)[0]
    return b.build(root)


@dataclass
class Model:
    """A trainable density: monotone part, squared components, and the
    materialized circuit used for the partition function."""

    spec: LayerSpec
    rg: RegionGraph
    variables: tuple
    mono: Circuit | None
    components: list
    materialized: Circuit
    params: ParamStore = field(default_factory=ParamStore)

    @property
    def kind(self) -> str:
        return parse_model_class(self.spec.model_class)[0]

    @property
    def num_parameters(self) -> int:
        return self.params.num_trainable()


def build_model(rg: RegionGraph, variables: Sequence[Variable], spec: LayerSpec) -> Model:
    kind, r = parse_model_class(spec.model_class)
    variables = tuple(variables)
    if len(variables) != rg.num_vars:
        raise ConfigError("variable table and region graph disagree on the variable count")
    rng = np.random.default_rng(spec.seed)

    def make(k, prefix):
        return build_circuit(rg, variables, spec.sum_units, spec.input_units, k,
                             spec.input_family, rng, prefix)

    mono, comps = None, []
    if kind == "monotone":
        mono = make("monotone", "m")
        mat = mono
    elif kind in ("squared_real", "squared_complex"):
        comps = [make("real" if kind == "squared_real" else "complex", "c0")]
        mat = square(comps[0])
    elif kind in ("socs", "socs_complex"):
        comps = [make("real" if kind == "socs" else "complex", f"c{i}") for i in range(r)]
        mat = socs_sum(comps)
    else:
        mono = make("monotone", "m")
        comps = [make("complex", "c0")]
        mat = musocs(mono, square(comps[0]))
    params = ParamStore()
    for c in ([mono] if mono is not None else []) + comps:
        params = params.merged(c.params)
    return Model(spec, rg, variables, mono, comps, mat, params)

