"""Exact conversions between external model classes and circuits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .circuit import INPUT, PRODUCT, SUM, Circuit, CircuitBuilder, check_monotone, scope_vars
from .compose import check_pairwise, combine, constant_one, socs_sum, square
from .constructions import TermBuilder, chain_vtree
from .domains import REAL, Finite, Variable
from .errors import (BudgetExceeded, ConfigError, FieldError, MonotonicityError, NotPSD,
                     ShapeError, StructureError)
from .leaves import (Embedding, ExpQuadratic, Indicator, is_real_valued, term_family, term_value,
                     term_vector)
from .params import ParamGroup, ParamStore

EIG_TOL = 1e-10
SYM_TOL = 1e-12
UNROLL_CAP = 4096


# matrix product states -------------------------------------------------------

@dataclass
class MPS:
    """psi(x) = A_1[x_1] A_2[x_2] ... A_d[x_d] with boundary tensors of shape
    (v, r) and interior tensors of shape (v, r, r)."""

    tensors: list

    def __post_init__(self):
        self.tensors = [np.asarray(t) for t in self.tensors]
        d = len(self.tensors)
        if d < 2:
            raise ShapeError("an MPS needs at least two tensors")
        first, last = self.tensors[0], self.tensors[-1]
        if first.ndim != 2 or last.ndim != 2:
            raise ShapeError("boundary tensors must have shape (v, r)")
        v, r = first.shape
        if last.shape != (v, r):
            raise ShapeError(f"last tensor has shape {last.shape}, expected {(v, r)}")
        for j, t in enumerate(self.tensors[1:-1], start=2):
            if t.shape != (v, r, r):
                raise ShapeError(f"tensor {j} has shape {t.shape}, expected {(v, r, r)}")
        for t in self.tensors:
            if not np.all(np.isfinite(t)):
                raise ShapeError("MPS entries must be finite")

    @property
    def d(self) -> int:
        return len(self.tensors)

    @property
    def v(self) -> int:
        return self.tensors[0].shape[0]

    @property
    def r(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def field(self) -> str:
        return "complex" if any(np.iscomplexobj(t) for t in self.tensors) else "real"

    def amplitude(self, x: Sequence[int]) -> complex:
        vec = self.tensors[0][int(x[0])].astype(np.complex128)
        for t, xi in zip(self.tensors[1:-1], x[1:-1]):
            vec = vec @ t[int(xi)]
        return complex(vec @ self.tensors[-1][int(x[-1])])

    @classmethod
    def random(cls, d: int, v: int, r: int, rng: np.random.Generator,
               complex_: bool = True) -> "MPS":
        def draw(shape):
            z = rng.normal(size=shape)
            return z + 1j * rng.normal(size=shape) if complex_ else z
        return cls([draw((v, r))] + [draw((v, r, r)) for _ in range(d - 2)] + [draw((v, r))])


def mps_variables(m: MPS) -> tuple[Variable, ...]:
    dom = Finite(m.v)
    return tuple(Variable(f"X{j + 1}", dom) for j in range(m.d))


def mps_to_circuit(m: MPS, trainable: bool = True) -> Circuit:
    """Chain-structured circuit of size O(d r^2) computing psi(x)."""
    b = CircuitBuilder(mps_variables(m))
    d, v, r = m.d, m.v, m.r

    def leaves(var, table):
        # table has shape (v, k); one embedding per column, stored contiguously
        flat = np.ascontiguousarray(np.asarray(table).T).reshape(-1)
        g = b.group(flat, trainable=trainable, name=f"mps{var + 1}")
        return [b.input(var, Embedding(g.name, k * v, v)) for k in range(table.shape[1])]

    right = leaves(d - 1, m.tensors[-1])
    for j in range(d - 2, 0, -1):
        A = m.tensors[j]
        emb = leaves(j, A.reshape(v, r * r))  # column i*r + k is A[:, i, k]
        right = [b.sum([b.product([emb[i * r + k], right[k]]) for k in range(r)], [1.0] * r)
                 for i in range(r)]
    first = leaves(0, m.tensors[0])
    root = b.sum([b.product([first[i], right[i]]) for i in range(r)], [1.0] * r)
    return b.build(root, meta={"mps": {"d": d, "v": v, "r": r}})


def born(m: MPS) -> Circuit:
    """|psi(x)|^2 as a squared circuit."""
    return square(mps_to_circuit(m))


# hypercomplex circuits -------------------------------------------------------

def cd_conj(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    h = n // 2
    return np.concatenate([cd_conj(x[..., :h]), -x[..., h:]], axis=-1)


def cd_mult(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cayley-Dickson product: (a, b)(c, d) = (ac - conj(d) b, d a + b conj(c))."""
    n = x.shape[-1]
    if n == 1:
        return x * y
    h = n // 2
    a, bb = x[..., :h], x[..., h:]
    c, d = y[..., :h], y[..., h:]
    return np.concatenate([cd_mult(a, c) - cd_mult(cd_conj(d), bb),
                           cd_mult(d, a) + cd_mult(bb, cd_conj(c))], axis=-1)


@lru_cache(maxsize=None)
def cayley_dickson_table(omega: int) -> tuple[np.ndarray, np.ndarray]:
    """(index, sign) with e_p e_q = sign[p, q] * e_{index[p, q]}."""
    n = 2 ** omega
    eye = np.eye(n)
    idx = np.zeros((n, n), dtype=int)
    sign = np.zeros((n, n))
    for p in range(n):
        for q in range(n):
            prod = cd_mult(eye[p], eye[q])
            k = int(np.argmax(np.abs(prod)))
            idx[p, q], sign[p, q] = k, prod[k]
    return idx, sign


@dataclass(frozen=True)
class HyperUnit:
    kind: str
    inputs: tuple = ()
    weights: np.ndarray | None = None   # (len(inputs), 2^omega) real components
    side: str = "left"                  # weight multiplies from the left or the right
    var: int | None = None
    components: tuple = ()              # real leaf terms, None for a zero component


@dataclass
class HyperCircuit:
    """Circuit over the 2^omega-dimensional Cayley-Dickson algebra."""

    variables: tuple
    omega: int
    units: list
    output: int
    params: ParamStore = field(default_factory=ParamStore)

    @property
    def dim(self) -> int:
        return 2 ** self.omega


def hyper_evaluate(hc: HyperCircuit, X) -> np.ndarray:
    """Component values, shape (batch, 2^omega)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B, n = X.shape[0], hc.dim
    vals: list = []
    for u in hc.units:
        if u.kind == INPUT:
            dom = hc.variables[u.var].domain
            out = np.zeros((B, n))
            for i, t in enumerate(u.components):
                if t is not None:
                    out[:, i] = term_value(t, hc.params, X[:, u.var], dom).real
        elif u.kind == SUM:
            out = np.zeros((B, n))
            for w, i in zip(u.weights, u.inputs):
                wb = np.broadcast_to(w, (B, n))
                out += cd_mult(wb, vals[i]) if u.side == "left" else cd_mult(vals[i], wb)
        else:
            a, b = u.inputs
            out = cd_mult(vals[a], vals[b])
        vals.append(out)
    return vals[hc.output]


def _zero_circuit(variables, scope: int) -> Circuit:
    one = constant_one(variables, scope_vars(scope))
    b = CircuitBuilder(variables)
    m = b.copy_from(one)
    return b.build(b.sum([m[one.output]], [0.0]))


def hypercomplex_decompose(hc: HyperCircuit) -> list[Circuit]:
    """Real circuits c_1..c_n with c(x) = sum_i e_i c_i(x); they share one
    builder, so a structured input gives pairwise compatible outputs."""
    n = hc.dim
    idx, sign = cayley_dickson_table(hc.omega)
    pairs_for = [[(p, q, sign[p, q]) for p in range(n) for q in range(n) if idx[p, q] == k]
                 for k in range(n)]
    b = CircuitBuilder(hc.variables, "real", hc.params)
    comp: list[list] = []
    scopes: list[int] = []
    for u in hc.units:
        if u.kind == INPUT:
            comp.append([None if t is None else b.input(u.var, t) for t in u.components])
            scopes.append(1 << u.var)
            continue
        scopes.append(scopes[u.inputs[0]] | scopes[u.inputs[-1]])
        row = []
        if u.kind == SUM:
            for k in range(n):
                ins, ws = [], []
                for w, child in zip(u.weights, u.inputs):
                    for p, q, s in pairs_for[k]:
                        # left: w_p * child_q ; right: child_p * w_q
                        wv, part = (w[p], comp[child][q]) if u.side == "left" else (w[q], comp[child][p])
                        if wv != 0 and part is not None:
                            ins.append(part)
                            ws.append(s * wv)
                row.append(b.sum(ins, ws) if ins else None)
        else:
            a, c = u.inputs
            prods: dict = {}
            for k in range(n):
                ins, ws = [], []
                for p, q, s in pairs_for[k]:
                    if comp[a][p] is None or comp[c][q] is None:
                        continue
                    if (p, q) not in prods:
                        prods[(p, q)] = b.product([comp[a][p], comp[c][q]])
                    ins.append(prods[(p, q)])
                    ws.append(s)
                row.append(b.sum(ins, ws) if ins else None)
        comp.append(row)
    roots = comp[hc.output]
    live = [uid for uid in roots if uid is not None]
    out = []
    for uid in roots:
        if uid is not None:
            out.append(b.build(uid, field="real"))
        elif live:
            # zero component that keeps the shared structure
            out.append(b.build(b.sum([live[0]], [0.0]), field="real"))
        else:
            out.append(_zero_circuit(hc.variables, scopes[hc.output]))
    return out


def hyper_square(hc: HyperCircuit) -> Circuit:
    """Squared modulus |c(x)|^2 = sum_i c_i(x)^2 as a SOCS circuit."""
    return socs_sum(hypercomplex_decompose(hc))


def from_circuit(c: Circuit) -> HyperCircuit:
    """View a real (omega = 0) or complex (omega = 1) circuit as hypercomplex."""
    omega = 1 if c.field == "complex" else 0
    n = 2 ** omega
    params = ParamStore(c.params)
    counter = [0]

    def constant_embedding(vec):
        counter[0] += 1
        name = f"_split{counter[0]}"
        params.add(ParamGroup(name, np.asarray(vec, dtype=float), trainable=False))
        return ((Embedding(name, 0, len(vec)), False),)

    units = []
    for uid, u in enumerate(c.units):
        if u.kind == INPUT:
            dom = c.variables[u.var].domain
            if omega == 0 or is_real_valued(u.term, c.params, dom):
                comps = (u.term,) + (None,) * (n - 1)
            elif term_family(u.term) == "finite":
                vec = term_vector(u.term, c.params, dom.size)
                comps = tuple(None if not np.any(part) else constant_embedding(part)
                              for part in (vec.real, vec.imag))
            else:
                raise FieldError("only finite-domain leaves can carry complex values here")
            units.append(HyperUnit(INPUT, var=u.var, components=comps))
        elif u.kind == SUM:
            w = c.weight_values(uid)
            W = np.stack([w.real, w.imag], axis=1) if omega else w.real[:, None]
            units.append(HyperUnit(SUM, u.inputs, W))
        else:
            units.append(HyperUnit(PRODUCT, u.inputs))
    return HyperCircuit(c.variables, omega, units, c.output, params)


def random_hyper_circuit(variables: Sequence[Variable], vtree, omega: int,
                         rng: np.random.Generator, width: int = 2) -> HyperCircuit:
    """Random structured hypercomplex circuit over Boolean-or-finite variables,
    mixing left and right weights."""
    n = 2 ** omega
    params = ParamStore()
    units: list[HyperUnit] = []

    def add(u):
        units.append(u)
        return len(units) - 1

    def rec(vt, k):
        if not isinstance(vt, tuple):
            size = variables[vt].domain.size
            out = []
            for _ in range(k):
                comps = []
                for _ in range(n):
                    g = params.add(ParamGroup(f"_h{len(params)}", rng.normal(size=size)))
                    comps.append(((Embedding(g.name, 0, size), False),))
                out.append(add(HyperUnit(INPUT, var=vt, components=tuple(comps))))
            return out
        left, right = rec(vt[0], width), rec(vt[1], width)
        prods = [add(HyperUnit(PRODUCT, (l, r))) for l in left for r in right]
        return [add(HyperUnit(SUM, tuple(prods), rng.normal(size=(len(prods), n)),
                              "left" if rng.random() < 0.5 else "right"))
                for _ in range(k)]

    root = rec(vtree, 1)[0]
    return HyperCircuit(tuple(variables), omega, units, root, params)


# PSD circuits ----------------------------------------------------------------

@dataclass
class PSDModel:
    """c(x)^T A c(x) for a vector of compatible real circuits."""

    components: list
    A: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        r = len(self.components)
        if self.A.shape != (r, r):
            raise ShapeError(f"A has shape {self.A.shape}, expected {(r, r)}")
        if np.max(np.abs(self.A - self.A.T), initial=0.0) > SYM_TOL:
            raise NotPSD("A is not symmetric")
        if any(c.field != "real" for c in self.components):
            raise FieldError("PSD components must be real circuits")

    def evaluate(self, X) -> np.ndarray:
        from .evaluate import evaluate_batch
        C = np.stack([evaluate_batch(c, X).real for c in self.components], axis=1)
        return np.einsum("bi,ij,bj->b", C, self.A, C)


def psd_to_socs(p: PSDModel) -> Circuit:
    """sum_i (sqrt(lambda_i) w_i^T c(x))^2 over the positive eigenpairs of A."""
    lam, W = np.linalg.eigh(p.A)
    if lam.min(initial=0.0) < -EIG_TOL:
        raise NotPSD(f"A has eigenvalue {lam.min():.3g}")
    check_pairwise(p.components)
    roots = [combine(p.components, math.sqrt(l) * W[:, i])
             for i, l in enumerate(lam) if l > EIG_TOL]
    if not roots:
        return socs_sum([combine(p.components, np.zeros(len(p.components)))])
    return socs_sum(roots)


def socs_to_psd(s: Circuit) -> PSDModel:
    """Component stack with A = diag(coefficients); complex components are
    split into real and imaginary parts first."""
    info = s.meta.get("socs")
    if info is None:
        raise StructureError("input is not a sum of compatible squares")
    comps, coefs = [], []
    for c, lam in zip(info["components"], info["coefficients"]):
        if c.field == "real":
            comps.append(c)
            coefs.append(lam)
        else:
            if info.get("conjugate_first") is False:
                raise FieldError("squares without conjugation have no real PSD form")
            parts = hypercomplex_decompose(from_circuit(c))
            comps.extend(parts)
            coefs.extend([lam] * len(parts))
    return PSDModel(comps, np.diag(coefs))


# squared neural families -----------------------------------------------------

@dataclass
class FiniteFactor:
    """Sufficient statistics table (v, C_u) and base measure (v,) over a finite variable."""

    stats: np.ndarray
    base: np.ndarray

    def __post_init__(self):
        self.stats = np.atleast_2d(np.asarray(self.stats, dtype=float))
        self.base = np.asarray(self.base, dtype=float)
        if self.stats.shape[0] != self.base.shape[0]:
            raise ConfigError("stats and base measure disagree on the domain size")
        if np.any(self.base < 0):
            raise ConfigError("base measure must be nonnegative")

    @property
    def width(self) -> int:
        return self.stats.shape[1]


@dataclass
class GaussianFactor:
    """Normal base measure on the real line with t(x) = x."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ConfigError("Gaussian base measure needs a positive stddev")

    width = 1


@dataclass
class SNEFYSpec:
    """f(x) = mu(x) sum_k (sum_j V_kj sigma(W_j . t(x) + b_j))^2."""

    sigma: str
    V: np.ndarray
    W: np.ndarray
    b: np.ndarray
    factors: list

    def __post_init__(self):
        if self.sigma not in ("exp", "cos"):
            raise ConfigError(f"unsupported activation {self.sigma!r}")
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        S = self.V.shape[1]
        if self.W.shape[0] != S or self.b.shape[0] != S:
            raise ConfigError("V, W and b disagree on the hidden width")
        for f in self.factors:
            if not isinstance(f, (FiniteFactor, GaussianFactor)):
                raise ConfigError("base measure and statistics must factorize per variable")
        if sum(f.width for f in self.factors) != self.W.shape[1]:
            raise ConfigError("W's columns do not match the per-variable statistics")

    def column_blocks(self) -> list[slice]:
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.width))
            start += f.width
        return out

    def variables(self) -> tuple[Variable, ...]:
        return tuple(Variable(f"X{u + 1}", Finite(f.base.shape[0]) if isinstance(f, FiniteFactor)
                              else REAL) for u, f in enumerate(self.factors))

    def evaluate(self, X) -> np.ndarray:
        """Direct formula."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        T, mu = [], np.ones(X.shape[0])
        for u, f in enumerate(self.factors):
            x = X[:, u]
            if isinstance(f, FiniteFactor):
                T.append(f.stats[x.astype(int)])
                mu = mu * f.base[x.astype(int)]
            else:
                T.append(x[:, None])
                mu = mu * np.exp(-0.5 * ((x - f.mean) / f.std) ** 2) / (f.std * math.sqrt(2 * math.pi))
        pre = np.concatenate(T, axis=1) @ self.W.T + self.b
        act = np.exp(pre) if self.sigma == "exp" else np.cos(pre)
        return mu * np.sum((act @ self.V.T) ** 2, axis=1)


def _snefy_leaf(b: CircuitBuilder, u: int, f, w: np.ndarray, kappa: complex) -> int:
    """sqrt(mu_u(x)) exp(kappa w . t_u(x)) as a constant leaf."""
    if isinstance(f, FiniteFactor):
        vec = np.sqrt(f.base) * np.exp(kappa * (f.stats @ w))
        if np.all(vec.imag == 0):
            vec = vec.real
        g = b.group(vec, trainable=False)
        return b.input(u, Embedding(g.name, 0, vec.shape[0]))
    s2 = f.std ** 2
    a2 = -1.0 / (4 * s2)
    a1 = f.mean / (2 * s2) + kappa * w[0]
    a0 = -f.mean ** 2 / (4 * s2) - 0.5 * math.log(f.std * math.sqrt(2 * math.pi))
    return b.input(u, ExpQuadratic(complex(a0), complex(a1), complex(a2)))


def snefy_to_socs(s: SNEFYSpec) -> Circuit:
    variables = s.variables()
    blocks = s.column_blocks()
    d = len(s.factors)
    b = CircuitBuilder(variables)
    kappas = [1.0] if s.sigma == "exp" else [1j, -1j]
    # products g_j^(m) shared by every component
    prods = []
    for kappa in kappas:
        row = []
        for j in range(s.V.shape[1]):
            leaves = [_snefy_leaf(b, u, s.factors[u], s.W[j, blocks[u]], kappa) for u in range(d)]
            row.append(b.product(leaves))
        prods.append(row)
    comps = []
    for k in range(s.V.shape[0]):
        ins, ws = [], []
        for m, row in enumerate(prods):
            for j, uid in enumerate(row):
                if s.sigma == "exp":
                    ws.append(s.V[k, j] * math.exp(s.b[j]))
                else:
                    ws.append(0.5 * s.V[k, j] * np.exp((1j if m == 0 else -1j) * s.b[j]))
                ins.append(uid)
        comps.append(b.build(b.sum(ins, ws)))
    return socs_sum(comps, conjugate_first=False if s.sigma == "cos" else None)


# unrolling monotone circuits -------------------------------------------------

def count_subcircuits(c: Circuit) -> int:
    counts: list[int] = []
    for u in c.units:
        if u.kind == INPUT:
            counts.append(1)
        elif u.kind == SUM:
            counts.append(sum(counts[i] for i in u.inputs))
        else:
            counts.append(counts[u.inputs[0]] * counts[u.inputs[1]])
    return counts[c.output]


def unroll_to_sos(c: Circuit, cap: int = UNROLL_CAP) -> Circuit:
    """One square (sqrt(theta) prod leaves)^2 per induced sub-circuit."""
    if c.field != "real" or not check_monotone(c):
        raise MonotonicityError("unrolling needs a monotone real circuit")
    for u in c.units:
        if u.kind == INPUT and not (len(u.term) == 1 and isinstance(u.term[0][0], Indicator)):
            raise StructureError("unrolling needs indicator leaves only")
    n = count_subcircuits(c)
    if n > cap:
        raise BudgetExceeded(f"{n} induced sub-circuits exceed the cap of {cap}")
    W = [c.weight_values(uid).real if u.kind == SUM else None for uid, u in enumerate(c.units)]
    memo: dict[int, list] = {}

    def expand(uid) -> list[tuple[float, dict]]:
        if uid in memo:
            return memo[uid]
        u = c.units[uid]
        if u.kind == INPUT:
            out = [(1.0, {u.var: u.term[0][0].value})]
        elif u.kind == SUM:
            out = [(w * th, f) for w, i in zip(W[uid], u.inputs) for th, f in expand(i)]
        else:
            out = [(t1 * t2, {**f1, **f2}) for t1, f1 in expand(u.inputs[0])
                   for t2, f2 in expand(u.inputs[1])]
        memo[uid] = out
        return out

    vt = chain_vtree(scope_vars(c.scope))
    comps = []
    for theta, factors in expand(c.output):
        b = CircuitBuilder(c.variables)
        tb = TermBuilder(b, vt)
        comps.append(b.build(b.sum([tb.term(factors)], [math.sqrt(theta)])))
    return socs_sum(comps)
