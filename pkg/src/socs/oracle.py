"""Brute-force oracles: enumeration tables, value matrices, prime matrices,
square-root rank at tiny scale, finite differences and random circuits."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circuit import Circuit, CircuitBuilder
from .domains import BOOLEAN, Finite, Variable
from .errors import BudgetExceeded
from .params import ParamStore

MAX_ASSIGNMENTS = 2 ** 24
MAX_SQRANK_ENTRIES = 16
RANK_TOL = 1e-9


def all_assignments(variables: Sequence[Variable]) -> np.ndarray:
    """Every joint assignment of finite variables, first variable slowest."""
    sizes = []
    for v in variables:
        if not isinstance(v.domain, Finite):
            raise ValueError(f"variable {v.name} is not finite")
        sizes.append(v.domain.size)
    total = int(np.prod(sizes)) if sizes else 1
    if total > MAX_ASSIGNMENTS:
        raise BudgetExceeded(f"{total} assignments exceed the cap of {MAX_ASSIGNMENTS}")
    grids = np.indices(sizes).reshape(len(sizes), -1).T
    return grids.astype(float)


def brute_force_table(c: Circuit, mode: str = "linear") -> tuple[np.ndarray, np.ndarray]:
    """(assignments, outputs) over the full finite domain."""
    from .evaluate import evaluate_batch
    X = all_assignments(c.variables)
    return X, evaluate_batch(c, X, mode)


def bits_to_index(bits: Sequence[int]) -> int:
    """First element is the least significant bit."""
    return sum(int(b) << k for k, b in enumerate(bits))


@dataclass
class ValueMatrix:
    rows: tuple[int, ...]
    cols: tuple[int, ...]
    matrix: np.ndarray


def value_matrix(F: Callable[[dict], float], rows: Sequence[int], cols: Sequence[int],
                 fixed: dict | None = None) -> ValueMatrix:
    """Entry (i, j) is F at the assignment decoded from i over ``rows`` and j
    over ``cols`` (first listed variable = least significant bit)."""
    rows, cols = tuple(rows), tuple(cols)
    if len(rows) + len(cols) > 24:
        raise BudgetExceeded("value matrices are capped at 24 Boolean variables")
    M = np.zeros((2 ** len(rows), 2 ** len(cols)))
    base = dict(fixed or {})
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            x = dict(base)
            x.update({v: (i >> k) & 1 for k, v in enumerate(rows)})
            x.update({v: (j >> k) & 1 for k, v in enumerate(cols)})
            M[i, j] = F(x)
    return ValueMatrix(rows, cols, M)


def circuit_function(c: Circuit) -> Callable[[dict], float]:
    from .evaluate import evaluate_batch

    def F(x: dict) -> float:
        row = np.array([[x.get(i, 0) for i in range(c.num_vars)]], dtype=float)
        return float(evaluate_batch(c, row)[0].real)
    return F


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % p for p in range(2, int(n ** 0.5) + 1))


def prime_matrix(q: int) -> np.ndarray:
    """K_ij = n_i + n_j - 1 over the first q integers n with 2n - 1 prime."""
    ns, n = [], 1
    while len(ns) < q:
        if _is_prime(2 * n - 1):
            ns.append(n)
        n += 1
    a = np.array(ns, dtype=float)
    return a[:, None] + a[None, :] - 1.0


def numeric_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    """Row reduction with partial pivoting and an absolute pivot tolerance."""
    A = np.array(M, dtype=float)
    rows, cols = A.shape
    rank, r = 0, 0
    for col in range(cols):
        if r >= rows:
            break
        piv = r + int(np.argmax(np.abs(A[r:, col])))
        if abs(A[piv, col]) <= tol:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r + 1:] -= np.outer(A[r + 1:, col] / A[r, col], A[r])
        r += 1
        rank += 1
    return rank


def sqrank_bruteforce(M: np.ndarray) -> int:
    """Minimum rank over all element-wise signed square roots of M >= 0."""
    M = np.asarray(M, dtype=float)
    if M.size > MAX_SQRANK_ENTRIES:
        raise BudgetExceeded(f"sign search over {M.size} entries exceeds {MAX_SQRANK_ENTRIES}")
    if np.any(M < 0):
        raise ValueError("square-root rank needs a nonnegative matrix")
    root = np.sqrt(M)
    flat = root.reshape(-1)
    best = min(M.shape)
    # flipping a whole row or column keeps the rank, so fix the first column's signs
    free = [k for k in range(flat.size) if k % M.shape[1] != 0]
    for signs in itertools.product((1.0, -1.0), repeat=len(free)):
        s = np.ones(flat.size)
        s[free] = signs
        best = min(best, numeric_rank((s * flat).reshape(M.shape)))
        if best <= 1:
            break
    return best


# finite differences ----------------------------------------------------------

def finite_difference_gradients(loss: Callable[[], float], params: ParamStore,
                                h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences for every trainable scalar (real and imaginary parts
    of complex groups separately, returned as d/dRe + 1j d/dIm)."""
    out = {}
    for g in params.trainable():
        grad = np.zeros(g.size, dtype=np.complex128 if g.is_complex else float)
        for i in range(g.size):
            parts = (1.0, 1j) if g.is_complex else (1.0,)
            for unit in parts:
                old = g.values[i]
                g.values[i] = old + h * unit
                up = loss()
                g.values[i] = old - h * unit
                down = loss()
                g.values[i] = old
                d = (up - down) / (2 * h)
                grad[i] += d * (1j if unit == 1j else 1.0)
        out[g.name] = grad
    return out


def max_relative_error(a: dict, b: dict, floor: float = 1e-6) -> float:
    worst = 0.0
    for k in a:
        x, y = np.asarray(a[k]), np.asarray(b[k])
        for part in (np.real, np.imag):
            err = np.abs(part(x) - part(y)) / np.maximum(np.abs(part(y)), floor)
            if err.size:
                worst = max(worst, float(err.max()))
    return worst


# random structured circuits --------------------------------------------------

def random_vtree(vars_: Sequence[int], rng: np.random.Generator):
    """Random binary partition tree; leaves are variable indices."""
    vars_ = list(vars_)
    if len(vars_) == 1:
        return vars_[0]
    rng.shuffle(vars_)
    k = int(rng.integers(1, len(vars_)))
    return (random_vtree(vars_[:k], rng), random_vtree(vars_[k:], rng))


def _vtree_vars(vt) -> list[int]:
    if isinstance(vt, tuple):
        return _vtree_vars(vt[0]) + _vtree_vars(vt[1])
    return [vt]


def random_circuit(variables: Sequence[Variable], vtree, rng: np.random.Generator,
                   field: str = "real", width: int = 2, leaf: str = "embedding",
                   nonneg: bool = False, trainable: bool = True) -> Circuit:
    """Random smooth circuit structured over ``vtree`` (shared vtrees give
    compatible circuits).  ``leaf`` is "embedding" or "indicator"."""
    b = CircuitBuilder(variables, field)

    def draw(shape):
        if nonneg:
            return rng.uniform(0.1, 1.0, shape)
        x = rng.normal(size=shape)
        if field == "complex":
            x = x + 1j * rng.normal(size=shape)
        return x

    def rec(vt, k) -> list[int]:
        if not isinstance(vt, tuple):
            size = variables[vt].domain.size
            if leaf == "indicator":
                inds = [b.indicator(vt, v) for v in range(size)]
                return [b.sum(inds, draw(size), trainable=trainable) for _ in range(k)]
            return [b.embedding(vt, draw(size), trainable) for _ in range(k)]
        left = rec(vt[0], width)
        right = rec(vt[1], width)
        prods = [b.product([l, r]) for l in left for r in right]
        nk = int(rng.integers(1, len(prods) + 1))
        chosen = [prods[i] for i in rng.choice(len(prods), size=nk, replace=False)]
        return [b.sum(chosen, draw(nk), trainable=trainable) for _ in range(k)]

    root = rec(vtree, 1)[0]
    return b.build(root, field=field)


def random_pair(num_vars: int, rng: np.random.Generator, field: str = "real",
                width: int = 2) -> tuple[Circuit, Circuit]:
    variables = tuple(Variable(f"X{i + 1}", BOOLEAN) for i in range(num_vars))
    vt = random_vtree(range(num_vars), rng)
    return (random_circuit(variables, vt, rng, field, width),
            random_circuit(variables, vt, rng, field, width))


def boolean_vars(n: int, prefix: str = "X") -> tuple[Variable, ...]:
    return tuple(Variable(f"{prefix}{i + 1}", BOOLEAN) for i in range(n))
