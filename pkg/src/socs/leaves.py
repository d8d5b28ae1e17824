"""Input functions, their products and closed-form integrals.

An input unit holds a *leaf term*: a tuple of ``(function, conjugated)``
factors over one variable.  Ordinary leaves have a single unconjugated
factor; multiplying circuits concatenates terms.  Three families are closed
under products:

* finite:    Indicator, Categorical, Embedding  (vectors over the domain)
* quadexp:   Gaussian, ExpQuadratic             (exp of a quadratic in x)
* poly:      Polynomial                         (ascending coefficients)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .domains import Finite, Interval
from .errors import UnsupportedPair
from .params import GradientAccumulator, ParamGroup

Params = Mapping[str, ParamGroup]
LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class Indicator:
    value: int
    family = "finite"

    def vector(self, params: Params, size: int) -> np.ndarray:
        v = np.zeros(size, dtype=np.complex128)
        v[self.value] = 1.0
        return v

    def vjp(self, acc, params, adj, conj):
        pass

    def groups(self):
        return ()


@dataclass(frozen=True)
class Categorical:
    """Unnormalized probabilities stored as logs in an exp-transformed group."""

    group: str
    start: int
    size: int
    family = "finite"

    def vector(self, params: Params, size: int) -> np.ndarray:
        return params[self.group].value()[self.start:self.start + self.size].astype(np.complex128)

    def vjp(self, acc: GradientAccumulator, params, adj, conj):
        acc.deposit(self.group, np.arange(self.start, self.start + self.size), adj, conj)

    def groups(self):
        return (self.group,)


@dataclass(frozen=True)
class Embedding:
    """Arbitrary real or complex entries over a finite domain."""

    group: str
    start: int
    size: int
    family = "finite"

    def vector(self, params: Params, size: int) -> np.ndarray:
        return params[self.group].value()[self.start:self.start + self.size].astype(np.complex128)

    def vjp(self, acc: GradientAccumulator, params, adj, conj):
        acc.deposit(self.group, np.arange(self.start, self.start + self.size), adj, conj)

    def groups(self):
        return (self.group,)


@dataclass(frozen=True)
class Gaussian:
    """Normal density; ``group[index]`` is the mean, ``group[index+1]`` the log stddev."""

    group: str
    index: int
    family = "quadexp"

    def moments(self, params: Params) -> tuple[float, float]:
        raw = params[self.group].values
        return float(raw[self.index]), float(raw[self.index + 1])

    def coefficients(self, params: Params) -> np.ndarray:
        mu, ls = self.moments(params)
        tau = math.exp(-2.0 * ls)
        return np.array([-0.5 * mu * mu * tau - ls - LOG_SQRT_2PI, tau * mu, -0.5 * tau],
                        dtype=np.complex128)

    def vjp(self, acc: GradientAccumulator, params, adj, conj):
        # adj holds dF/dA for A = (a0, a1, a2)
        mu, ls = self.moments(params)
        tau = math.exp(-2.0 * ls)
        d_mu = adj[1] * tau - adj[0] * tau * mu
        d_ls = adj[2] * tau - adj[1] * 2 * tau * mu + adj[0] * (tau * mu * mu - 1.0)
        acc.deposit(self.group, np.array([self.index, self.index + 1]),
                    np.array([d_mu, d_ls]), conj)

    def groups(self):
        return (self.group,)


@dataclass(frozen=True)
class ExpQuadratic:
    """Constant leaf exp(a0 + a1 x + a2 x^2) with complex coefficients."""

    a0: complex
    a1: complex
    a2: complex
    family = "quadexp"

    def coefficients(self, params: Params) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2], dtype=np.complex128)

    def vjp(self, acc, params, adj, conj):
        pass

    def groups(self):
        return ()


@dataclass(frozen=True)
class Polynomial:
    """sum_i coefficients[i] x^i; integrable only on a bounded interval."""

    coefficients: tuple[float, ...]
    interval: tuple[float, float] | None = None
    family = "poly"

    def vjp(self, acc, params, adj, conj):
        pass

    def groups(self):
        return ()


InputFunction = Indicator | Categorical | Embedding | Gaussian | ExpQuadratic | Polynomial
LeafTerm = tuple  # tuple[tuple[InputFunction, bool], ...]


def leaf(f) -> LeafTerm:
    return ((f, False),)


def term_family(term: LeafTerm) -> str | None:
    fams = {f.family for f, _ in term}
    return fams.pop() if len(fams) == 1 else None


def conjugate_term(term: LeafTerm) -> LeafTerm:
    return tuple((f, not c) for f, c in term)


def term_groups(term: LeafTerm) -> set[str]:
    return {g for f, _ in term for g in f.groups()}


def pair_supported(t1: LeafTerm, t2: LeafTerm, domain) -> bool:
    """True when the product of two terms has a closed-form integral."""
    return integrable(t1 + t2, domain)


def integrable(term: LeafTerm, domain) -> bool:
    fam = term_family(term)
    if fam == "finite":
        return isinstance(domain, Finite)
    if fam == "quadexp":
        return isinstance(domain, Interval) and domain.is_line
    if fam == "poly":
        ivs = {f.interval for f, _ in term}
        return len(ivs) == 1 and None not in ivs
    return False


def _factor_vectors(term, params, size):
    vs = []
    for f, c in term:
        v = f.vector(params, size)
        vs.append(np.conj(v) if c else v)
    return vs


def _quad_coefficients(term, params):
    a = np.zeros(3, dtype=np.complex128)
    for f, c in term:
        k = f.coefficients(params)
        a += np.conj(k) if c else k
    return a


def _poly(term):
    p = np.polynomial.Polynomial([1.0])
    for f, _ in term:
        p = p * np.polynomial.Polynomial(np.asarray(f.coefficients, dtype=float))
    return p


def _require_family(term):
    fam = term_family(term)
    if fam is None:
        raise UnsupportedPair("leaf factors come from different families: "
                              + ", ".join(type(f).__name__ for f, _ in term))
    return fam


def term_vector(term: LeafTerm, params: Params, size: int) -> np.ndarray:
    vs = _factor_vectors(term, params, size)
    out = vs[0].copy()
    for v in vs[1:]:
        out *= v
    return out


def term_value(term: LeafTerm, params: Params, x: np.ndarray, domain) -> np.ndarray:
    """Linear values of the term at a batch of points."""
    fam = _require_family(term)
    if fam == "finite":
        return term_vector(term, params, domain.size)[x.astype(np.int64)]
    if fam == "quadexp":
        a = _quad_coefficients(term, params)
        return np.exp(a[0] + a[1] * x + a[2] * x * x)
    return _poly(term)(x).astype(np.complex128)


def _clog(z):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(z, dtype=np.complex128))


def term_log_value(term: LeafTerm, params: Params, x: np.ndarray, domain) -> np.ndarray:
    """Complex log of the term at a batch of points (real part -inf at zeros)."""
    fam = _require_family(term)
    if fam == "quadexp":
        a = _quad_coefficients(term, params)
        return a[0] + a[1] * x + a[2] * x * x
    return _clog(term_value(term, params, x, domain))


def term_log_integral(term: LeafTerm, params: Params, domain) -> complex:
    fam = _require_family(term)
    if not integrable(term, domain):
        raise UnsupportedPair(f"no closed-form integral for {fam} leaves over {domain}")
    if fam == "finite":
        return complex(_clog(term_vector(term, params, domain.size).sum()))
    if fam == "quadexp":
        a0, a1, a2 = _quad_coefficients(term, params)
        if not a2.real < 0:
            raise UnsupportedPair("quadratic-exponential leaf is not integrable (a2 >= 0)")
        return complex(0.5 * math.log(math.pi) - 0.5 * np.log(-a2) + a0 - a1 * a1 / (4 * a2))
    lo, hi = term[0][0].interval
    q = _poly(term).integ()
    return complex(_clog(q(hi) - q(lo)))


def term_integral(term: LeafTerm, params: Params, domain) -> complex:
    fam = _require_family(term)
    if fam == "finite" and integrable(term, domain):
        return complex(term_vector(term, params, domain.size).sum())
    if fam == "poly" and integrable(term, domain):
        lo, hi = term[0][0].interval
        q = _poly(term).integ()
        return complex(q(hi) - q(lo))
    return complex(np.exp(term_log_integral(term, params, domain)))


def _finite_vjp(term, acc, params, size, adj_vec):
    vs = _factor_vectors(term, params, size)
    for k, (f, c) in enumerate(term):
        others = np.ones(size, dtype=np.complex128)
        for j, v in enumerate(vs):
            if j != k:
                others *= v
        f.vjp(acc, params, adj_vec * others, c)


def _quad_vjp(term, acc, params, adj_a):
    for f, c in term:
        f.vjp(acc, params, adj_a, c)


def term_vjp_value(term: LeafTerm, acc: GradientAccumulator, params: Params, x: np.ndarray,
                   domain, grad: np.ndarray, ratio: np.ndarray) -> None:
    """Push per-sample partials into ``acc``.

    ``grad[b]`` is dF/d f(x_b) and ``ratio[b]`` is dF/d log f(x_b); the
    finite family uses the former, the quadratic family the latter.
    """
    fam = term_family(term)
    if fam == "finite":
        adj = np.zeros(domain.size, dtype=np.complex128)
        np.add.at(adj, x.astype(np.int64), grad)
        _finite_vjp(term, acc, params, domain.size, adj)
    elif fam == "quadexp":
        adj_a = np.array([ratio.sum(), (ratio * x).sum(), (ratio * x * x).sum()])
        _quad_vjp(term, acc, params, adj_a)


def term_vjp_integral(term: LeafTerm, acc: GradientAccumulator, params: Params, domain,
                      grad: complex, ratio: complex) -> None:
    fam = term_family(term)
    if fam == "finite":
        adj = np.full(domain.size, grad, dtype=np.complex128)
        _finite_vjp(term, acc, params, domain.size, adj)
    elif fam == "quadexp":
        _, a1, a2 = _quad_coefficients(term, params)
        dlog = np.array([1.0, -a1 / (2 * a2), -1.0 / (2 * a2) + a1 * a1 / (4 * a2 * a2)])
        _quad_vjp(term, acc, params, ratio * dlog)


def term_nonnegative(term: LeafTerm, params: Params, domain) -> bool:
    """Sign inspection for the monotonicity check."""
    fam = term_family(term)
    if fam == "finite":
        v = term_vector(term, params, domain.size)
        return bool(np.all(np.abs(v.imag) == 0) and np.all(v.real >= 0))
    if fam == "quadexp":
        return all(isinstance(f, Gaussian) for f, _ in term)
    return False


def is_real_valued(term: LeafTerm, params: Params, domain) -> bool:
    fam = term_family(term)
    if fam == "finite":
        return bool(np.all(term_vector(term, params, domain.size).imag == 0))
    if fam == "quadexp":
        return bool(np.all(_quad_coefficients(term, params).imag == 0))
    return True


def describe(term: LeafTerm) -> str:
    parts = []
    for f, c in term:
        s = type(f).__name__
        parts.append(s + ("*" if c else ""))
    return "x".join(parts)


def as_term(f_or_term) -> LeafTerm:
    if isinstance(f_or_term, tuple) and f_or_term and isinstance(f_or_term[0], tuple):
        return f_or_term
    return leaf(f_or_term)


def polynomial(coefficients: Sequence[float], interval=None) -> Polynomial:
    iv = None if interval is None else (float(interval[0]), float(interval[1]))
    return Polynomial(tuple(float(c) for c in coefficients), iv)
