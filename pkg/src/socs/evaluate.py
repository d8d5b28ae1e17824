"""Forward evaluation and marginals in three semirings, plus reverse-mode gradients.

The batch interface takes a float array ``X`` of shape (batch, num_vars) and
an optional boolean mask of variables to integrate out.  Every variable not
marginalized must carry an in-domain value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuit import INPUT, PRODUCT, SUM, Circuit, check_smooth_decomposable, scope_vars
from .domains import Finite
from .errors import DomainError, FieldError, NumericalError, StructureError, UnsupportedPair
from .leaves import (as_term, describe, integrable, term_integral, term_log_integral, term_log_value, term_value,
                     term_vjp_integral, term_vjp_value)
from .logspace import LogComplex, LogSign, clog, logsign_lse, lse2, weighted_lse, wrap
from .params import GradientAccumulator

MODES = ("linear", "logsign", "log")


@dataclass
class EvalTape:
    """Per-unit log values and log-adjoints d_n = log(dc/dc_n) of one pass."""

    values: list
    log_adjoints: list | None
    mode: str
    batch_size: int


def as_batch(c: Circuit, assignment) -> np.ndarray:
    """Accept a mapping (name or index -> value), a sequence, or a 2-D array."""
    if isinstance(assignment, Mapping):
        x = np.full(c.num_vars, np.nan)
        for k, v in assignment.items():
            idx = c.var_index(k) if isinstance(k, str) else int(k)
            x[idx] = v
        return x[None, :]
    x = np.asarray(assignment, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _marg_mask(c: Circuit, marginalized) -> np.ndarray:
    mask = np.zeros(c.num_vars, dtype=bool)
    if marginalized is None:
        return mask
    m = np.asarray(marginalized)
    if m.dtype == bool:
        return m.copy()
    for v in marginalized:
        mask[c.var_index(v) if isinstance(v, str) else int(v)] = True
    return mask


def check_assignment(c: Circuit, X: np.ndarray, marg: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != c.num_vars:
        raise DomainError(f"expected {c.num_vars} columns, got shape {X.shape}")
    for var in scope_vars(c.scope):
        if marg[var]:
            continue
        col = X[:, var]
        dom = c.variables[var].domain
        if np.any(np.isnan(col)):
            raise DomainError(f"variable {c.variables[var].name} is unassigned")
        if isinstance(dom, Finite):
            ok = (col == np.round(col)) & (col >= 0) & (col < dom.size)
        else:
            ok = (col >= dom.low) & (col <= dom.high)
        if not np.all(ok):
            bad = col[~ok][0]
            raise DomainError(f"value {bad} outside the domain of {c.variables[var].name}")


def _weights(c: Circuit) -> list:
    return [c.weight_values(uid) if u.kind == SUM else None for uid, u in enumerate(c.units)]


def _leaf_linear(c, u, X, marg, B):
    dom = c.variables[u.var].domain
    if marg[u.var]:
        return np.full(B, term_integral(u.term, c.params, dom), dtype=np.complex128)
    return term_value(u.term, c.params, X[:, u.var], dom)


def _leaf_log(c, u, X, marg, B):
    dom = c.variables[u.var].domain
    if marg[u.var]:
        return np.full(B, term_log_integral(u.term, c.params, dom), dtype=np.complex128)
    return wrap(term_log_value(u.term, c.params, X[:, u.var], dom))


def forward(c: Circuit, X: np.ndarray, mode: str = "log", marginalized=None,
            check: bool = True) -> EvalTape:
    """Evaluate every unit; ``mode`` is "linear", "logsign" or "log"."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "logsign" and c.field != "real":
        raise FieldError("log-sign evaluation needs a real circuit")
    X = np.asarray(X, dtype=float)
    marg = _marg_mask(c, marginalized)
    if check:
        check_assignment(c, X, marg)
    B = X.shape[0]
    W = _weights(c)
    vals: list = [None] * c.num_units
    for uid, u in enumerate(c.units):
        if mode == "linear":
            if u.kind == INPUT:
                vals[uid] = _leaf_linear(c, u, X, marg, B)
            elif u.kind == SUM:
                acc = np.zeros(B, dtype=np.complex128)
                for w, i in zip(W[uid], u.inputs):
                    acc = acc + w * vals[i]
                vals[uid] = acc
            else:
                a, b = u.inputs
                vals[uid] = vals[a] * vals[b]
        elif mode == "log":
            if u.kind == INPUT:
                vals[uid] = _leaf_log(c, u, X, marg, B)
            elif u.kind == SUM:
                vals[uid] = weighted_lse(clog(W[uid]), np.stack([vals[i] for i in u.inputs]))
            else:
                a, b = u.inputs
                vals[uid] = wrap(vals[a] + vals[b])
        else:
            if u.kind == INPUT:
                v = _leaf_linear(c, u, X, marg, B).real
                with np.errstate(divide="ignore"):
                    vals[uid] = (np.log(np.abs(v)), np.sign(v))
            elif u.kind == SUM:
                la = np.stack([vals[i][0] for i in u.inputs])
                sg = np.stack([vals[i][1] for i in u.inputs])
                vals[uid] = logsign_lse(W[uid].real, la, sg)
            else:
                (la, sa), (lb, sb) = vals[u.inputs[0]], vals[u.inputs[1]]
                vals[uid] = (la + lb, sa * sb)
    return EvalTape(vals, None, mode, B)


def evaluate_batch(c: Circuit, X, mode: str = "linear", marginalized=None):
    """Output values for a batch: complex (linear), complex logs (log) or
    a ``(log_abs, sign)`` pair (logsign)."""
    tape = forward(c, X, mode, marginalized)
    return tape.values[c.output]


def log_evaluate(c: Circuit, X, marginalized=None) -> np.ndarray:
    return forward(c, X, "log", marginalized).values[c.output]


def evaluate(c: Circuit, assignment, mode: str = "linear"):
    """Value at one full assignment: complex, ``LogSign`` or ``LogComplex``."""
    X = as_batch(c, assignment)
    out = evaluate_batch(c, X, mode)
    if mode == "linear":
        v = complex(out[0])
        return v
    if mode == "logsign":
        return LogSign(float(out[0][0]), float(out[1][0]))
    return LogComplex.from_log(out[0])


def marginalize(c: Circuit, keep: Sequence = (), assignment: Mapping | None = None,
                log: bool = False):
    """Integrate every variable outside ``keep``; ``assignment`` fixes ``keep``."""
    rep = check_smooth_decomposable(c)
    if not rep.ok:
        raise StructureError(f"marginalization needs a smooth decomposable circuit; units {rep.witnesses}")
    keep_idx = {c.var_index(k) if isinstance(k, str) else int(k) for k in keep}
    x = np.full(c.num_vars, np.nan)
    for k, v in (assignment or {}).items():
        idx = c.var_index(k) if isinstance(k, str) else int(k)
        if idx not in keep_idx:
            keep_idx.add(idx)
        x[idx] = v
    marg = np.array([i not in keep_idx for i in range(c.num_vars)])
    z = log_evaluate(c, x[None, :], marg)[0] if log else None
    if log:
        return LogComplex.from_log(z)
    return complex(evaluate_batch(c, x[None, :], "linear", marg)[0])


def integrate_input(f, params, domain) -> complex:
    """Closed-form integral of one input function (or leaf term) over ``domain``."""
    return term_integral(as_term(f), params, domain)


def product_integral(f, g, params, domain) -> complex:
    """Integral of the product of two input functions over one variable."""
    t = as_term(f) + as_term(g)
    if not integrable(t, domain):
        raise UnsupportedPair(f"no closed form for {describe(as_term(f))} x {describe(as_term(g))}")
    return term_integral(t, params, domain)


def partition_function(c: Circuit, log: bool = False):
    return marginalize(c, (), None, log)


def log_partition(c: Circuit) -> complex:
    """Complex log of Z computed in log space."""
    x = np.full((1, c.num_vars), np.nan)
    return complex(log_evaluate(c, x, np.ones(c.num_vars, dtype=bool))[0])


# reverse mode ---------------------------------------------------------------

class _RealPart:
    """Accumulator proxy for objectives of the form Re(h).

    A partial D at a site also implies conj(D) at the mirrored site of the
    conjugate function; both halves are deposited.
    """

    def __init__(self, base: GradientAccumulator):
        self.base = base
        self.params = base.params

    def deposit(self, group, index, adjoint, conj=False):
        adjoint = np.asarray(adjoint)
        self.base.deposit(group, index, 0.5 * adjoint, conj)
        self.base.deposit(group, index, 0.5 * np.conj(adjoint), not conj)


def backward_tape(c: Circuit, tape: EvalTape) -> EvalTape:
    """Fill log-adjoints d_n = log(d c_out / d c_n) by a reverse sweep."""
    if tape.mode != "log":
        raise ValueError("reverse sweep runs on log-space tapes")
    vals = tape.values
    W = _weights(c)
    d: list = [None] * c.num_units
    d[c.output] = np.zeros(tape.batch_size, dtype=np.complex128)

    def push(i, contrib):
        d[i] = contrib if d[i] is None else lse2(d[i], contrib)

    for uid in range(c.num_units - 1, -1, -1):
        if d[uid] is None:
            continue
        u = c.units[uid]
        if u.kind == SUM:
            lw = clog(W[uid])
            for j, i in enumerate(u.inputs):
                push(i, d[uid] + lw[j])
        elif u.kind == PRODUCT:
            a, b = u.inputs
            push(a, d[uid] + vals[b])
            push(b, d[uid] + vals[a])
    tape.log_adjoints = d
    return tape


def log_grad(c: Circuit, X, coef, acc: GradientAccumulator, marginalized=None,
             real_part: bool = False) -> np.ndarray:
    """Deposit sum_b coef_b * d log c(x_b) / d params into ``acc``.

    With ``real_part`` the objective is sum_b coef_b * Re log c(x_b) (for real
    ``coef``), i.e. log-modulus terms.  Returns the complex logs of c(x_b).
    """
    X = np.asarray(X, dtype=float)
    marg = _marg_mask(c, marginalized)
    tape = forward(c, X, "log", marg)
    z_out = tape.values[c.output]
    if np.any(z_out.real == -np.inf) or not np.all(np.isfinite(z_out.real)):
        raise NumericalError("log of a zero or non-finite circuit output")
    backward_tape(c, tape)
    sink = _RealPart(acc) if real_part else acc
    coef = np.broadcast_to(np.asarray(coef, dtype=np.complex128), z_out.shape)
    vals, d = tape.values, tape.log_adjoints
    params = c.params
    for uid, u in enumerate(c.units):
        if d[uid] is None:
            continue
        if u.kind == SUM:
            ws = u.weights
            for j, i in enumerate(u.inputs):
                w = ws[j]
                if not w.sites:
                    continue
                with np.errstate(over="ignore", invalid="ignore"):
                    dw = np.sum(coef * np.exp(d[uid] + vals[i] - z_out))
                site_vals = [params[s.group].value()[s.index] for s in w.sites]
                site_vals = [np.conj(v) if s.conj else v for v, s in zip(site_vals, w.sites)]
                for k, s in enumerate(w.sites):
                    others = w.const
                    for l, v in enumerate(site_vals):
                        if l != k:
                            others = others * v
                    sink.deposit(s.group, s.index, dw * others, s.conj)
        elif u.kind == INPUT:
            dom = c.variables[u.var].domain
            with np.errstate(over="ignore", invalid="ignore"):
                g = coef * np.exp(d[uid] - z_out)
                r = coef * np.exp(d[uid] + vals[uid] - z_out)
            if marg[u.var]:
                term_vjp_integral(u.term, sink, params, dom, g.sum(), r.sum())
            else:
                term_vjp_value(u.term, sink, params, X[:, u.var], dom, g, r)
    return z_out


def backward(c: Circuit, X, acc: GradientAccumulator | None = None) -> dict[str, np.ndarray]:
    """Gradient of L = |B| log Z - sum_x log c(x) for a positive-valued circuit."""
    X = np.asarray(X, dtype=float)
    acc = acc or GradientAccumulator(c.params)
    B = X.shape[0]
    log_grad(c, X, -1.0, acc, real_part=True)
    xz = np.full((1, c.num_vars), np.nan)
    log_grad(c, xz, float(B), acc, np.ones(c.num_vars, dtype=bool))
    return acc.gradients()


def nll(c: Circuit, X) -> float:
    X = np.asarray(X, dtype=float)
    lz = log_partition(c).real
    return float(X.shape[0] * lz - np.sum(log_evaluate(c, X).real))
