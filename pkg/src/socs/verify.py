"""Property suites run by ``socs verify``.  Each check compares a library
route against a brute-force or closed-form oracle and records a replayable
case on failure."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import mpmath
import numpy as np

from . import constructions as K
from . import reductions as R
from .circuit import check_compatible, check_smooth_decomposable, recompute_scopes, structured_decomposable
from .compose import multiply, perturb_first_weight, socs_sum, square
from .domains import REAL, Variable
from .evaluate import evaluate_batch, log_evaluate, partition_function
from .logspace import logsumexp_complex
from .oracle import (all_assignments, boolean_vars, finite_difference_gradients, max_relative_error,
                     prime_matrix, random_circuit, random_pair, random_vtree, sqrank_bruteforce)
from .tensorized import LayerSpec, build_model, random_binary_tree
from .training import loss_and_grad, nll_batch

SUITES = ("structural", "multiply", "semiring", "gradients", "separations", "reductions")


@dataclass
class Case:
    suite: str
    name: str
    passed: bool
    detail: str = ""
    replay: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class Context:
    seed: int = 0
    max_vars: int = 8
    inject_fault: bool = False

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def table(c, X=None):
    X = all_assignments(c.variables) if X is None else X
    return evaluate_batch(c, X)


def _circuit_json(c):
    from .serialization import circuit_to_json
    return circuit_to_json(c)


# structural ------------------------------------------------------------------

def suite_structural(ctx: Context) -> Iterator[Case]:
    rng = ctx.rng(1)
    n = max(2, min(ctx.max_vars, 8))
    bad = []
    for t in range(20):
        vs = boolean_vars(int(rng.integers(2, n + 1)))
        c = random_circuit(vs, random_vtree(range(len(vs)), rng), rng,
                           field="complex" if t % 2 else "real")
        rep = check_smooth_decomposable(c)
        if not (rep.smooth and rep.decomposable and structured_decomposable(c)
                and tuple(recompute_scopes(c)) == c.scopes):
            bad.append(t)
    yield Case("structural", "random circuits are smooth, decomposable, structured", not bad,
               f"failing trials {bad}")
    vs = boolean_vars(3)
    a = random_circuit(vs, (0, (1, 2)), rng)
    b = random_circuit(vs, ((0, 1), 2), rng)
    yield Case("structural", "different root splits are incompatible",
               not check_compatible(a, b).compatible)
    yield Case("structural", "shared vtree gives compatible circuits",
               check_compatible(a, random_circuit(vs, (0, (1, 2)), rng)).compatible)


# multiply --------------------------------------------------------------------

def suite_multiply(ctx: Context) -> Iterator[Case]:
    rng = ctx.rng(2)
    n = max(1, min(ctx.max_vars, 12))
    for t in range(40):
        nv = int(rng.integers(1, n + 1))
        field_ = "complex" if t % 3 == 2 else "real"
        c1, c2 = random_pair(nv, rng, field_)
        prod = multiply(c1, c2)
        if ctx.inject_fault and t == 0:
            prod = perturb_first_weight(prod)
        X = all_assignments(c1.variables)
        err = rel_err(table(prod, X), table(c1, X) * table(c2, X))
        ok = err <= 1e-10 and prod.size <= c1.size * c2.size
        if not ok or t < 3:
            yield Case("multiply", f"pair {t} ({nv} vars, {field_})", ok,
                       f"rel err {err:.2e}, size {prod.size} vs {c1.size}x{c2.size}",
                       {} if ok else {"c1": _circuit_json(c1), "c2": _circuit_json(c2),
                                      "product": _circuit_json(prod)})
    yield Case("multiply", "all pairs checked", True)


# semiring --------------------------------------------------------------------

def mp_logsumexp(weights, logs) -> complex:
    """Reference log(sum w_k exp(v_k)) at 60 significant digits."""
    with mpmath.workdps(60):
        s = mpmath.mpc(0)
        for w, v in zip(weights, logs):
            s += mpmath.mpc(w.real, w.imag) * mpmath.exp(mpmath.mpc(v.real, v.imag))
        z = mpmath.log(s)
        return complex(float(z.real), float(z.imag))


def suite_semiring(ctx: Context) -> Iterator[Case]:
    rng = ctx.rng(3)
    n = max(1, min(ctx.max_vars, 10))
    worst = 0.0
    for _ in range(10):
        vs = boolean_vars(int(rng.integers(1, n + 1)))
        c = random_circuit(vs, random_vtree(range(len(vs)), rng), rng, field="complex")
        X = all_assignments(vs)
        lin = table(c, X)
        lg = np.exp(log_evaluate(c, X))
        worst = max(worst, rel_err(lg, lin))
        worst = max(worst, rel_err(partition_function(c), lin.sum()))
    yield Case("semiring", "log-space evaluation and Z agree with linear enumeration",
               worst <= 1e-10, f"max rel err {worst:.2e}")
    mags = rng.uniform(-200, 200, 1000) * math.log(10)
    logs = mags + 1j * rng.uniform(-math.pi, math.pi, 1000)
    w = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    lib = logsumexp_complex(w, logs)
    ref = mp_logsumexp(w, logs)
    err = (abs(lib.log_mag - ref.real) / abs(ref.real)
           + abs(math.remainder(lib.arg - ref.imag, 2 * math.pi)))
    yield Case("semiring", "complex logsumexp over 1e+-200 matches 60-digit reference",
               err <= 1e-9 and math.isfinite(lib.log_mag), f"err {err:.2e}")


# gradients -------------------------------------------------------------------

GRADIENT_CLASSES = ("monotone", "squared_real", "squared_complex", "socs(4)", "musocs")


def gradient_error(model, X) -> float:
    _, grads, _ = loss_and_grad(model, X)
    fd = finite_difference_gradients(lambda: nll_batch(model, X)[0], model.params)
    return max_relative_error(grads, fd, floor=1e-3)


def small_model(model_class: str, num_vars: int = 3, real: bool = False, seed: int = 0):
    vs = tuple(Variable(f"X{i + 1}", REAL) for i in range(num_vars)) if real else boolean_vars(num_vars)
    rg = random_binary_tree(num_vars, seed)
    return build_model(rg, vs, LayerSpec(2, 2, model_class, seed=seed))


def suite_gradients(ctx: Context) -> Iterator[Case]:
    rng = ctx.rng(4)
    for mc in GRADIENT_CLASSES:
        m = small_model(mc, seed=ctx.seed)
        X = rng.integers(0, 2, size=(8, 3)).astype(float)
        err = gradient_error(m, X)
        yield Case("gradients", f"{mc} matches central differences", err <= 1e-4,
                   f"max rel err {err:.2e}, {m.num_parameters} parameters")


# separations -----------------------------------------------------------------

def default_graphs(max_vertices: int = 3) -> list:
    out = []
    for n in range(1, max_vertices + 1):
        pairs = list(itertools.combinations(range(n), 2))
        for r in range(len(pairs) + 1):
            for edges in itertools.combinations(pairs, r):
                out.append(K.GraphSpec(n, edges))
    return out


def _exact(c, direct: Callable, X=None) -> tuple[bool, float]:
    X = all_assignments(c.variables) if X is None else X
    got = table(c, X)
    want = np.array([direct(x) for x in X.astype(int)], dtype=float)
    err = float(np.max(np.abs(got - want), initial=0.0))
    return err <= 1e-9 and bool(np.allclose(got.imag, 0)), err


def suite_separations(ctx: Context) -> Iterator[Case]:
    for k in (1, 2, 3):
        ok, err = _exact(K.build_fsum(k), lambda x: K.eval_fsum(k, x))
        yield Case("separations", f"fsum k={k}", ok, f"max abs err {err:.1e}")
    for g in default_graphs(2 if ctx.max_vars < 8 else 3):
        c = K.build_fups(g)
        n = g.num_vertices
        ok, err = _exact(c, lambda x: K.eval_fups(g, x))
        cnt = c.meta.get("socs", {}).get("components")
        cnt = len(cnt) if cnt is not None else None
        yield Case("separations", f"fups {g.to_json()}", ok and cnt == n * n + 1,
                   f"err {err:.1e}, squares {cnt}")
    for g in default_graphs(4 if ctx.max_vars >= 4 else 3)[::3]:
        c = K.build_futq(g)
        ok, err = _exact(c, lambda x: K.eval_futq(g, x))
        cnt = len(c.meta["socs"]["components"])
        yield Case("separations", f"futq {g.to_json()}", ok and cnt == len(g.edges) + 1,
                   f"err {err:.1e}, squares {cnt}")
    pm = prime_matrix(3)
    yield Case("separations", "prime matrix q=3 and its square-root rank",
               pm.tolist() == [[3, 4, 5], [4, 5, 6], [5, 6, 7]] and sqrank_bruteforce(pm) == 3)
    yield Case("separations", "Motzkin values", K.eval_motzkin(1, 1) == 0 and K.eval_motzkin(2, 1) == 9)


# reductions ------------------------------------------------------------------

def suite_reductions(ctx: Context) -> Iterator[Case]:
    rng = ctx.rng(6)
    m = R.MPS.random(5, 2, 3, rng, complex_=True)
    c = R.mps_to_circuit(m)
    X = all_assignments(c.variables)
    ref = np.array([m.amplitude(x.astype(int)) for x in X])
    yield Case("reductions", "MPS circuit matches contraction", rel_err(table(c, X), ref) <= 1e-9)
    yield Case("reductions", "Born machine matches |contraction|^2",
               rel_err(table(R.born(m), X), np.abs(ref) ** 2) <= 1e-9)

    vs = boolean_vars(min(4, max(2, ctx.max_vars)))
    c = random_circuit(vs, random_vtree(range(len(vs)), rng), rng, field="complex")
    parts = R.hypercomplex_decompose(R.from_circuit(c))
    X = all_assignments(vs)
    ok = (len(parts) == 2 and all(p.field == "real" for p in parts)
          and check_compatible(parts[0], parts[1]).compatible)
    err = rel_err(table(socs_sum(parts), X), table(square(c), X))
    yield Case("reductions", "complex square equals the sum of two real squares", ok and err <= 1e-10,
               f"rel err {err:.2e}")

    vt = random_vtree(range(len(vs)), rng)
    comps = [random_circuit(vs, vt, rng) for _ in range(3)]
    L = rng.normal(size=(3, 3))
    p = R.PSDModel(comps, L @ L.T)
    s = R.psd_to_socs(p)
    err = rel_err(table(s, X), p.evaluate(X))
    yield Case("reductions", "PSD model equals its SOCS form", err <= 1e-10, f"rel err {err:.2e}")

    mono = random_circuit(vs[:3], (0, (1, 2)), rng, leaf="indicator", nonneg=True, width=1)
    sos = R.unroll_to_sos(mono)
    X3 = all_assignments(vs[:3])
    err = rel_err(table(sos, X3), table(mono, X3))
    yield Case("reductions", "unrolled SOS equals its monotone source", err <= 1e-10, f"rel err {err:.2e}")


SUITE_FUNCS = {
    "structural": suite_structural,
    "multiply": suite_multiply,
    "semiring": suite_semiring,
    "gradients": suite_gradients,
    "separations": suite_separations,
    "reductions": suite_reductions,
}


def run(suite: str, ctx: Context) -> list[Case]:
    names = SUITES if suite == "all" else (suite,)
    cases = []
    for n in names:
        try:
            cases.extend(SUITE_FUNCS[n](ctx))
        except Exception as e:  # a crash inside a suite is a failed property
            cases.append(Case(n, "suite raised", False, f"{type(e).__name__}: {e}"))
    return cases


def report(suite: str, ctx: Context, cases: list[Case]) -> dict:
    failed = [c for c in cases if not c.passed]
    return {"suite": suite, "seed": ctx.seed, "max_vars": ctx.max_vars,
            "passed": not failed, "num_cases": len(cases), "num_failed": len(failed),
            "cases": [c.summary() for c in cases]}
