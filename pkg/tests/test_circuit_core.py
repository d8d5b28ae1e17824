import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socs.circuit import (Circuit, CircuitBuilder, Unit, check_compatible, check_monotone,
                          check_smooth_decomposable, recompute_scopes, structured_decomposable)
from socs.domains import REAL, Variable
from socs.errors import FieldError, StructureError
from socs.evaluate import evaluate_batch
from socs.oracle import all_assignments, boolean_vars, random_circuit, random_vtree


def test_sum_over_same_variable_is_smooth():
    b = CircuitBuilder(boolean_vars(1))
    c = b.build(b.sum([b.indicator(0, 0), b.indicator(0, 1)], [1.0, 1.0]))
    rep = check_smooth_decomposable(c)
    assert rep.smooth and rep.decomposable and rep.witnesses == []


def test_unsmooth_sum_is_reported():
    b = CircuitBuilder(boolean_vars(2))
    s = b.sum([b.indicator(0, 0), b.indicator(1, 0)], [1.0, 1.0])
    rep = check_smooth_decomposable(b.build(s))
    assert not rep.smooth and rep.witnesses == [2]


def test_overlapping_product_is_not_decomposable():
    b = CircuitBuilder(boolean_vars(2))
    left = b.product([b.indicator(0, 1), b.indicator(1, 1)])
    p = b.product([left, b.indicator(1, 0)])
    rep = check_smooth_decomposable(b.build(p))
    assert rep.smooth and not rep.decomposable


def test_different_splits_are_incompatible():
    rng = np.random.default_rng(0)
    vs = boolean_vars(3)
    a = random_circuit(vs, (0, (1, 2)), rng)
    b = random_circuit(vs, ((0, 1), 2), rng)
    rep = check_compatible(a, b)
    assert not rep.compatible
    assert rep.witnesses[0][0] == "product"


def test_gaussian_leaves_are_compatible():
    vs = (Variable("X", REAL),)
    b1, b2 = CircuitBuilder(vs), CircuitBuilder(vs)
    c1 = b1.build(b1.gaussian(0, 0.0, 0.0))
    c2 = b2.build(b2.gaussian(0, 1.0, 0.5))
    assert check_compatible(c1, c2).compatible


def test_compatibility_rejects_invalid_circuits():
    b = CircuitBuilder(boolean_vars(2))
    bad = b.build(b.sum([b.indicator(0, 0), b.indicator(1, 0)], [1.0, 1.0]))
    with pytest.raises(StructureError):
        check_compatible(bad, bad)
    assert not structured_decomposable(bad)


@pytest.mark.parametrize("weights, expected", [([0.5, 0.5], True), ([0.5, -1.0], False)])
def test_monotone_weights(weights, expected):
    b = CircuitBuilder(boolean_vars(1))
    c = b.build(b.sum([b.indicator(0, 0), b.indicator(0, 1)], weights))
    assert check_monotone(c) is expected


@pytest.mark.parametrize("entries, expected", [([0.2, 0.8], True), ([0.2, -0.8], False)])
def test_monotone_embedding(entries, expected):
    b = CircuitBuilder(boolean_vars(1))
    assert check_monotone(b.build(b.embedding(0, entries))) is expected


def test_monotone_rejects_complex():
    b = CircuitBuilder(boolean_vars(1))
    c = b.build(b.sum([b.indicator(0, 1)], [1 + 1j]))
    with pytest.raises(FieldError):
        check_monotone(c)


def test_bad_unit_graphs_rejected():
    vs = boolean_vars(2)
    from socs.leaves import Indicator, leaf
    with pytest.raises(StructureError):
        Circuit(vs, [Unit("input", var=5, term=leaf(Indicator(0)))], 0, "real", {})
    with pytest.raises(StructureError):
        Circuit(vs, [Unit("product", (1, 2))], 0, "real", {})
    with pytest.raises(StructureError):
        Circuit(vs, [Unit("input", var=0, term=leaf(Indicator(0))), Unit("sum", (0,), ())], 1, "real", {})


def test_size_counts_edges():
    b = CircuitBuilder(boolean_vars(3))
    p = b.product([b.indicator(0, 1), b.indicator(1, 1), b.indicator(2, 1)])
    c = b.build(b.sum([p], [2.0]))
    # two binary products plus one sum edge
    assert c.size == 5


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1), cplx=st.booleans())
def test_random_circuits_are_structured(n, seed, cplx):
    rng = np.random.default_rng(seed)
    c = random_circuit(boolean_vars(n), random_vtree(range(n), rng), rng,
                       field="complex" if cplx else "real")
    assert tuple(recompute_scopes(c)) == c.scopes
    assert check_smooth_decomposable(c).ok
    assert structured_decomposable(c)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 2**32 - 1))
def test_binarized_products_compute_the_full_product(n, seed):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(n, 2))
    b = CircuitBuilder(boolean_vars(n))
    c = b.build(b.product([b.embedding(i, vals[i]) for i in range(n)]))
    assert all(len(u.inputs) == 2 for u in c.units if u.kind == "product")
    X = all_assignments(c.variables).astype(int)
    want = np.prod(vals[np.arange(n), X], axis=1)
    got = evaluate_batch(c, X.astype(float)).real
    assert np.allclose(got, want, rtol=1e-12, atol=0)


def test_shared_vtree_is_compatible():
    rng = np.random.default_rng(5)
    vs = boolean_vars(5)
    vt = random_vtree(range(5), rng)
    a, b = random_circuit(vs, vt, rng), random_circuit(vs, vt, rng, field="complex")
    assert check_compatible(a, b).compatible
