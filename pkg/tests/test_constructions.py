import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socs.circuit import check_monotone, structured_decomposable
from socs.compose import constant_one, num_squares
from socs.constructions import (GraphSpec, build_fsum, build_fsum_sos, build_fudisj, build_futq,
                                build_motzkin_family, eval_fsum, eval_fudisj, eval_futq, eval_motzkin,
                                eval_motzkin_family, fsum_index, graph_variables)
from socs.errors import BudgetExceeded
from socs.evaluate import evaluate_batch
from socs.oracle import (all_assignments, boolean_vars, brute_force_table, circuit_function, numeric_rank,
                         prime_matrix, sqrank_bruteforce, value_matrix)

EDGE = GraphSpec(2, ((0, 1),))
TRIANGLE = GraphSpec(3, ((0, 1), (1, 2), (0, 2)))


def at(c, x):
    return float(evaluate_batch(c, np.array([x], dtype=float))[0].real)


@pytest.mark.parametrize("x, want", [((1, 1), 0), ((1, 0), 1), ((0, 0), 1)])
def test_udisj_single_edge(x, want):
    assert at(build_fudisj(EDGE), x) == pytest.approx(want, abs=1e-12)
    assert eval_fudisj(EDGE, x) == want


def test_udisj_all_zero_on_any_graph():
    for g in (EDGE, TRIANGLE, GraphSpec(4, ((0, 3), (1, 2)))):
        assert at(build_fudisj(g), [0] * g.num_vertices) == pytest.approx(1.0)


def test_fsum_examples():
    assert at(build_fsum(1), [1, 1]) == pytest.approx(1.0)
    x = np.zeros(6)
    x[fsum_index(2, 1)] = x[fsum_index(2, 1, 2)] = 1
    assert at(build_fsum(2), x) == pytest.approx(2.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_fsum_forms_agree(k):
    mono, sos = build_fsum(k), build_fsum_sos(k)
    assert check_monotone(mono) and structured_decomposable(mono) and structured_decomposable(sos)
    X, vals = brute_force_table(mono)
    want = np.array([eval_fsum(k, x.astype(int)) for x in X])
    assert np.array_equal(np.rint(vals.real), want)
    assert np.array_equal(np.rint(evaluate_batch(sos, X).real), want)


def test_fsum_size_is_linear():
    sizes = [build_fsum(k).size for k in (2, 4, 8)]
    d = [k * (k + 1) for k in (2, 4, 8)]
    assert max(s / n for s, n in zip(sizes, d)) <= 2 * min(s / n for s, n in zip(sizes, d))


@pytest.mark.parametrize("x, want", [((1, 1), 0), ((1, 0), 1)])
def test_utq_single_edge(x, want):
    assert at(build_futq(EDGE), x) == pytest.approx(want, abs=1e-12)


def test_utq_triangle():
    c = build_futq(TRIANGLE)
    assert num_squares(c) == len(TRIANGLE.edges) + 1
    X, vals = brute_force_table(c)
    want = [eval_futq(TRIANGLE, x.astype(int)) for x in X]
    assert np.array_equal(np.rint(vals.real), want)


@pytest.mark.parametrize("x, want", [((1, 1), 0), ((0, 0), 1), ((2, 1), 9)])
def test_motzkin_values(x, want):
    assert eval_motzkin(*x) == want
    assert at(build_motzkin_family(0), x) == pytest.approx(want, abs=1e-12)


def test_motzkin_family_probes():
    rng = np.random.default_rng(51)
    c = build_motzkin_family(2)
    assert structured_decomposable(c) and not check_monotone(c)
    P = rng.uniform(-3, 3, size=(1000, 4))
    got = evaluate_batch(c, P).real
    want = np.array([eval_motzkin_family(p) for p in P])
    assert np.all(np.abs(got - want) <= 1e-9 * np.maximum(np.abs(want), 1.0))
    assert got.min() >= -1e-12


def test_bsum_value_matrix_corners():
    from socs.constructions import bsum_fixed
    fixed = bsum_fixed(5, {1: 1, 2: 2, 3: 3}, {4: 1, 5: 2})
    F = circuit_function(build_fsum(5))
    rows = [fsum_index(5, 1), fsum_index(5, 2), fsum_index(5, 3)]
    cols = [fsum_index(5, 4), fsum_index(5, 5)]
    M = value_matrix(F, rows, cols, fixed).matrix
    assert M[0, 0] == 0 and M[7, 3] == 10


def test_constant_one_value_matrix():
    c = constant_one(boolean_vars(4))
    assert np.array_equal(value_matrix(circuit_function(c), [0, 1], [2, 3]).matrix, np.ones((4, 4)))


def test_udisj_value_matrix():
    M = value_matrix(circuit_function(build_fudisj(EDGE)), [0], [1]).matrix
    assert np.array_equal(np.rint(M), [[1, 1], [1, 0]])


def test_prime_matrix_and_sqrank():
    K = prime_matrix(3)
    assert np.array_equal(K, [[3, 4, 5], [4, 5, 6], [5, 6, 7]])
    assert sqrank_bruteforce(K) == 3
    assert sqrank_bruteforce(np.ones((2, 2))) == 1


def test_sqrank_can_beat_rank():
    assert sqrank_bruteforce(np.array([[1.0, 1.0], [1.0, 0.0]])) == 2
    # entries (i - j)^2: rank 3, but the signed root i - j has rank 2
    M = np.subtract.outer(np.arange(3.0), np.arange(3.0)) ** 2
    assert numeric_rank(M) == 3 and sqrank_bruteforce(M) == 2


def test_oracle_caps():
    with pytest.raises(BudgetExceeded):
        sqrank_bruteforce(np.ones((5, 4)))
    with pytest.raises(BudgetExceeded):
        all_assignments(boolean_vars(25))
    with pytest.raises(BudgetExceeded):
        value_matrix(lambda x: 0.0, range(13), range(13, 25))


@pytest.mark.parametrize("edges", [((0, 0),), ((0, 1), (1, 0)), ((0, 5),)])
def test_bad_graphs(edges):
    with pytest.raises(ValueError):
        GraphSpec(3, edges)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                         .filter(lambda e: e[0] < e[1]), max_size=6))))
def test_udisj_matches_formula_on_random_graphs(nv_edges):
    n, edges = nv_edges
    g = GraphSpec(n, tuple(sorted(edges)))
    X = all_assignments(graph_variables(g))
    got = evaluate_batch(build_fudisj(g), X).real
    want = [eval_fudisj(g, x.astype(int)) for x in X]
    assert np.array_equal(np.rint(got), want)
    assert np.max(np.abs(got - want)) <= 1e-9
