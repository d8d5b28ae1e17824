import numpy as np
import pytest
from scipy.stats import norm

from socs.circuit import CircuitBuilder, check_compatible
from socs.compose import constant_one, num_squares, socs_sum
from socs.domains import REAL, Variable
from socs.errors import BudgetExceeded, ConfigError, MonotonicityError, NotPSD, ShapeError, StructureError
from socs.evaluate import evaluate_batch
from socs.oracle import all_assignments, boolean_vars, random_circuit, random_vtree
from socs.reductions import (MPS, FiniteFactor, GaussianFactor, PSDModel, SNEFYSpec, born, cayley_dickson_table,
                             cd_mult, from_circuit, hyper_evaluate, hyper_square, hypercomplex_decompose,
                             mps_to_circuit, psd_to_socs, random_hyper_circuit, snefy_to_socs, socs_to_psd,
                             unroll_to_sos)


def table(c, X=None):
    return evaluate_batch(c, all_assignments(c.variables) if X is None else X)


def test_rank_one_real_mps():
    m = MPS([np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]])])
    c = mps_to_circuit(m)
    vals = table(c).real.reshape(2, 2)
    assert vals[0, 0] == 3 and vals[1, 1] == 8
    assert np.array_equal(vals, np.outer([1, 2], [3, 4]))


def test_rank_one_complex_born():
    rng = np.random.default_rng(31)
    m = MPS.random(4, 3, 1, rng)
    X = all_assignments(mps_to_circuit(m).variables).astype(int)
    want = np.prod([np.abs(m.tensors[j].reshape(3, -1)[X[:, j], 0]) ** 2 for j in range(4)], axis=0)
    got = table(born(m))
    assert np.max(np.abs(got - want)) <= 1e-12 * want.max()


def test_mps_size_is_linear_in_length():
    rng = np.random.default_rng(32)
    sizes = [mps_to_circuit(MPS.random(d, 2, 3, rng)).size for d in (4, 8, 16)]
    assert sizes[2] - sizes[1] == 2 * (sizes[1] - sizes[0])


@pytest.mark.parametrize("tensors", [
    [np.ones((2, 1))],
    [np.ones((2, 2)), np.ones((2, 3))],
    [np.ones((2, 2)), np.ones((2, 2, 3)), np.ones((2, 2))],
    [np.ones((2, 1)), np.array([[np.inf], [1.0]])],
])
def test_malformed_mps(tensors):
    with pytest.raises(ShapeError):
        MPS(tensors)


def test_cayley_dickson_complex_table():
    # omega = 1 reproduces complex multiplication
    rng = np.random.default_rng(33)
    x, y = rng.normal(size=2), rng.normal(size=2)
    z = complex(*x) * complex(*y)
    assert np.allclose(cd_mult(x, y), [z.real, z.imag], rtol=0, atol=1e-15)
    idx, sign = cayley_dickson_table(2)
    assert idx.shape == sign.shape == (4, 4)


def test_quaternions_do_not_commute():
    i, j = np.eye(4)[1], np.eye(4)[2]
    assert np.array_equal(cd_mult(i, j), -cd_mult(j, i))


def test_real_circuit_decomposes_to_itself():
    rng = np.random.default_rng(34)
    c = random_circuit(boolean_vars(4), random_vtree(range(4), rng), rng)
    parts = hypercomplex_decompose(from_circuit(c))
    assert len(parts) == 1
    assert np.allclose(table(parts[0]), table(c), rtol=1e-12, atol=0)


def test_constant_one_plus_i():
    vs = boolean_vars(1)
    one = constant_one(vs)
    b = CircuitBuilder(vs)
    m = b.copy_from(one)
    c = b.build(b.sum([m[one.output]], [1 + 1j]))
    parts = hypercomplex_decompose(from_circuit(c))
    assert [np.allclose(table(p).real, 1.0) for p in parts] == [True, True]
    assert np.allclose(table(socs_sum(parts)).real, 2.0)


@pytest.mark.parametrize("omega, n", [(1, 5), (2, 4), (3, 3)])
def test_hypercomplex_parts_and_modulus(omega, n):
    rng = np.random.default_rng(35 + omega)
    vs = boolean_vars(n)
    hc = random_hyper_circuit(vs, random_vtree(range(n), rng), omega, rng)
    X = all_assignments(vs)
    comps = hyper_evaluate(hc, X)
    parts = hypercomplex_decompose(hc)
    assert len(parts) == 2 ** omega
    got = np.stack([table(p, X).real for p in parts], axis=1)
    assert np.max(np.abs(got - comps)) <= 1e-10 * np.max(np.abs(comps))
    for a in parts:
        assert check_compatible(a, parts[0]).compatible
    if omega <= 2:
        # the materialized square is quadratic in the part size; skip it at omega = 3
        sq = table(hyper_square(hc), X).real
        want = np.sum(comps ** 2, axis=1)
        assert np.max(np.abs(sq - want)) <= 1e-10 * want.max()


def _components(n, r, seed):
    rng = np.random.default_rng(seed)
    vs = boolean_vars(n)
    vt = random_vtree(range(n), rng)
    return [random_circuit(vs, vt, rng) for _ in range(r)]


def test_diagonal_psd():
    c1, c2 = _components(4, 2, 36)
    s = psd_to_socs(PSDModel([c1, c2], np.diag([4.0, 9.0])))
    want = (2 * table(c1).real) ** 2 + (3 * table(c2).real) ** 2
    assert np.max(np.abs(table(s).real - want)) <= 1e-10 * want.max()


def test_rank_one_psd_is_a_single_square():
    c1, c2 = _components(4, 2, 37)
    s = psd_to_socs(PSDModel([c1, c2], np.ones((2, 2))))
    assert num_squares(s) == 1
    want = (table(c1).real + table(c2).real) ** 2
    assert np.max(np.abs(table(s).real - want)) <= 1e-10 * want.max()


def test_psd_round_trip():
    comps = _components(5, 3, 38)
    s = socs_sum(comps, [0.5, 1.0, 2.0])
    p = socs_to_psd(s)
    X = all_assignments(comps[0].variables)
    want = table(s, X).real
    assert np.max(np.abs(p.evaluate(X) - want)) <= 1e-10 * want.max()
    assert np.max(np.abs(table(psd_to_socs(p), X).real - want)) <= 1e-10 * want.max()


def test_tiny_negative_eigenvalue_is_dropped():
    c1, c2 = _components(3, 2, 39)
    s = psd_to_socs(PSDModel([c1, c2], np.diag([1.0, -5e-11])))
    assert num_squares(s) == 1


@pytest.mark.parametrize("A", [[[1.0, 2.0], [2.0, 1.0]], [[1.0, 0.5], [0.0, 1.0]]])
def test_not_psd(A):
    comps = _components(3, 2, 40)
    with pytest.raises(NotPSD):
        psd_to_socs(PSDModel(comps, A))


def test_psd_shape_mismatch():
    with pytest.raises(ShapeError):
        PSDModel(_components(3, 2, 41), np.eye(3))


def _snefy(sigma, V, W, b):
    return SNEFYSpec(sigma, V, W, b, [FiniteFactor(np.array([[0.0], [1.0], [2.0]]), [0.2, 0.5, 0.3]),
                                     GaussianFactor(0.5, 1.5)])


def _base_measure(X):
    return np.array([0.2, 0.5, 0.3])[X[:, 0].astype(int)] * norm.pdf(X[:, 1], 0.5, 1.5)


def _points(n, seed):
    rng = np.random.default_rng(seed)
    return np.stack([rng.integers(0, 3, n), rng.normal(0.0, 2.0, n)], axis=1).astype(float)


def test_snefy_exp_with_zero_weights_is_the_base_measure():
    X = _points(100, 42)
    got = table(snefy_to_socs(_snefy("exp", [[1.0]], np.zeros((1, 2)), [0.0])), X)
    assert np.allclose(got.real, _base_measure(X), rtol=1e-12, atol=0)


def test_snefy_cos_with_zero_weights():
    V = [[0.5, -2.0, 1.0]]
    X = _points(100, 43)
    got = table(snefy_to_socs(_snefy("cos", V, np.zeros((3, 2)), np.zeros(3))), X)
    assert np.allclose(got.real, _base_measure(X) * (-0.5) ** 2, rtol=1e-12, atol=0)
    assert np.max(np.abs(got.imag)) <= 1e-15


@pytest.mark.parametrize("sigma", ["exp", "cos"])
def test_snefy_matches_direct_formula(sigma):
    rng = np.random.default_rng(44)
    s = _snefy(sigma, rng.normal(size=(2, 4)), 0.5 * rng.normal(size=(4, 2)), rng.normal(size=4))
    X = _points(1000, 45)
    got = table(snefy_to_socs(s), X).real
    want = s.evaluate(X)
    assert np.max(np.abs(got - want) / want) <= 1e-6


def test_snefy_validation():
    with pytest.raises(ConfigError):
        _snefy("tanh", [[1.0]], np.zeros((1, 2)), [0.0])
    with pytest.raises(ConfigError):
        _snefy("exp", [[1.0]], np.zeros((1, 3)), [0.0])
    with pytest.raises(ConfigError):
        GaussianFactor(0.0, 0.0)


def _single_sum():
    b = CircuitBuilder(boolean_vars(1))
    return b.build(b.sum([b.indicator(0, 0), b.indicator(0, 1)], [0.5, 0.5]))


def test_unroll_single_sum():
    s = unroll_to_sos(_single_sum())
    assert num_squares(s) == 2
    assert np.allclose(table(s).real, [0.5, 0.5])
    comps = s.meta["socs"]["components"]
    assert np.allclose(np.stack([table(c).real for c in comps]) ** 2, [[0.5, 0], [0, 0.5]])


def test_unroll_deterministic_chain():
    b = CircuitBuilder(boolean_vars(3))
    p = b.product([b.indicator(0, 1), b.indicator(1, 0), b.indicator(2, 1)])
    c = b.build(b.sum([p], [3.0]))
    s = unroll_to_sos(c)
    assert num_squares(s) == 1
    assert np.allclose(table(s).real, table(c).real)


def test_unroll_random_monotone():
    rng = np.random.default_rng(46)
    vs = boolean_vars(6)
    c = random_circuit(vs, random_vtree(range(6), rng), rng, leaf="indicator", nonneg=True, width=2)
    s = unroll_to_sos(c)
    want = table(c).real
    assert np.max(np.abs(table(s).real - want)) <= 1e-10 * want.max()


def test_unroll_errors():
    rng = np.random.default_rng(47)
    vs = boolean_vars(6)
    c = random_circuit(vs, random_vtree(range(6), rng), rng, leaf="indicator", nonneg=True, width=2)
    with pytest.raises(BudgetExceeded):
        unroll_to_sos(c, cap=3)
    b = CircuitBuilder(boolean_vars(1))
    with pytest.raises(MonotonicityError):
        unroll_to_sos(b.build(b.sum([b.indicator(0, 0), b.indicator(0, 1)], [0.5, -0.5])))
    b = CircuitBuilder(boolean_vars(1))
    with pytest.raises(StructureError):
        unroll_to_sos(b.build(b.categorical(0, [0.3, 0.7])))


def test_gaussian_factor_variables():
    s = _snefy("exp", [[1.0]], np.zeros((1, 2)), [0.0])
    assert s.variables() == (Variable("X1", s.variables()[0].domain), Variable("X2", REAL))
    assert s.variables()[0].domain.size == 3
