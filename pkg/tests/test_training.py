import math

import numpy as np
import pytest

from socs.errors import ConfigError
from socs.evaluate import evaluate_batch, partition_function
from socs.oracle import boolean_vars, finite_difference_gradients, max_relative_error
from socs.tensorized import LayerSpec, build_model, random_binary_tree
from socs.training import TrainConfig, fit, loss_and_grad, mean_nll, nll_batch, split_metrics, sweep
from socs.verify import small_model

CLASSES = ["monotone", "squared_real", "squared_complex", "socs(2)", "socs_complex(2)", "musocs"]


def one_var(model_class, **kw):
    return build_model(random_binary_tree(1, 0), boolean_vars(1), LayerSpec(1, 1, model_class, **kw))


def test_uniform_model_log_likelihood():
    m = one_var("monotone")
    for g in m.params.values():
        g.values[:] = 0.0
    _, ll = nll_batch(m, np.array([[0.0], [1.0], [1.0]]))
    assert np.allclose(ll, math.log(0.5), rtol=0, atol=1e-14)


def test_uniform_squared_model():
    m = one_var("squared_real")
    for g in m.params.values():
        g.values[:] = 1.0
    _, ll = nll_batch(m, np.array([[0.0], [1.0]]))
    assert np.allclose(ll, math.log(0.5), rtol=0, atol=1e-14)


@pytest.mark.parametrize("cls", CLASSES)
def test_duplicate_batch_doubles_the_loss(cls):
    m = small_model(cls, seed=3)
    x = np.array([[1.0, 0.0, 1.0]])
    single, _ = nll_batch(m, x)
    double, _ = nll_batch(m, np.vstack([x, x]))
    assert double == pytest.approx(2 * single, rel=1e-13)


@pytest.mark.parametrize("cls", CLASSES)
def test_split_likelihood_matches_materialized(cls):
    m = small_model(cls, num_vars=4, seed=4)
    X = np.random.default_rng(61).integers(0, 2, size=(20, 4)).astype(float)
    _, ll = nll_batch(m, X)
    vals = evaluate_batch(m.materialized, X)
    want = np.log(vals.real) - np.log(partition_function(m.materialized).real)
    assert np.max(np.abs(ll - want)) <= 1e-10


@pytest.mark.parametrize("cls", CLASSES)
def test_probabilities_sum_to_one(cls):
    from socs.oracle import all_assignments
    m = small_model(cls, num_vars=4, seed=5)
    _, ll = nll_batch(m, all_assignments(m.variables))
    assert math.fsum(np.exp(ll)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("cls", CLASSES)
@pytest.mark.parametrize("real", [False, True])
def test_gradients_match_central_differences(cls, real):
    m = small_model(cls, real=real, seed=6)
    rng = np.random.default_rng(62)
    X = rng.normal(size=(6, 3)) if real else rng.integers(0, 2, size=(6, 3)).astype(float)
    loss, grads, _ = loss_and_grad(m, X)
    assert loss == pytest.approx(nll_batch(m, X)[0], rel=1e-12)
    fd = finite_difference_gradients(lambda: nll_batch(m, X)[0], m.params)
    assert max_relative_error(grads, fd, floor=1e-3) <= 1e-4


def test_zero_learning_rate_changes_nothing():
    m = small_model("squared_complex", seed=7)
    before = {k: g.values.copy() for k, g in m.params.items()}
    X = np.random.default_rng(63).integers(0, 2, size=(40, 3)).astype(float)
    res = fit(m, X, X[:10], TrainConfig(batch_size=8, learning_rate=0.0, max_epochs=4, patience=10))
    assert all(np.array_equal(before[k], g.values) for k, g in m.params.items())
    assert len({r["train_nll"] for r in res.trace}) == 1
    assert res.best_epoch == 0


def test_point_mass_is_learned():
    m = one_var("squared_complex")
    X = np.ones((64, 1))
    fit(m, X, X, TrainConfig(batch_size=16, learning_rate=0.1, max_epochs=200, patience=200))
    _, ll = nll_batch(m, np.array([[1.0]]))
    assert math.exp(ll[0]) >= 0.99


def test_fit_restores_best_validation_checkpoint():
    rng = np.random.default_rng(64)
    X = rng.integers(0, 2, size=(200, 4)).astype(float)
    m = small_model("socs(2)", num_vars=4, seed=8)
    res = fit(m, X[:150], X[150:], TrainConfig(batch_size=25, learning_rate=0.05, max_epochs=15, patience=3))
    best = min(r["valid_nll"] for r in res.trace)
    assert res.best_epoch >= 1
    assert mean_nll(m, X[150:]) == pytest.approx(best, rel=1e-12)
    assert len(res.trace) <= 15


def test_sweep_keeps_lowest_validation():
    rng = np.random.default_rng(65)
    X = rng.integers(0, 2, size=(120, 3)).astype(float)
    cfgs = [TrainConfig(batch_size=30, learning_rate=lr, max_epochs=5) for lr in (0.0, 0.05)]
    res = sweep(lambda i: small_model("squared_real", seed=9), X[:90], X[90:], cfgs)
    assert res.best_index == int(np.argmin(res.valid_nll))
    assert res.valid_nll[1] < res.valid_nll[0]


def test_split_metrics_bits_per_dimension():
    m = one_var("monotone")
    for g in m.params.values():
        g.values[:] = 0.0
    rep = split_metrics(m, np.array([[0.0], [1.0]]))
    assert rep["test_ll_mean"] == pytest.approx(-math.log(2))
    assert rep["bpd"] == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [{"batch_size": 0}, {"learning_rate": -1.0}, {"patience": 0},
                                {"max_epochs": -1}])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_train_config_json():
    cfg = TrainConfig(batch_size=3, learning_rate=0.5)
    assert TrainConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError, match="train.lr"):
        TrainConfig.from_json({"lr": 0.1})


def test_empty_training_set():
    with pytest.raises(ConfigError):
        fit(one_var("monotone"), np.zeros((0, 1)), np.zeros((0, 1)), TrainConfig())
