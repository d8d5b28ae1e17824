import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from socs import serialization as S
from socs.circuit import CircuitBuilder
from socs.cli import main, metrics_path, parse_assign
from socs.errors import ConfigError
from socs.evaluate import evaluate_batch, partition_function
from socs.oracle import all_assignments, boolean_vars
from socs.reductions import MPS, born
from socs.verify import small_model

CFG = {"model_class": "squared_complex", "layers": {"sum_units": 2, "input_units": 2},
       "region_graph": {"type": "random_binary_tree", "seed": 0},
       "train": {"max_epochs": 3, "batch_size": 20, "learning_rate": 0.05}}


def write_csv(path, names, X):
    rows = [",".join(names)] + [",".join(str(v) for v in r) for r in X]
    path.write_text("\n".join(rows) + "\n")
    return str(path)


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(81)
    X = rng.integers(0, 2, size=(80, 4))
    names = ["A", "B", "C", "D"]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CFG))
    return {"cfg": str(cfg), "train": write_csv(tmp_path / "train.csv", names, X[:60]),
            "valid": write_csv(tmp_path / "valid.csv", names, X[60:]), "dir": tmp_path}


def train(data, out="m.json", extra=()):
    return main(["train", "--config", data["cfg"], "--data", data["train"], "--valid", data["valid"],
                 "--out", str(data["dir"] / out), *extra])


def test_train_writes_model_and_metrics(data, capsys):
    assert train(data) == 0
    out = data["dir"] / "m.json"
    metrics = S.read_json(metrics_path(out))
    assert [e["epoch"] for e in metrics["epochs"]] == [1, 2, 3]
    assert metrics["num_parameters"] == S.load_any(out)[1].num_parameters
    printed = json.loads(capsys.readouterr().out)
    assert printed["test_ll_mean"] == pytest.approx(metrics["final"]["valid"]["test_ll_mean"])


def test_train_is_deterministic(data):
    assert train(data, "a.json") == 0 and train(data, "b.json") == 0
    assert (data["dir"] / "a.json").read_text() == (data["dir"] / "b.json").read_text()


def test_seed_flag_changes_the_model(data):
    assert train(data, "a.json") == 0 and train(data, "b.json", ["--seed", "5"]) == 0
    assert (data["dir"] / "a.json").read_text() != (data["dir"] / "b.json").read_text()
    assert S.read_json(data["dir"] / "b.json")["config"]["seed"] == 5


def test_learning_rate_sweep(data):
    cfg = json.loads(json.dumps(CFG))
    cfg["train"]["learning_rate"] = [0.0, 0.05]
    (data["dir"] / "cfg.json").write_text(json.dumps(cfg))
    assert train(data) == 0
    metrics = S.read_json(metrics_path(data["dir"] / "m.json"))
    scores = [s["valid_nll"] for s in metrics["sweep"]]
    chosen = S.read_json(data["dir"] / "m.json")["config"]["train"]["learning_rate"]
    assert chosen == [0.0, 0.05][int(np.argmin(scores))]


def test_eval_matches_training_metrics(data, capsys):
    assert train(data) == 0
    capsys.readouterr()
    rep_path = data["dir"] / "rep.json"
    assert main(["eval", "--model", str(data["dir"] / "m.json"), "--data", data["valid"],
                 "--out", str(rep_path)]) == 0
    rep = S.read_json(rep_path)
    want = S.read_json(metrics_path(data["dir"] / "m.json"))["final"]["valid"]
    assert rep["test_ll_mean"] == pytest.approx(want["test_ll_mean"], rel=1e-12)
    assert rep["num_rows"] == 20
    assert rep["bpd"] == pytest.approx(-rep["test_ll_mean"] / (4 * math.log(2)))


def test_eval_uniform_model(tmp_path, capsys):
    m = small_model("monotone", num_vars=1)
    for g in m.params.values():
        g.values[:] = 0.0
    cfg = {"model_class": "monotone", "layers": {"sum_units": 2, "input_units": 2},
           "region_graph": {"type": "random_binary_tree", "seed": 0}, "seed": 0}
    S.write_json(tmp_path / "u.json", S.model_to_json(m, cfg))
    csv = write_csv(tmp_path / "x.csv", ["X1"], [[0], [1], [1]])
    assert main(["eval", "--model", str(tmp_path / "u.json"), "--data", csv]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["test_ll_mean"] == pytest.approx(-math.log(2), abs=1e-14)
    assert rep["bpd"] == pytest.approx(1.0)


def saved_model(tmp_path, cls="squared_complex", n=6, seed=3):
    m = small_model(cls, num_vars=n, seed=seed)
    cfg = {"model_class": cls, "layers": {"sum_units": 2, "input_units": 2},
           "region_graph": {"type": "random_binary_tree", "seed": seed}, "seed": seed}
    path = tmp_path / "model.json"
    S.write_json(path, S.model_to_json(m, cfg))
    return m, str(path)


def test_marginalize_matches_enumeration(tmp_path, capsys):
    m, path = saved_model(tmp_path)
    assert main(["marginalize", "--model", path, "--assign", "X2=1,X5=0", "--normalize"]) == 0
    rep = json.loads(capsys.readouterr().out)
    X = all_assignments(m.variables)
    vals = evaluate_batch(m.materialized, X).real
    sel = (X[:, 1] == 1) & (X[:, 4] == 0)
    assert rep["marginal"] == pytest.approx(vals[sel].sum(), rel=1e-10)
    assert rep["partition_function"] == pytest.approx(vals.sum(), rel=1e-10)
    assert rep["normalized"] == pytest.approx(vals[sel].sum() / vals.sum(), rel=1e-10)


def test_marginalize_without_evidence_is_z(tmp_path, capsys):
    m, path = saved_model(tmp_path, "socs(2)", 4)
    assert main(["marginalize", "--model", path]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["marginal"] == pytest.approx(partition_function(m.materialized).real, rel=1e-12)


@pytest.mark.parametrize("assign", ["Q=1", "X1=3", "X1"])
def test_marginalize_bad_assignment(tmp_path, assign):
    _, path = saved_model(tmp_path, n=3)
    assert main(["marginalize", "--model", path, "--assign", assign]) == 2


def test_parse_assign():
    assert parse_assign(" X2=0.5, X7=3 ") == {"X2": 0.5, "X7": 3.0}
    with pytest.raises(ConfigError):
        parse_assign("X2=abc")


def test_zero_partition_function_exits_3(tmp_path):
    b = CircuitBuilder(boolean_vars(2))
    c = b.build(b.sum([b.product([b.indicator(0, 1), b.indicator(1, 1)])], [0.0]))
    S.write_json(tmp_path / "z.json", S.circuit_to_json(c))
    assert main(["marginalize", "--model", str(tmp_path / "z.json"), "--normalize"]) == 3


def test_convert_mps_born(tmp_path):
    m = MPS.random(4, 2, 2, np.random.default_rng(82))
    S.write_json(tmp_path / "mps.json", S.mps_to_json(m))
    out = tmp_path / "born.json"
    assert main(["convert", "--from", "mps", "--input", str(tmp_path / "mps.json"), "--out", str(out),
                 "--square"]) == 0
    c = S.load_any(out)[1]
    X = all_assignments(c.variables)
    want = np.array([abs(m.amplitude(x.astype(int))) ** 2 for x in X])
    got = evaluate_batch(c, X).real
    assert np.max(np.abs(got - want)) <= 1e-12 * want.max()
    assert np.allclose(got, evaluate_batch(born(m), X).real, rtol=1e-13, atol=0)


def test_convert_psd(tmp_path):
    comps = [small_model("squared_real", num_vars=3, seed=0).components[0] for _ in range(2)]
    obj = {"components": [S.circuit_to_json(c) for c in comps], "A": [[2.0, 1.0], [1.0, 2.0]]}
    S.write_json(tmp_path / "psd.json", obj)
    out = tmp_path / "c.json"
    assert main(["convert", "--from", "psd", "--input", str(tmp_path / "psd.json"), "--out", str(out)]) == 0
    X = all_assignments(comps[0].variables)
    C = np.stack([evaluate_batch(c, X).real for c in comps], axis=1)
    want = np.einsum("bi,ij,bj->b", C, np.array(obj["A"]), C)
    got = evaluate_batch(S.load_any(out)[1], X).real
    assert np.max(np.abs(got - want)) <= 1e-10 * want.max()


@pytest.mark.parametrize("args", [
    ["--from", "psd", "--square"],
    ["--from", "snefy"],
])
def test_convert_usage_errors(tmp_path, args):
    (tmp_path / "in.json").write_text("{bad")
    assert main(["convert", *args, "--input", str(tmp_path / "in.json"), "--out", str(tmp_path / "o.json")]) == 2


def test_train_schema_errors(data):
    (data["dir"] / "cfg.json").write_text(json.dumps({"model_class": "nope"}))
    assert train(data) == 2
    (data["dir"] / "cfg.json").write_text(json.dumps({**CFG, "colour": 1}))
    assert train(data) == 2


def test_verify_passes(capsys):
    assert main(["verify", "--suite", "semiring", "--max-vars", "5"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and rep["num_failed"] == 0


def test_verify_injected_fault_writes_replay(tmp_path, capsys):
    replay = tmp_path / "replay.json"
    assert main(["verify", "--suite", "multiply", "--max-vars", "5", "--inject-fault",
                 "--replay", str(replay)]) == 1
    rep = S.read_json(replay)
    assert rep["failures"] and rep["suite"] == "multiply"
    assert "case" in rep["failures"][0]


def test_console_script():
    exe = shutil.which("socs")
    cmd = [exe] if exe else [sys.executable, "-m", "socs.cli"]
    res = subprocess.run(cmd + ["verify", "--suite", "structural", "--max-vars", "4"],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["suite"] == "structural"
