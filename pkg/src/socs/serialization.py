"""JSON and CSV formats: circuits, trained models, MPS, PSD and SNEFY
inputs, graphs, and header-bearing data files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .circuit import INPUT, PRODUCT, SUM, Circuit, Unit
from .domains import Finite, Interval, Variable, domain_from_json
from .errors import ConfigError, DomainError
from .leaves import Categorical, Embedding, ExpQuadratic, Gaussian, Indicator, Polynomial
from .params import ParamGroup, ParamStore, Weight
from .reductions import MPS, FiniteFactor, GaussianFactor, PSDModel, SNEFYSpec
from .tensorized import LayerSpec, Model, RegionGraph, build_model, quad_tree, random_binary_tree
from .training import TrainConfig

FORMAT_VERSION = 1


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators."""
    return json.dumps(obj, sort_keys=True, indent=1)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


# numbers ---------------------------------------------------------------------

def encode_complex(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def encode_array(a, complex_: bool):
    a = np.asarray(a)
    if complex_:
        return np.stack([a.real, a.imag], axis=-1).tolist()
    return a.real.tolist()


def decode_array(obj, complex_: bool) -> np.ndarray:
    a = np.asarray(obj, dtype=float)
    if complex_:
        if a.shape[-1] != 2:
            raise ConfigError("complex entries must be [re, im] pairs")
        return a[..., 0] + 1j * a[..., 1]
    return a


def variables_to_json(variables: Sequence[Variable]) -> list:
    return [{"name": v.name, "domain": v.domain.to_json()} for v in variables]


def variables_from_json(obj) -> tuple[Variable, ...]:
    try:
        return tuple(Variable(str(v["name"]), domain_from_json(v["domain"])) for v in obj)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed variable table: {e}") from e


# circuits --------------------------------------------------------------------

def _factor_to_json(f, params, conj: bool) -> dict:
    if isinstance(f, Indicator):
        out = {"type": "indicator", "value": f.value}
    elif isinstance(f, Categorical):
        out = {"type": "categorical", "probabilities": f.vector(params, f.size).real.tolist()}
    elif isinstance(f, Embedding):
        vec = f.vector(params, f.size)
        cplx = bool(np.any(vec.imag != 0)) or params[f.group].is_complex
        out = {"type": "embedding", "entries": encode_array(vec, cplx), "complex": cplx}
    elif isinstance(f, Gaussian):
        mu, ls = f.moments(params)
        out = {"type": "gaussian", "mean": mu, "log_stddev": ls}
    elif isinstance(f, ExpQuadratic):
        out = {"type": "exp_quadratic", "coefficients": [encode_complex(a) for a in (f.a0, f.a1, f.a2)]}
    else:
        out = {"type": "polynomial", "coefficients": list(f.coefficients),
               "interval": None if f.interval is None else list(f.interval)}
    if conj:
        out["conjugate"] = True
    return out


def _term_to_json(term, params) -> dict:
    if len(term) == 1:
        f, conj = term[0]
        return _factor_to_json(f, params, conj)
    return {"type": "product", "factors": [_factor_to_json(f, params, c) for f, c in term]}


def circuit_to_json(c: Circuit) -> dict:
    units = []
    for uid, u in enumerate(c.units):
        rec: dict = {"id": uid, "kind": u.kind}
        if u.kind == INPUT:
            rec["var"] = u.var
            rec["function"] = _term_to_json(u.term, c.params)
        else:
            rec["inputs"] = list(u.inputs)
            if u.kind == SUM:
                w = c.weight_values(uid)
                rec["weights"] = encode_array(w, c.field == "complex")
        units.append(rec)
    return {"format_version": FORMAT_VERSION, "kind": "circuit", "field": c.field,
            "variables": variables_to_json(c.variables), "units": units, "output": c.output}


def _factor_from_json(obj, params: ParamStore, tag: str):
    t = obj.get("type")
    conj = bool(obj.get("conjugate", False))
    if t == "indicator":
        return Indicator(int(obj["value"])), conj
    if t == "categorical":
        p = np.asarray(obj["probabilities"], dtype=float)
        if np.any(p < 0):
            raise ConfigError("categorical probabilities must be nonnegative")
        g = params.add(ParamGroup(tag, p, trainable=False))
        return Categorical(g.name, 0, p.size), conj
    if t == "embedding":
        vec = decode_array(obj["entries"], bool(obj.get("complex", False)))
        g = params.add(ParamGroup(tag, vec, trainable=False))
        return Embedding(g.name, 0, vec.size), conj
    if t == "gaussian":
        g = params.add(ParamGroup(tag, np.array([float(obj["mean"]), float(obj["log_stddev"])]),
                                  trainable=False))
        return Gaussian(g.name, 0), conj
    if t == "exp_quadratic":
        a = decode_array(obj["coefficients"], True)
        return ExpQuadratic(complex(a[0]), complex(a[1]), complex(a[2])), conj
    if t == "polynomial":
        iv = obj.get("interval")
        return Polynomial(tuple(float(x) for x in obj["coefficients"]),
                          None if iv is None else (float(iv[0]), float(iv[1]))), conj
    raise ConfigError(f"unknown input function type {t!r}")


def circuit_from_json(obj: Mapping, prefix: str = "") -> Circuit:
    try:
        field = obj["field"]
        if field not in ("real", "complex"):
            raise ConfigError(f"unsupported field {field!r}")
        variables = variables_from_json(obj["variables"])
        params = ParamStore()
        units = []
        for pos, rec in enumerate(obj["units"]):
            if int(rec.get("id", pos)) != pos:
                raise ConfigError("unit ids must be 0..n-1 in order")
            kind = rec["kind"]
            if kind == INPUT:
                fn = rec["function"]
                raw = fn["factors"] if fn.get("type") == "product" else [fn]
                term = tuple(_factor_from_json(f, params, f"{prefix}u{pos}.{k}") for k, f in enumerate(raw))
                units.append(Unit(INPUT, var=int(rec["var"]), term=term))
            elif kind == SUM:
                w = decode_array(rec["weights"], field == "complex").reshape(-1)
                units.append(Unit(SUM, tuple(int(i) for i in rec["inputs"]),
                                  tuple(Weight(complex(x), ()) for x in w)))
            elif kind == PRODUCT:
                units.append(Unit(PRODUCT, tuple(int(i) for i in rec["inputs"])))
            else:
                raise ConfigError(f"unknown unit kind {kind!r}")
        return Circuit(variables, units, int(obj["output"]), field, params)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed circuit JSON: missing or bad {e}") from e


# models ----------------------------------------------------------------------

def region_graph_from_config(cfg: Mapping, num_vars: int) -> RegionGraph:
    rgc = cfg.get("region_graph", {"type": "random_binary_tree"})
    t = rgc.get("type", "random_binary_tree")
    if t == "random_binary_tree":
        return random_binary_tree(num_vars, int(rgc.get("seed", 0)))
    if t == "quad_tree":
        shape = rgc.get("image_shape")
        if not shape or len(shape) not in (2, 3):
            raise ConfigError("region_graph.image_shape must be [height, width] or [h, w, channels]")
        h, w = int(shape[0]), int(shape[1])
        ch = int(shape[2]) if len(shape) == 3 else 1
        if h * w * ch != num_vars:
            raise ConfigError("region_graph.image_shape does not match the number of columns")
        return quad_tree(h, w, ch)
    raise ConfigError(f"unknown region_graph.type {t!r}")


CONFIG_KEYS = {"region_graph", "layers", "model_class", "input_family", "train", "seed", "variables"}


def validate_config(cfg: Mapping) -> None:
    if not isinstance(cfg, Mapping):
        raise ConfigError("config must be a JSON object")
    for k in cfg:
        if k not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {k!r}")
    layers = cfg.get("layers", {})
    for k in layers:
        if k not in ("sum_units", "input_units"):
            raise ConfigError(f"unknown key layers.{k}")
    if "model_class" not in cfg:
        raise ConfigError("config is missing model_class")
    layer_spec(cfg)
    TrainConfig.from_json(cfg.get("train", {}))


def layer_spec(cfg: Mapping) -> LayerSpec:
    layers = cfg.get("layers", {})
    try:
        return LayerSpec(int(layers.get("sum_units", 2)), int(layers.get("input_units", 2)),
                         str(cfg["model_class"]), str(cfg.get("input_family", "auto")),
                         int(cfg.get("seed", 0)))
    except ConfigError as e:
        key = "model_class" if "model_class" in str(e) else "layers"
        raise ConfigError(f"{key}: {e}") from e


def model_from_config(cfg: Mapping, variables: Sequence[Variable]) -> Model:
    validate_config(cfg)
    rg = region_graph_from_config(cfg, len(variables))
    return build_model(rg, variables, layer_spec(cfg))


def model_to_json(model: Model, config: Mapping) -> dict:
    params = {}
    for name in sorted(model.params):
        g = model.params[name]
        params[name] = {"values": encode_array(g.values, g.is_complex), "complex": g.is_complex,
                        "transform": g.transform, "trainable": g.trainable}
    return {"format_version": FORMAT_VERSION, "kind": "model", "config": dict(config),
            "variables": variables_to_json(model.variables),
            "region_graph": model.rg.to_json(), "params": params}


def model_from_json(obj: Mapping) -> Model:
    check_version(obj)
    if obj.get("kind") != "model":
        raise ConfigError("expected a model file")
    variables = variables_from_json(obj["variables"])
    model = model_from_config(obj["config"], variables)
    stored = obj["params"]
    if set(stored) != set(model.params):
        raise ConfigError("stored parameters do not match the configured architecture")
    for name, rec in stored.items():
        vals = decode_array(rec["values"], bool(rec.get("complex", False)))
        g = model.params[name]
        if vals.shape != g.values.shape:
            raise ConfigError(f"parameter {name} has shape {vals.shape}, expected {g.values.shape}")
        g.values[...] = vals
    return model


def check_version(obj: Mapping) -> None:
    v = obj.get("format_version")
    if v != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {v!r}")


def load_any(path) -> tuple[str, Any]:
    """("model", Model) or ("circuit", Circuit)."""
    obj = read_json(path)
    check_version(obj)
    if obj.get("kind") == "model":
        return "model", model_from_json(obj)
    if obj.get("kind") == "circuit":
        return "circuit", circuit_from_json(obj)
    raise ConfigError(f"{path}: unknown file kind {obj.get('kind')!r}")


# external model formats --------------------------------------------------------

def mps_from_json(obj: Mapping) -> MPS:
    try:
        cplx = obj.get("field", "real") == "complex"
        tensors = [decode_array(t, cplx) for t in obj["tensors"]]
        m = MPS(tensors)
        for key in ("d", "v", "r"):
            if key in obj and int(obj[key]) != getattr(m, key):
                raise ConfigError(f"MPS field {key}={obj[key]} disagrees with the tensors")
        return m
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed MPS JSON: {e}") from e


def mps_to_json(m: MPS) -> dict:
    cplx = m.field == "complex"
    return {"field": m.field, "d": m.d, "v": m.v, "r": m.r,
            "tensors": [encode_array(t, cplx) for t in m.tensors]}


def psd_from_json(obj: Mapping) -> PSDModel:
    try:
        comps = [circuit_from_json(c, f"c{i}.") for i, c in enumerate(obj["components"])]
        return PSDModel(comps, np.asarray(obj["A"], dtype=float))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed PSD JSON: {e}") from e


def snefy_from_json(obj: Mapping) -> SNEFYSpec:
    try:
        factors = []
        for f in obj["factors"]:
            if f["type"] == "finite":
                factors.append(FiniteFactor(np.asarray(f["stats"], dtype=float),
                                            np.asarray(f["base"], dtype=float)))
            elif f["type"] == "gaussian":
                factors.append(GaussianFactor(float(f["mean"]), float(f["std"])))
            else:
                raise ConfigError(f"unknown SNEFY factor type {f['type']!r}")
        return SNEFYSpec(obj["sigma"], obj["V"], obj["W"], obj["b"], factors)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed SNEFY JSON: {e}") from e


def snefy_to_json(s: SNEFYSpec) -> dict:
    factors = []
    for f in s.factors:
        if isinstance(f, FiniteFactor):
            factors.append({"type": "finite", "stats": f.stats.tolist(), "base": f.base.tolist()})
        else:
            factors.append({"type": "gaussian", "mean": f.mean, "std": f.std})
    return {"sigma": s.sigma, "V": s.V.tolist(), "W": s.W.tolist(), "b": s.b.tolist(),
            "factors": factors}


# CSV ---------------------------------------------------------------------------

def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ConfigError(f"{path}: duplicate column names")
    data = []
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ConfigError(f"{path}: line {k} has {len(row)} fields, expected {len(header)}")
        try:
            data.append([float(x) for x in row])
        except ValueError as e:
            raise ConfigError(f"{path}: line {k}: {e}") from e
    return header, np.asarray(data, dtype=float).reshape(-1, len(header))


def infer_variables(names: Sequence[str], X: np.ndarray) -> tuple[Variable, ...]:
    """Integer-coded columns become finite (size max + 1, at least 2); others real."""
    out = []
    for j, n in enumerate(names):
        col = X[:, j]
        if col.size and np.all(col == np.round(col)) and col.min() >= 0:
            out.append(Variable(n, Finite(max(2, int(col.max()) + 1))))
        else:
            out.append(Variable(n, Interval()))
    return tuple(out)


def align_columns(names: Sequence[str], X: np.ndarray, variables: Sequence[Variable]) -> np.ndarray:
    """Reorder CSV columns to the variable table and range-check values."""
    want = [v.name for v in variables]
    if sorted(names) != sorted(want):
        missing = sorted(set(want) - set(names))
        extra = sorted(set(names) - set(want))
        raise DomainError(f"CSV columns do not match the model variables (missing {missing}, extra {extra})")
    idx = [list(names).index(n) for n in want]
    Y = X[:, idx]
    for j, v in enumerate(variables):
        col = Y[:, j]
        if isinstance(v.domain, Finite):
            ok = (col == np.round(col)) & (col >= 0) & (col < v.domain.size)
        else:
            ok = (col >= v.domain.low) & (col <= v.domain.high)
        if not np.all(ok):
            raise DomainError(f"column {v.name} has values outside {v.domain.to_json()}")
    return Y
