"""Command-line entry point: train, eval, marginalize, convert, verify."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import serialization as S
from .errors import CircuitError, ConfigError, DomainError, NumericalError
from .evaluate import marginalize, partition_function
from .reductions import born, mps_to_circuit, psd_to_socs, snefy_to_socs
from .training import TrainConfig, mean_nll, split_metrics, sweep
from .verify import SUITES, Context, report, run

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


def metrics_path(out: Path) -> Path:
    return out.with_name(out.stem + ".metrics.json") if out.suffix == ".json" else \
        out.with_name(out.name + ".metrics.json")


def _train_configs(cfg: dict, seed: int | None) -> list[TrainConfig]:
    """One TrainConfig per learning rate; a list of rates is a sweep."""
    train = dict(cfg.get("train", {}))
    if seed is not None:
        train["seed"] = seed
    lrs = train.pop("learning_rate", TrainConfig.learning_rate)
    lrs = lrs if isinstance(lrs, list) else [lrs]
    if not lrs:
        raise ConfigError("train.learning_rate list is empty")
    return [TrainConfig.from_json({**train, "learning_rate": float(lr)}) for lr in lrs]


def cmd_train(args) -> int:
    cfg = S.read_json(args.config)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    cfgs = _train_configs(cfg, args.seed)
    # validate with the first rate so a sweep list does not trip the scalar schema
    S.validate_config({**cfg, "train": cfgs[0].to_json()})
    names, Xtr = S.read_csv(args.data)
    vnames, Xva = S.read_csv(args.valid)
    if "variables" in cfg:
        variables = S.variables_from_json(cfg["variables"])
    else:
        if sorted(vnames) != sorted(names):
            raise DomainError("train and valid CSV headers differ")
        Xva_aligned = Xva[:, [vnames.index(n) for n in names]]
        variables = S.infer_variables(names, np.vstack([Xtr, Xva_aligned]))
    train = S.align_columns(names, Xtr, variables)
    valid = S.align_columns(vnames, Xva, variables)
    model_cfg = {k: v for k, v in cfg.items() if k != "train"}
    res = sweep(lambda i: S.model_from_config(model_cfg, variables), train, valid, cfgs)
    model = res.best.model
    out = Path(args.out)
    stored_cfg = {**model_cfg, "variables": S.variables_to_json(variables),
                  "train": cfgs[res.best_index].to_json()}
    S.write_json(out, S.model_to_json(model, stored_cfg))
    final = {"valid": split_metrics(model, valid), "valid_nll": mean_nll(model, valid)}
    if args.test:
        tnames, Xte = S.read_csv(args.test)
        final["test"] = split_metrics(model, S.align_columns(tnames, Xte, variables))
    metrics = {"epochs": res.best.trace, "best_epoch": res.best.best_epoch,
               "num_parameters": model.num_parameters,
               "sweep": [{"learning_rate": c.learning_rate, "valid_nll": v}
                         for c, v in zip(cfgs, res.valid_nll)],
               "final": final}
    S.write_json(metrics_path(out), metrics)
    print(json.dumps({"model": str(out), "metrics": str(metrics_path(out)), **final["valid"]}))
    return EXIT_OK


def cmd_eval(args) -> int:
    kind, obj = S.load_any(args.model)
    if kind != "model":
        raise ConfigError("eval needs a trained model file")
    names, X = S.read_csv(args.data)
    rep = {**split_metrics(obj, S.align_columns(names, X, obj.variables)), "num_rows": int(X.shape[0])}
    if args.out:
        S.write_json(args.out, rep)
    print(json.dumps(rep))
    return EXIT_OK


def parse_assign(text: str) -> dict[str, float]:
    out = {}
    for part in filter(None, (p.strip() for p in (text or "").split(","))):
        if "=" not in part:
            raise ConfigError(f"bad assignment {part!r}; expected NAME=VALUE")
        k, v = part.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as e:
            raise ConfigError(f"bad value in {part!r}") from e
    return out


def _encode_value(z: complex):
    return z.real if abs(z.imag) <= 1e-12 * max(1.0, abs(z)) else [z.real, z.imag]


def cmd_marginalize(args) -> int:
    kind, obj = S.load_any(args.model)
    c = obj.materialized if kind == "model" else obj
    assign = parse_assign(args.assign)
    names = [v.name for v in c.variables]
    for k, val in assign.items():
        if k not in names:
            raise DomainError(f"unknown variable {k!r}")
        if not c.variables[names.index(k)].domain.contains(val):
            raise DomainError(f"value {val} outside the domain of {k}")
    value = marginalize(c, (), assign)
    rep = {"assignment": assign, "marginal": _encode_value(value)}
    if args.normalize:
        z = partition_function(c)
        if z == 0:
            raise NumericalError("partition function is zero")
        rep["partition_function"] = _encode_value(z)
        rep["normalized"] = _encode_value(value / z)
    print(json.dumps(rep))
    return EXIT_OK


def cmd_convert(args) -> int:
    obj = S.read_json(args.input)
    if args.square and args.source != "mps":
        raise ConfigError("--square applies only to --from mps")
    if args.source == "mps":
        m = S.mps_from_json(obj)
        c = born(m) if args.square else mps_to_circuit(m)
    elif args.source == "psd":
        c = psd_to_socs(S.psd_from_json(obj))
    else:
        c = snefy_to_socs(S.snefy_from_json(obj))
    S.write_json(args.out, S.circuit_to_json(c))
    print(json.dumps({"out": args.out, "units": c.num_units, "size": c.size, "field": c.field}))
    return EXIT_OK


def cmd_verify(args) -> int:
    ctx = Context(seed=args.seed, max_vars=args.max_vars, inject_fault=args.inject_fault)
    cases = run(args.suite, ctx)
    rep = report(args.suite, ctx, cases)
    failed = [c for c in cases if not c.passed]
    if failed:
        rep["replay"] = args.replay
        S.write_json(args.replay, {"suite": args.suite, "seed": ctx.seed, "max_vars": ctx.max_vars,
                                   "failures": [{**c.summary(), "case": c.replay} for c in failed]})
    print(json.dumps(rep, indent=1))
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socs", description="Squared and complex probabilistic circuits.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model from a JSON config and CSV data")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--valid", required=True)
    t.add_argument("--test")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 0)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="mean log-likelihood and bits per dimension")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("marginalize", help="marginal of a model or circuit file")
    m.add_argument("--model", required=True)
    m.add_argument("--assign", default="", help='e.g. "X2=0.5,X7=3"')
    m.add_argument("--normalize", action="store_true")
    m.set_defaults(func=cmd_marginalize)

    c = sub.add_parser("convert", help="MPS, PSD or SNEFY model to a circuit")
    c.add_argument("--from", dest="source", choices=("mps", "psd", "snefy"), required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--square", action="store_true", help="emit the Born machine for an MPS")
    c.set_defaults(func=cmd_convert)

    v = sub.add_parser("verify", help="run property suites against brute-force oracles")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--max-vars", type=int, default=8)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--replay", default="verify_replay.json")
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CircuitError, KeyError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
