"""Command-line surface: train, predict, intervals, importance, sim.

Configuration lives in a single JSON file; command-line flags override
file values. Every command is deterministic given its config, and all
outputs land under the --out directory with fixed filenames.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .boost import BoostParams, BratModel, train
from .data import Dataset, SplitSpec, gen_friedman, gen_sine_quadratic, gen_vi, load_csv, split
from .errors import ConfigError, DataError, NumericalError
from .infer import calibrate_widths, estimate_sigma, interval_batch, variable_importance_test
from .kernel import estimate_K_matrix, nystrom_build
from .scenarios import SCENARIOS, write_csv
from .trees import TreeParams

CONFIG_DEFAULTS = {
    "algo": "brat_d",
    "lambda": 0.8,
    "dropout_p": 0.0,
    "subsample_xi": 1.0,
    "rounds_B": 100,
    "trees_per_round_K": 1,
    "truncation_M": "auto",
    "freeze_after": "off",
    "tree": {"max_depth": 4, "min_leaf": "auto", "split_rule": "greedy_variance", "seed": 0},
    "seed": 0,
    "data": {"kind": "sine_quadratic", "n": 500, "sigma": 0.3, "seed": 1},
    "split": {"train": 0.6, "calib": 0.2, "test": 0.2, "seed": 0},
    "alpha": 0.1,
    "kinds": ["ci", "pi", "ri"],
    "calibrate": {"ci": False, "pi": True, "ri": False},
    "sketch": {"enabled": False, "s": 100, "r": 50, "method": "uniform", "seed": 0},
    "symmetrize": False,
    "kernel_cap": 4000,
    "kernel_dump": False,
    "importance": {"reduced_columns": [0, 1], "holdout_m": 50},
    "scenario": None,
    "sim": {},
    "workers": 1,
    "out": "out",
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _deep_merge(cfg, file_cfg)
    cfg = _deep_merge(cfg, overrides)
    return cfg


def _set_path(target: dict, dotted: str, value):
    keys = dotted.split(".")
    node = target
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _parse_override(expr: str):
    if "=" not in expr:
        raise ConfigError(f"--set takes key=value, got {expr!r}")
    key, raw = expr.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_params(cfg: dict) -> BoostParams:
    tree_cfg = cfg["tree"]
    tree = TreeParams(
        max_depth=tree_cfg["max_depth"],
        min_leaf=tree_cfg["min_leaf"],
        split_rule=tree_cfg["split_rule"],
        seed=tree_cfg.get("seed", 0),
    )
    return BoostParams(
        algo=cfg["algo"],
        lam=cfg["lambda"],
        dropout_p=cfg["dropout_p"],
        subsample_xi=cfg["subsample_xi"],
        rounds_B=cfg["rounds_B"],
        trees_per_round_K=cfg["trees_per_round_K"],
        truncation_M=cfg["truncation_M"],
        freeze_after=cfg["freeze_after"],
        tree=tree,
        seed=cfg["seed"],
    )


def resolve_dataset(data_cfg: dict) -> Dataset:
    kind = data_cfg.get("kind")
    if kind == "csv":
        return load_csv(data_cfg["path"], data_cfg["target"], data_cfg.get("scale", True))
    if kind == "sine_quadratic":
        return gen_sine_quadratic(data_cfg["n"], data_cfg["sigma"], data_cfg.get("seed", 0))
    if kind == "friedman":
        return gen_friedman(data_cfg["n"], data_cfg["sigma"], data_cfg.get("seed", 0))
    if kind == "vi":
        full, _ = gen_vi(data_cfg["n"], data_cfg["sigma"], data_cfg.get("w", 0.0),
                         data_cfg.get("seed", 0))
        return full
    raise ConfigError(f"data.kind must be csv, sine_quadratic, friedman or vi, got {kind!r}")


def resolve_split(cfg: dict, ds: Dataset):
    sp = cfg["split"]
    spec = SplitSpec(sp["train"], sp["calib"], sp["test"], sp.get("seed", 0))
    return split(ds, spec)


def _alpha(cfg) -> float:
    alpha = cfg["alpha"]
    if not isinstance(alpha, (int, float)) or not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0,1), got {alpha}")
    return float(alpha)


def cmd_train(cfg: dict) -> int:
    from .boost import rescale_constant

    params = build_params(cfg)
    ds = resolve_dataset(cfg["data"])
    train_ds, _, _ = resolve_split(cfg, ds)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    y = train_ds.response
    rescale = rescale_constant(params.algo, params.lam, params.q)
    log_rows = []

    def log_round(b, yhat):
        mse = float(np.mean((y - rescale * yhat) ** 2))
        log_rows.append((b, mse))

    model = train(train_ds, params, round_callback=log_round)
    model_path = os.path.join(out, "model.json")
    model.save(model_path)
    write_csv(os.path.join(out, "train_log.csv"), ["round", "train_mse"], log_rows)
    if cfg.get("kernel_dump", False):
        ke = estimate_K_matrix(model, cap=cfg["kernel_cap"])
        header = [str(i) for i in range(train_ds.n)]
        write_csv(os.path.join(out, "kernel.csv"), header,
                  [[float(v) for v in row] for row in ke.Khat])
    print(f"model written to {model_path} ({model.n_trees} trees)")
    return 0


def _kernel_state(cfg: dict, model: BratModel, train_ds: Dataset):
    ke = estimate_K_matrix(model, symmetrize=cfg["symmetrize"], cap=cfg["kernel_cap"])
    sk_cfg = cfg["sketch"]
    if sk_cfg.get("enabled", False):
        return nystrom_build(ke, int(sk_cfg["s"]), sk_cfg.get("method", "uniform"),
                             train_ds.response, int(sk_cfg.get("seed", 0)))
    return ke


def cmd_predict(cfg: dict) -> int:
    out = cfg["out"]
    model_path = cfg.get("model", os.path.join(out, "model.json"))
    model = BratModel.load(model_path)
    ds = resolve_dataset(cfg["data"])
    _, _, test_ds = resolve_split(cfg, ds)
    preds = model.predict(test_ds.features, rescaled=True)
    os.makedirs(out, exist_ok=True)
    rows = [(i, float(preds[i])) for i in range(test_ds.n)]
    write_csv(os.path.join(out, "predictions.csv"), ["point_id", "prediction"], rows)
    print(f"predictions written to {os.path.join(out, 'predictions.csv')}")
    return 0


def cmd_intervals(cfg: dict) -> int:
    out = cfg["out"]
    model_path = cfg.get("model", os.path.join(out, "model.json"))
    model = BratModel.load(model_path)
    ds = resolve_dataset(cfg["data"])
    train_ds, calib_ds, test_ds = resolve_split(cfg, ds)
    alpha = _alpha(cfg)
    kinds = cfg["kinds"]
    for kind in kinds:
        if kind not in ("ci", "pi", "ri"):
            raise ConfigError(f"kinds entries must be ci, pi or ri, got {kind!r}")
    state = _kernel_state(cfg, model, train_ds)
    sigma_hat = estimate_sigma(model, calib_ds).sigma_hat
    rows = []
    for kind in kinds:
        gamma = 1.0
        if cfg["calibrate"].get(kind, False):
            gamma = calibrate_widths(model, state, calib_ds, alpha, kind)
        centers, halves = interval_batch(model, state, test_ds.features, kind,
                                         alpha, sigma_hat, gamma)
        for i in range(test_ds.n):
            rows.append((i, float(centers[i]), float(centers[i] - halves[i]),
                         float(centers[i] + halves[i]), kind, alpha, float(gamma)))
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "intervals.csv"),
              ["point_id", "prediction", "lower", "upper", "kind", "alpha", "gamma"], rows)
    print(f"intervals written to {os.path.join(out, 'intervals.csv')}")
    return 0


def cmd_importance(cfg: dict) -> int:
    params = build_params(cfg)
    alpha = _alpha(cfg)
    imp = cfg["importance"]
    data_cfg = cfg["data"]
    if data_cfg.get("kind") == "vi":
        full, _ = gen_vi(data_cfg["n"], data_cfg["sigma"], data_cfg.get("w", 0.0),
                         data_cfg.get("seed", 0))
        holdout, _ = gen_vi(imp.get("holdout_m", 50), data_cfg["sigma"],
                            data_cfg.get("w", 0.0), data_cfg.get("seed", 0) + 999_983)
    else:
        ds = resolve_dataset(data_cfg)
        full, _, holdout = resolve_split(cfg, ds)
    sketch = None
    if cfg["sketch"].get("enabled", False):
        sketch = {
            "s": cfg["sketch"]["s"],
            "r": cfg["sketch"].get("r", holdout.n),
            "method": cfg["sketch"].get("method", "uniform"),
            "seed": cfg["sketch"].get("seed", 0),
        }
    res = variable_importance_test(full, imp["reduced_columns"], holdout, params,
                                   alpha, sketch=sketch)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "importance.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(res.to_dict(), fh, sort_keys=True, indent=2)
    print(f"importance test written to {path}")
    return 0


def cmd_sim(cfg: dict) -> int:
    name = cfg.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(
            f"scenario must be one of {sorted(SCENARIOS)}, got {name!r}"
        )
    sim_cfg = dict(cfg.get("sim") or {})
    if "workers" not in sim_cfg and cfg.get("workers", 1) != 1:
        sim_cfg["workers"] = cfg["workers"]
    out = os.path.join(cfg["out"], name)
    summary = SCENARIOS[name](sim_cfg, out)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "intervals": cmd_intervals,
    "importance": cmd_importance,
    "sim": cmd_sim,
}


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brat",
                                description="Boosting with built-in uncertainty quantification")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "fit a model and write model.json plus a training log"),
        ("predict", "write test-set predictions for a saved model"),
        ("intervals", "write confidence/prediction/reproduction intervals"),
        ("importance", "run the variable-importance test"),
        ("sim", "run a named simulation scenario"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--model", default=None, help="model file (predict/intervals)")
        sp.add_argument("--scenario", default=None, help="scenario name (sim)")
        sp.add_argument("--algo", default=None, choices=["brat_d", "brat_p", "boulevard"])
        sp.add_argument("--lambda", dest="lam", type=float, default=None)
        sp.add_argument("--dropout-p", type=float, default=None)
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--rounds-B", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, dotted paths allowed")
    return p


def _overrides_from_args(args) -> dict:
    overrides: dict = {}
    direct = {
        "out": args.out,
        "model": args.model,
        "scenario": args.scenario,
        "algo": args.algo,
        "lambda": args.lam,
        "dropout_p": args.dropout_p,
        "alpha": args.alpha,
        "seed": args.seed,
        "rounds_B": args.rounds_B,
        "workers": args.workers,
    }
    for k, v in direct.items():
        if v is not None:
            overrides[k] = v
    for expr in args.set:
        key, value = _parse_override(expr)
        _set_path(overrides, key, value)
    return overrides


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
