"""Command-line front end for training, scoring, and the experiment harnesses.

Every command that writes artifacts also writes a manifest recording the
resolved configuration, the seed, the artifact paths, and the wall time, so
a run can be reproduced exactly.  JSON numbers are rounded to 6 significant
digits; error rates print with 4 decimals.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
import time

from . import __version__
from .baselines import classification_error, train_lr, train_regularized_lr
from .cutgen import EngineError
from .data import (
    DataError,
    DatasetEncoding,
    DatasetSchema,
    apply_numeric_scaling,
    encode_csv,
    generate_synthetic,
    ingest_csv,
    numeric_stats,
    write_csv,
)
from .experiments import (
    ExperimentError,
    benchmark,
    cross_validate,
    default_epsilon_grid,
    default_gamma_grid,
    runtime_study,
    stylized_comparison,
    train_dro,
)
from .formulation import (
    FormulationError,
    FormulationOptions,
    ModelParams,
    build_continuous_model,
    solve_master,
)
from .metric import SUPPORTED_NORMS, GroundMetricConfig
from .solver import SolverFailure


class ConfigError(ValueError):
    """Bad flags, config files, or model files."""


class _Parser(argparse.ArgumentParser):
    # usage problems should exit 1 like other config errors, not argparse's 2
    def error(self, message):
        raise ConfigError(message)


def round_sig(value: float, digits: int = 6) -> float:
    if value == 0.0 or not math.isfinite(value):
        return value
    return round(value, digits - 1 - int(math.floor(math.log10(abs(value)))))


def round_floats(obj):
    """Round every float in a JSON-style structure to 6 significant digits."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {key: round_floats(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(value) for value in obj]
    return obj


def write_json_atomic(path, payload):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    os.replace(tmp, path)


def _manifest_path(out: str) -> str:
    if os.path.isdir(out):
        return os.path.join(out, "manifest.json")
    base = out[:-5] if out.endswith(".json") else out
    return base + ".manifest.json"


def _write_manifest(command: str, out: str, config: dict, seed, artifacts, started: float):
    payload = {
        "command": command,
        "config": round_floats(config),
        "seed": seed,
        "artifacts": [os.path.abspath(a) for a in artifacts],
        "version": __version__,
        "wall_time_s": round_sig(time.perf_counter() - started),
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    write_json_atomic(_manifest_path(out), payload)


def _load_config_file(path) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _resolve(args, config: dict, key: str, default=None):
    """Flag value if given, else config-file value, else the default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _parse_kappa(raw, m: int) -> float:
    if raw is None:
        return 1.0
    if isinstance(raw, str) and raw.strip().lower() == "m":
        if m < 1:
            raise ConfigError("kappa 'm' needs at least one categorical feature")
        return float(m)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"kappa must be a positive number or 'm', got {raw!r}") from None
    if value <= 0:
        raise ConfigError("kappa must be positive")
    return value


def _metric(args, config: dict, m: int) -> GroundMetricConfig:
    weights = config.get("weights")
    return GroundMetricConfig(
        norm=_resolve(args, config, "norm", "l1"),
        p=float(_resolve(args, config, "p", 1.0)),
        kappa=_parse_kappa(_resolve(args, config, "kappa"), m),
        weights=None if weights is None else tuple(float(w) for w in weights),
    )


def _require(args, config: dict, key: str):
    value = _resolve(args, config, key)
    if value is None:
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return value


def _int_list(raw) -> list[int]:
    if isinstance(raw, (list, tuple)):
        return [int(v) for v in raw]
    try:
        return [int(part) for part in str(raw).split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {raw!r}") from None


def _outdir(args, config: dict) -> str:
    out = str(_require(args, config, "out"))
    os.makedirs(out, exist_ok=True)
    return out


def _load_training_data(args, config: dict):
    schema = DatasetSchema.from_json(_require(args, config, "schema"))
    dataset = ingest_csv(_require(args, config, "data"), schema)
    mean = scale = None
    if schema.scale_numeric and dataset.n:
        mean, scale = numeric_stats(dataset)
        dataset = apply_numeric_scaling(dataset, mean, scale)
    encoding = DatasetEncoding.from_dataset(
        dataset, mean=mean, scale=scale, missing_token=schema.missing_token
    )
    return dataset, schema, encoding


TRAIN_METHODS = ("lr", "rlr", "dro", "dro-continuous")


def cmd_train(args, started: float) -> int:
    config = _load_config_file(args.config)
    dataset, _, encoding = _load_training_data(args, config)
    method = _resolve(args, config, "method", "lr")
    if method not in TRAIN_METHODS:
        raise ConfigError(f"unknown method {method!r}; pick one of {', '.join(TRAIN_METHODS)}")
    eps = float(_resolve(args, config, "epsilon", 0.0))
    gamma = float(_resolve(args, config, "gamma", 0.0))
    metric = _metric(args, config, dataset.m)

    if method == "lr":
        params = train_lr(dataset)
    elif method == "rlr":
        params = train_regularized_lr(dataset, gamma)
    elif method == "dro":
        params = train_dro(dataset, eps, metric, gamma=gamma)
    else:
        if dataset.m:
            raise ConfigError("dro-continuous needs a schema with no categorical columns")
        if eps == 0:
            params = train_regularized_lr(dataset, gamma) if gamma > 0 else train_lr(dataset)
        else:
            options = FormulationOptions(l1_penalty=gamma)
            program, index = build_continuous_model(dataset, eps, metric, options)
            params = solve_master(program, index, dataset, context="continuous fit").params

    out = str(_require(args, config, "out"))
    resolved = {
        "data": str(_require(args, config, "data")),
        "schema": str(_require(args, config, "schema")),
        "method": method,
        "epsilon": eps,
        "gamma": gamma,
        "kappa": metric.kappa,
        "norm": metric.norm,
        "p": metric.p,
        "out": out,
    }
    payload = {
        "format": "robust-logit-model",
        "version": __version__,
        "method": method,
        "hyperparameters": {"epsilon": eps, "gamma": gamma, "kappa": metric.kappa,
                            "norm": metric.norm, "p": metric.p},
        "params": params.to_dict(),
        "encoding": encoding.to_dict(),
        "training_error": classification_error(params, dataset),
    }
    write_json_atomic(out, round_floats(payload))
    _write_manifest("train", out, resolved, None, [out], started)
    return 0


def cmd_eval(args, started: float) -> int:
    with open(args.model, encoding="utf-8") as handle:
        payload = json.load(handle)
    try:
        params = ModelParams.from_dict(payload["params"])
        encoding = DatasetEncoding.from_dict(payload["encoding"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{args.model}: not a model file ({exc})") from exc
    dataset = encode_csv(args.data, encoding)
    if len(params.beta_num) != dataset.n or len(params.beta_cat) != dataset.k:
        raise ConfigError(
            f"model dimensions (n={len(params.beta_num)}, k={len(params.beta_cat)}) "
            f"do not match the data (n={dataset.n}, k={dataset.k})"
        )
    error = classification_error(params, dataset)
    print(f"{error:.4f}")
    if args.out:
        write_json_atomic(args.out, round_floats({"error": error, "rows": dataset.N}))
        _write_manifest("eval", args.out, {"model": args.model, "data": args.data},
                        None, [args.out], started)
    return 0


def cmd_cv(args, started: float) -> int:
    config = _load_config_file(args.config)
    dataset, _, _ = _load_training_data(args, config)
    method = _resolve(args, config, "method", "dro")
    folds = int(_resolve(args, config, "folds", 5))
    seed = int(_resolve(args, config, "seed", 0))
    metric = _metric(args, config, dataset.m)

    if method == "rlr":
        values = config.get("gamma_grid") or default_gamma_grid()
        fit = lambda ds, v: train_regularized_lr(ds, v)
    elif method == "dro":
        values = config.get("epsilon_grid") or default_epsilon_grid()
        fit = lambda ds, v: train_dro(ds, v, metric)
    else:
        raise ConfigError(f"method {method!r} has no hyperparameter to tune (pick rlr or dro)")

    result = cross_validate(dataset, fit, values, folds, seed)
    out = str(_require(args, config, "out"))
    payload = {"method": method, "folds": folds, "seed": seed, **result.to_dict()}
    write_json_atomic(out, round_floats(payload))
    resolved = {
        "data": str(_require(args, config, "data")),
        "schema": str(_require(args, config, "schema")),
        "method": method, "folds": folds,
        "kappa": metric.kappa, "norm": metric.norm, "p": metric.p,
        "values": [float(v) for v in values], "out": out,
    }
    _write_manifest("cv", out, resolved, seed, [out], started)
    return 0


def cmd_bench(args, started: float) -> int:
    config = _load_config_file(args.config)
    dataset, schema, _ = _load_training_data(args, config)
    methods = _resolve(args, config, "methods")
    methods = tuple(str(methods).split(",")) if methods else ("lr", "rlr", "dro-k1", "dro-km")
    repeats = int(_resolve(args, config, "repeats", 20))
    folds = int(_resolve(args, config, "folds", 5))
    seed = int(_resolve(args, config, "seed", 0))
    workers = int(_resolve(args, config, "workers", os.cpu_count() or 1))
    fraction = float(_resolve(args, config, "train_fraction", 0.8))
    norm = _resolve(args, config, "norm", "l1")
    p = float(_resolve(args, config, "p", 1.0))

    report = benchmark(
        dataset,
        methods=methods,
        repeats=repeats,
        seed=seed,
        epsilon_grid=config.get("epsilon_grid"),
        gamma_grid=config.get("gamma_grid"),
        folds=folds,
        train_fraction=fraction,
        norm=norm,
        p=p,
        scale_numeric=schema.scale_numeric,
        workers=workers,
    )
    out = _outdir(args, config)
    report_path = os.path.join(out, "bench.json")
    write_json_atomic(report_path, round_floats(report.to_dict()))
    for method, median in sorted(report.median_errors.items()):
        print(f"{method}: median test error {median:.4f}")
    resolved = {
        "data": str(_require(args, config, "data")),
        "schema": str(_require(args, config, "schema")),
        "methods": list(methods), "repeats": repeats, "folds": folds,
        "train_fraction": fraction, "norm": norm, "p": p,
        "workers": workers, "out": out,
    }
    _write_manifest("bench", out, resolved, seed, [report_path], started)
    return 0


def cmd_synth(args, started: float) -> int:
    config = _load_config_file(args.config)
    n_rows = int(_require(args, config, "n"))
    m = int(_require(args, config, "m"))
    seed = int(_resolve(args, config, "seed", 0))
    dataset, truth = generate_synthetic(n_rows, m, seed)
    out = _outdir(args, config)
    data_path = os.path.join(out, "data.csv")
    truth_path = os.path.join(out, "truth.json")
    write_csv(dataset, data_path)
    write_json_atomic(truth_path, round_floats(truth.to_dict()))
    _write_manifest("synth", out, {"n": n_rows, "m": m, "out": out},
                    seed, [data_path, truth_path], started)
    return 0


def cmd_runtime(args, started: float) -> int:
    config = _load_config_file(args.config)
    n_values = _int_list(_resolve(args, config, "n_list", "50"))
    m_values = _int_list(_resolve(args, config, "m_list", "6,8,10,12"))
    reps = int(_resolve(args, config, "reps", 3))
    seed = int(_resolve(args, config, "seed", 0))
    eps = float(_resolve(args, config, "epsilon", 0.1))
    time_cap = float(_resolve(args, config, "time_cap", 600.0))
    norm = _resolve(args, config, "norm", "l1")
    p = float(_resolve(args, config, "p", 1.0))
    kappa = _parse_kappa(_resolve(args, config, "kappa"), max(m_values))
    include_monolithic = bool(_resolve(args, config, "monolithic", True))

    report = runtime_study(
        n_values, m_values, seed=seed, reps=reps, eps=eps, kappa=kappa,
        norm=norm, p=p, time_cap=time_cap, include_monolithic=include_monolithic,
    )
    out = _outdir(args, config)
    csv_path = os.path.join(out, "runtime.csv")
    json_path = os.path.join(out, "runtime.json")
    report.to_csv(csv_path)
    write_json_atomic(json_path, round_floats({
        "summary": report.summary(),
        "max_objective_gap": report.max_objective_gap(),
        "time_cap": time_cap,
    }))
    resolved = {
        "n_list": n_values, "m_list": m_values, "reps": reps, "epsilon": eps,
        "kappa": kappa, "norm": norm, "p": p, "time_cap": time_cap,
        "monolithic": include_monolithic, "out": out,
    }
    _write_manifest("runtime", out, resolved, seed, [csv_path, json_path], started)
    return 0


def cmd_stylized(args, started: float) -> int:
    config = _load_config_file(args.config)
    n_values = _int_list(_resolve(args, config, "n_list", "10,25,50,100,250,500,1000"))
    runs = int(_resolve(args, config, "runs", 100))
    seed = int(_resolve(args, config, "seed", 0))
    c = float(_resolve(args, config, "c", 0.35))
    kappa = _parse_kappa(_resolve(args, config, "kappa"), 1)
    workers = int(_resolve(args, config, "workers", os.cpu_count() or 1))

    report = stylized_comparison(n_values, runs=runs, seed=seed, c=c,
                                 kappa=kappa, workers=workers)
    out = _outdir(args, config)
    json_path = os.path.join(out, "stylized.json")
    write_json_atomic(json_path, round_floats(report.to_dict()))
    resolved = {"n_list": n_values, "runs": runs, "c": c, "kappa": kappa,
                "workers": workers, "out": out}
    _write_manifest("stylized", out, resolved, seed, [json_path], started)
    return 0


def _add_flags(parser, *names):
    flags = {
        "data": lambda: parser.add_argument("--data", help="input CSV path"),
        "schema": lambda: parser.add_argument("--schema", help="schema JSON path"),
        "out": lambda: parser.add_argument("--out", help="output file or directory"),
        "seed": lambda: parser.add_argument("--seed", type=int, help="top-level RNG seed"),
        "workers": lambda: parser.add_argument("--workers", type=int, help="parallel worker count"),
        "epsilon": lambda: parser.add_argument("--epsilon", type=float, help="ambiguity radius"),
        "gamma": lambda: parser.add_argument("--gamma", type=float, help="L1 penalty weight"),
        "kappa": lambda: parser.add_argument("--kappa", help="label-flip cost, a number or 'm'"),
        "norm": lambda: parser.add_argument("--norm", choices=list(SUPPORTED_NORMS)),
        "p": lambda: parser.add_argument("--p", type=float, help="categorical distance exponent"),
        "time_cap": lambda: parser.add_argument("--time-cap", type=float, dest="time_cap",
                                                help="wall-time cap in seconds"),
        "config": lambda: parser.add_argument("--config", help="JSON config file; flags override it"),
    }
    for name in names:
        flags[name]()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustlogit",
                     description="Robust logistic regression over mixed features")
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", help="fit a model and write model JSON", add_help=True)
    p_train.add_argument("--method", choices=list(TRAIN_METHODS))
    _add_flags(p_train, "data", "schema", "out", "seed", "epsilon", "gamma",
               "kappa", "norm", "p", "config")

    p_eval = sub.add_parser("eval", help="score a model file on a CSV")
    p_eval.add_argument("--model", required=True, help="model JSON from train")
    p_eval.add_argument("--data", required=True, help="CSV to score")
    p_eval.add_argument("--out", help="optional JSON report path")

    p_cv = sub.add_parser("cv", help="cross-validate a hyperparameter grid")
    p_cv.add_argument("--method", choices=["rlr", "dro"])
    p_cv.add_argument("--folds", type=int)
    _add_flags(p_cv, "data", "schema", "out", "seed", "kappa", "norm", "p", "config")

    p_bench = sub.add_parser("bench", help="repeated-split benchmark of all methods")
    p_bench.add_argument("--methods", help="comma list: lr,rlr,dro-k1,dro-km")
    p_bench.add_argument("--repeats", type=int)
    p_bench.add_argument("--folds", type=int)
    p_bench.add_argument("--train-fraction", type=float, dest="train_fraction")
    _add_flags(p_bench, "data", "schema", "out", "seed", "workers", "norm", "p", "config")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--n", type=int, help="number of rows")
    p_synth.add_argument("--m", type=int, help="number of binary features")
    _add_flags(p_synth, "out", "seed", "config")

    p_rt = sub.add_parser("runtime", help="wall-time scaling study")
    p_rt.add_argument("--n-list", dest="n_list", help="comma list of sample sizes")
    p_rt.add_argument("--m-list", dest="m_list", help="comma list of feature counts")
    p_rt.add_argument("--reps", type=int)
    p_rt.add_argument("--monolithic", action=argparse.BooleanOptionalAction, default=None,
                      help="also time the full program")
    _add_flags(p_rt, "out", "seed", "epsilon", "kappa", "norm", "p", "time_cap", "config")

    p_sty = sub.add_parser("stylized", help="two-point-design slope comparison")
    p_sty.add_argument("--n-list", dest="n_list")
    p_sty.add_argument("--runs", type=int)
    p_sty.add_argument("--c", type=float, help="radius constant in c / sqrt(N)")
    _add_flags(p_sty, "out", "seed", "workers", "kappa", "config")

    return parser


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "bench": cmd_bench,
    "synth": cmd_synth,
    "runtime": cmd_runtime,
    "stylized": cmd_stylized,
}


def main(argv=None) -> int:
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        return HANDLERS[args.command](args, started)
    except (SolverFailure, EngineError, ExperimentError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ConfigError, FormulationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
