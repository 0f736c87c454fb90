"""Experiment harnesses: cross-validation, benchmarking, scaling, stylized fits.

Every harness derives per-task seeds from the top-level seed with
SeedSequence-style key lists, so results do not depend on scheduling or on
how many workers run the tasks.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .baselines import classification_error, train_lr, train_regularized_lr
from .cutgen import EngineConfig, EngineError, run
from .data import (
    Dataset,
    apply_numeric_scaling,
    generate_synthetic,
    k_folds,
    numeric_stats,
    split,
)
from .formulation import (
    FormulationError,
    FormulationOptions,
    ModelParams,
    build_continuous_model,
    solve_master,
    solve_monolithic,
    support_size,
)
from .metric import GroundMetricConfig
from .solver import SolverConfig, SolverFailure


class ExperimentError(RuntimeError):
    """Harness-level failures: bad method names, every CV candidate failing."""


def default_epsilon_grid(points_per_decade: int = 1) -> tuple[float, ...]:
    """{0} plus a log-spaced sweep of radii from 1e-5 to 1."""
    num = 5 * points_per_decade + 1
    return (0.0,) + tuple(float(v) for v in np.logspace(-5.0, 0.0, num=num))


def default_gamma_grid(points_per_decade: int = 1) -> tuple[float, ...]:
    """The radius grid halved: {0} plus 5e-6 .. 0.5."""
    return tuple(0.5 * v for v in default_epsilon_grid(points_per_decade))


@dataclass(frozen=True)
class GridSpec:
    parameter: str  # "epsilon" | "gamma" | "none"
    values: tuple[float, ...] = ()


@dataclass
class CVResult:
    values: list
    mean_errors: list
    fold_errors: list
    best_value: float
    best_error: float
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "mean_errors": [float(e) for e in self.mean_errors],
            "best_value": float(self.best_value),
            "best_error": float(self.best_error),
            "failures": list(self.failures),
        }


def cross_validate(dataset: Dataset, fit, values, folds: int = 5, seed=0) -> CVResult:
    """Mean validation error of fit(train, value) over shared K folds.

    Values are scanned in ascending order and only a strictly smaller error
    moves the incumbent, so ties resolve to the smallest value.  A value
    whose fit fails on any fold is recorded and skipped; if every value
    fails the whole search is an error.
    """
    pairs = k_folds(dataset, folds, seed)
    ordered = sorted({float(v) for v in values})
    mean_errors, fold_errors, failures = [], [], []
    best_value, best_error = None, float("inf")
    for value in ordered:
        errors = []
        failure = None
        for train_part, val_part in pairs:
            try:
                params = fit(train_part, value)
            except (SolverFailure, EngineError, FormulationError) as exc:
                failure = f"value {value:g}: {exc}"
                break
            errors.append(classification_error(params, val_part))
        if failure is not None:
            failures.append(failure)
            mean_errors.append(float("nan"))
            fold_errors.append([])
            continue
        mean_error = float(np.mean(errors))
        mean_errors.append(mean_error)
        fold_errors.append(errors)
        if mean_error < best_error:
            best_value, best_error = value, mean_error
    if best_value is None:
        raise ExperimentError(f"every candidate value failed: {failures}")
    return CVResult(ordered, mean_errors, fold_errors, best_value, best_error, failures)


def train_dro(
    dataset: Dataset,
    eps: float,
    metric_config: GroundMetricConfig,
    gamma: float = 0.0,
    engine: EngineConfig | None = None,
    options: FormulationOptions | None = None,
) -> ModelParams:
    """Robust fit at the given radius; eps = 0 falls back to the empirical fit."""
    if eps < 0:
        raise ExperimentError("the radius must be nonnegative")
    if eps == 0:
        return train_regularized_lr(dataset, gamma) if gamma > 0 else train_lr(dataset)
    opts = options or FormulationOptions()
    if gamma > 0:
        opts = replace(opts, l1_penalty=gamma)
    return run(dataset, eps, metric_config, engine, options=opts).params


BENCHMARK_METHODS = ("lr", "rlr", "dro-k1", "dro-km")


def _method_fit(method: str, m: int, norm: str, p: float, engine: EngineConfig | None):
    """(fit function, hyperparameter name) for a benchmark method."""
    if method == "lr":
        return (lambda ds, value: train_lr(ds)), "none"
    if method == "rlr":
        return (lambda ds, value: train_regularized_lr(ds, value)), "gamma"
    if method in ("dro-k1", "dro-km"):
        kappa = 1.0 if method == "dro-k1" else float(max(m, 1))
        config = GroundMetricConfig(norm=norm, p=p, kappa=kappa)
        return (lambda ds, value: train_dro(ds, value, config, engine=engine)), "epsilon"
    raise ExperimentError(f"unknown method {method!r}")


@dataclass
class SplitResult:
    repeat: int
    method: str
    hyper_name: str
    hyper_value: float | None
    cv_error: float | None
    test_error: float
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "repeat": self.repeat,
            "method": self.method,
            "hyper_name": self.hyper_name,
            "hyper_value": None if self.hyper_value is None else float(self.hyper_value),
            "cv_error": None if self.cv_error is None else float(self.cv_error),
            "test_error": float(self.test_error),
            "seconds": float(self.seconds),
        }


@dataclass
class BenchmarkReport:
    methods: tuple
    repeats: int
    rows: list
    median_errors: dict

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "repeats": self.repeats,
            "median_errors": {k: float(v) for k, v in self.median_errors.items()},
            "rows": [r.to_dict() for r in self.rows],
        }


def _benchmark_split(payload) -> list:
    (dataset, methods, repeat, seed, eps_grid, gamma_grid, folds,
     train_fraction, norm, p, scale_numeric, engine) = payload
    split_seed, cv_seed = np.random.SeedSequence([seed, repeat]).spawn(2)
    train_part, test_part = split(dataset, train_fraction, split_seed)
    if scale_numeric:
        mean, scale = numeric_stats(train_part)
        train_part = apply_numeric_scaling(train_part, mean, scale)
        test_part = apply_numeric_scaling(test_part, mean, scale)
    out = []
    for method in methods:
        clock = time.perf_counter()
        fit, hyper = _method_fit(method, dataset.m, norm, p, engine)
        if hyper == "none":
            value, cv_error = None, None
            params = fit(train_part, 0.0)
        else:
            grid = eps_grid if hyper == "epsilon" else gamma_grid
            cv = cross_validate(train_part, fit, grid, folds, cv_seed)
            value, cv_error = cv.best_value, cv.best_error
            params = fit(train_part, value)
        out.append(
            SplitResult(repeat, method, hyper, value, cv_error,
                        classification_error(params, test_part),
                        seconds=time.perf_counter() - clock)
        )
    return out


def benchmark(
    dataset: Dataset,
    methods=BENCHMARK_METHODS,
    repeats: int = 20,
    seed: int = 0,
    epsilon_grid=None,
    gamma_grid=None,
    folds: int = 5,
    train_fraction: float = 0.8,
    norm: str = "l1",
    p: float = 1.0,
    scale_numeric: bool = False,
    engine: EngineConfig | None = None,
    workers: int = 1,
) -> BenchmarkReport:
    """Repeated random splits, per-split cross-validated fits, test errors.

    Each repeat draws its own train/test split, tunes every method's
    hyperparameter by K-fold CV on the training side (all methods share the
    folds), refits at the chosen value, and scores the held-out side.
    """
    eps_grid = tuple(epsilon_grid) if epsilon_grid is not None else default_epsilon_grid()
    gam_grid = tuple(gamma_grid) if gamma_grid is not None else default_gamma_grid()
    payloads = [
        (dataset, tuple(methods), r, seed, eps_grid, gam_grid, folds,
         train_fraction, norm, p, scale_numeric, engine)
        for r in range(repeats)
    ]
    rows: list = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_benchmark_split, payloads):
                rows.extend(chunk)
    else:
        for payload in payloads:
            rows.extend(_benchmark_split(payload))
    medians = {
        method: float(np.median([r.test_error for r in rows if r.method == method]))
        for method in methods
    }
    return BenchmarkReport(tuple(methods), repeats, rows, medians)


@dataclass
class RuntimeRow:
    N: int
    m: int
    method: str  # "monolithic" | "engine"
    rep: int
    seconds: float | None
    status: str  # "ok" | "CAP" | "TIME" | other engine stop reasons
    objective: float | None
    iterations: int | None

    def to_dict(self) -> dict:
        return {
            "N": self.N, "m": self.m, "method": self.method, "rep": self.rep,
            "seconds": self.seconds, "status": self.status,
            "objective": self.objective, "iterations": self.iterations,
        }


@dataclass
class RuntimeReport:
    rows: list
    time_cap: float

    def summary(self) -> list[dict]:
        """Median and 10/90 quantile seconds per (N, m, method) over ok reps."""
        keys = sorted({(r.N, r.m, r.method) for r in self.rows})
        out = []
        for N, m, method in keys:
            cell = [r for r in self.rows if (r.N, r.m, r.method) == (N, m, method)]
            ok = [r.seconds for r in cell if r.status == "ok"]
            entry = {"N": N, "m": m, "method": method,
                     "ok": len(ok), "censored": len(cell) - len(ok)}
            if ok:
                entry.update(
                    median_seconds=float(np.median(ok)),
                    q10_seconds=float(np.quantile(ok, 0.10)),
                    q90_seconds=float(np.quantile(ok, 0.90)),
                )
            out.append(entry)
        return out

    def max_objective_gap(self) -> float:
        """Largest |monolithic - engine| optimal-value difference over shared cells."""
        gaps = [0.0]
        cells = {}
        for r in self.rows:
            if r.status == "ok" and r.objective is not None:
                cells.setdefault((r.N, r.m, r.rep), {})[r.method] = r.objective
        for values in cells.values():
            if "monolithic" in values and "engine" in values:
                gaps.append(abs(values["monolithic"] - values["engine"]))
        return max(gaps)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["N", "m", "method", "rep", "seconds", "status", "objective", "iterations"])
            for r in self.rows:
                writer.writerow([
                    r.N, r.m, r.method, r.rep,
                    "" if r.seconds is None else f"{r.seconds:.6f}",
                    r.status,
                    "" if r.objective is None else repr(r.objective),
                    "" if r.iterations is None else r.iterations,
                ])


def runtime_study(
    n_values,
    m_values,
    seed: int = 0,
    reps: int = 3,
    eps: float = 0.1,
    kappa: float = 1.0,
    norm: str = "l1",
    p: float = 1.0,
    time_cap: float = 600.0,
    include_monolithic: bool = True,
    engine: EngineConfig | None = None,
    options: FormulationOptions | None = None,
    stall_gap_tol: float = 5e-3,
) -> RuntimeReport:
    """Wall-time scaling of the full program vs the cut-generation engine.

    Synthetic instances per (N, m, rep).  Full-program cells whose
    categorical support exceeds the enumeration cap are censored as CAP
    without solving; cells stopped by the wall-time cap are censored TIME.
    Full-program cells accept stalled solves certified to within
    stall_gap_tol, since the largest programs cannot reach full accuracy;
    optimal values are recorded so agreement between the two routes can be
    cross-checked with max_objective_gap.
    """
    options = options or FormulationOptions()
    base_engine = engine or EngineConfig()
    rows = []
    for N in n_values:
        for m in m_values:
            config = GroundMetricConfig(norm=norm, p=p, kappa=kappa)
            for rep in range(reps):
                dataset, _ = generate_synthetic(N, m, [seed, N, m, rep])
                if include_monolithic:
                    if support_size(dataset.cardinalities) > options.enumeration_cap:
                        rows.append(RuntimeRow(N, m, "monolithic", rep, None, "CAP", None, None))
                    else:
                        # the largest conic programs stall just shy of full
                        # accuracy; accept a certified gap up to stall_gap_tol
                        # so the cell records a time instead of a failure
                        solver_cfg = SolverConfig(time_limit=time_cap,
                                                  stall_gap_tol=stall_gap_tol)
                        start = time.perf_counter()
                        try:
                            sol = solve_monolithic(dataset, eps, config, options, solver_cfg)
                            rows.append(RuntimeRow(N, m, "monolithic", rep,
                                                   time.perf_counter() - start, "ok",
                                                   sol.objective, None))
                        except SolverFailure as exc:
                            status = "TIME" if "time" in str(exc).lower() else "fail"
                            rows.append(RuntimeRow(N, m, "monolithic", rep,
                                                   time.perf_counter() - start, status, None, None))
                engine_cfg = replace(base_engine, time_limit=time_cap)
                start = time.perf_counter()
                outcome = run(dataset, eps, config, engine_cfg, options=options)
                seconds = time.perf_counter() - start
                status = "ok" if outcome.converged else (
                    "TIME" if outcome.stopped == "time-limit" else outcome.stopped
                )
                rows.append(RuntimeRow(N, m, "engine", rep, seconds, status,
                                       outcome.objective if outcome.converged else None,
                                       outcome.iterations))
    return RuntimeReport(rows, time_cap)


@dataclass
class StylizedRow:
    N: int
    run: int
    method: str  # "mixed" | "continuous" | "lr"
    slope: float

    def to_dict(self) -> dict:
        return {"N": self.N, "run": self.run, "method": self.method, "slope": float(self.slope)}


@dataclass
class StylizedReport:
    rows: list
    c: float
    runs: int

    def summary(self) -> list[dict]:
        keys = sorted({(r.N, r.method) for r in self.rows})
        out = []
        for N, method in keys:
            slopes = np.array([r.slope for r in self.rows if (r.N, r.method) == (N, method)])
            out.append({
                "N": N, "method": method,
                "mean_slope": float(slopes.mean()),
                "q15_slope": float(np.quantile(slopes, 0.15)),
                "q85_slope": float(np.quantile(slopes, 0.85)),
            })
        return out

    def to_dict(self) -> dict:
        return {
            "c": self.c, "runs": self.runs,
            "summary": self.summary(),
            "rows": [r.to_dict() for r in self.rows],
        }


def _stylized_datasets(N: int, rng) -> tuple[Dataset, Dataset]:
    """One sample of the two-point design, in categorical and numeric coding."""
    z = np.where(rng.random(N) < 0.5, 1.0, -1.0)
    prob = expit(z)  # logistic law with unit slope and no intercept
    y = np.where(rng.random(N) < prob, 1, -1).astype(np.int64)
    mixed = Dataset(
        X=np.zeros((N, 0)),
        Z=(z > 0).astype(np.int64).reshape(N, 1),
        y=y,
        cardinalities=(2,),
        numeric_names=(),
        categorical_names=("z",),
        categories=(("-1", "+1"),),
        label_name="label",
        positive_classes=("+1",),
    )
    continuous = Dataset(
        X=z.reshape(N, 1),
        Z=np.zeros((N, 0), dtype=np.int64),
        y=y,
        cardinalities=(),
        numeric_names=("z",),
        categorical_names=(),
        categories=(),
        label_name="label",
        positive_classes=("+1",),
    )
    return mixed, continuous


def _stylized_run(payload) -> list:
    N, run_index, seed, c, kappa, solver_config = payload
    rng = np.random.default_rng([seed, N, run_index])
    mixed, continuous = _stylized_datasets(N, rng)
    eps = c / math.sqrt(N)

    # categorical model: score is beta0 + beta_cat * 1[z = +1]; on the
    # symmetric +-1 coding that is slope beta_cat / 2
    cat_metric = GroundMetricConfig(norm="l1", p=1.0, kappa=kappa)
    sol = solve_monolithic(mixed, eps, cat_metric, solver_config=solver_config)
    rows = [StylizedRow(N, run_index, "mixed", float(sol.params.beta_cat[0]) / 2.0)]

    # numeric model: the feature is moved continuously at cost half the
    # displacement, matching the categorical cost of one at a sign change
    num_metric = GroundMetricConfig(norm="l1", kappa=kappa, weights=(0.5,))
    program, index = build_continuous_model(continuous, eps, num_metric)
    sol = solve_master(program, index, continuous, solver_config, context="numeric stylized fit")
    rows.append(StylizedRow(N, run_index, "continuous", float(sol.params.beta_num[0])))

    params = train_lr(continuous, solver_config)
    rows.append(StylizedRow(N, run_index, "lr", float(params.beta_num[0])))
    return rows


def stylized_comparison(
    n_values,
    runs: int = 100,
    seed: int = 0,
    c: float = 0.35,
    kappa: float = 1.0,
    solver_config: SolverConfig | None = None,
    workers: int = 1,
) -> StylizedReport:
    """Slopes of the two robust codings and plain LR on the two-point design.

    The feature is a fair +-1 coin and labels follow a unit-slope logistic
    law.  The radius shrinks as c / sqrt(N).  Slopes are reported on the
    +-1 coding for all three methods so they are directly comparable.
    """
    payloads = [
        (int(N), r, seed, c, kappa, solver_config)
        for N in n_values
        for r in range(runs)
    ]
    rows: list = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_stylized_run, payloads):
                rows.extend(chunk)
    else:
        for payload in payloads:
            rows.extend(_stylized_run(payload))
    return StylizedReport(rows, c, runs)
