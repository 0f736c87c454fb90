"""Column-and-constraint generation for the robust regression program.

Each iteration solves a reduced master over the current cut pools, looks up
the most violated constraint group per family, and tightens the relaxation.
The master's certified (dual) value is a lower bound; raising every shift
variable by log(1 + violation) yields a feasible completion, giving the
upper bound master value + log(1 + max violation).  Optionally, cuts whose epigraph
slack exceeds a threshold are periodically dropped; a cut is dropped at most
once so the loop cannot cycle.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .formulation import (
    FormulationOptions,
    MasterSolution,
    ModelParams,
    build_reduced_master,
    extract_solution,
    support_size,
)
from .metric import GroundMetricConfig
from .separation import separate_top
from .solver import SolverConfig, solve


class EngineError(RuntimeError):
    """Engine-level failures: bad configuration or a failed master solve."""


@dataclass(frozen=True)
class EasingConfig:
    """Scheduled deletion of slack cuts.

    Schedules: "periodic" eases every ``period`` iterations; "geometric"
    eases at iterations ceil(100 * 1.5^j).  The slack threshold is either
    constant or starts at ``threshold_start`` and grows by
    ``threshold_step`` per easing event.
    """

    enabled: bool = False
    schedule: str = "periodic"
    period: int = 200
    threshold_mode: str = "constant"
    threshold: float = 0.05
    threshold_start: float = 0.02
    threshold_step: float = 0.02


def easing_threshold(config: EasingConfig, events: int) -> float:
    if config.threshold_mode == "constant":
        return config.threshold
    if config.threshold_mode == "increasing":
        return config.threshold_start + config.threshold_step * events
    raise EngineError(f"unknown threshold mode {config.threshold_mode!r}")


def is_easing_iteration(config: EasingConfig, t: int) -> bool:
    if not config.enabled:
        return False
    if config.schedule == "periodic":
        return t > 0 and t % config.period == 0
    if config.schedule == "geometric":
        value = 100.0
        while math.ceil(value) < t:
            value *= 1.5
        return math.ceil(value) == t
    raise EngineError(f"unknown easing schedule {config.schedule!r}")


@dataclass
class CutMeta:
    added_iteration: int
    deletions: int = 0
    last_slack: float = float("nan")


class CutPool:
    """The constraint groups currently enforced, per family.

    Remembers every (family, key) pair it ever dropped: such a cut, once
    re-added, is never dropped again.
    """

    def __init__(self):
        self._families: dict[str, dict] = {"plus": {}, "minus": {}}
        self._deleted_once: set = set()

    def _family(self, family: str) -> dict:
        try:
            return self._families[family]
        except KeyError:
            raise EngineError(f"unknown constraint family {family!r}") from None

    def add(self, family: str, key, iteration: int) -> bool:
        cuts = self._family(family)
        if key in cuts:
            return False
        deletions = 1 if (family, key) in self._deleted_once else 0
        cuts[key] = CutMeta(added_iteration=iteration, deletions=deletions)
        return True

    def remove(self, family: str, key):
        self._family(family).pop(key)
        self._deleted_once.add((family, key))

    def deletable(self, family: str, key) -> bool:
        return (family, key) not in self._deleted_once

    def meta(self, family: str, key) -> CutMeta:
        return self._family(family)[key]

    def keys(self, family: str) -> list:
        return list(self._family(family).keys())

    def size(self, family: str) -> int:
        return len(self._family(family))


@dataclass
class TraceRow:
    iteration: int
    lower: float
    upper: float
    violation_plus: float
    violation_minus: float
    pool_plus: int
    pool_minus: int
    master_time: float
    separation_time: float
    removed: int


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)

    def lower_bounds(self) -> list[float]:
        return [r.lower for r in self.rows]

    def upper_bounds(self) -> list[float]:
        return [r.upper for r in self.rows]

    def final_gap(self) -> float:
        if not self.rows:
            return float("inf")
        return self.rows[-1].upper - self.rows[-1].lower

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "iteration", "lower", "upper", "violation_plus", "violation_minus",
                    "pool_plus", "pool_minus", "master_time", "separation_time", "removed",
                ]
            )
            for r in self.rows:
                writer.writerow(
                    [
                        r.iteration, repr(r.lower), repr(r.upper),
                        repr(r.violation_plus), repr(r.violation_minus),
                        r.pool_plus, r.pool_minus,
                        f"{r.master_time:.6f}", f"{r.separation_time:.6f}", r.removed,
                    ]
                )


@dataclass(frozen=True)
class EngineConfig:
    gap_tol: float = 1e-6
    violation_tol: float = 1e-8
    max_iterations: int = 0  # 0: use the finite-termination cap
    cuts_per_family: int = 1
    seed_mode: str = "datapoints"  # or "empty"
    easing: EasingConfig = EasingConfig()
    solver: SolverConfig = SolverConfig()
    time_limit: float = 0.0  # seconds of wall time; 0 disables


@dataclass
class RunResult:
    params: ModelParams
    trace: RunTrace
    solution: MasterSolution
    converged: bool
    iterations: int
    wall_time: float
    stopped: str  # "converged" | "iteration-limit" | "time-limit" | "stalled"

    @property
    def objective(self) -> float:
        return self.solution.objective


def seed_pool(dataset: Dataset, mode: str = "datapoints", include_minus: bool = True) -> CutPool:
    """Initial pools; the default enforces both families at every data point."""
    pool = CutPool()
    if mode == "empty":
        return pool
    if mode != "datapoints":
        raise EngineError(f"unknown seed mode {mode!r}")
    for i in range(dataset.N):
        key = (i, tuple(int(t) for t in dataset.Z[i]))
        pool.add("plus", key, 0)
        if include_minus:
            pool.add("minus", key, 0)
    return pool


def ease(pool: CutPool, solution: MasterSolution, config: EasingConfig, events: int) -> int:
    """Drop never-before-deleted cuts whose slack exceeds the threshold."""
    threshold = easing_threshold(config, events)
    removed = 0
    for family in ("plus", "minus"):
        for key in pool.keys(family):
            uv = solution.cut_uv.get((family,) + key)
            if uv is None:
                continue  # cut entered the pool after this master was built
            slack = 1.0 - (uv[0] + uv[1])
            pool.meta(family, key).last_slack = slack
            if slack > threshold and pool.deletable(family, key):
                pool.remove(family, key)
                removed += 1
    return removed


def _termination_cap(dataset: Dataset) -> int:
    # one new cut per family per iteration suffices to terminate within
    # 2 * N * |support| + 1 iterations; keep an absolute ceiling regardless
    cap = 2 * dataset.N * support_size(dataset.cardinalities) + 1
    return min(cap, 10_000_000)


def run(
    dataset: Dataset,
    eps: float,
    metric_config: GroundMetricConfig,
    engine: EngineConfig | None = None,
    options: FormulationOptions | None = None,
    fixed_params: ModelParams | None = None,
) -> RunResult:
    """Iterate master solves and separation until the bound gap closes.

    With ``fixed_params`` the coefficients are constants and the run prices
    the worst-case loss of a given model instead of training one.
    """
    if eps <= 0:
        raise EngineError("the engine needs a positive radius; fit the empirical model for eps = 0")
    engine = engine or EngineConfig()
    options = options or FormulationOptions()
    include_minus = not options.drop_label_flip
    families = ("plus", "minus") if include_minus else ("plus",)

    pool = seed_pool(dataset, engine.seed_mode, include_minus)
    max_iterations = engine.max_iterations or _termination_cap(dataset)
    lower, upper = -float("inf"), float("inf")
    trace = RunTrace()
    solution = None
    converged = False
    stopped = "iteration-limit"
    ease_events = 0
    start = time.perf_counter()
    t = 0

    while t < max_iterations:
        t += 1
        clock = time.perf_counter()
        program, index = build_reduced_master(
            dataset,
            pool.keys("plus"),
            pool.keys("minus") if include_minus else [],
            eps,
            metric_config,
            options,
            fixed=fixed_params,
        )
        result = solve(program, engine.solver)
        master_time = time.perf_counter() - clock
        if not result.ok:
            raise EngineError(
                f"master solve failed at iteration {t} with status {result.status} ({result.raw_status})"
            )
        solution = extract_solution(result, index, dataset, fixed=fixed_params)
        # the dual value certifies the bound; the primal value can overshoot
        # the reduced-master optimum by the solver tolerance
        lower = max(lower, min(result.objective_dual, solution.objective))

        clock = time.perf_counter()
        tops = separate_top(solution, dataset, metric_config, engine.cuts_per_family, families)
        separation_time = time.perf_counter() - clock

        best_plus = tops["plus"][0]
        violation_plus = best_plus.violation
        log_gain = max(0.0, best_plus.log_value)
        violation_minus = 0.0
        if include_minus:
            best_minus = tops["minus"][0]
            violation_minus = best_minus.violation
            log_gain = max(log_gain, best_minus.log_value)
        upper = min(upper, solution.objective + log_gain)
        separated = max(violation_plus, violation_minus) > engine.violation_tol

        added = 0
        if separated and upper - lower > engine.gap_tol:
            for family in families:
                for report in tops[family]:
                    if report.violation > engine.violation_tol:
                        if pool.add(family, (report.index, report.z), t):
                            added += 1
        removed = 0
        if is_easing_iteration(engine.easing, t):
            removed = ease(pool, solution, engine.easing, ease_events)
            ease_events += 1

        trace.rows.append(
            TraceRow(
                iteration=t,
                lower=lower,
                upper=upper,
                violation_plus=violation_plus,
                violation_minus=violation_minus,
                pool_plus=pool.size("plus"),
                pool_minus=pool.size("minus"),
                master_time=master_time,
                separation_time=separation_time,
                removed=removed,
            )
        )

        if not separated or upper - lower <= engine.gap_tol:
            # no violation above threshold certifies feasibility of the
            # current master solution for the full program
            converged = True
            stopped = "converged"
            break
        if added == 0 and removed == 0:
            # every violated group is already enforced: solver noise, not progress
            stopped = "stalled"
            break
        if engine.time_limit and time.perf_counter() - start > engine.time_limit:
            stopped = "time-limit"
            break

    wall_time = time.perf_counter() - start
    if solution is None:
        raise EngineError("iteration budget of zero; nothing was solved")
    return RunResult(
        params=solution.params,
        trace=trace,
        solution=solution,
        converged=converged,
        iterations=t,
        wall_time=wall_time,
        stopped=stopped,
    )
