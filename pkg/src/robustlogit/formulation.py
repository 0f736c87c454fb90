"""Conic model builders for robust logistic regression with mixed features.

Builds, over the exponential cone, the full robust program (every data point
paired with every categorical configuration), the reduced masters used by the
cut-generation engine, the continuous-feature variant, and the fixed-coefficient
worst-case loss evaluation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .data import Dataset, block_offsets, one_hot_matrix
from .metric import GroundMetricConfig, disagreement_distance, dual_norm
from .program import ConicProgram, var_expr
from .solver import SolverConfig, require_optimal, solve


class FormulationError(ValueError):
    """Bad builder inputs: negative radius, invalid pairs, cap violations."""


@dataclass(frozen=True)
class ModelParams:
    """Regression coefficients: intercept, numeric slopes, one-hot slopes.

    ``beta_cat`` is laid out in feature blocks of length k_j - 1, matching
    the dataset's one-hot encoding; ``cardinalities`` records the blocking.
    """

    beta0: float
    beta_num: np.ndarray
    beta_cat: np.ndarray
    cardinalities: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "beta_num", np.asarray(self.beta_num, dtype=float).ravel())
        object.__setattr__(self, "beta_cat", np.asarray(self.beta_cat, dtype=float).ravel())
        object.__setattr__(self, "beta0", float(self.beta0))
        if self.cardinalities:
            k = int(sum(self.cardinalities)) - len(self.cardinalities)
            if self.beta_cat.shape[0] != k:
                raise FormulationError("beta_cat length does not match the cardinalities")

    def cat_block(self, j: int) -> np.ndarray:
        offsets = block_offsets(self.cardinalities)
        return self.beta_cat[offsets[j]: offsets[j] + self.cardinalities[j] - 1]

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta_num": [float(v) for v in self.beta_num],
            "beta_cat": [float(v) for v in self.beta_cat],
            "cardinalities": list(self.cardinalities),
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelParams":
        return ModelParams(
            beta0=d["beta0"],
            beta_num=np.asarray(d.get("beta_num", []), dtype=float),
            beta_cat=np.asarray(d.get("beta_cat", []), dtype=float),
            cardinalities=tuple(d.get("cardinalities", [])),
        )


def scores(params: ModelParams, dataset: Dataset) -> np.ndarray:
    """Linear scores beta0 + beta_num . x + beta_cat . onehot(z) per row."""
    out = np.full(dataset.N, params.beta0)
    if dataset.n:
        out = out + dataset.X @ params.beta_num
    if dataset.m:
        out = out + one_hot_matrix(dataset.Z, dataset.cardinalities) @ params.beta_cat
    return out


def empirical_log_loss(params: ModelParams, dataset: Dataset) -> float:
    """Mean log(1 + exp(-y * score)) over the dataset."""
    margins = dataset.y * scores(params, dataset)
    return float(np.mean(np.logaddexp(0.0, -margins)))


@dataclass(frozen=True)
class FormulationOptions:
    """Safeguards and variants shared by the builders.

    ``lambda_cap`` bounds the transport-rate variable purely as a solver
    safeguard; ``drop_label_flip`` removes the label-flipped constraint
    family (sound for very large kappa, where it is redundant);
    ``l1_penalty`` adds that multiple of the L1 norm of all slopes to the
    objective.
    """

    lambda_cap: float = 1e8
    enumeration_cap: int = 2 ** 20
    drop_label_flip: bool = False
    l1_penalty: float = 0.0


def support_size(cardinalities) -> int:
    size = 1
    for kj in cardinalities:
        size *= int(kj)
    return size


def enumerate_support(cardinalities):
    """All categorical configurations as index tuples; one empty tuple for m=0."""
    return product(*[range(int(kj)) for kj in cardinalities])


@dataclass
class MasterIndex:
    """Variable locations inside a built program, for solution extraction.

    ``lam`` is None for the radius-zero program, which has no transport rate.
    """

    beta0: int | None
    beta_num: list[int]
    beta_cat: list[int]
    lam: int | None
    s: list[int]
    cut_uv: dict
    lambda_cap: float


@dataclass
class MasterSolution:
    """Extracted master solution: coefficients plus the conic certificates."""

    params: ModelParams
    lam: float
    s: np.ndarray
    objective: float
    status: str
    cut_uv: dict  # (family, i, z tuple) -> (u, v) values

    def slack(self, family: str, i: int, z: tuple) -> float:
        u, v = self.cut_uv[(family, i, z)]
        return 1.0 - (u + v)


def _encode_dual_norm(prog: ConicProgram, lam: int, beta_cols: list[int], config: GroundMetricConfig):
    """Rows enforcing (dual norm of the numeric slopes) <= lam.

    A weighted primal norm ||diag(w) x|| dualizes to ||diag(1/w) v||_*, so
    slope j enters scaled by 1/w_j.
    """
    n = len(beta_cols)
    inv = np.ones(n)
    if config.weights is not None:
        if len(config.weights) != n:
            raise FormulationError("metric weights length does not match the numeric dimension")
        inv = 1.0 / np.asarray(config.weights, dtype=float)
    if config.norm == "l1":
        # dual is the max norm: lam +- beta_j / w_j >= 0 per coordinate
        for j, c in enumerate(beta_cols):
            prog.add_ineq(([lam, c], [1.0, -inv[j]], 0.0))
            prog.add_ineq(([lam, c], [1.0, inv[j]], 0.0))
    elif config.norm == "l2":
        prog.add_soc([var_expr(lam)] + [var_expr(c, inv[j]) for j, c in enumerate(beta_cols)])
    elif config.norm == "linf":
        # dual is the sum of magnitudes: auxiliaries t_j >= |beta_j| / w_j
        taus = prog.add_vars("dualnorm_t", n)
        for j, (c, t) in enumerate(zip(beta_cols, taus)):
            prog.add_ineq(([t, c], [1.0, -inv[j]], 0.0))
            prog.add_ineq(([t, c], [1.0, inv[j]], 0.0))
        prog.add_ineq(([lam] + taus, [1.0] + [-1.0] * n, 0.0))
    else:
        raise FormulationError(f"unsupported norm {config.norm!r}")


def _add_l1_penalty(prog: ConicProgram, gamma: float, coef_cols: list[int]):
    for c in coef_cols:
        t = prog.add_var(obj=gamma)
        prog.add_ineq(([t, c], [1.0, -1.0], 0.0))
        prog.add_ineq(([t, c], [1.0, 1.0], 0.0))


def _validate_pair(dataset: Dataset, i, z):
    if not 0 <= i < dataset.N:
        raise FormulationError(f"data index {i} out of range")
    if len(z) != dataset.m:
        raise FormulationError(f"configuration {z} has wrong length for m={dataset.m}")
    for j, t in enumerate(z):
        if not 0 <= t < dataset.cardinalities[j]:
            raise FormulationError(f"configuration {z} invalid in feature {j}")


def _build_singleton(dataset: Dataset, options: FormulationOptions, fixed: ModelParams | None):
    """The radius-zero program: plain empirical risk, no transport-rate variable.

    With a free transport rate the zero-radius conic form leaves it
    objective-free and divergent, so the singleton ball gets its own program.
    """
    n, m, N = dataset.n, dataset.m, dataset.N
    prog = ConicProgram()
    if fixed is None:
        b0 = prog.add_var("beta0")
        bnum = prog.add_vars("beta_num", n)
        bcat = prog.add_vars("beta_cat", dataset.k)
        if options.l1_penalty > 0:
            _add_l1_penalty(prog, options.l1_penalty, bnum + bcat)
    else:
        b0, bnum, bcat = None, [], []
    s = [prog.add_var(f"s[{i}]", obj=1.0 / N) for i in range(N)]

    H = one_hot_matrix(dataset.Z, dataset.cardinalities) if m else None
    base = None
    if fixed is not None:
        base = scores(fixed, dataset)
    cut_uv: dict = {}
    for i in range(N):
        coef = -float(dataset.y[i])
        if fixed is None:
            cols, vals = [b0], [coef]
            for l in range(n):
                if dataset.X[i, l] != 0.0:
                    cols.append(bnum[l])
                    vals.append(coef * dataset.X[i, l])
            if H is not None:
                for r in np.flatnonzero(H[i]):
                    cols.append(bcat[r])
                    vals.append(coef)
            theta = (cols, vals, 0.0)
        else:
            theta = ([], [], coef * base[i])
        uv = prog.softplus_epigraph(theta, var_expr(s[i]))
        cut_uv[("plus", i, tuple(int(t) for t in dataset.Z[i]))] = uv

    index = MasterIndex(
        beta0=b0,
        beta_num=bnum,
        beta_cat=bcat,
        lam=None,
        s=s,
        cut_uv=cut_uv,
        lambda_cap=options.lambda_cap,
    )
    return prog, index


def _build(
    dataset: Dataset,
    eps: float,
    config: GroundMetricConfig,
    plus_pairs,
    minus_pairs,
    options: FormulationOptions,
    fixed: ModelParams | None = None,
    validate_pairs: bool = False,
) -> tuple[ConicProgram, MasterIndex]:
    if eps < 0:
        raise FormulationError("epsilon must be nonnegative")
    if eps == 0:
        return _build_singleton(dataset, options, fixed)
    n, m, N = dataset.n, dataset.m, dataset.N
    offsets = block_offsets(dataset.cardinalities)
    prog = ConicProgram()

    if fixed is None:
        b0 = prog.add_var("beta0")
        bnum = prog.add_vars("beta_num", n)
        bcat = prog.add_vars("beta_cat", dataset.k)
    else:
        b0, bnum, bcat = None, [], []
    lam = prog.add_var("lambda", obj=eps)
    s = [prog.add_var(f"s[{i}]", obj=1.0 / N) for i in range(N)]

    prog.add_ineq(var_expr(lam))  # lam >= 0
    # safeguard lam <= cap, stated as 1 - lam/cap >= 0 so the row stays O(1)
    prog.add_ineq(([lam], [-1.0 / options.lambda_cap], 1.0))
    # s_i >= 0 is implied by the constraint group at z = z^i in the full
    # program; stating it keeps reduced masters with sparse pools bounded.
    for si in s:
        prog.add_ineq(var_expr(si))

    if fixed is None:
        if n:
            _encode_dual_norm(prog, lam, bnum, config)
        if options.l1_penalty > 0:
            _add_l1_penalty(prog, options.l1_penalty, bnum + bcat)
    elif n:
        dstar = dual_norm(fixed.beta_num, config.norm, config.weights)
        prog.add_ineq(var_expr(lam, 1.0, -dstar))  # lam >= ||beta_num||_*

    X, Z, y = dataset.X, dataset.Z, dataset.y
    base_score = None
    if fixed is not None:
        base_score = fixed.beta0 + (X @ fixed.beta_num if n else 0.0)

    cut_uv: dict = {}

    def theta_expr(i: int, z, sign: float):
        # the softplus argument: sign * y_i * (beta0 + beta_num.x_i + beta_cat.z)
        coef = sign * float(y[i])
        if fixed is None:
            cols = [b0]
            vals = [coef]
            for l in range(n):
                xv = X[i, l]
                if xv != 0.0:
                    cols.append(bnum[l])
                    vals.append(coef * xv)
            for j in range(m):
                t = z[j]
                if t >= 1:
                    cols.append(bcat[offsets[j] + t - 1])
                    vals.append(coef)
            return (cols, vals, 0.0)
        sc = base_score[i] if n else base_score
        for j in range(m):
            t = z[j]
            if t >= 1:
                sc += fixed.beta_cat[offsets[j] + t - 1]
        return ([], [], coef * sc)

    def add_group(family: str, i: int, z):
        if validate_pairs:
            _validate_pair(dataset, i, z)
        delta = int(np.count_nonzero(Z[i] != np.asarray(z, dtype=np.int64)))
        dist = disagreement_distance(delta, config.p)
        if family == "minus":
            dist += config.kappa
        bound = ([s[i], lam], [1.0, dist], 0.0) if dist else var_expr(s[i])
        sign = -1.0 if family == "plus" else 1.0
        u, v = prog.softplus_epigraph(theta_expr(i, z, sign), bound)
        cut_uv[(family, i, tuple(z))] = (u, v)

    for i, z in plus_pairs:
        add_group("plus", i, z)
    if not options.drop_label_flip:
        for i, z in minus_pairs:
            add_group("minus", i, z)

    index = MasterIndex(
        beta0=b0,
        beta_num=bnum,
        beta_cat=bcat,
        lam=lam,
        s=s,
        cut_uv=cut_uv,
        lambda_cap=options.lambda_cap,
    )
    return prog, index


def _all_pairs(dataset: Dataset):
    for i in range(dataset.N):
        for z in enumerate_support(dataset.cardinalities):
            yield i, z


def _check_enumeration(dataset: Dataset, options: FormulationOptions):
    size = support_size(dataset.cardinalities)
    if size > options.enumeration_cap:
        raise FormulationError(
            f"support has {size} configurations, above the enumeration cap "
            f"{options.enumeration_cap}; use the cut-generation engine"
        )


def build_monolithic(
    dataset: Dataset,
    eps: float,
    config: GroundMetricConfig,
    options: FormulationOptions | None = None,
) -> tuple[ConicProgram, MasterIndex]:
    """The full program: both constraint families at every (i, z) pair."""
    options = options or FormulationOptions()
    _check_enumeration(dataset, options)
    return _build(dataset, eps, config, _all_pairs(dataset), _all_pairs(dataset), options)


def build_reduced_master(
    dataset: Dataset,
    plus_keys,
    minus_keys,
    eps: float,
    config: GroundMetricConfig,
    options: FormulationOptions | None = None,
    fixed: ModelParams | None = None,
) -> tuple[ConicProgram, MasterIndex]:
    """The relaxation enforcing constraint groups only at the given pairs."""
    options = options or FormulationOptions()
    return _build(
        dataset,
        eps,
        config,
        list(plus_keys),
        list(minus_keys),
        options,
        fixed=fixed,
        validate_pairs=True,
    )


def build_continuous_model(
    dataset: Dataset,
    eps: float,
    config: GroundMetricConfig,
    options: FormulationOptions | None = None,
) -> tuple[ConicProgram, MasterIndex]:
    """Numeric-features-only robust model (no categorical configurations).

    The dataset must have m = 0; categorical columns treated as continuous
    must be mapped into X by the caller beforehand.
    """
    if dataset.m != 0:
        raise FormulationError("continuous model requires a dataset with no categorical features")
    options = options or FormulationOptions()
    pairs = [(i, ()) for i in range(dataset.N)]
    return _build(dataset, eps, config, pairs, pairs, options)


def extract_solution(
    result,
    index: MasterIndex,
    dataset: Dataset,
    fixed: ModelParams | None = None,
) -> MasterSolution:
    x = result.x
    if fixed is not None:
        params = fixed
    else:
        params = ModelParams(
            beta0=x[index.beta0],
            beta_num=x[index.beta_num] if index.beta_num else np.zeros(0),
            beta_cat=x[index.beta_cat] if index.beta_cat else np.zeros(0),
            cardinalities=dataset.cardinalities,
        )
    lam = 0.0 if index.lam is None else float(x[index.lam])
    if lam >= 0.999 * index.lambda_cap:
        warnings.warn("transport-rate variable hit its safeguard bound; epsilon may be degenerate")
    uv = {key: (float(x[u]), float(x[v])) for key, (u, v) in index.cut_uv.items()}
    return MasterSolution(
        params=params,
        lam=lam,
        s=np.asarray(x[index.s], dtype=float),
        objective=float(result.objective),
        status=result.status,
        cut_uv=uv,
    )


def solve_master(
    program: ConicProgram,
    index: MasterIndex,
    dataset: Dataset,
    solver_config: SolverConfig | None = None,
    fixed: ModelParams | None = None,
    context: str = "master solve",
) -> MasterSolution:
    result = require_optimal(solve(program, solver_config), context)
    return extract_solution(result, index, dataset, fixed=fixed)


def solve_monolithic(
    dataset: Dataset,
    eps: float,
    config: GroundMetricConfig,
    options: FormulationOptions | None = None,
    solver_config: SolverConfig | None = None,
) -> MasterSolution:
    program, index = build_monolithic(dataset, eps, config, options)
    return solve_master(program, index, dataset, solver_config, context="full model solve")


def evaluate_worst_case_loss(
    params: ModelParams,
    dataset: Dataset,
    eps: float,
    config: GroundMetricConfig,
    options: FormulationOptions | None = None,
    solver_config: SolverConfig | None = None,
) -> float:
    """Worst-case expected log-loss of fixed coefficients over the ball.

    Solves the transport-rate/shift minimization with the coefficients held
    constant: by enumeration when the categorical support is small, through
    the cut-generation engine otherwise.  eps = 0 is the empirical loss.
    """
    if eps < 0:
        raise FormulationError("epsilon must be nonnegative")
    if eps == 0:
        return empirical_log_loss(params, dataset)
    options = options or FormulationOptions()
    if support_size(dataset.cardinalities) <= options.enumeration_cap:
        program, index = _build(
            dataset, eps, config, _all_pairs(dataset), _all_pairs(dataset), options, fixed=params
        )
        result = require_optimal(solve(program, solver_config), "worst-case evaluation")
        return float(result.objective)
    from .cutgen import EngineConfig, run  # deferred: cutgen imports this module

    engine = EngineConfig(solver=solver_config or SolverConfig())
    outcome = run(dataset, eps, config, engine, options=options, fixed_params=params)
    return outcome.objective
