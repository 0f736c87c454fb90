"""Plain and L1-regularized logistic regression on the one-hot encoding.

Fit through the same exponential-cone machinery as the robust models, so a
radius of zero and a classical fit are directly comparable.  A box bound on
the coefficients keeps separable datasets from driving the program unbounded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset, block_offsets, one_hot_matrix
from .formulation import ModelParams, scores
from .program import ConicProgram, var_expr
from .solver import SolverConfig, require_optimal, solve

# generous box; a fit ending here means the data are (nearly) separable
COEF_BOUND = 1e4


@dataclass(frozen=True)
class BaselineConfig:
    """Lasso weight and which coefficients it touches."""

    gamma: float = 0.0
    penalize_intercept: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("the regularization weight must be nonnegative")


def train_lr(dataset: Dataset, solver_config: SolverConfig | None = None) -> ModelParams:
    """Maximum-likelihood logistic regression (mean log-loss objective)."""
    return train_regularized_lr(dataset, 0.0, solver_config)


def train_regularized_lr(
    dataset: Dataset,
    gamma: float | BaselineConfig,
    solver_config: SolverConfig | None = None,
) -> ModelParams:
    """Logistic regression plus gamma times the L1 norm of the slopes.

    The intercept is left out of the penalty unless the config says
    otherwise.  gamma = 0 recovers the plain fit.
    """
    config = gamma if isinstance(gamma, BaselineConfig) else BaselineConfig(gamma=float(gamma))
    N, n, k = dataset.N, dataset.n, dataset.k
    prog = ConicProgram()
    b0 = prog.add_var("beta0")
    bnum = prog.add_vars("beta_num", n)
    bcat = prog.add_vars("beta_cat", k)

    for c in [b0] + bnum + bcat:
        prog.add_ineq(var_expr(c, 1.0, COEF_BOUND))
        prog.add_ineq(var_expr(c, -1.0, COEF_BOUND))
    if config.gamma > 0:
        penalized = ([b0] if config.penalize_intercept else []) + bnum + bcat
        for c in penalized:
            t = prog.add_var(obj=config.gamma)
            prog.add_ineq(([t, c], [1.0, -1.0], 0.0))
            prog.add_ineq(([t, c], [1.0, 1.0], 0.0))

    H = one_hot_matrix(dataset.Z, dataset.cardinalities) if dataset.m else None
    X, y = dataset.X, dataset.y
    for i in range(N):
        si = prog.add_var(obj=1.0 / N)
        coef = -float(y[i])
        cols, vals = [b0], [coef]
        for l in range(n):
            if X[i, l] != 0.0:
                cols.append(bnum[l])
                vals.append(coef * X[i, l])
        if H is not None:
            for r in np.flatnonzero(H[i]):
                cols.append(bcat[r])
                vals.append(coef)
        prog.softplus_epigraph((cols, vals, 0.0), var_expr(si))

    result = require_optimal(solve(prog, solver_config), "logistic regression fit")
    x = result.x
    params = ModelParams(
        beta0=x[b0],
        beta_num=x[bnum] if bnum else np.zeros(0),
        beta_cat=x[bcat] if bcat else np.zeros(0),
        cardinalities=dataset.cardinalities,
    )
    top = max(
        abs(params.beta0),
        float(np.max(np.abs(params.beta_num))) if n else 0.0,
        float(np.max(np.abs(params.beta_cat))) if k else 0.0,
    )
    # a run toward the box flattens the objective long before the bound
    # itself binds, so also treat uniformly huge margins as the signal
    margins = dataset.y * scores(params, dataset)
    if top >= 0.999 * COEF_BOUND or bool(np.all(margins > 30.0)):
        warnings.warn("the fit ran toward the coefficient box bound; the data may be separable")
    return params


def score_one(params: ModelParams, x, z) -> float:
    value = params.beta0
    if len(params.beta_num):
        value += float(np.dot(params.beta_num, np.asarray(x, dtype=float)))
    if len(z):
        offsets = block_offsets(params.cardinalities)
        for j, t in enumerate(z):
            if t >= 1:
                value += float(params.beta_cat[offsets[j] + t - 1])
    return float(value)


def predict(params: ModelParams, x, z) -> tuple[int, float]:
    """Label in {+1, -1} and the probability of the positive class.

    A score of exactly zero classifies as positive.
    """
    value = score_one(params, x, z)
    label = 1 if value >= 0 else -1
    return label, float(expit(value))


def predict_batch(params: ModelParams, dataset: Dataset) -> np.ndarray:
    return np.where(scores(params, dataset) >= 0, 1, -1).astype(np.int64)


def classification_error(params: ModelParams, dataset: Dataset) -> float:
    """Fraction of points whose predicted label differs from the recorded one."""
    return float(np.mean(predict_batch(params, dataset) != dataset.y))
