"""Greedy identification of most violated constraint groups.

For a fixed master solution, the violation of the group at (i, z) is

    v(z) = exp(-s_i - lam*d_C(z, z^i) [- lam*kappa]) * (1 + exp(theta(z)))

where theta(z) is the softplus argument of the family (label kept or
flipped).  Since the categorical part of the metric only depends on the
number of disagreeing features, the maximum over z decomposes: pick the best
alternative value per feature, sort features by their score contribution,
and compare the m+1 candidates that flip the top-delta features.  All
evaluation is done in the log domain; v(z) itself can overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, block_offsets
from .formulation import MasterSolution
from .metric import GroundMetricConfig, disagreement_distance

FAMILIES = ("plus", "minus")


@dataclass(frozen=True)
class ViolationReport:
    """Most violated configuration found for one data point and family."""

    index: int
    family: str
    z: tuple[int, ...]
    value: float       # v(z)
    log_value: float   # log v(z); log(1 + violation) = max(0, log_value)
    violation: float   # max(0, v(z) - 1)
    candidates: int    # configurations compared (always m + 1)


def _family_sign(family: str) -> float:
    if family == "plus":
        return -1.0
    if family == "minus":
        return 1.0
    raise ValueError(f"unknown constraint family {family!r}")


def log_violation_value(
    i: int,
    z,
    family: str,
    solution: MasterSolution,
    dataset: Dataset,
    config: GroundMetricConfig,
) -> float:
    """log v(z) for one constraint group, evaluated without overflow."""
    params = solution.params
    z = np.asarray(z, dtype=np.int64)
    offsets = block_offsets(dataset.cardinalities)
    score = params.beta0
    if dataset.n:
        score += float(dataset.X[i] @ params.beta_num)
    for j in range(dataset.m):
        t = z[j]
        if t >= 1:
            score += params.beta_cat[offsets[j] + t - 1]
    theta = _family_sign(family) * float(dataset.y[i]) * score
    delta = int(np.count_nonzero(z != dataset.Z[i]))
    base = -float(solution.s[i]) - solution.lam * disagreement_distance(delta, config.p)
    if family == "minus":
        base -= solution.lam * config.kappa
    return float(np.logaddexp(0.0, theta) + base)


def violation_value(i, z, family, solution, dataset, config) -> float:
    """v(z) in the linear domain; saturates to inf for extreme scores."""
    log_v = log_violation_value(i, z, family, solution, dataset, config)
    return float(np.exp(log_v)) if log_v < 700.0 else float("inf")


def most_violated(
    i: int,
    family: str,
    solution: MasterSolution,
    dataset: Dataset,
    config: GroundMetricConfig,
) -> ViolationReport:
    """Best configuration for data point i in the given family.

    Ties in the feature ordering break by feature index, ties in the
    per-feature best value by category index, and ties across candidates by
    the smaller number of flipped features.
    """
    params = solution.params
    m = dataset.m
    z_i = dataset.Z[i]
    offsets = block_offsets(dataset.cardinalities)
    sign = _family_sign(family)
    ytil = -sign * float(dataset.y[i])  # theta = -ytil * score

    score_at = params.beta0
    if dataset.n:
        score_at += float(dataset.X[i] @ params.beta_num)
    for j in range(m):
        t = z_i[j]
        if t >= 1:
            score_at += params.beta_cat[offsets[j] + t - 1]
    theta_base = -ytil * score_at

    # Per feature: the alternative category maximizing the theta gain.
    best_alt = np.zeros(m, dtype=np.int64)
    gains = np.zeros(m)
    for j in range(m):
        kj = dataset.cardinalities[j]
        # ytil * (block value) for categories 0..kj-1; reference contributes 0
        block = params.beta_cat[offsets[j]: offsets[j] + kj - 1]
        vals = np.concatenate(([0.0], ytil * block))
        vals_masked = vals.copy()
        vals_masked[z_i[j]] = np.inf  # the observed category is not an alternative
        t_star = int(np.argmin(vals_masked))  # ties resolve to the smaller index
        best_alt[j] = t_star
        gains[j] = vals[z_i[j]] - vals[t_star]  # increase of theta when flipping j

    order = np.argsort(-gains, kind="stable")  # descending; ties keep feature order
    theta = theta_base + np.concatenate(([0.0], np.cumsum(gains[order])))
    deltas = np.arange(m + 1)
    dists = np.array([disagreement_distance(int(d), config.p) for d in deltas])
    base = -float(solution.s[i]) - solution.lam * dists
    if family == "minus":
        base = base - solution.lam * config.kappa
    log_v = np.logaddexp(0.0, theta) + base

    best_delta = int(np.argmax(log_v))  # first maximum: fewest flips on ties
    z_best = z_i.copy()
    for j in order[:best_delta]:
        z_best[j] = best_alt[j]
    best_log = float(log_v[best_delta])
    # linear-domain values only for reporting; 700 is shy of the float64 exp limit
    value = float(np.exp(best_log)) if best_log < 700.0 else float("inf")
    violation = max(0.0, float(np.expm1(best_log))) if best_log < 700.0 else float("inf")
    return ViolationReport(
        index=i,
        family=family,
        z=tuple(int(t) for t in z_best),
        value=value,
        log_value=best_log,
        violation=violation,
        candidates=m + 1,
    )


def separate_all(
    solution: MasterSolution,
    dataset: Dataset,
    config: GroundMetricConfig,
) -> tuple[ViolationReport, ViolationReport]:
    """The most violated (plus, minus) reports over all data points.

    Scanning in data-point order with a strict improvement test makes the
    result deterministic: ties keep the smallest index.
    """
    best = {family: None for family in FAMILIES}
    for i in range(dataset.N):
        for family in FAMILIES:
            report = most_violated(i, family, solution, dataset, config)
            incumbent = best[family]
            if incumbent is None or report.log_value > incumbent.log_value:
                best[family] = report
    return best["plus"], best["minus"]


def separate_top(
    solution: MasterSolution,
    dataset: Dataset,
    config: GroundMetricConfig,
    per_family: int,
    families=FAMILIES,
) -> dict:
    """The per_family most violated reports per family, one per data point."""
    reports = {family: [] for family in families}
    for i in range(dataset.N):
        for family in families:
            reports[family].append(most_violated(i, family, solution, dataset, config))
    out = {}
    for family in families:
        ranked = sorted(reports[family], key=lambda r: (-r.log_value, r.index))
        out[family] = ranked[:per_family]
    return out
