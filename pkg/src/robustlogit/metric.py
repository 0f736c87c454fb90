"""Ground metric on mixed-feature points and the dual norms used by the model.

The per-point distance is a sum of three parts: a norm on the numerical
features (optionally with per-coordinate weights), a count of categorical
disagreements raised to 1/p, and a label-flip weight kappa.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPPORTED_NORMS = ("l1", "l2", "linf")

_DUAL_OF = {"l1": "linf", "l2": "l2", "linf": "l1"}


@dataclass(frozen=True)
class GroundMetricConfig:
    """Norm choice, categorical exponent p and label weight kappa.

    ``weights`` scales the numeric coordinates before the norm is applied;
    the dual norm then uses the reciprocal weights.
    """

    norm: str = "l1"
    p: float = 1.0
    kappa: float = 1.0
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.norm not in SUPPORTED_NORMS:
            raise ValueError(f"unsupported norm {self.norm!r}; expected one of {SUPPORTED_NORMS}")
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("weights must be strictly positive")
            object.__setattr__(self, "weights", w)


def dual_of(norm: str) -> str:
    """Identifier of the dual norm (l1 <-> linf, l2 self-dual)."""
    return _DUAL_OF[norm]


def norm_value(v: np.ndarray, norm: str, weights: np.ndarray | None = None) -> float:
    """``||v||`` for the supported norms, with optional coordinate weights."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    if weights is not None:
        v = v * weights
    if norm == "l1":
        return float(np.sum(np.abs(v)))
    if norm == "l2":
        return float(np.sqrt(np.sum(v * v)))
    if norm == "linf":
        return float(np.max(np.abs(v)))
    raise ValueError(f"unsupported norm {norm!r}")


def dual_norm(v: np.ndarray, norm: str, weights: np.ndarray | None = None) -> float:
    """Dual norm of ``v`` with respect to the (possibly weighted) primal norm.

    A weighted primal ||diag(w) x|| dualizes to ||diag(1/w) v||_*.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    if weights is not None:
        v = v / np.asarray(weights, dtype=float)
    return norm_value(v, dual_of(norm))


def d_categorical(z: np.ndarray, z_other: np.ndarray, p: float) -> float:
    """Number of disagreeing categorical features, raised to 1/p."""
    z = np.asarray(z)
    z_other = np.asarray(z_other)
    if z.shape != z_other.shape:
        raise ValueError(f"categorical length mismatch: {z.shape} vs {z_other.shape}")
    if not p > 0:
        raise ValueError("p must be positive")
    delta = int(np.count_nonzero(z != z_other))
    return disagreement_distance(delta, p)


def disagreement_distance(delta: int, p: float) -> float:
    """delta**(1/p) with the delta = 0 case kept exact."""
    if delta == 0:
        return 0.0
    return float(delta) ** (1.0 / p)


def ground_distance(
    x: np.ndarray,
    z: np.ndarray,
    y: int,
    x_other: np.ndarray,
    z_other: np.ndarray,
    y_other: int,
    config: GroundMetricConfig,
) -> float:
    """Distance between two data points (x, z, y) and (x', z', y')."""
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if x.shape != x_other.shape:
        raise ValueError(f"numeric dimension mismatch: {x.shape} vs {x_other.shape}")
    numeric = norm_value(x - x_other, config.norm, config.weights)
    categorical = d_categorical(z, z_other, config.p)
    label = config.kappa if y != y_other else 0.0
    return numeric + categorical + label
