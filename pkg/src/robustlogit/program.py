"""A small intermediate representation for exponential-cone programs.

Models are assembled as sparse rows over scalar variables and handed to a
solver backend.  Only the cone types the models need are represented:
equalities, inequalities, second-order cones and exponential cones.

Exponential-cone membership follows the convention

    (a, b, c) in Kexp  <=>  a >= b * exp(c / b),  a, b > 0  (closure taken),

so a softplus bound log(1 + exp(t)) <= s becomes the pair of cone triples
(u, 1, -s) in Kexp and (v, 1, t - s) in Kexp together with u + v <= 1.

Constraint rows are stored in flat append-only buffers rather than per-row
objects: the big models generated here have hundreds of thousands of cone
triples, and per-row Python structures would dominate memory.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field

import numpy as np

# An affine expression is a transient sparse row: (variable indices, coefficients, constant).
Affine = tuple[list[int], list[float], float]


def affine(cols, vals, const: float = 0.0) -> Affine:
    return (list(cols), [float(v) for v in vals], float(const))


def const_expr(c: float) -> Affine:
    return ([], [], float(c))


def var_expr(j: int, scale: float = 1.0, const: float = 0.0) -> Affine:
    return ([j], [float(scale)], float(const))


def negate(expr: Affine) -> Affine:
    cols, vals, const = expr
    return (list(cols), [-v for v in vals], -const)


def add_affine(*exprs: Affine) -> Affine:
    """Sum of affine expressions, merging duplicate columns."""
    acc: dict[int, float] = {}
    const = 0.0
    for cols, vals, c in exprs:
        const += c
        for j, v in zip(cols, vals):
            acc[j] = acc.get(j, 0.0) + v
    cols = sorted(acc)
    return (cols, [acc[j] for j in cols], const)


def scale_affine(expr: Affine, s: float) -> Affine:
    cols, vals, const = expr
    return (list(cols), [s * v for v in vals], s * const)


def dot_expr(cols, coeffs, const: float = 0.0) -> Affine:
    """sum_t coeffs[t] * x[cols[t]] + const, dropping zero coefficients."""
    out_cols: list[int] = []
    out_vals: list[float] = []
    for j, v in zip(cols, coeffs):
        if v != 0.0:
            out_cols.append(int(j))
            out_vals.append(float(v))
    return (out_cols, out_vals, float(const))


class _RowBuffer:
    """Append-only sparse rows: COO triplets plus one constant per row."""

    __slots__ = ("rows", "cols", "vals", "consts", "count")

    def __init__(self):
        self.rows = array("q")
        self.cols = array("q")
        self.vals = array("d")
        self.consts = array("d")
        self.count = 0

    def push(self, expr: Affine) -> int:
        cols, vals, const = expr
        r = self.count
        if cols:
            self.rows.extend([r] * len(cols))
            self.cols.extend(cols)
            self.vals.extend(vals)
        self.consts.append(const)
        self.count += 1
        return r

    def row_expr(self, r: int) -> Affine:
        """Rebuild one row; linear scan, meant for debugging output only."""
        cols = [c for rr, c in zip(self.rows, self.cols) if rr == r]
        vals = [v for rr, v in zip(self.rows, self.vals) if rr == r]
        return (cols, vals, self.consts[r])


@dataclass
class ConicProgram:
    """Sparse conic program: minimize q'x subject to cone constraints.

    Sections: equality rows (== 0), inequality rows (>= 0), second-order
    cone blocks, and exponential cone triples stored as consecutive rows
    (a, b, c) per triple.
    """

    _num_vars: int = 0
    _names: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    eq: _RowBuffer = field(default_factory=_RowBuffer)
    ineq: _RowBuffer = field(default_factory=_RowBuffer)
    soc_blocks: list = field(default_factory=list)
    exp: _RowBuffer = field(default_factory=_RowBuffer)

    @property
    def num_vars(self) -> int:
        return self._num_vars

    @property
    def num_exp_cones(self) -> int:
        return self.exp.count // 3

    def name_of(self, j: int) -> str:
        return self._names.get(j, f"x{j}")

    def add_var(self, name: str | None = None, obj: float = 0.0) -> int:
        j = self._num_vars
        self._num_vars += 1
        if name is not None:
            self._names[j] = name
        if obj != 0.0:
            self.objective[j] = self.objective.get(j, 0.0) + float(obj)
        return j

    def add_vars(self, prefix: str, n: int) -> list[int]:
        return [self.add_var(f"{prefix}[{t}]") for t in range(n)]

    def add_objective(self, j: int, coeff: float):
        self.objective[j] = self.objective.get(j, 0.0) + float(coeff)

    def add_eq(self, expr: Affine):
        self.eq.push(expr)

    def add_ineq(self, expr: Affine):
        """expr >= 0."""
        self.ineq.push(expr)

    def add_soc(self, rows: list[Affine]):
        """rows = [t, w_1, ..., w_k]; constrains ||w||_2 <= t."""
        if len(rows) < 1:
            raise ValueError("second-order cone needs at least the epigraph row")
        self.soc_blocks.append([affine(*r) for r in rows])

    def add_expcone(self, a: Affine, b: Affine, c: Affine):
        """(a, b, c) in Kexp, i.e. a >= b exp(c/b)."""
        self.exp.push(a)
        self.exp.push(b)
        self.exp.push(c)

    def softplus_epigraph(self, score: Affine, bound: Affine, name: str | None = None) -> tuple[int, int]:
        """Add log(1 + exp(score)) <= bound; returns the (u, v) variable indices.

        The slack 1 - (u + v) at a solution measures how loose the bound is.
        """
        u = self.add_var(None if name is None else f"u_{name}")
        v = self.add_var(None if name is None else f"v_{name}")
        # u + v <= 1
        self.add_ineq(([u, v], [-1.0, -1.0], 1.0))
        neg_bound = negate(bound)
        # (u, 1, -bound) in Kexp
        self.add_expcone(var_expr(u), const_expr(1.0), neg_bound)
        # (v, 1, score - bound) in Kexp
        self.add_expcone(var_expr(v), const_expr(1.0), add_affine(score, neg_bound))
        return u, v

    def to_text(self) -> str:
        """Human-readable dump for debugging small programs."""

        def fmt(expr: Affine) -> str:
            cols, vals, const = expr
            parts = [f"{v:+g}*{self.name_of(j)}" for j, v in zip(cols, vals)]
            if const != 0.0 or not parts:
                parts.append(f"{const:+g}")
            return " ".join(parts)

        lines = ["minimize " + " ".join(
            f"{v:+g}*{self.name_of(j)}" for j, v in sorted(self.objective.items())
        )]
        for r in range(self.eq.count):
            lines.append(f"  {fmt(self.eq.row_expr(r))} == 0")
        for r in range(self.ineq.count):
            lines.append(f"  {fmt(self.ineq.row_expr(r))} >= 0")
        for rows in self.soc_blocks:
            body = ", ".join(fmt(r) for r in rows[1:])
            lines.append(f"  ||({body})||_2 <= {fmt(rows[0])}")
        for t in range(self.num_exp_cones):
            a = self.exp.row_expr(3 * t)
            b = self.exp.row_expr(3 * t + 1)
            c = self.exp.row_expr(3 * t + 2)
            lines.append(f"  ({fmt(a)}, {fmt(b)}, {fmt(c)}) in Kexp")
        return "\n".join(lines)


def buffer_arrays(buf: _RowBuffer):
    """Views of a row buffer as numpy arrays (rows, cols, vals, consts)."""
    return (
        np.frombuffer(buf.rows, dtype=np.int64) if len(buf.rows) else np.zeros(0, dtype=np.int64),
        np.frombuffer(buf.cols, dtype=np.int64) if len(buf.cols) else np.zeros(0, dtype=np.int64),
        np.frombuffer(buf.vals, dtype=np.float64) if len(buf.vals) else np.zeros(0),
        np.frombuffer(buf.consts, dtype=np.float64) if len(buf.consts) else np.zeros(0),
    )
