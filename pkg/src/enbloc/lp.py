"""Exact rational linear programming.

Solves  max { c.x | A x <= b }  over free variables with arbitrary-precision
rational arithmetic.  A two-phase simplex over sparse tableau rows with
Bland's pivoting rule guarantees termination; results are exact and come with
certificates: optimal points carry a dual solution (y >= 0, y.A = c,
y.b = value), unbounded results carry a feasible point plus an improving ray.

The solver object can re-optimize several objectives over one feasible basis,
which keeps per-coordinate supremum sweeps cheap.  No floating point is used
anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .core import (
    Bound,
    DimensionError,
    Matrix,
    NEG_INF,
    POS_INF,
    Vector,
    format_rational,
)

_F0 = Fraction(0)
_F1 = Fraction(1)


@dataclass(frozen=True)
class LpProblem:
    """max c.x subject to a x <= b, x in R^q free."""

    a: Matrix
    b: Vector
    c: Vector

    def __post_init__(self):
        if len(self.b) != self.a.nrows:
            raise DimensionError("right-hand side length differs from row count")
        if len(self.c) != self.a.ncols:
            raise DimensionError("objective length differs from column count")

    @property
    def nrows(self) -> int:
        return self.a.nrows

    @property
    def nvars(self) -> int:
        return self.a.ncols

    def dump(self, var_names: Optional[Sequence[str]] = None) -> str:
        """Plain-text rendering for external cross-checking."""
        names = list(var_names) if var_names else [
            f"x{i}" for i in range(self.nvars)
        ]
        lines = ["maximize"]
        lines.append("  " + _affine_text(self.c, names))
        lines.append("subject to")
        for i in range(self.nrows):
            lines.append(
                f"  {_affine_text(self.a.row(i), names)} <= {format_rational(self.b[i])}"
            )
        if self.nrows == 0:
            lines.append("  (no constraints)")
        return "\n".join(lines)


def _affine_text(coeffs: Vector, names: Sequence[str]) -> str:
    terms = []
    for q, name in zip(coeffs, names):
        if q == 0:
            continue
        if q == 1:
            terms.append(f"+ {name}")
        elif q == -1:
            terms.append(f"- {name}")
        elif q < 0:
            terms.append(f"- {format_rational(-q)} {name}")
        else:
            terms.append(f"+ {format_rational(q)} {name}")
    if not terms:
        return "0"
    text = " ".join(terms)
    return text[2:] if text.startswith("+ ") else text


@dataclass(frozen=True)
class Optimal:
    x: Vector
    value: Fraction
    dual: Vector


@dataclass(frozen=True)
class Unbounded:
    point: Vector
    ray: Vector


@dataclass(frozen=True)
class Infeasible:
    pass


LpResult = Union[Optimal, Unbounded, Infeasible]


class _Simplex:
    """Sparse standard-form tableau for  max c.x, A x <= b, x free.

    Columns: q plus-parts, q minus-parts (free x = u - w), one slack per row,
    artificials for the rows that start infeasible.  Rows are dicts holding
    only nonzero entries; Bland's rule picks the lowest eligible index on
    both sides of every pivot, so no cycle can occur.
    """

    def __init__(self, rows: Sequence[Vector], rhs: Sequence[Fraction], q: int):
        self.q = q
        self.r = len(rows)
        self.slack0 = 2 * q
        self.art0 = self.slack0 + self.r
        self.rows: list[dict[int, Fraction]] = []
        self.rhs: list[Fraction] = []
        self.basis: list[int] = []
        self.row_of: dict[int, int] = {}
        self.banned: set[int] = set()
        self.flips: list[int] = []
        art = 0
        for i in range(self.r):
            f = -1 if rhs[i] < 0 else 1
            self.flips.append(f)
            row: dict[int, Fraction] = {}
            for j, v in enumerate(rows[i]):
                if v:
                    row[j] = f * v
                    row[q + j] = -f * v
            row[self.slack0 + i] = Fraction(f)
            if f < 0:
                col = self.art0 + art
                art += 1
                row[col] = _F1
                self.basis.append(col)
                self.banned.add(col)
            else:
                self.basis.append(self.slack0 + i)
            self.rows.append(row)
            self.rhs.append(f * rhs[i])
        for i, col in enumerate(self.basis):
            self.row_of[col] = i
        self.nart = art
        self.cost: dict[int, Fraction] = {}
        self.value = _F0

    # -- pivoting ------------------------------------------------------------

    def _pivot(self, prow: int, pcol: int) -> None:
        row = self.rows[prow]
        piv = row[pcol]
        if piv != 1:
            inv = _F1 / piv
            for j in row:
                row[j] = row[j] * inv
            self.rhs[prow] = self.rhs[prow] * inv
        prhs = self.rhs[prow]
        items = list(row.items())
        for i, other in enumerate(self.rows):
            if i == prow:
                continue
            factor = other.get(pcol)
            if not factor:
                continue
            for j, v in items:
                nv = other.get(j, _F0) - factor * v
                if nv:
                    other[j] = nv
                else:
                    other.pop(j, None)
            if prhs:
                self.rhs[i] = self.rhs[i] - factor * prhs
        factor = self.cost.get(pcol)
        if factor:
            cost = self.cost
            for j, v in items:
                nv = cost.get(j, _F0) - factor * v
                if nv:
                    cost[j] = nv
                else:
                    cost.pop(j, None)
            self.value = self.value + factor * prhs
        old = self.basis[prow]
        del self.row_of[old]
        self.basis[prow] = pcol
        self.row_of[pcol] = prow

    def _choose_row(self, pcol: int) -> Optional[int]:
        best = None
        best_ratio = None
        for i, row in enumerate(self.rows):
            coef = row.get(pcol)
            if coef and coef > 0:
                ratio = self.rhs[i] / coef
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and self.basis[i] < self.basis[best])
                ):
                    best = i
                    best_ratio = ratio
        return best

    def _load_objective(self, obj: dict[int, Fraction]) -> None:
        cost = dict(obj)
        value = _F0
        for i, bcol in enumerate(self.basis):
            cb = obj.get(bcol)
            if cb:
                for j, v in self.rows[i].items():
                    nv = cost.get(j, _F0) - cb * v
                    if nv:
                        cost[j] = nv
                    else:
                        cost.pop(j, None)
                value += cb * self.rhs[i]
        self.cost = {j: v for j, v in cost.items() if v}
        self.value = value

    def maximize(self, obj: dict[int, Fraction]) -> Optional[int]:
        """Optimize obj over the current basis; returns the entering column
        when unbounded, None at an optimum."""
        self._load_objective(obj)
        banned = self.banned
        while True:
            pcol = None
            for j, v in self.cost.items():
                if v > 0 and j not in banned and (pcol is None or j < pcol):
                    pcol = j
            if pcol is None:
                return None
            prow = self._choose_row(pcol)
            if prow is None:
                return pcol
            self._pivot(prow, pcol)

    # -- phases ----------------------------------------------------------------

    def phase1(self) -> bool:
        if self.nart == 0:
            return True
        obj = {self.art0 + k: Fraction(-1) for k in range(self.nart)}
        self.banned, saved = set(), self.banned
        entering = self.maximize(obj)
        self.banned = saved
        assert entering is None, "phase-1 objective is bounded by construction"
        if self.value != 0:
            return False
        for i in range(self.r):
            if self.basis[i] >= self.art0:
                pcol = None
                for j, v in self.rows[i].items():
                    if j < self.art0 and v and (pcol is None or j < pcol):
                        pcol = j
                if pcol is not None:
                    self._pivot(i, pcol)
                # else: redundant row; its artificial stays basic at zero
        return True

    # -- extraction --------------------------------------------------------------

    def _column_value(self, col: int) -> Fraction:
        i = self.row_of.get(col)
        return self.rhs[i] if i is not None else _F0

    def point(self) -> Vector:
        return tuple(
            self._column_value(j) - self._column_value(self.q + j)
            for j in range(self.q)
        )

    def ray(self, pcol: int) -> Vector:
        direction: dict[int, Fraction] = {pcol: _F1}
        for i, row in enumerate(self.rows):
            coef = row.get(pcol)
            if coef:
                direction[self.basis[i]] = -coef
        return tuple(
            direction.get(j, _F0) - direction.get(self.q + j, _F0)
            for j in range(self.q)
        )

    def duals(self) -> list[Fraction]:
        return [
            -self.cost.get(self.slack0 + i, _F0) for i in range(self.r)
        ]


def _objective_columns(c: Vector, q: int) -> dict[int, Fraction]:
    obj: dict[int, Fraction] = {}
    for j, v in enumerate(c):
        if v:
            obj[j] = v
            obj[q + j] = -v
    return obj


def lp_solve(problem: LpProblem) -> LpResult:
    """Exact three-way LP classification with certificates."""
    a, b, c = problem.a, problem.b, problem.c
    # drop duplicate constraints (identical row and right-hand side)
    seen: set[tuple] = set()
    row_map: list[int] = []
    rows = []
    rhs = []
    for i in range(a.nrows):
        key = (a.row(i), b[i])
        if key in seen:
            continue
        seen.add(key)
        row_map.append(i)
        rows.append(a.row(i))
        rhs.append(b[i])
    s = _Simplex(rows, rhs, a.ncols)
    if not s.phase1():
        return Infeasible()
    entering = s.maximize(_objective_columns(c, a.ncols))
    if entering is not None:
        point = s.point()
        ray = s.ray(entering)
        _assert_feasible(problem, point)
        return Unbounded(point=point, ray=ray)
    x = s.point()
    _assert_feasible(problem, x)
    kept = s.duals()
    dual = [_F0] * a.nrows
    for i, orig in enumerate(row_map):
        dual[orig] = kept[i]
    return Optimal(x=x, value=s.value, dual=tuple(dual))


def _assert_feasible(problem: LpProblem, x: Vector) -> None:
    for i in range(problem.nrows):
        lhs = _F0
        for coef, xv in zip(problem.a.row(i), x):
            if coef and xv:
                lhs += coef * xv
        if lhs > problem.b[i]:
            raise AssertionError(
                f"solver returned an infeasible point (row {i}); this is a bug"
            )


def check_certificate(problem: LpProblem, result: LpResult) -> bool:
    """Exact validation of the certificate carried by a result."""
    if isinstance(result, Infeasible):
        return True
    if isinstance(result, Unbounded):
        ok = all(
            _dot(problem.a.row(i), result.point) <= problem.b[i]
            for i in range(problem.nrows)
        )
        ok = ok and all(
            _dot(problem.a.row(i), result.ray) <= 0 for i in range(problem.nrows)
        )
        return ok and _dot(problem.c, result.ray) > 0
    if isinstance(result, Optimal):
        if _dot(problem.c, result.x) != result.value:
            return False
        if any(y < 0 for y in result.dual):
            return False
        for j in range(problem.nvars):
            col = sum(
                (result.dual[i] * problem.a.row(i)[j] for i in range(problem.nrows)),
                _F0,
            )
            if col != problem.c[j]:
                return False
        return _dot(result.dual, problem.b) == result.value
    raise TypeError(f"not an LP result: {result!r}")


def _dot(u: Vector, v: Vector) -> Fraction:
    out = _F0
    for a, b in zip(u, v):
        if a and b:
            out += a * b
    return out


def lp_sup_each(problem: LpProblem, targets: Sequence[int]) -> list[Bound]:
    """Per-coordinate suprema of the feasible region of `problem`.

    The objective vector of `problem` is ignored; only its constraints
    matter.  Returns -inf for every target when the region is empty, +inf for
    targets unbounded above, and the exact finite supremum otherwise.  One
    feasible basis is reused across all targets.
    """
    for t in targets:
        if not (0 <= t < problem.nvars):
            raise DimensionError(f"target index {t} out of range")
    s = _Simplex(
        [problem.a.row(i) for i in range(problem.nrows)],
        list(problem.b),
        problem.nvars,
    )
    if not s.phase1():
        return [NEG_INF for _ in targets]
    out: list[Bound] = []
    for t in targets:
        entering = s.maximize({t: _F1, problem.nvars + t: Fraction(-1)})
        if entering is not None:
            out.append(POS_INF)
            # leave the basis as-is; the next objective restarts pricing
        else:
            out.append(Bound.of(s.value))
    return out
