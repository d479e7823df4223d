"""Exact data model shared by the whole analyzer.

Values are arbitrary-precision rationals (`fractions.Fraction`); bounds extend
them with -inf/+inf.  Programs are control-flow graphs whose edges carry
statements built from affine assignments, affine guards, sequencing (`;`) and
nondeterministic choice (`|`).  Abstract values live in the template constraint
domain: a fixed m-by-n matrix T plus a bound vector d describing the
polyhedron { x | T x <= d }.

Everything here is an immutable value; instances can be shared freely between
threads and reused across analysis runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

Rational = Fraction
Vector = tuple[Fraction, ...]
#: Path of child indices from a statement root down to a choice node.
Position = tuple[int, ...]


class DomainError(ArithmeticError):
    """Undefined extended-rational operation (only -inf + inf qualifies)."""


class DimensionError(ValueError):
    """Matrix/vector dimensions do not line up."""


class TemplateError(ValueError):
    def __init__(self, message: str, code: str = "invalid_template"):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# rationals


def rat(x: Union[int, str, Fraction]) -> Fraction:
    """Convert to an exact rational. Decimal strings convert exactly (0.5 -> 1/2)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise TypeError(f"cannot convert {x!r} to a rational")


def parse_rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational literal: {text!r}") from exc


def format_rational(q: Fraction) -> str:
    return str(q)


# ---------------------------------------------------------------------------
# extended rationals


@dataclass(frozen=True)
class Bound:
    """An element of R union {-inf, +inf}, totally ordered -inf < finite < +inf.

    `kind` is -1 / 0 / +1 for -inf / finite / +inf; `value` is set exactly for
    finite bounds.  Addition of -inf and +inf is a :class:`DomainError` and is
    never formed by any analyzer operation.
    """

    kind: int
    value: Optional[Fraction] = None

    def __post_init__(self):
        if self.kind not in (-1, 0, 1):
            raise ValueError(f"bad bound kind {self.kind!r}")
        if (self.kind == 0) != (self.value is not None):
            raise ValueError("finite bounds carry a value, infinite ones do not")

    @staticmethod
    def of(q: Union[int, str, Fraction]) -> "Bound":
        return Bound(0, rat(q))

    @property
    def is_finite(self) -> bool:
        return self.kind == 0

    @property
    def is_pos_inf(self) -> bool:
        return self.kind > 0

    @property
    def is_neg_inf(self) -> bool:
        return self.kind < 0

    def _key(self):
        return (self.kind, self.value if self.kind == 0 else 0)

    def __lt__(self, other: "Bound") -> bool:
        if self.kind != other.kind:
            return self.kind < other.kind
        if self.kind == 0:
            return self.value < other.value
        return False

    def __le__(self, other: "Bound") -> bool:
        return not other < self

    def __gt__(self, other: "Bound") -> bool:
        return other < self

    def __ge__(self, other: "Bound") -> bool:
        return not self < other

    def __add__(self, other: "Bound") -> "Bound":
        if self.kind == 0 and other.kind == 0:
            return Bound.of(self.value + other.value)
        if self.kind == 0:
            return other
        if other.kind == 0:
            return self
        if self.kind != other.kind:
            raise DomainError("-inf + inf is undefined")
        return self

    def __neg__(self) -> "Bound":
        if self.kind == 0:
            return Bound.of(-self.value)
        return Bound(-self.kind)

    def __str__(self) -> str:
        if self.kind < 0:
            return "-inf"
        if self.kind > 0:
            return "inf"
        return format_rational(self.value)


NEG_INF = Bound(-1)
POS_INF = Bound(1)


def parse_bound(text: str) -> Bound:
    t = text.strip()
    if t in ("inf", "+inf", "oo", "+oo"):
        return POS_INF
    if t in ("-inf", "-oo"):
        return NEG_INF
    return Bound.of(parse_rational(t))


def format_bound(b: Bound) -> str:
    return str(b)


# ---------------------------------------------------------------------------
# matrices and vectors


def as_vector(xs: Iterable) -> Vector:
    return tuple(rat(x) for x in xs)


def zero_vector(n: int) -> Vector:
    return (Fraction(0),) * n


def vec_add(u: Vector, v: Vector) -> Vector:
    if len(u) != len(v):
        raise DimensionError(f"vector sizes differ: {len(u)} vs {len(v)}")
    return tuple(a + b for a, b in zip(u, v))


def vec_sub(u: Vector, v: Vector) -> Vector:
    if len(u) != len(v):
        raise DimensionError(f"vector sizes differ: {len(u)} vs {len(v)}")
    return tuple(a - b for a, b in zip(u, v))


def dot(u: Vector, v: Vector) -> Fraction:
    if len(u) != len(v):
        raise DimensionError(f"vector sizes differ: {len(u)} vs {len(v)}")
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


@dataclass(frozen=True)
class Matrix:
    """Dense rational matrix with an explicit column count (rows may be empty)."""

    entries: tuple[tuple[Fraction, ...], ...]
    ncols: int

    def __post_init__(self):
        for row in self.entries:
            if len(row) != self.ncols:
                raise DimensionError(
                    f"row of length {len(row)} in a {self.ncols}-column matrix"
                )

    @staticmethod
    def from_rows(rows: Iterable[Iterable], ncols: Optional[int] = None) -> "Matrix":
        rs = tuple(as_vector(r) for r in rows)
        if ncols is None:
            if not rs:
                raise DimensionError("empty matrix needs an explicit column count")
            ncols = len(rs[0])
        return Matrix(rs, ncols)

    @staticmethod
    def identity(n: int) -> "Matrix":
        return Matrix(
            tuple(
                tuple(Fraction(1 if i == j else 0) for j in range(n)) for i in range(n)
            ),
            n,
        )

    @staticmethod
    def zeros(nrows: int, ncols: int) -> "Matrix":
        return Matrix(tuple(zero_vector(ncols) for _ in range(nrows)), ncols)

    @property
    def nrows(self) -> int:
        return len(self.entries)

    def row(self, i: int) -> Vector:
        return self.entries[i]

    def matvec(self, v: Vector) -> Vector:
        if len(v) != self.ncols:
            raise DimensionError(f"matvec: {self.ncols} columns vs vector of {len(v)}")
        return tuple(dot(r, v) for r in self.entries)

    def matmat(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.nrows:
            raise DimensionError(
                f"matmat: {self.ncols} columns vs {other.nrows} rows"
            )
        cols = other.ncols
        out = []
        for r in self.entries:
            out.append(
                tuple(
                    sum((r[k] * other.entries[k][j] for k in range(self.ncols)),
                        Fraction(0))
                    for j in range(cols)
                )
            )
        return Matrix(tuple(out), cols)

    def vstack(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.ncols:
            raise DimensionError("vstack: column counts differ")
        return Matrix(self.entries + other.entries, self.ncols)

    def __iter__(self) -> Iterator[Vector]:
        return iter(self.entries)


# ---------------------------------------------------------------------------
# statements


class Statement:
    """Base class of the statement algebra; see the concrete node types."""

    __slots__ = ()


@dataclass(frozen=True)
class Assign(Statement):
    """Affine assignment x := a x + b (all variables updated at once)."""

    a: Matrix
    b: Vector

    def __post_init__(self):
        if self.a.nrows != self.a.ncols or len(self.b) != self.a.nrows:
            raise DimensionError("assignment needs a square matrix and matching offset")


@dataclass(frozen=True)
class Guard(Statement):
    """Affine guard a x <= b; filters states, does not change them."""

    a: Matrix
    b: Vector

    def __post_init__(self):
        if len(self.b) != self.a.nrows:
            raise DimensionError("guard rows and right-hand side differ")


@dataclass(frozen=True)
class Seq(Statement):
    """Sequential composition s1; ...; sk."""

    items: tuple[Statement, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("empty sequence")


@dataclass(frozen=True)
class Choice(Statement):
    """Nondeterministic choice s1 | ... | sk with k >= 2."""

    items: tuple[Statement, ...]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("choice needs at least two alternatives")


def seq(*items: Statement) -> Statement:
    """Sequence builder; flattens nested sequences (`;` is associative)."""
    flat: list[Statement] = []
    for s in items:
        if isinstance(s, Seq):
            flat.extend(s.items)
        else:
            flat.append(s)
    if len(flat) == 1:
        return flat[0]
    return Seq(tuple(flat))


def choice(*items: Statement) -> Statement:
    """Choice builder; flattens nested choices (`|` is associative)."""
    flat: list[Statement] = []
    for s in items:
        if isinstance(s, Choice):
            flat.extend(s.items)
        else:
            flat.append(s)
    if len(flat) == 1:
        return flat[0]
    return Choice(tuple(flat))


def skip(n: int) -> Statement:
    """The identity statement on n variables."""
    return Assign(Matrix.identity(n), zero_vector(n))


def assign_one(n: int, target: int, coeffs: Mapping[int, Fraction], const) -> Statement:
    """x_target := sum coeffs[i] * x_i + const; other variables unchanged."""
    rows = [
        [Fraction(1 if i == j else 0) for j in range(n)] for i in range(n)
    ]
    rows[target] = [rat(coeffs.get(j, 0)) for j in range(n)]
    b = [Fraction(0)] * n
    b[target] = rat(const)
    return Assign(Matrix.from_rows(rows, n), tuple(b))


def guard_le(n: int, coeffs: Mapping[int, Fraction], const) -> Statement:
    """Single-row guard sum coeffs[i] * x_i <= const."""
    row = [rat(coeffs.get(j, 0)) for j in range(n)]
    return Guard(Matrix.from_rows([row], n), (rat(const),))


def statement_nvars(s: Statement) -> int:
    """Number of program variables a statement is built over (validated)."""
    if isinstance(s, Assign):
        return s.a.ncols
    if isinstance(s, Guard):
        return s.a.ncols
    if isinstance(s, (Seq, Choice)):
        ns = {statement_nvars(t) for t in s.items}
        if len(ns) != 1:
            raise DimensionError(f"statement mixes variable counts {sorted(ns)}")
        return ns.pop()
    raise TypeError(f"not a statement: {s!r}")


def choice_positions(s: Statement) -> dict[Position, int]:
    """All choice positions in s, mapped to their arity."""
    out: dict[Position, int] = {}

    def walk(t: Statement, path: Position) -> None:
        if isinstance(t, Choice):
            out[path] = len(t.items)
            for i, child in enumerate(t.items):
                walk(child, path + (i,))
        elif isinstance(t, Seq):
            for i, child in enumerate(t.items):
                walk(child, path + (i,))

    walk(s, ())
    return out


def statement_positions(s: Statement) -> frozenset[Position]:
    """The set of positions of all choice occurrences in s."""
    return frozenset(choice_positions(s))


def is_sequential(s: Statement) -> bool:
    return not choice_positions(s)


def format_statement(s: Statement, names: Sequence[str]) -> str:
    """Render a statement in the text program syntax (re-parseable)."""
    if isinstance(s, Assign):
        n = len(names)
        parts = []
        for i in range(n):
            row = s.a.row(i)
            ident = all(
                row[j] == (1 if j == i else 0) for j in range(n)
            ) and s.b[i] == 0
            if not ident:
                parts.append((names[i], _format_affine(row, s.b[i], names)))
        if not parts:
            return "skip"
        lhs = ", ".join(p[0] for p in parts)
        rhs = ", ".join(p[1] for p in parts)
        return f"{lhs} := {rhs}"
    if isinstance(s, Guard):
        if s.a.nrows == 0:
            return "skip"
        rows = []
        for i in range(s.a.nrows):
            lhs = _format_affine(s.a.row(i), Fraction(0), names)
            rows.append(f"{lhs} <= {format_rational(s.b[i])}")
        return "guard " + ", ".join(rows)
    if isinstance(s, Seq):
        return "; ".join(format_statement(t, names) for t in s.items)
    if isinstance(s, Choice):
        return "(" + " | ".join(format_statement(t, names) for t in s.items) + ")"
    raise TypeError(f"not a statement: {s!r}")


def _format_affine(row: Vector, const: Fraction, names: Sequence[str]) -> str:
    terms = []
    for coeff, name in zip(row, names):
        if coeff == 0:
            continue
        if coeff == 1:
            terms.append(("+", name))
        elif coeff == -1:
            terms.append(("-", name))
        elif coeff < 0:
            terms.append(("-", f"{format_rational(-coeff)}*{name}"))
        else:
            terms.append(("+", f"{format_rational(coeff)}*{name}"))
    if const != 0 or not terms:
        sign = "-" if const < 0 else "+"
        terms.append((sign, format_rational(abs(const))))
    first_sign, first = terms[0]
    text = ("-" if first_sign == "-" else "") + first
    for sign, t in terms[1:]:
        text += f" {sign} {t}"
    return text


# ---------------------------------------------------------------------------
# programs


Edge = tuple[str, Statement, str]


@dataclass(frozen=True)
class Program:
    """A control-flow graph with statement-labelled edges.

    `initial` (if given) is the abstract value the start node is seeded with;
    it must match the analysis template.  `init_guard` is the raw constraint
    form of the initial region (as written in program files); the engine turns
    it into an abstract value once a template is fixed.  When both are absent
    the start node is seeded with the abstraction of the whole space.
    """

    var_names: tuple[str, ...]
    nodes: tuple[str, ...]
    start: str
    edges: tuple[Edge, ...]
    initial: Optional["AbstractValue"] = None
    init_guard: Optional[Guard] = None

    def __post_init__(self):
        if len(set(self.var_names)) != len(self.var_names):
            raise ValueError("duplicate variable names")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node names")
        if self.start not in self.nodes:
            raise ValueError(f"start node {self.start!r} is not declared")
        n = len(self.var_names)
        for (u, s, v) in self.edges:
            if u not in self.nodes or v not in self.nodes:
                raise ValueError(f"edge {u!r}->{v!r} uses undeclared nodes")
            if statement_nvars(s) != n:
                raise DimensionError(
                    f"edge {u!r}->{v!r} statement uses a different variable count"
                )
        if self.init_guard is not None and self.init_guard.a.ncols != n:
            raise DimensionError("initial constraints use a different variable count")

    @property
    def nvars(self) -> int:
        return len(self.var_names)

    def out_edges(self, u: str) -> list[Edge]:
        return [e for e in self.edges if e[0] == u]

    def in_edges(self, v: str) -> list[Edge]:
        return [e for e in self.edges if e[2] == v]


# ---------------------------------------------------------------------------
# template constraint domain


@dataclass(frozen=True)
class Template:
    """Template constraint matrix plus display labels for its rows."""

    t: Matrix
    row_labels: tuple[str, ...]

    def __post_init__(self):
        if self.t.nrows < 1:
            raise TemplateError("a template needs at least one row", "empty_template")
        if len(self.row_labels) != self.t.nrows:
            raise TemplateError("one label per template row", "bad_labels")
        seen: dict[Vector, int] = {}
        for i, row in enumerate(self.t.entries):
            if row in seen:
                raise TemplateError(
                    f"template rows {seen[row]} and {i} are identical",
                    "duplicate_row",
                )
            seen[row] = i

    @property
    def nrows(self) -> int:
        return self.t.nrows

    @property
    def nvars(self) -> int:
        return self.t.ncols


def make_template(rows: Iterable[Iterable], labels: Optional[Sequence[str]] = None,
                  var_names: Optional[Sequence[str]] = None) -> Template:
    m = Matrix.from_rows(rows)
    if labels is None:
        names = list(var_names) if var_names is not None else [
            f"x{i + 1}" for i in range(m.ncols)
        ]
        labels = tuple(_format_affine(r, Fraction(0), names) for r in m.entries)
    return Template(m, tuple(labels))


@dataclass(frozen=True)
class AbstractValue:
    """A bound vector d; concretizes to { x | T x <= d } for the template in use."""

    bounds: tuple[Bound, ...]

    def __len__(self) -> int:
        return len(self.bounds)

    def __getitem__(self, i: int) -> Bound:
        return self.bounds[i]

    def __iter__(self) -> Iterator[Bound]:
        return iter(self.bounds)

    @staticmethod
    def bottom(m: int) -> "AbstractValue":
        return AbstractValue((NEG_INF,) * m)

    @staticmethod
    def top(m: int) -> "AbstractValue":
        return AbstractValue((POS_INF,) * m)

    @staticmethod
    def of(bounds: Iterable) -> "AbstractValue":
        out = []
        for b in bounds:
            out.append(b if isinstance(b, Bound) else Bound.of(b))
        return AbstractValue(tuple(out))

    @property
    def is_bottom(self) -> bool:
        return all(b.is_neg_inf for b in self.bounds)

    def leq(self, other: "AbstractValue") -> bool:
        if len(self) != len(other):
            raise DimensionError("abstract values of different height")
        return all(a <= b for a, b in zip(self.bounds, other.bounds))

    def join(self, other: "AbstractValue") -> "AbstractValue":
        if len(self) != len(other):
            raise DimensionError("abstract values of different height")
        return AbstractValue(tuple(max(a, b) for a, b in zip(self.bounds, other.bounds)))

    def meet(self, other: "AbstractValue") -> "AbstractValue":
        if len(self) != len(other):
            raise DimensionError("abstract values of different height")
        return AbstractValue(tuple(min(a, b) for a, b in zip(self.bounds, other.bounds)))

    def __str__(self) -> str:
        return "(" + ", ".join(str(b) for b in self.bounds) + ")"


def alpha_of_universe(tpl: Template) -> AbstractValue:
    """Abstraction of the whole space: 0 for all-zero template rows, +inf else."""
    out = []
    for row in tpl.t.entries:
        if all(c == 0 for c in row):
            out.append(Bound.of(0))
        else:
            out.append(POS_INF)
    return AbstractValue(tuple(out))


def gamma_contains(tpl: Template, d: AbstractValue, x: Sequence) -> bool:
    """Membership x in { y | T y <= d }, exact."""
    if len(d) != tpl.nrows:
        raise DimensionError("abstract value height differs from template rows")
    xv = as_vector(x)
    if len(xv) != tpl.nvars:
        raise DimensionError("point dimension differs from template columns")
    for row, b in zip(tpl.t.entries, d.bounds):
        if b.is_pos_inf:
            continue
        if b.is_neg_inf:
            return False
        if dot(row, xv) > b.value:
            return False
    return True
