"""Independent cross-checking machinery.

Everything here recomputes analyzer results by a different route: transformer
values by explicit path enumeration plus per-path LP, fixpoints by bounded
value iteration, reachability by concrete breadth-first search over integer
boxes.  The generators build the stress families used to exercise worst-case
behavior (binary-counter loops and propositional reductions).
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from . import lp
from .core import (
    AbstractValue,
    Assign,
    Bound,
    Choice,
    Guard,
    Matrix,
    NEG_INF,
    POS_INF,
    Program,
    Seq,
    Statement,
    Template,
    Vector,
    as_vector,
    assign_one,
    choice,
    dot,
    gamma_contains,
    guard_le,
    rat,
    seq,
    skip,
    statement_nvars,
    vec_add,
    zero_vector,
)
from .engine import ConstAtom, EquationSystem, VarAssignment
from .transform import (
    DEFAULT_PATH_LIMIT,
    SequentialNormalForm,
    normalize_sequential,
    path_expand,
)


# ---------------------------------------------------------------------------
# brute-force abstract transformer


def _branch_row_value(norm: SequentialNormalForm, d: AbstractValue,
                      tpl: Template, j: int) -> Bound:
    """sup of template row j over one normalized branch, from region d."""
    rows: list[Vector] = []
    rhs: list[Fraction] = []
    for i in range(tpl.nrows):
        b = d[i]
        if b.is_pos_inf:
            continue
        if b.is_neg_inf:
            return NEG_INF
        rows.append(tpl.t.row(i))
        rhs.append(b.value)
    rows.extend(norm.guard_lhs.entries)
    rhs.extend(norm.guard_rhs)
    tj = tpl.t.row(j)
    objective = tuple(
        sum((tj[i] * norm.update_lin.entries[i][k] for i in range(tpl.nvars)),
            Fraction(0))
        for k in range(tpl.nvars)
    )
    offset = dot(tj, norm.update_off)
    res = lp.lp_solve(
        lp.LpProblem(Matrix(tuple(rows), tpl.nvars), tuple(rhs), objective)
    )
    if isinstance(res, lp.Infeasible):
        return NEG_INF
    if isinstance(res, lp.Unbounded):
        return POS_INF
    return Bound.of(res.value + offset)


def brute_force_row(s: Statement, d: AbstractValue, tpl: Template, j: int,
                    path_limit: int = DEFAULT_PATH_LIMIT) -> Bound:
    """Row j of the abstract transformer, by enumerating all paths."""
    expanded = path_expand(s, path_limit)
    branches = expanded.items if isinstance(expanded, Choice) else (expanded,)
    best = NEG_INF
    for br in branches:
        best = max(best, _branch_row_value(normalize_sequential(br), d, tpl, j))
    return best


def brute_force_transformer(s: Statement, d: AbstractValue, tpl: Template,
                            path_limit: int = DEFAULT_PATH_LIMIT) -> AbstractValue:
    """The full abstract transformer of s at d, one LP per (path, row)."""
    expanded = path_expand(s, path_limit)
    branches = expanded.items if isinstance(expanded, Choice) else (expanded,)
    norms = [normalize_sequential(br) for br in branches]
    out = []
    for j in range(tpl.nrows):
        best = NEG_INF
        for norm in norms:
            best = max(best, _branch_row_value(norm, d, tpl, j))
        out.append(best)
    return AbstractValue(tuple(out))


# ---------------------------------------------------------------------------
# bounded Kleene iteration


@dataclass
class KleeneResult:
    assignment: VarAssignment
    stabilized: bool


def kleene_bounded(es: EquationSystem, k: int,
                   path_limit: int = DEFAULT_PATH_LIMIT) -> KleeneResult:
    """k rounds of value iteration from bottom, using the brute-force
    transformer for every disjunct; a lower bound on the least solution."""
    rho: VarAssignment = {v: NEG_INF for v in es.variables}
    stabilized = False
    for _ in range(k):
        nxt: VarAssignment = {}
        for var in es.variables:
            best = NEG_INF
            for atom in es.equations[var]:
                if isinstance(atom, ConstAtom):
                    best = max(best, atom.value)
                else:
                    d = es.block(atom.source, rho)
                    best = max(
                        best,
                        brute_force_row(atom.statement, d, es.template,
                                        atom.row, path_limit),
                    )
            nxt[var] = best
        if nxt == rho:
            stabilized = True
            break
        rho = nxt
    return KleeneResult(rho, stabilized)


# ---------------------------------------------------------------------------
# concrete enumeration


@dataclass
class ConcreteStateSet:
    states: dict[str, frozenset[Vector]]
    truncated: bool


def concrete_post(s: Statement, x: Vector) -> set[Vector]:
    """All successors of a single concrete state under a statement."""
    if isinstance(s, Assign):
        return {vec_add(s.a.matvec(x), s.b)}
    if isinstance(s, Guard):
        for i in range(s.a.nrows):
            if dot(s.a.row(i), x) > s.b[i]:
                return set()
        return {x}
    if isinstance(s, Seq):
        cur = {x}
        for item in s.items:
            nxt: set[Vector] = set()
            for state in cur:
                nxt |= concrete_post(item, state)
            cur = nxt
            if not cur:
                break
        return cur
    if isinstance(s, Choice):
        out: set[Vector] = set()
        for item in s.items:
            out |= concrete_post(item, x)
        return out
    raise TypeError(f"not a statement: {s!r}")


Box = Union[tuple[int, int], Mapping[str, tuple[int, int]]]


def _box_ranges(p: Program, bounds: Box) -> list[tuple[Fraction, Fraction]]:
    if isinstance(bounds, tuple):
        lo, hi = bounds
        return [(rat(lo), rat(hi))] * p.nvars
    out = []
    for name in p.var_names:
        if name not in bounds:
            raise ValueError(f"no bounds given for variable {name!r}")
        lo, hi = bounds[name]
        out.append((rat(lo), rat(hi)))
    return out


def concrete_enumerate(p: Program, bounds: Box,
                       max_states: int = 100_000,
                       tpl: Optional[Template] = None) -> ConcreteStateSet:
    """BFS closure of reachable states, from all integer start states in the
    box (filtered by the program's initial region when one is set).

    Successors leaving the box are discarded, making this a finite
    under-approximation suited to programs whose interesting behavior is
    integral and bounded.
    """
    ranges = _box_ranges(p, bounds)

    def in_box(x: Vector) -> bool:
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, ranges))

    def start_ok(x: Vector) -> bool:
        if p.init_guard is not None:
            return all(
                dot(p.init_guard.a.row(i), x) <= p.init_guard.b[i]
                for i in range(p.init_guard.a.nrows)
            )
        if p.initial is not None and tpl is not None:
            return gamma_contains(tpl, p.initial, x)
        return True

    # single-variable initial constraints tighten the start grid directly
    start_ranges = list(ranges)
    if p.init_guard is not None:
        for i in range(p.init_guard.a.nrows):
            row = p.init_guard.a.row(i)
            nonzero = [j for j, c in enumerate(row) if c != 0]
            if len(nonzero) != 1:
                continue
            j = nonzero[0]
            lo, hi = start_ranges[j]
            limit = p.init_guard.b[i] / row[j]
            if row[j] > 0:
                hi = min(hi, limit)
            else:
                lo = max(lo, limit)
            start_ranges[j] = (lo, hi)

    grids = [
        range(math.ceil(lo), math.floor(hi) + 1) for lo, hi in start_ranges
    ]
    seen: dict[str, set[Vector]] = {v: set() for v in p.nodes}
    queue: deque[tuple[str, Vector]] = deque()
    truncated = False
    total = 0

    def push(node: str, x: Vector) -> None:
        nonlocal total, truncated
        if x in seen[node]:
            return
        if total >= max_states:
            truncated = True
            return
        seen[node].add(x)
        total += 1
        queue.append((node, x))

    for combo in itertools.product(*grids):
        x = as_vector(combo)
        if start_ok(x):
            push(p.start, x)
    while queue:
        node, x = queue.popleft()
        for (_, stmt, succ) in p.out_edges(node):
            for y in concrete_post(stmt, x):
                if in_box(y):
                    push(succ, y)
    return ConcreteStateSet(
        {v: frozenset(s) for v, s in seen.items()}, truncated
    )


# ---------------------------------------------------------------------------
# propositional formulas and the SAT reduction


@dataclass(frozen=True)
class PLit:
    var: int
    positive: bool = True


@dataclass(frozen=True)
class PAnd:
    items: tuple


@dataclass(frozen=True)
class POr:
    items: tuple


PropFormula = Union[PLit, PAnd, POr]


def eval_prop(f: PropFormula, assignment: Sequence[bool]) -> bool:
    if isinstance(f, PLit):
        v = assignment[f.var]
        return v if f.positive else not v
    if isinstance(f, PAnd):
        return all(eval_prop(g, assignment) for g in f.items)
    if isinstance(f, POr):
        return any(eval_prop(g, assignment) for g in f.items)
    raise TypeError(f"not a propositional formula: {f!r}")


def prop_nvars(f: PropFormula) -> int:
    if isinstance(f, PLit):
        return f.var + 1
    return max(prop_nvars(g) for g in f.items)


def truth_table_sat(f: PropFormula, nvars: int) -> bool:
    return any(
        eval_prop(f, combo) for combo in itertools.product((False, True),
                                                           repeat=nvars)
    )


def sat_to_statement(f: PropFormula, nvars: int) -> Statement:
    """Statement over z1..zk whose transformer at top is non-bottom iff f is
    satisfiable: literals pin variables to 0/1, conjunction sequences,
    disjunction branches."""

    def build(g: PropFormula) -> Statement:
        if isinstance(g, PLit):
            want = Fraction(1 if g.positive else 0)
            row = [Fraction(0)] * nvars
            row[g.var] = Fraction(1)
            neg = [Fraction(0)] * nvars
            neg[g.var] = Fraction(-1)
            return Guard(
                Matrix.from_rows([row, neg], nvars), (want, -want)
            )
        if isinstance(g, PAnd):
            return seq(*(build(h) for h in g.items))
        if isinstance(g, POr):
            return choice(*(build(h) for h in g.items))
        raise TypeError(f"not a propositional formula: {g!r}")

    return build(f)


# ---------------------------------------------------------------------------
# stress-program generators


def make_exponential_program(n: int) -> Program:
    """Binary-counter loop family: the analysis needs about 2**n improvement
    rounds because the loop path taken depends on the exact counter value.

    Variables: x1 (counter), x2 (scratch), y1..yn (powers of two).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    names = ("x1", "x2") + tuple(f"y{i}" for i in range(1, n + 1))
    nv = len(names)
    x1, x2 = 0, 1

    def y(i: int) -> int:
        return 1 + i  # y_i at index 2 + (i-1)

    init_parts: list[Statement] = [assign_one(nv, x1, {}, 0)]
    init_parts.append(assign_one(nv, y(1), {}, 1))
    for i in range(2, n + 1):
        init_parts.append(assign_one(nv, y(i), {y(i - 1): Fraction(2)}, 0))
    init_stmt = seq(*init_parts)

    body: list[Statement] = [assign_one(nv, x2, {x1: Fraction(1)}, 0)]
    for i in range(n, 0, -1):
        take = seq(
            guard_le(nv, {x2: Fraction(-1), y(i): Fraction(1)}, 0),  # x2 >= y_i
            assign_one(nv, x2, {x2: Fraction(1), y(i): Fraction(-1)}, 0),
        )
        leave = guard_le(nv, {x2: Fraction(1), y(i): Fraction(-1)}, -1)  # x2 <= y_i - 1
        body.append(Choice((take, leave)))
    body.append(assign_one(nv, x1, {x1: Fraction(1)}, 1))
    loop = seq(*body)

    return Program(
        var_names=names,
        nodes=("st", "1"),
        start="st",
        edges=(("st", init_stmt, "1"), ("1", loop, "1")),
    )


def make_forall_exists_program(n_forall: int, n_exists: int,
                               matrix: PropFormula) -> Program:
    """Reachability witness for a forall-exists propositional sentence.

    The loop walks a counter x through 0..2**n_forall - 1, decodes its bits
    into the universal variables, guesses the existential ones, and only
    passes the matrix check before incrementing.  The exit node (guarded by
    x >= 2**n_forall) is reachable iff the sentence is true.
    """
    if n_forall < 0 or n_exists < 0:
        raise ValueError("variable counts must be non-negative")
    names = ("x", "xp") + tuple(
        f"u{i}" for i in range(1, n_forall + 1)
    ) + tuple(f"e{i}" for i in range(1, n_exists + 1))
    nv = len(names)
    x, xp = 0, 1

    def u(i: int) -> int:
        return 1 + i

    def e(i: int) -> int:
        return 1 + n_forall + i

    # matrix variables: 0..n_forall-1 are universal, the rest existential
    def lit_target(var: int) -> int:
        if var < n_forall:
            return u(var + 1)
        return e(var - n_forall + 1)

    def remap(g: PropFormula) -> PropFormula:
        if isinstance(g, PLit):
            return PLit(lit_target(g.var), g.positive)
        if isinstance(g, PAnd):
            return PAnd(tuple(remap(h) for h in g.items))
        return POr(tuple(remap(h) for h in g.items))

    body: list[Statement] = [assign_one(nv, xp, {x: Fraction(1)}, 0)]
    for i in range(n_forall, 0, -1):
        p2 = Fraction(2 ** (i - 1))
        take = seq(
            guard_le(nv, {xp: Fraction(-1)}, -p2),            # xp >= 2^(i-1)
            assign_one(nv, xp, {xp: Fraction(1)}, -p2),
            assign_one(nv, u(i), {}, 1),
        )
        leave = seq(
            guard_le(nv, {xp: Fraction(1)}, p2 - 1),          # xp <= 2^(i-1)-1
            assign_one(nv, u(i), {}, 0),
        )
        body.append(Choice((take, leave)))
    check = sat_to_statement(remap(matrix), nv) if (
        n_forall + n_exists
    ) > 0 else skip(nv)
    body.append(check)
    body.append(assign_one(nv, x, {x: Fraction(1)}, 1))
    loop = seq(*body)
    exit_guard = guard_le(nv, {x: Fraction(-1)}, -(2 ** n_forall))  # x >= 2^n

    return Program(
        var_names=names,
        nodes=("st", "1", "2"),
        start="st",
        edges=(
            ("st", assign_one(nv, x, {}, 0), "1"),
            ("1", loop, "1"),
            ("1", exit_guard, "2"),
        ),
    )
