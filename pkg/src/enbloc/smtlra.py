"""SAT modulo linear real arithmetic.

Formula AST over rational linear expressions, the statement/query encodings
used to discover strategy improvements, and a complete internal solver.

The internal solver searches the boolean/choice structure of a formula
DPLL-style: top-level conjuncts are absorbed eagerly, disjunctions are first
narrowed by unit propagation and theory-conflict filtering, and only then
branched on.  Conjuncts shared by all arms of a disjunction are hoisted out
before the search, which keeps refutations of deeply-chained encodings cheap.
Theory reasoning is exact: equality pairs are eliminated by substitution and
the residual inequality systems go to the rational simplex; strict atoms are
decided by maximizing a shared slack, so no epsilon approximations appear
anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import lp
from .core import (
    AbstractValue,
    Assign,
    Bound,
    Choice,
    Guard,
    Matrix,
    Position,
    Seq,
    Statement,
    Template,
    Vector,
    rat,
)


class EncodingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# linear expressions


@dataclass(frozen=True)
class LinExpr:
    """const + sum(coeff * var); terms are sorted and never carry zeros."""

    const: Fraction
    terms: tuple[tuple[int, Fraction], ...] = ()

    @staticmethod
    def constant(q) -> "LinExpr":
        return LinExpr(rat(q))

    @staticmethod
    def var(vid: int, coeff=1) -> "LinExpr":
        c = rat(coeff)
        if c == 0:
            return LinExpr(Fraction(0))
        return LinExpr(Fraction(0), ((vid, c),))

    @staticmethod
    def affine(coeffs: Mapping[int, Fraction], const=0) -> "LinExpr":
        terms = tuple(
            (v, rat(c)) for v, c in sorted(coeffs.items()) if rat(c) != 0
        )
        return LinExpr(rat(const), terms)

    def coeff(self, vid: int) -> Fraction:
        for v, c in self.terms:
            if v == vid:
                return c
        return Fraction(0)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def _combine(self, other: "LinExpr", k: Fraction) -> "LinExpr":
        acc = dict(self.terms)
        for v, c in other.terms:
            nc = acc.get(v, Fraction(0)) + k * c
            if nc == 0:
                acc.pop(v, None)
            else:
                acc[v] = nc
        return LinExpr(
            self.const + k * other.const, tuple(sorted(acc.items()))
        )

    def __add__(self, other: "LinExpr") -> "LinExpr":
        return self._combine(other, Fraction(1))

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self._combine(other, Fraction(-1))

    def scaled(self, k) -> "LinExpr":
        kq = rat(k)
        if kq == 0:
            return LinExpr(Fraction(0))
        return LinExpr(
            self.const * kq, tuple((v, c * kq) for v, c in self.terms)
        )

    def substitute(self, assignments: Mapping[int, "LinExpr"]) -> "LinExpr":
        if not any(v in assignments for v, _ in self.terms):
            return self
        out = LinExpr(self.const)
        for v, c in self.terms:
            if v in assignments:
                out = out._combine(assignments[v], c)
            else:
                out = out + LinExpr.var(v, c)
        return out

    def evaluate(self, values: Mapping[int, Fraction]) -> Fraction:
        return self.const + sum(
            (c * values[v] for v, c in self.terms), Fraction(0)
        )

    def variables(self) -> list[int]:
        return [v for v, _ in self.terms]


# ---------------------------------------------------------------------------
# formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class TrueConst(Formula):
    pass


@dataclass(frozen=True)
class FalseConst(Formula):
    pass


@dataclass(frozen=True)
class BoolVar(Formula):
    vid: int


@dataclass(frozen=True)
class Leq(Formula):
    lhs: LinExpr
    rhs: LinExpr


@dataclass(frozen=True)
class Lt(Formula):
    lhs: LinExpr
    rhs: LinExpr


@dataclass(frozen=True)
class And(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class Not(Formula):
    item: Formula


TRUE = TrueConst()
FALSE = FalseConst()


def land(*items: Formula) -> Formula:
    flat: list[Formula] = []
    for f in items:
        if isinstance(f, TrueConst):
            continue
        if isinstance(f, FalseConst):
            return FALSE
        if isinstance(f, And):
            flat.extend(f.items)
        else:
            flat.append(f)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def lor(*items: Formula) -> Formula:
    flat: list[Formula] = []
    for f in items:
        if isinstance(f, FalseConst):
            continue
        if isinstance(f, TrueConst):
            return TRUE
        if isinstance(f, Or):
            flat.extend(f.items)
        else:
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def lnot(f: Formula) -> Formula:
    if isinstance(f, TrueConst):
        return FALSE
    if isinstance(f, FalseConst):
        return TRUE
    if isinstance(f, Not):
        return f.item
    return Not(f)


def eq_exprs(lhs: LinExpr, rhs: LinExpr) -> Formula:
    return land(Leq(lhs, rhs), Leq(rhs, lhs))


def free_variables(f: Formula) -> tuple[set[int], set[int]]:
    """(real variable ids, boolean variable ids) occurring in f."""
    reals: set[int] = set()
    bools: set[int] = set()

    def walk(g: Formula) -> None:
        if isinstance(g, BoolVar):
            bools.add(g.vid)
        elif isinstance(g, (Leq, Lt)):
            reals.update(g.lhs.variables())
            reals.update(g.rhs.variables())
        elif isinstance(g, (And, Or)):
            for h in g.items:
                walk(h)
        elif isinstance(g, Not):
            walk(g.item)

    walk(f)
    return reals, bools


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class Model:
    reals: Mapping[int, Fraction]
    bools: Mapping[int, bool]


def evaluate_formula(f: Formula, model: Model) -> bool:
    """Exact truth value of f under a total model."""
    if isinstance(f, TrueConst):
        return True
    if isinstance(f, FalseConst):
        return False
    if isinstance(f, BoolVar):
        return model.bools[f.vid]
    if isinstance(f, Leq):
        return f.lhs.evaluate(model.reals) <= f.rhs.evaluate(model.reals)
    if isinstance(f, Lt):
        return f.lhs.evaluate(model.reals) < f.rhs.evaluate(model.reals)
    if isinstance(f, And):
        return all(evaluate_formula(g, model) for g in f.items)
    if isinstance(f, Or):
        return any(evaluate_formula(g, model) for g in f.items)
    if isinstance(f, Not):
        return not evaluate_formula(f.item, model)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# statement encodings


@dataclass
class EncodingContext:
    """Variable bookkeeping for one encoding.

    Real and boolean variable ids live in disjoint counters.  Every choice
    position maps to its selector block: a single boolean for binary choices
    (false picks the left branch) and a one-hot block for wider ones.
    """

    next_real: int = 0
    next_bool: int = 0
    selectors: dict[Position, tuple[int, ...]] = field(default_factory=dict)
    input_vars: tuple[int, ...] = ()
    output_vars: tuple[int, ...] = ()
    value_var: Optional[int] = None

    def fresh_reals(self, k: int) -> tuple[int, ...]:
        ids = tuple(range(self.next_real, self.next_real + k))
        self.next_real += k
        return ids

    def fresh_bool(self) -> int:
        b = self.next_bool
        self.next_bool += 1
        return b


def _row_expr(coeffs: Vector, vars_: Sequence[int], const=0) -> LinExpr:
    return LinExpr.affine(
        {v: c for v, c in zip(vars_, coeffs)}, const
    )


def _encode(s: Statement, ctx: EncodingContext, xin: tuple[int, ...],
            xout: tuple[int, ...], path: Position) -> Formula:
    n = len(xin)
    if isinstance(s, Assign):
        parts = [
            eq_exprs(
                LinExpr.var(xout[i]),
                _row_expr(s.a.row(i), xin, s.b[i]),
            )
            for i in range(n)
        ]
        return land(*parts)
    if isinstance(s, Guard):
        parts: list[Formula] = [
            Leq(_row_expr(s.a.row(i), xin), LinExpr.constant(s.b[i]))
            for i in range(s.a.nrows)
        ]
        parts.extend(
            eq_exprs(LinExpr.var(xout[i]), LinExpr.var(xin[i])) for i in range(n)
        )
        return land(*parts)
    if isinstance(s, Seq):
        cur = xin
        parts = []
        last = len(s.items) - 1
        for i, item in enumerate(s.items):
            if isinstance(item, Guard) and i != last:
                # guards keep the state; chaining a fresh copy through them
                # would only add identity equations
                parts.extend(
                    Leq(_row_expr(item.a.row(k), cur), LinExpr.constant(item.b[k]))
                    for k in range(item.a.nrows)
                )
                continue
            nxt = xout if i == last else ctx.fresh_reals(n)
            parts.append(_encode(item, ctx, cur, nxt, path + (i,)))
            cur = nxt
        return land(*parts)
    if isinstance(s, Choice):
        k = len(s.items)
        if k == 2:
            a = ctx.fresh_bool()
            ctx.selectors[path] = (a,)
            arms = [
                land(lnot(BoolVar(a)), _encode(s.items[0], ctx, xin, xout, path + (0,))),
                land(BoolVar(a), _encode(s.items[1], ctx, xin, xout, path + (1,))),
            ]
        else:
            bids = tuple(ctx.fresh_bool() for _ in range(k))
            ctx.selectors[path] = bids
            arms = []
            for i, item in enumerate(s.items):
                lits: list[Formula] = [BoolVar(bids[i])]
                lits.extend(lnot(BoolVar(bids[j])) for j in range(k) if j != i)
                arms.append(
                    land(*lits, _encode(item, ctx, xin, xout, path + (i,)))
                )
        return lor(*arms)
    raise TypeError(f"not a statement: {s!r}")


def encode_statement(s: Statement, ctx: EncodingContext, nvars: int) -> Formula:
    """Formula relating ctx.input_vars to every possible output of s."""
    ctx.input_vars = ctx.fresh_reals(nvars)
    ctx.output_vars = ctx.fresh_reals(nvars)
    return _encode(s, ctx, ctx.input_vars, ctx.output_vars, ())


@dataclass
class EncodedQuery:
    formula: Formula
    ctx: EncodingContext
    statement: Statement


def encode_query(s: Statement, d: AbstractValue, j: int, c: Bound,
                 tpl: Template) -> EncodedQuery:
    """Satisfiable iff row j of the abstract transformer of s at d exceeds c.

    Template rows bounded by +inf are dropped; any -inf row empties the input
    region, so the whole query collapses to false.  A -inf threshold asks for
    mere satisfiability (any finite value exceeds it).
    """
    if c.is_pos_inf:
        raise EncodingError("no value can exceed +inf")
    if len(d) != tpl.nrows:
        raise EncodingError("abstract value height differs from template rows")
    ctx = EncodingContext()
    phi = encode_statement(s, ctx, tpl.nvars)
    (v,) = ctx.fresh_reals(1)
    ctx.value_var = v
    parts: list[Formula] = []
    empty = False
    for i in range(tpl.nrows):
        b = d[i]
        if b.is_pos_inf:
            continue
        if b.is_neg_inf:
            empty = True
            break
        parts.append(
            Leq(_row_expr(tpl.t.row(i), ctx.input_vars), LinExpr.constant(b.value))
        )
    if empty:
        return EncodedQuery(FALSE, ctx, s)
    parts.append(phi)
    parts.append(eq_exprs(LinExpr.var(v), _row_expr(tpl.t.row(j), ctx.output_vars)))
    if c.is_finite:
        parts.append(Lt(LinExpr.constant(c.value), LinExpr.var(v)))
    return EncodedQuery(land(*parts), ctx, s)


def strategy_from_model(s: Statement, ctx: EncodingContext,
                        model: Model) -> dict[Position, int]:
    """Read the branch taken at every choice position off a model.

    Positions the model does not constrain (untraversed branches) resolve
    deterministically: lowest-index true selector, else branch 0.
    """
    from .core import statement_positions

    out: dict[Position, int] = {}
    for pos in statement_positions(s):
        block = ctx.selectors[pos]
        if len(block) == 1:
            out[pos] = 1 if model.bools.get(block[0], False) else 0
        else:
            idx = 0
            for i, b in enumerate(block):
                if model.bools.get(b, False):
                    idx = i
                    break
            out[pos] = idx
    return out


# ---------------------------------------------------------------------------
# internal solver


def _nnf(f: Formula, positive: bool = True) -> Formula:
    if isinstance(f, Not):
        return _nnf(f.item, not positive)
    if isinstance(f, TrueConst):
        return TRUE if positive else FALSE
    if isinstance(f, FalseConst):
        return FALSE if positive else TRUE
    if isinstance(f, BoolVar):
        return f if positive else Not(f)
    if isinstance(f, Leq):
        return f if positive else Lt(f.rhs, f.lhs)
    if isinstance(f, Lt):
        return f if positive else Leq(f.rhs, f.lhs)
    if isinstance(f, And):
        items = tuple(_nnf(g, positive) for g in f.items)
        return land(*items) if positive else lor(*items)
    if isinstance(f, Or):
        items = tuple(_nnf(g, positive) for g in f.items)
        return lor(*items) if positive else land(*items)
    raise TypeError(f"not a formula: {f!r}")


def _conjuncts(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, And):
        return f.items
    if isinstance(f, TrueConst):
        return ()
    return (f,)


def _hoist_shared(f: Formula) -> Formula:
    """Pull conjuncts common to every arm out of each disjunction."""
    if isinstance(f, And):
        return land(*(_hoist_shared(g) for g in f.items))
    if isinstance(f, Or):
        children = [_hoist_shared(g) for g in f.items]
        sets = [set(_conjuncts(c)) for c in children]
        shared = [g for g in _conjuncts(children[0]) if all(g in s for s in sets)]
        if not shared:
            return lor(*children)
        shared_set = set(shared)
        residual = [
            land(*(g for g in _conjuncts(c) if g not in shared_set))
            for c in children
        ]
        return land(*shared, lor(*residual))
    return f


class _Theory:
    """Conjunction of linear atoms, kept reduced by equality elimination.

    Complementary nonstrict pairs (e <= 0 and -e <= 0) turn into equalities
    and eliminate their freshest variable by substitution.  Definitions are
    kept fully reduced over the current free variables, so reducing an
    incoming expression is a single substitution pass and the LP always sees
    a system over free variables only.
    """

    __slots__ = ("subst", "ineqs", "keys")

    def __init__(self):
        self.subst: dict[int, LinExpr] = {}
        self.ineqs: list[tuple[LinExpr, bool]] = []  # expr <= 0 / expr < 0
        self.keys: dict[tuple, int] = {}  # nonstrict key -> count

    def copy(self) -> "_Theory":
        t = _Theory.__new__(_Theory)
        t.subst = dict(self.subst)
        t.ineqs = list(self.ineqs)
        t.keys = dict(self.keys)
        return t

    @staticmethod
    def _key(e: LinExpr):
        return (e.const, e.terms)

    def reduce(self, e: LinExpr) -> LinExpr:
        """Rewrite e over free variables (definitions are pre-reduced)."""
        return e.substitute(self.subst)

    def add(self, e: LinExpr, strict: bool) -> bool:
        """Add expr <= 0 (or < 0); False on an immediate constant conflict."""
        e = e.substitute(self.subst)
        if e.is_constant:
            return e.const < 0 if strict else e.const <= 0
        if not strict:
            negkey = self._key(e.scaled(-1))
            if self.keys.get(negkey, 0) > 0:
                for idx in range(len(self.ineqs) - 1, -1, -1):
                    other, other_strict = self.ineqs[idx]
                    if not other_strict and self._key(other) == negkey:
                        del self.ineqs[idx]
                        self._unkey(negkey)
                        return self._eliminate(e)
        self.ineqs.append((e, strict))
        if not strict:
            k = self._key(e)
            self.keys[k] = self.keys.get(k, 0) + 1
        return True

    def _unkey(self, key) -> None:
        n = self.keys.get(key, 0)
        if n <= 1:
            self.keys.pop(key, None)
        else:
            self.keys[key] = n - 1

    def _eliminate(self, e: LinExpr) -> bool:
        """Record e == 0 by solving for its freshest variable."""
        v, coeff = max(e.terms, key=lambda t: t[0])
        definition = (e - LinExpr.var(v, coeff)).scaled(Fraction(-1) / coeff)
        binding = {v: definition}
        for w, dw in self.subst.items():
            if dw.coeff(v) != 0:
                self.subst[w] = dw.substitute(binding)
        self.subst[v] = definition
        old = self.ineqs
        self.ineqs = []
        for expr, strict in old:
            if expr.coeff(v) != 0:
                if not strict:
                    self._unkey(self._key(expr))
                expr = expr.substitute(binding)
                if expr.is_constant:
                    ok = expr.const < 0 if strict else expr.const <= 0
                    if not ok:
                        return False
                    continue
                if not strict:
                    k = self._key(expr)
                    self.keys[k] = self.keys.get(k, 0) + 1
            self.ineqs.append((expr, strict))
        return True

    def solve(self) -> Optional[dict[int, Fraction]]:
        """A satisfying point over the free variables, or None.

        Strict atoms are honored exactly by maximizing a shared slack t
        (capped at 1): the system with every strict atom tightened by t is
        satisfiable with t > 0 iff the strict system is satisfiable.
        """
        if not self.ineqs:
            return {}
        vars_ = sorted({v for e, _ in self.ineqs for v in e.variables()})
        col = {v: i for i, v in enumerate(vars_)}
        has_strict = any(strict for _, strict in self.ineqs)
        ncols = len(vars_) + (1 if has_strict else 0)
        rows = []
        rhs = []
        for e, strict in self.ineqs:
            row = [Fraction(0)] * ncols
            for v, c in e.terms:
                row[col[v]] = c
            if strict:
                row[-1] = Fraction(1)
            rows.append(tuple(row))
            rhs.append(-e.const)
        obj = [Fraction(0)] * ncols
        if has_strict:
            cap = [Fraction(0)] * ncols
            cap[-1] = Fraction(1)
            rows.append(tuple(cap))
            rhs.append(Fraction(1))
            obj[-1] = Fraction(1)
        problem = lp.LpProblem(
            Matrix(tuple(rows), ncols), tuple(rhs), tuple(obj)
        )
        res = lp.lp_solve(problem)
        if isinstance(res, lp.Infeasible):
            return None
        assert isinstance(res, lp.Optimal), "slack objective is capped"
        if has_strict and res.value <= 0:
            return None
        return {v: res.x[col[v]] for v in vars_}

    def value_of(self, vid: int, point: Mapping[int, Fraction],
                 cache: Optional[dict[int, Fraction]] = None) -> Fraction:
        """Value of a variable under an LP point over the free variables.

        Chases triangular definitions; variables the LP never saw are
        unconstrained and fixed at 0.
        """
        if cache is None:
            cache = {}
        if vid in cache:
            return cache[vid]
        if vid in self.subst:
            e = self.subst[vid]
            val = e.const + sum(
                (c * self.value_of(v, point, cache) for v, c in e.terms),
                Fraction(0),
            )
        else:
            val = point.get(vid, Fraction(0))
        cache[vid] = val
        return val


class _Conflict(Exception):
    pass


class _SearchState:
    __slots__ = ("bools", "theory", "pending", "version")

    def __init__(self):
        self.bools: dict[int, bool] = {}
        self.theory = _Theory()
        # pending disjunctions, each tagged with the state version at which
        # it was last narrowed (so unchanged states skip re-filtering)
        self.pending: list[tuple[Formula, int]] = []
        self.version = 0

    def copy(self) -> "_SearchState":
        s = _SearchState.__new__(_SearchState)
        s.bools = dict(self.bools)
        s.theory = self.theory.copy()
        s.pending = list(self.pending)
        s.version = self.version
        return s


def _reduce(f: Formula, bools: Mapping[int, bool]) -> Formula:
    """Fold assigned boolean literals into constants."""
    if isinstance(f, BoolVar):
        if f.vid in bools:
            return TRUE if bools[f.vid] else FALSE
        return f
    if isinstance(f, Not):
        inner = _reduce(f.item, bools)
        return lnot(inner)
    if isinstance(f, And):
        return land(*(_reduce(g, bools) for g in f.items))
    if isinstance(f, Or):
        return lor(*(_reduce(g, bools) for g in f.items))
    return f


def _spine_atoms(f: Formula) -> Optional[list[Formula]]:
    """Top-level unit conjuncts of f (atoms only; nested Ors skipped).

    Returns None when f's spine contains FALSE.
    """
    out: list[Formula] = []
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, And):
            stack.extend(g.items)
        elif isinstance(g, (Leq, Lt, BoolVar)) or (
            isinstance(g, Not) and isinstance(g.item, BoolVar)
        ):
            out.append(g)
        elif isinstance(g, FalseConst):
            return None
    return out


def _child_conflicts(child: Formula, state: _SearchState) -> bool:
    """Cheap refutation test: boolean clashes and constant-folding only.

    No LP runs here; arms that survive this filter are fully checked when
    they are absorbed, so completeness is unaffected.
    """
    atoms = _spine_atoms(child)
    if atoms is None:
        return True
    for a in atoms:
        if isinstance(a, BoolVar):
            if state.bools.get(a.vid) is False:
                return True
        elif isinstance(a, Not):
            if state.bools.get(a.item.vid) is True:
                return True
        else:
            e = state.theory.reduce(a.lhs - a.rhs)
            if e.is_constant:
                ok = e.const < 0 if isinstance(a, Lt) else e.const <= 0
                if not ok:
                    return True
    return False


def _absorb(state: _SearchState, work: list[Formula]) -> None:
    """Move formulas into the state; raises _Conflict on contradiction."""
    dirty = False
    while work:
        f = work.pop()
        if isinstance(f, TrueConst):
            continue
        if isinstance(f, FalseConst):
            raise _Conflict()
        if isinstance(f, And):
            work.extend(f.items)
        elif isinstance(f, BoolVar):
            if state.bools.get(f.vid) is False:
                raise _Conflict()
            if f.vid not in state.bools:
                state.bools[f.vid] = True
                state.version += 1
        elif isinstance(f, Not):
            assert isinstance(f.item, BoolVar)
            if state.bools.get(f.item.vid) is True:
                raise _Conflict()
            if f.item.vid not in state.bools:
                state.bools[f.item.vid] = False
                state.version += 1
        elif isinstance(f, Leq):
            if not state.theory.add(f.lhs - f.rhs, strict=False):
                raise _Conflict()
            dirty = True
        elif isinstance(f, Lt):
            if not state.theory.add(f.lhs - f.rhs, strict=True):
                raise _Conflict()
            dirty = True
        elif isinstance(f, Or):
            state.pending.append((f, -1))
        else:
            raise TypeError(f"not a formula: {f!r}")
    if dirty:
        state.version += 1
        if state.theory.solve() is None:
            raise _Conflict()


def _propagate(state: _SearchState) -> None:
    """Simplify and filter pending disjunctions until nothing more moves."""
    while True:
        progress = False
        still: list[tuple[Formula, int]] = []
        for orf, seen in state.pending:
            if seen == state.version:
                still.append((orf, seen))
                continue
            node = _reduce(orf, state.bools)
            if isinstance(node, TrueConst):
                progress = True
                continue
            if not isinstance(node, Or):
                _absorb(state, [node])
                progress = True
                continue
            viable = [c for c in node.items if not _child_conflicts(c, state)]
            if not viable:
                raise _Conflict()
            if len(viable) == 1:
                _absorb(state, [viable[0]])
                progress = True
                continue
            narrowed = len(viable) < len(node.items)
            progress = progress or narrowed
            still.append((lor(*viable) if narrowed else node, state.version))
        state.pending = still
        if not progress:
            return


def _search(state: _SearchState) -> Optional[_SearchState]:
    try:
        _propagate(state)
    except _Conflict:
        return None
    if not state.pending:
        return state
    branch_on, _ = state.pending[0]
    rest = state.pending[1:]
    assert isinstance(branch_on, Or)
    for child in branch_on.items:
        sub = state.copy()
        sub.pending = list(rest)
        try:
            _absorb(sub, [child])
        except _Conflict:
            continue
        found = _search(sub)
        if found is not None:
            return found
    return None


def _model_from(found: _SearchState, reals, bools) -> Model:
    point = found.theory.solve()
    assert point is not None, "search leaves are theory-consistent"
    cache: dict[int, Fraction] = {}
    real_vals = {v: found.theory.value_of(v, point, cache) for v in sorted(reals)}
    bool_vals = {b: found.bools.get(b, False) for b in sorted(bools)}
    return Model(reals=real_vals, bools=bool_vals)


def smt_solve(f: Formula) -> Optional[Model]:
    """Complete satisfiability check; returns a total exact model or None."""
    reals, bools = free_variables(f)
    g = _hoist_shared(_nnf(f))
    state = _SearchState()
    try:
        _absorb(state, [g])
    except _Conflict:
        return None
    found = _search(state)
    if found is None:
        return None
    return _model_from(found, reals, bools)


@dataclass
class PreparedStatement:
    """A statement encoding preprocessed for many queries.

    The chain equalities of the encoding are already absorbed (and
    eliminated) in `base`; per query only the input-region rows, the tracked
    output row, and the threshold are added to a copy of that state.
    """

    statement: Statement
    ctx: EncodingContext
    formula: Formula  # original encoding, for exact replay
    base: Optional[_SearchState]  # None when the encoding is itself unsat

    def region_atoms(self, d: AbstractValue,
                     tpl: Template) -> Optional[list[Formula]]:
        """Input-region rows T x <= d; None when the region is empty."""
        atoms: list[Formula] = []
        for i in range(tpl.nrows):
            b = d[i]
            if b.is_pos_inf:
                continue
            if b.is_neg_inf:
                return None
            atoms.append(
                Leq(_row_expr(tpl.t.row(i), self.ctx.input_vars),
                    LinExpr.constant(b.value))
            )
        return atoms

    def value_atoms(self, j: int, c: Bound, tpl: Template) -> list[Formula]:
        """Track template row j of the output and demand it exceed c."""
        if c.is_pos_inf:
            raise EncodingError("no value can exceed +inf")
        v = self.ctx.value_var
        atoms = [
            eq_exprs(LinExpr.var(v), _row_expr(tpl.t.row(j), self.ctx.output_vars))
        ]
        if c.is_finite:
            atoms.append(Lt(LinExpr.constant(c.value), LinExpr.var(v)))
        return atoms

    def query_atoms(self, d: AbstractValue, j: int, c: Bound,
                    tpl: Template) -> Optional[list[Formula]]:
        """Extra conjuncts for one improvement query; None when the input
        region is empty (some row is -inf)."""
        region = self.region_atoms(d, tpl)
        if region is None:
            return None
        return region + self.value_atoms(j, c, tpl)


def prepare_statement(s: Statement, nvars: int) -> PreparedStatement:
    """Encode s once and pre-absorb its hoisted skeleton."""
    ctx = EncodingContext()
    phi = encode_statement(s, ctx, nvars)
    (v,) = ctx.fresh_reals(1)
    ctx.value_var = v
    core = _hoist_shared(_nnf(phi))
    state = _SearchState()
    try:
        _absorb(state, [core])
    except _Conflict:
        state = None
    return PreparedStatement(s, ctx, phi, state)


def solve_prepared(prep: PreparedStatement,
                   atoms: Sequence[Formula]) -> Optional[Model]:
    """Decide (atoms and prep.formula), reusing the pre-absorbed state."""
    if prep.base is None:
        return None
    state = prep.base.copy()
    try:
        _absorb(state, list(atoms))
    except _Conflict:
        return None
    found = _search(state)
    if found is None:
        return None
    return _model_from(
        found, range(prep.ctx.next_real), range(prep.ctx.next_bool)
    )


def specialize_region(prep: PreparedStatement, d: AbstractValue,
                      tpl: Template) -> Optional[_SearchState]:
    """Absorb the input-region rows once, to be shared by all row queries
    against the same source value (one strategy-improvement round asks about
    every template row of the same region)."""
    if prep.base is None:
        return None
    atoms = prep.region_atoms(d, tpl)
    if atoms is None:
        return None
    state = prep.base.copy()
    try:
        _absorb(state, atoms)
    except _Conflict:
        return None
    return state


def solve_specialized(prep: PreparedStatement,
                      region: Optional[_SearchState],
                      atoms: Sequence[Formula]) -> Optional[Model]:
    """Decide (atoms and region and prep.formula) on a region clone."""
    if region is None:
        return None
    state = region.copy()
    try:
        _absorb(state, list(atoms))
    except _Conflict:
        return None
    found = _search(state)
    if found is None:
        return None
    return _model_from(
        found, range(prep.ctx.next_real), range(prep.ctx.next_bool)
    )


class InternalBackend:
    """Default solver backend; no external processes involved."""

    name = "internal"

    def __init__(self):
        self.queries = 0
        self.sat = 0
        self.unsat = 0

    def solve(self, f: Formula) -> Optional[Model]:
        self.queries += 1
        m = smt_solve(f)
        if m is None:
            self.unsat += 1
        else:
            self.sat += 1
        return m

    def solve_prepared(self, prep: PreparedStatement,
                       atoms: Sequence[Formula]) -> Optional[Model]:
        self.queries += 1
        m = solve_prepared(prep, atoms)
        if m is None:
            self.unsat += 1
        else:
            self.sat += 1
        return m

    def region_state(self, prep: PreparedStatement, d: AbstractValue,
                     tpl: Template) -> Optional[_SearchState]:
        return specialize_region(prep, d, tpl)

    def solve_specialized(self, prep: PreparedStatement, region,
                          atoms: Sequence[Formula]) -> Optional[Model]:
        self.queries += 1
        m = solve_specialized(prep, region, atoms)
        if m is None:
            self.unsat += 1
        else:
            self.sat += 1
        return m
