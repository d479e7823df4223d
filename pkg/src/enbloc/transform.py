"""Statement and control-flow rewrites.

Four pure rewrites used throughout the analyzer:

* `apply_strategy` resolves every choice in a statement to the branch picked
  by a strategy, leaving a sequential statement.
* `path_expand` distributes `;` over `|` (leftmost-outermost), producing the
  explicit choice-of-all-paths normal form.
* `normalize_sequential` compresses a sequential statement into one guard
  block followed by one affine update.
* `cutset_rewrite` collapses a control-flow graph onto a cut-set: loop-free
  regions between retained nodes become single choice-of-paths edges, so the
  analysis abstracts them as a whole instead of per node.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional

from .core import (
    Assign,
    Choice,
    Guard,
    Matrix,
    Position,
    Program,
    Seq,
    Statement,
    Vector,
    choice,
    choice_positions,
    seq,
    statement_nvars,
    vec_add,
    vec_sub,
    zero_vector,
)

#: Refuse to expand statements with more paths than this by default.
DEFAULT_PATH_LIMIT = 2 ** 20

#: A strategy for a statement: choice position -> selected child index.
StatementStrategy = Mapping[Position, int]


class TransformError(ValueError):
    pass


class PathExplosionError(TransformError):
    code = "PathExplosion"

    def __init__(self, count: int, limit: int):
        super().__init__(f"statement has {count} paths (limit {limit})")
        self.count = count
        self.limit = limit


def apply_strategy(s: Statement, sigma: StatementStrategy) -> Statement:
    """Replace every choice by the branch `sigma` selects; result is sequential."""

    def walk(t: Statement, path: Position) -> Statement:
        if isinstance(t, Choice):
            if path not in sigma:
                raise TransformError(f"strategy misses choice position {path}")
            idx = sigma[path]
            if not (0 <= idx < len(t.items)):
                raise TransformError(
                    f"strategy index {idx} out of range at position {path}"
                )
            return walk(t.items[idx], path + (idx,))
        if isinstance(t, Seq):
            return seq(*(walk(c, path + (i,)) for i, c in enumerate(t.items)))
        return t

    return walk(s, ())


def count_paths(s: Statement) -> int:
    if isinstance(s, Choice):
        return sum(count_paths(c) for c in s.items)
    if isinstance(s, Seq):
        n = 1
        for c in s.items:
            n *= count_paths(c)
        return n
    return 1


def path_expand(s: Statement, limit: int = DEFAULT_PATH_LIMIT) -> Statement:
    """Explicit enumeration of all paths through s, as a choice of sequences.

    Distribution order is leftmost-outermost, so branches come out in
    lexicographic position order; this is the canonical order golden tests
    rely on.
    """
    n = count_paths(s)
    if n > limit:
        raise PathExplosionError(n, limit)

    def branches(t: Statement) -> list[Statement]:
        if isinstance(t, Choice):
            out = []
            for c in t.items:
                out.extend(branches(c))
            return out
        if isinstance(t, Seq):
            parts = [branches(c) for c in t.items]
            return [seq(*combo) for combo in itertools.product(*parts)]
        return [t]

    paths = branches(s)
    if len(paths) == 1:
        return paths[0]
    return Choice(tuple(paths))


def enumerate_statement_strategies(s: Statement) -> Iterator[dict[Position, int]]:
    """All strategies of s (every choice position mapped to a child index)."""
    arities = sorted(choice_positions(s).items())
    if not arities:
        yield {}
        return
    keys = [k for k, _ in arities]
    for combo in itertools.product(*(range(a) for _, a in arities)):
        yield dict(zip(keys, combo))


def statement_strategy_count(s: Statement) -> int:
    n = 1
    for arity in choice_positions(s).values():
        n *= arity
    return n


# ---------------------------------------------------------------------------
# sequential normal form


@dataclass(frozen=True)
class SequentialNormalForm:
    """guard_lhs x <= guard_rhs; x := update_lin x + update_off."""

    guard_lhs: Matrix
    guard_rhs: Vector
    update_lin: Matrix
    update_off: Vector

    @property
    def nvars(self) -> int:
        return self.update_lin.ncols

    def run_concrete(self, x: Vector) -> Optional[Vector]:
        """Execute on a concrete state; None when the guard rejects it."""
        for i in range(self.guard_lhs.nrows):
            if sum(
                (a * b for a, b in zip(self.guard_lhs.row(i), x)), Fraction(0)
            ) > self.guard_rhs[i]:
                return None
        return vec_add(self.update_lin.matvec(x), self.update_off)


def normalize_sequential(s: Statement) -> SequentialNormalForm:
    """Rewrite a sequential statement into guard-then-update form.

    Guards encountered after assignments are rewritten onto the input state
    (A (M x + c) <= b becomes A M x <= b - A c) and hoisted to the front;
    assignments compose affinely.
    """
    n = statement_nvars(s)
    guard_rows: list[Vector] = []
    guard_rhs: list[Fraction] = []
    lin = Matrix.identity(n)
    off = zero_vector(n)

    def absorb(t: Statement) -> None:
        nonlocal lin, off
        if isinstance(t, Seq):
            for c in t.items:
                absorb(c)
        elif isinstance(t, Guard):
            hoisted = t.a.matmat(lin)
            adjusted = vec_sub(t.b, t.a.matvec(off))
            guard_rows.extend(hoisted.entries)
            guard_rhs.extend(adjusted)
        elif isinstance(t, Assign):
            lin = t.a.matmat(lin)
            off = vec_add(t.a.matvec(off), t.b)
        else:
            raise TransformError("statement is not sequential (contains a choice)")

    absorb(s)
    return SequentialNormalForm(
        Matrix(tuple(guard_rows), n), tuple(guard_rhs), lin, off
    )


# ---------------------------------------------------------------------------
# cut-sets


def _residual_graph(p: Program, cut: frozenset[str]) -> dict[str, list[str]]:
    retained = set(cut) | {p.start}
    adj: dict[str, list[str]] = {v: [] for v in p.nodes if v not in retained}
    for (u, _, v) in p.edges:
        if u not in retained and v not in retained:
            adj[u].append(v)
    return adj


def find_unbroken_cycle(p: Program, cut) -> Optional[list[str]]:
    """A cycle avoiding the cut-set and the start node, or None if acyclic."""
    adj = _residual_graph(p, frozenset(cut))
    color: dict[str, int] = {v: 0 for v in adj}
    stack: list[str] = []

    def dfs(v: str) -> Optional[list[str]]:
        color[v] = 1
        stack.append(v)
        for w in adj[v]:
            if color[w] == 1:
                return stack[stack.index(w):] + [w]
            if color[w] == 0:
                found = dfs(w)
                if found is not None:
                    return found
        stack.pop()
        color[v] = 2
        return None

    for v in adj:
        if color[v] == 0:
            found = dfs(v)
            if found is not None:
                return found
    return None


def verify_cutset(p: Program, cut) -> bool:
    """True iff removing the cut-set (and the start node) breaks every cycle."""
    unknown = set(cut) - set(p.nodes)
    if unknown:
        return False
    return find_unbroken_cycle(p, cut) is None


def cutset_rewrite(p: Program, cut, path_limit: int = DEFAULT_PATH_LIMIT) -> Program:
    """Collapse p onto {start} union cut, preserving the collecting semantics
    at retained nodes.

    For every ordered pair (u, v) of retained nodes, the cut-free paths from u
    to v are enumerated (the interior is a DAG, so this terminates) and fused
    into one edge labelled with the choice over the sequenced paths.  Shared
    interior sub-paths are duplicated; the blow-up stays symbolic.
    """
    cutset = frozenset(cut)
    if not verify_cutset(p, cutset):
        cyc = find_unbroken_cycle(p, cutset)
        raise TransformError(
            f"invalid cut-set: cycle {' -> '.join(cyc + [cyc[0]] if cyc else [])} "
            "is not broken"
        )
    retained = [p.start] + [v for v in p.nodes if v in cutset and v != p.start]
    retained_set = set(retained)
    budget = path_limit

    def paths_from(u: str) -> dict[str, list[Statement]]:
        nonlocal budget
        found: dict[str, list[Statement]] = {}

        def go(node: str, acc: tuple[Statement, ...]) -> None:
            nonlocal budget
            for (_, stmt, succ) in p.out_edges(node):
                piece = acc + (stmt,)
                if succ in retained_set:
                    budget -= 1
                    if budget < 0:
                        raise PathExplosionError(path_limit + 1, path_limit)
                    found.setdefault(succ, []).append(seq(*piece))
                else:
                    go(succ, piece)

        go(u, ())
        return found

    new_edges: list[tuple[str, Statement, str]] = []
    for u in retained:
        grouped = paths_from(u)
        for v in retained:
            stmts = grouped.get(v)
            if not stmts:
                continue
            label = stmts[0] if len(stmts) == 1 else choice(*stmts)
            new_edges.append((u, label, v))
    return Program(
        var_names=p.var_names,
        nodes=tuple(retained),
        start=p.start,
        edges=tuple(new_edges),
        initial=p.initial,
        init_guard=p.init_guard,
    )
