"""The strategy-improvement analysis engine.

A program plus a template turns into one equation per (node, template row):
the variable's value is the maximum over a -inf constant (so iteration can
start below everything), the seeded start value, and one abstract-transformer
term per incoming edge.  The engine then alternates two moves until nothing
improves:

* `improve`: for every equation, ask a SAT-modulo-LRA query whether some
  disjunct exceeds the current value; a model pins down both the disjunct and
  a path through its statement's choices.
* `evaluate`: with all choices resolved, the selected system is effectively
  affine; its greatest finite pre-solution is one exact LP away.  Coordinates
  the LP reports unbounded are promoted to +inf and the block is re-solved.

The final assignment is the least solution of the equation system, i.e. the
abstract semantics of the program.

The loop itself is sequential (every round depends on the previous
assignment); all inputs it hands to the solver layers are immutable
snapshots, so independent analyses can safely run in parallel tasks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Union

from . import lp
from .core import (
    AbstractValue,
    Bound,
    DimensionError,
    Guard,
    Matrix,
    NEG_INF,
    POS_INF,
    Position,
    Program,
    Statement,
    Template,
    Vector,
    alpha_of_universe,
    dot,
)
from .smtlra import (
    FalseConst,
    InternalBackend,
    encode_query,
    evaluate_formula,
    land,
    prepare_statement,
    strategy_from_model,
)
from .transform import SequentialNormalForm, apply_strategy, normalize_sequential


class EngineError(RuntimeError):
    """An internal invariant of the solving loop was violated."""


@dataclass(frozen=True)
class EqVar:
    node: str
    row: int

    def __str__(self) -> str:
        return f"x[{self.node},{self.row + 1}]"


@dataclass(frozen=True)
class ConstAtom:
    value: Bound


@dataclass(frozen=True)
class TransferAtom:
    source: str
    statement: Statement
    row: int


Atom = Union[ConstAtom, TransferAtom]


@dataclass
class EquationSystem:
    template: Template
    program: Program
    variables: tuple[EqVar, ...]
    equations: dict[EqVar, tuple[Atom, ...]]
    _prepared: dict = field(default_factory=dict, repr=False)
    _norms: dict = field(default_factory=dict, repr=False)

    def block(self, node: str, rho: Mapping[EqVar, Bound]) -> AbstractValue:
        m = self.template.nrows
        return AbstractValue(tuple(rho[EqVar(node, i)] for i in range(m)))

    def prepared_for(self, statement: Statement):
        """Statement encoding, prepared once and reused across queries."""
        key = id(statement)
        prep = self._prepared.get(key)
        if prep is None:
            prep = prepare_statement(statement, self.template.nvars)
            self._prepared[key] = prep
        return prep

    def normal_form(self, statement: Statement, path) -> "SequentialNormalForm":
        key = (id(statement), tuple(sorted((path or {}).items())))
        norm = self._norms.get(key)
        if norm is None:
            norm = normalize_sequential(apply_strategy(statement, path or {}))
            self._norms[key] = norm
        return norm


@dataclass(frozen=True)
class Selection:
    """One disjunct choice: atom index plus, for transfers, a statement path."""

    atom: int
    path: Optional[Mapping[Position, int]] = None


SysStrategy = dict[EqVar, Selection]
VarAssignment = dict[EqVar, Bound]


def alpha_of_guard_region(tpl: Template, guard: Guard) -> AbstractValue:
    """Abstraction of { x | guard } : per-row suprema via exact LP."""
    out = []
    for i in range(tpl.nrows):
        res = lp.lp_solve(lp.LpProblem(guard.a, guard.b, tpl.t.row(i)))
        if isinstance(res, lp.Infeasible):
            return AbstractValue.bottom(tpl.nrows)
        if isinstance(res, lp.Unbounded):
            out.append(POS_INF)
        else:
            out.append(Bound.of(res.value))
    return AbstractValue(tuple(out))


def build_equations(p: Program, tpl: Template,
                    initial: Optional[AbstractValue] = None) -> EquationSystem:
    """One equation per (node, row); disjunct 0 is always the -inf constant."""
    if tpl.nvars != p.nvars:
        raise DimensionError("template columns differ from program variables")
    if initial is None:
        initial = p.initial
    if initial is None:
        if p.init_guard is not None:
            initial = alpha_of_guard_region(tpl, p.init_guard)
        else:
            initial = alpha_of_universe(tpl)
    if len(initial) != tpl.nrows:
        raise DimensionError("initial abstract value height differs from template")
    m = tpl.nrows
    variables = tuple(EqVar(v, i) for v in p.nodes for i in range(m))
    equations: dict[EqVar, tuple[Atom, ...]] = {}
    for v in p.nodes:
        incoming = [e for e in p.edges if e[2] == v]
        for i in range(m):
            atoms: list[Atom] = [ConstAtom(NEG_INF)]
            if v == p.start:
                atoms.append(ConstAtom(initial[i]))
            for (u, s, _) in incoming:
                atoms.append(TransferAtom(u, s, i))
            equations[EqVar(v, i)] = tuple(atoms)
    return EquationSystem(tpl, p, variables, equations)


def init_state(es: EquationSystem) -> tuple[SysStrategy, VarAssignment]:
    """Everything starts on the -inf disjunct with the bottom assignment."""
    sigma = {v: Selection(0) for v in es.variables}
    rho = {v: NEG_INF for v in es.variables}
    return sigma, rho


# ---------------------------------------------------------------------------
# improvement


@dataclass(frozen=True)
class Switch:
    var: EqVar
    atom: int
    path: Optional[Mapping[Position, int]]
    witness: Bound


def improve(es: EquationSystem, sigma: SysStrategy, rho: VarAssignment,
            backend=None) -> Optional[tuple[SysStrategy, list[Switch]]]:
    """One improvement round: switch every equation that can strictly grow.

    Disjuncts are tried in index order and the first strict improvement wins,
    which keeps runs deterministic.  Returns None when no equation can
    improve, i.e. rho solves the system.
    """
    if backend is None:
        backend = InternalBackend()
    switches: list[Switch] = []
    new_sigma = dict(sigma)
    # queries of one round share their source regions; absorb each one once
    regions: dict = {}
    for var in es.variables:
        cur = rho[var]
        if cur.is_pos_inf:
            continue
        for idx, atom in enumerate(es.equations[var]):
            if isinstance(atom, ConstAtom):
                if atom.value > cur:
                    new_sigma[var] = Selection(idx)
                    switches.append(Switch(var, idx, None, atom.value))
                    break
                continue
            d = es.block(atom.source, rho)
            if hasattr(backend, "solve_specialized"):
                prep = es.prepared_for(atom.statement)
                rkey = (id(atom.statement), d)
                if rkey not in regions:
                    regions[rkey] = backend.region_state(prep, d, es.template)
                region = regions[rkey]
                if region is None:
                    continue  # empty or contradictory input region
                atoms = prep.value_atoms(atom.row, cur, es.template)
                model = backend.solve_specialized(prep, region, atoms)
                if model is None:
                    continue
                replay = land(*prep.region_atoms(d, es.template), *atoms,
                              prep.formula)
                ctx = prep.ctx
            else:
                query = encode_query(atom.statement, d, atom.row, cur, es.template)
                if isinstance(query.formula, FalseConst):
                    continue
                model = backend.solve(query.formula)
                if model is None:
                    continue
                replay = query.formula
                ctx = query.ctx
            if not evaluate_formula(replay, model):
                raise EngineError("backend returned a model that fails replay")
            path = strategy_from_model(atom.statement, ctx, model)
            witness = Bound.of(model.reals[ctx.value_var])
            if not witness > cur:
                raise EngineError("witness value does not beat the current bound")
            new_sigma[var] = Selection(idx, path)
            switches.append(Switch(var, idx, path, witness))
            break
    if not switches:
        return None
    return new_sigma, switches


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class BlockLp:
    """The LP computing the greatest finite pre-solution of one finite block."""

    problem: lp.LpProblem
    x_index: dict[EqVar, int]
    y_index: dict[EqVar, tuple[int, ...]]
    col_names: list[str]


@dataclass
class EvalRound:
    block: BlockLp
    result: lp.LpResult
    promoted: tuple[EqVar, ...]


@dataclass
class EvalInfo:
    rounds: list[EvalRound] = field(default_factory=list)


def _row_times_mat(row: Vector, m: Matrix) -> Vector:
    return tuple(
        sum((row[i] * m.entries[i][k] for i in range(m.nrows)), Fraction(0))
        for k in range(m.ncols)
    )


def build_block_lp(es: EquationSystem, sigma: SysStrategy,
                   statuses: Mapping[EqVar, str]) -> BlockLp:
    """Assemble the constraint system of the current finite block.

    Per finite equation with a transfer strategy (normal form
    G y <= g; y' := M y + c, template row j, source node u):

        x  <=  (T_j M) y + T_j c
        G y <= g
        T_i y <= x_{u,i}        for every source row i still finite

    Rows against +inf source components are dropped; a -inf source would mean
    an improvement was accepted through an empty region, which cannot happen.
    Finite-constant equations contribute a plain upper bound on x.
    """
    tpl = es.template
    n = tpl.nvars
    lp_vars = [v for v in es.variables if statuses[v] == "lp"]
    x_index = {v: i for i, v in enumerate(lp_vars)}
    col_names = [str(v) for v in lp_vars]
    y_index: dict[EqVar, tuple[int, ...]] = {}
    ncols = len(lp_vars)
    for var in lp_vars:
        atom = es.equations[var][sigma[var].atom]
        if isinstance(atom, TransferAtom):
            y_index[var] = tuple(range(ncols, ncols + n))
            col_names.extend(f"y[{var.node},{var.row + 1}].{k}" for k in range(n))
            ncols += n
    rows: list[tuple[Fraction, ...]] = []
    rhs: list[Fraction] = []

    def add_row(coeffs: dict[int, Fraction], bound: Fraction) -> None:
        row = [Fraction(0)] * ncols
        for cidx, q in coeffs.items():
            row[cidx] = q
        rows.append(tuple(row))
        rhs.append(bound)

    for var in lp_vars:
        sel = sigma[var]
        atom = es.equations[var][sel.atom]
        if isinstance(atom, ConstAtom):
            add_row({x_index[var]: Fraction(1)}, atom.value.value)
            continue
        norm = es.normal_form(atom.statement, sel.path)
        ycols = y_index[var]
        tj = tpl.t.row(atom.row)
        tj_m = _row_times_mat(tj, norm.update_lin)
        coeffs = {x_index[var]: Fraction(1)}
        for k in range(n):
            if tj_m[k] != 0:
                coeffs[ycols[k]] = coeffs.get(ycols[k], Fraction(0)) - tj_m[k]
        add_row(coeffs, dot(tj, norm.update_off))
        for gi in range(norm.guard_lhs.nrows):
            grow = norm.guard_lhs.row(gi)
            coeffs = {
                ycols[k]: grow[k] for k in range(n) if grow[k] != 0
            }
            add_row(coeffs, norm.guard_rhs[gi])
        for i in range(tpl.nrows):
            src = EqVar(atom.source, i)
            status = statuses[src]
            if status == "pos":
                continue
            if status == "neg":
                raise EngineError(
                    f"transfer for {var} reads -inf source row {src}"
                )
            trow = tpl.t.row(i)
            coeffs = {ycols[k]: trow[k] for k in range(n) if trow[k] != 0}
            coeffs[x_index[src]] = coeffs.get(x_index[src], Fraction(0)) - 1
            add_row(coeffs, Fraction(0))
    objective = [Fraction(0)] * ncols
    for var in lp_vars:
        objective[x_index[var]] = Fraction(1)
    problem = lp.LpProblem(Matrix(tuple(rows), ncols), tuple(rhs), tuple(objective))
    return BlockLp(problem, x_index, y_index, col_names)


def evaluate(es: EquationSystem, sigma: SysStrategy,
             rho: VarAssignment) -> tuple[VarAssignment, EvalInfo]:
    """Least solution above rho of the strategy-selected system.

    Implemented as the greatest finite pre-solution of the finite block (one
    LP maximizing the sum of its variables); unbounded coordinates are found
    with per-variable suprema, promoted to +inf, and the block is re-solved.
    """
    statuses: dict[EqVar, str] = {}
    for var in es.variables:
        if rho[var].is_pos_inf:
            # the target solution dominates rho, so this stays at +inf
            statuses[var] = "pos"
            continue
        atom = es.equations[var][sigma[var].atom]
        if isinstance(atom, ConstAtom):
            if atom.value.is_neg_inf:
                statuses[var] = "neg"
            elif atom.value.is_pos_inf:
                statuses[var] = "pos"
            else:
                statuses[var] = "lp"
        else:
            statuses[var] = "lp"
    info = EvalInfo()
    values: dict[EqVar, Fraction] = {}
    while True:
        lp_vars = [v for v in es.variables if statuses[v] == "lp"]
        if not lp_vars:
            break
        block = build_block_lp(es, sigma, statuses)
        result = lp.lp_solve(block.problem)
        if isinstance(result, lp.Infeasible):
            raise EngineError("finite block is infeasible; improvement broken")
        if isinstance(result, lp.Optimal):
            for var in lp_vars:
                values[var] = result.x[block.x_index[var]]
            info.rounds.append(EvalRound(block, result, ()))
            break
        sups = lp.lp_sup_each(
            block.problem, [block.x_index[v] for v in lp_vars]
        )
        promoted = tuple(
            v for v, s in zip(lp_vars, sups) if s.is_pos_inf
        )
        if not promoted:
            raise EngineError("joint LP unbounded but no coordinate is")
        for v in promoted:
            statuses[v] = "pos"
        info.rounds.append(EvalRound(block, result, promoted))
    new_rho: VarAssignment = {}
    for var in es.variables:
        st = statuses[var]
        if st == "neg":
            new_rho[var] = NEG_INF
        elif st == "pos":
            new_rho[var] = POS_INF
        else:
            new_rho[var] = Bound.of(values[var])
    for var in es.variables:
        if not new_rho[var] >= rho[var]:
            raise EngineError(
                f"evaluation decreased {var}: {rho[var]} -> {new_rho[var]}"
            )
    return new_rho, info


# ---------------------------------------------------------------------------
# the main loop


@dataclass
class TraceStep:
    index: int
    switches: list[Switch]
    rho: VarAssignment
    promotions: tuple[EqVar, ...]
    smt_queries: int
    lp_rounds: int


@dataclass
class SolveResult:
    invariants: dict[str, AbstractValue]
    trace: list[TraceStep]
    steps: int
    rho: VarAssignment
    sigma: SysStrategy
    system: EquationSystem
    has_top_components: bool = False
    hit_step_limit: bool = False
    hit_time_limit: bool = False
    stats: dict = field(default_factory=dict)

    @property
    def hit_limits(self) -> bool:
        return self.hit_step_limit or self.hit_time_limit


def solve(p: Program, tpl: Template, backend=None,
          max_steps: Optional[int] = None,
          timeout_s: Optional[float] = None,
          initial: Optional[AbstractValue] = None) -> SolveResult:
    """Run the full analysis; see the module docstring for the loop shape.

    When a step or time budget runs out the last assignment is returned with
    the corresponding flag set; it is a sound lower stage of the iteration
    (everything it claims reachable is), but not yet an invariant.
    """
    if backend is None:
        backend = InternalBackend()
    t0 = time.monotonic()
    es = build_equations(p, tpl, initial=initial)
    sigma, rho = init_state(es)
    trace: list[TraceStep] = []
    steps = 0
    has_top = False
    hit_step = False
    hit_time = False
    lp_rounds_total = 0
    while True:
        improved = improve(es, sigma, rho, backend)
        if improved is None:
            break
        if max_steps is not None and steps >= max_steps:
            hit_step = True
            break
        sigma, switches = improved
        rho, info = evaluate(es, sigma, rho)
        promotions = tuple(
            v for r in info.rounds for v in r.promoted
        )
        if promotions:
            has_top = True
        steps += 1
        lp_rounds_total += len(info.rounds)
        trace.append(
            TraceStep(
                index=steps,
                switches=switches,
                rho=dict(rho),
                promotions=promotions,
                smt_queries=getattr(backend, "queries", 0),
                lp_rounds=len(info.rounds),
            )
        )
        if timeout_s is not None and time.monotonic() - t0 > timeout_s:
            hit_time = True
            break
    invariants = {
        v: es.block(v, rho) for v in p.nodes
    }
    return SolveResult(
        invariants=invariants,
        trace=trace,
        steps=steps,
        rho=rho,
        sigma=sigma,
        system=es,
        has_top_components=has_top,
        hit_step_limit=hit_step,
        hit_time_limit=hit_time,
        stats={
            "improvement_steps": steps,
            "smt_queries": getattr(backend, "queries", 0),
            "smt_sat": getattr(backend, "sat", 0),
            "smt_unsat": getattr(backend, "unsat", 0),
            "eval_lp_rounds": lp_rounds_total,
            "wall_time_s": time.monotonic() - t0,
        },
    )
