import random
from fractions import Fraction

import pytest

from enbloc.core import (
    AbstractValue,
    Bound,
    NEG_INF,
    POS_INF,
    assign_one,
    gamma_contains,
    seq,
    statement_positions,
)
from enbloc.engine import EqVar, build_equations, solve
from enbloc.oracle import (
    PAnd,
    PLit,
    POr,
    brute_force_row,
    brute_force_transformer,
    concrete_enumerate,
    concrete_post,
    eval_prop,
    kleene_bounded,
    make_exponential_program,
    make_forall_exists_program,
    sat_to_statement,
    truth_table_sat,
)
from enbloc.templates import template_preset

from corpus import counting_loop_program, interval

F = Fraction


# ---------------------------------------------------------------------------
# brute-force transformer: the en-bloc precision example


def swap_then_subtract():
    # x2 := x1 ; x1 := x1 - x2
    return seq(
        assign_one(2, 1, {0: F(1)}, 0),
        assign_one(2, 0, {0: F(1), 1: F(-1)}, 0),
    )


def test_en_bloc_vs_composed_precision():
    tpl = interval(2)
    s = swap_then_subtract()
    # input region [0,1] x R encoded as (-l1, -l2, u1, u2)
    d = AbstractValue((Bound.of(0), POS_INF, Bound.of(1), POS_INF))
    en_bloc = brute_force_transformer(s, d, tpl)
    # [0,0] x [0,1]
    assert en_bloc == AbstractValue.of([0, 0, 0, 1])
    first, second = s.items
    composed = brute_force_transformer(
        second, brute_force_transformer(first, d, tpl), tpl
    )
    # [-1,1] x [0,1]: strictly coarser
    assert composed == AbstractValue.of([1, 0, 1, 1])
    assert en_bloc.leq(composed) and en_bloc != composed


def test_brute_force_bottom():
    tpl = interval(2)
    s = swap_then_subtract()
    assert brute_force_transformer(s, AbstractValue.bottom(4), tpl).is_bottom


def test_brute_force_running_rows(running_statement, running_template):
    d = AbstractValue.of([0, 0])
    out = brute_force_transformer(running_statement, d, running_template)
    # from x1 = 0 only the flip branch runs: x1' = 1
    assert out == AbstractValue.of([1, -1])


# ---------------------------------------------------------------------------
# bounded value iteration


def test_kleene_zero_is_bottom(running_program, running_template):
    es = build_equations(running_program, running_template)
    res = kleene_bounded(es, 0)
    assert all(b == NEG_INF for b in res.assignment.values())
    assert not res.stabilized


def test_kleene_running_example_climbs(running_program, running_template):
    es = build_equations(running_program, running_template)
    prev = None
    x11 = EqVar("1", 0)
    seen = []
    for k in (2, 3, 4, 5, 8):
        res = kleene_bounded(es, k)
        if prev is not None:
            for v in es.variables:
                assert prev[v] <= res.assignment[v]
        prev = dict(res.assignment)
        seen.append(res.assignment[x11])
        assert res.assignment[x11] <= Bound.of(2001)
    # after the start value arrives, the loop-head bound keeps climbing
    assert seen[0] == Bound.of(0)
    assert seen[1] == Bound.of(1)
    assert seen[-1] > Bound.of(1)


def test_kleene_stabilizes_loop_free(branchy_fragment_program):
    tpl = interval(2)
    es = build_equations(branchy_fragment_program, tpl)
    res = kleene_bounded(es, 10)
    assert res.stabilized


# ---------------------------------------------------------------------------
# concrete enumeration


def test_concrete_post_choice_union(running_statement):
    outs = concrete_post(running_statement, (F(1), F(99)))
    # x2 := -1 then only the doubling branch is open
    assert outs == {(F(-2), F(-1))}
    outs0 = concrete_post(running_statement, (F(0), F(99)))
    assert outs0 == {(F(1), F(0))}


def test_counting_loop_states():
    p = counting_loop_program(3)
    result = concrete_enumerate(p, (-1, 6))
    assert not result.truncated
    xs = {s[0] for s in result.states["head"]}
    assert xs == {F(0), F(1), F(2), F(3), F(4)}


def test_unreachable_node_empty():
    p = counting_loop_program(3)
    p2 = type(p)(
        var_names=p.var_names,
        nodes=p.nodes + ("island",),
        start=p.start,
        edges=p.edges,
    )
    result = concrete_enumerate(p2, (-1, 6))
    assert result.states["island"] == frozenset()


def test_truncation_flag():
    p = counting_loop_program(3)
    result = concrete_enumerate(p, (-50, 50), max_states=5)
    assert result.truncated


def test_running_loop_concrete_max(expanded_loop_program):
    # the real loop with the start pinned to (0, 0): node-1 x1 values peak
    # at 1023 = 2*511 + 1 and bottom out at -1022
    import dataclasses

    from enbloc.core import Guard, Matrix

    pinned = dataclasses.replace(
        expanded_loop_program,
        init_guard=Guard(
            Matrix.from_rows([[1, 0], [-1, 0], [0, 1], [0, -1]], 2),
            (F(0), F(0), F(0), F(0)),
        ),
    )
    result = concrete_enumerate(pinned, (-1100, 1100), max_states=500_000)
    assert not result.truncated
    xs = {s[0] for s in result.states["1"]}
    assert max(xs) == F(1023)
    assert min(xs) == F(-1022)


# ---------------------------------------------------------------------------
# the propositional reduction


def test_sat_reduction_tautology():
    f = POr((PLit(0, True), PLit(0, False)))
    s = sat_to_statement(f, 1)
    out = brute_force_transformer(s, AbstractValue.top(2), interval(1))
    assert not out.is_bottom


def test_sat_reduction_contradiction():
    f = PAnd((PLit(0, True), PLit(0, False)))
    s = sat_to_statement(f, 1)
    out = brute_force_transformer(s, AbstractValue.top(2), interval(1))
    assert out.is_bottom


def random_prop(rng, nvars, depth):
    if depth <= 0 or rng.random() < 0.35:
        return PLit(rng.randrange(nvars), rng.random() < 0.5)
    items = tuple(
        random_prop(rng, nvars, depth - 1) for _ in range(rng.randint(2, 3))
    )
    return PAnd(items) if rng.random() < 0.5 else POr(items)


def test_sat_reduction_random_agreement():
    rng = random.Random(4242)
    tpl = interval(3)
    for _ in range(100):
        f = random_prop(rng, 3, 3)
        s = sat_to_statement(f, 3)
        abstract = not brute_force_transformer(
            s, AbstractValue.top(6), tpl
        ).is_bottom
        assert abstract == truth_table_sat(f, 3)


# ---------------------------------------------------------------------------
# generators


def test_exponential_program_shape():
    p1 = make_exponential_program(1)
    assert p1.var_names == ("x1", "x2", "y1")
    (loop,) = [s for (u, s, v) in p1.edges if u == v == "1"]
    assert len(statement_positions(loop)) == 1
    p3 = make_exponential_program(3)
    (loop3,) = [s for (u, s, v) in p3.edges if u == v == "1"]
    assert len(statement_positions(loop3)) == 3


def test_exponential_program_counts_up():
    p = make_exponential_program(2)
    result = concrete_enumerate(
        p, {"x1": (0, 6), "x2": (-1, 6), "y1": (0, 2), "y2": (0, 4)},
        max_states=50_000,
    )
    assert not result.truncated
    xs = {s[0] for s in result.states["1"]}
    # the counter passes through every small value and beyond 2**n
    assert {F(0), F(1), F(2), F(3), F(4), F(5)} <= xs


def test_forall_exists_true_instance():
    # forall u exists e. (u or e): true
    matrix = POr((PLit(0, True), PLit(1, True)))
    p = make_forall_exists_program(1, 1, matrix)
    tpl = template_preset("interval", p.nvars, p.var_names)
    res = solve(p, tpl)
    assert not res.invariants["2"].is_bottom
    # concrete cross-check within a small box
    conc = concrete_enumerate(
        p, {"x": (0, 2), "xp": (0, 2), "u1": (0, 1), "e1": (0, 1)},
        max_states=50_000,
    )
    assert not conc.truncated
    assert conc.states["2"]


def test_forall_exists_false_instance():
    # forall u. u : false (no existential help)
    matrix = PLit(0, True)
    p = make_forall_exists_program(1, 0, matrix)
    tpl = template_preset("interval", p.nvars, p.var_names)
    res = solve(p, tpl)
    assert res.invariants["2"].is_bottom
    conc = concrete_enumerate(
        p, {"x": (0, 2), "xp": (0, 2), "u1": (0, 1)}, max_states=50_000
    )
    assert not conc.truncated
    assert not conc.states["2"]


def test_forall_exists_no_universals():
    # no universal block: plain reachability with a satisfiable matrix
    matrix = PLit(0, True)  # over the single existential variable
    p = make_forall_exists_program(0, 1, matrix)
    tpl = template_preset("interval", p.nvars, p.var_names)
    res = solve(p, tpl)
    assert not res.invariants["2"].is_bottom


# ---------------------------------------------------------------------------
# oracle agreement with the engine's per-equation transformer values


def test_engine_matches_brute_force_on_fuzz():
    from enbloc.core import Program
    from corpus import random_statement as rnd_stmt, finite_region

    rng = random.Random(515151)
    for _ in range(25):
        n = rng.randint(1, 2)
        tpl = interval(n)
        s = rnd_stmt(rng, n, 2)
        d = finite_region(rng, 2 * n)
        # single-step program: start region d flows through s once
        p = Program(
            var_names=tuple(f"x{i+1}" for i in range(n)),
            nodes=("st", "out"),
            start="st",
            edges=(("st", s, "out"),),
        )
        res = solve(p, tpl, initial=d)
        expected = brute_force_transformer(s, d, tpl)
        assert res.invariants["out"] == expected
