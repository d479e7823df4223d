import random
from fractions import Fraction

import pytest

from enbloc.core import (
    AbstractValue,
    Bound,
    Choice,
    Matrix,
    POS_INF,
    Program,
    Seq,
    assign_one,
    guard_le,
    seq,
    statement_positions,
)
from enbloc.oracle import brute_force_transformer, concrete_enumerate, concrete_post
from enbloc.transform import (
    PathExplosionError,
    TransformError,
    apply_strategy,
    count_paths,
    cutset_rewrite,
    enumerate_statement_strategies,
    normalize_sequential,
    path_expand,
    statement_strategy_count,
    verify_cutset,
)

from corpus import interval, random_statement


def atoms(k, n=1):
    return [assign_one(n, 0, {}, i) for i in range(k)]


# ---------------------------------------------------------------------------
# apply_strategy


def test_apply_strategy_running_example(running_statement):
    result = apply_strategy(running_statement, {(2,): 1})
    assert statement_positions(result) == frozenset()
    # the selected branch ends with x1 := -x1 + 1
    norm = normalize_sequential(result)
    assert norm.update_lin.row(0) == (Fraction(-1), Fraction(0))
    assert norm.update_off[0] == 1


def test_apply_strategy_elementary():
    s = assign_one(2, 0, {}, 3)
    assert apply_strategy(s, {}) is s


def test_apply_strategy_two_choices():
    a, b, c, d = atoms(4)
    s = Seq((Choice((a, b)), Choice((c, d))))
    out = apply_strategy(s, {(0,): 0, (1,): 1})
    assert out == Seq((a, d))


def test_apply_strategy_errors():
    a, b = atoms(2)
    s = Choice((a, b))
    with pytest.raises(TransformError):
        apply_strategy(s, {})
    with pytest.raises(TransformError):
        apply_strategy(s, {(): 5})


def test_apply_strategy_always_sequential():
    rng = random.Random(7)
    for _ in range(40):
        s = random_statement(rng, 2, 3)
        for sigma in enumerate_statement_strategies(s):
            assert statement_positions(apply_strategy(s, sigma)) == frozenset()


# ---------------------------------------------------------------------------
# path expansion


def test_path_expand_distribution_order():
    a, b, c, d = atoms(4)
    s = Seq((Choice((a, b)), Choice((c, d))))
    out = path_expand(s)
    assert isinstance(out, Choice)
    assert out.items == (
        Seq((a, c)), Seq((a, d)), Seq((b, c)), Seq((b, d))
    )


def test_path_expand_sequential_identity():
    a, b = atoms(2)
    s = Seq((a, b))
    assert path_expand(s) == s


def test_path_expand_exponential_count():
    a, b = atoms(2)
    k = 6
    s = Seq(tuple(Choice((a, b)) for _ in range(k)))
    out = path_expand(s)
    assert isinstance(out, Choice)
    assert len(out.items) == 2 ** k
    assert count_paths(s) == 2 ** k


def test_path_expand_guard():
    a, b = atoms(2)
    s = Seq(tuple(Choice((a, b)) for _ in range(21)))
    with pytest.raises(PathExplosionError) as err:
        path_expand(s)
    assert err.value.code == "PathExplosion"


def test_strategy_count_matches_paths():
    rng = random.Random(11)
    for _ in range(30):
        s = random_statement(rng, 2, 3)
        assert statement_strategy_count(s) == len(
            list(enumerate_statement_strategies(s))
        )


# ---------------------------------------------------------------------------
# sequential normal form


def test_normalize_branch_pos(running_statement):
    # prefix ; x1 := -x1 + 1 branch: semantics x1 <= 0; (x1,x2) := (-x1+1, -x1)
    branch = apply_strategy(running_statement, {(2,): 1})
    norm = normalize_sequential(branch)
    assert norm.update_lin.entries == (
        (Fraction(-1), Fraction(0)), (Fraction(-1), Fraction(0))
    )
    assert norm.update_off == (Fraction(1), Fraction(0))
    # guard region equals { x1 <= 0 } (the x1 <= 1000 row is redundant)
    assert norm.run_concrete((Fraction(0), Fraction(5))) == (Fraction(1), Fraction(0))
    assert norm.run_concrete((Fraction(-3), Fraction(5))) == (Fraction(4), Fraction(3))
    assert norm.run_concrete((Fraction(1), Fraction(5))) is None


def test_normalize_branch_neg(running_statement):
    branch = apply_strategy(running_statement, {(2,): 0})
    norm = normalize_sequential(branch)
    # guard rows: x1 <= 1000 and x1 >= 1 (from x2 <= -1 with x2 = -x1)
    assert set(zip(norm.guard_lhs.entries, norm.guard_rhs)) == {
        ((Fraction(1), Fraction(0)), Fraction(1000)),
        ((Fraction(-1), Fraction(0)), Fraction(-1)),
    }
    assert norm.update_lin.entries == (
        (Fraction(-2), Fraction(0)), (Fraction(-1), Fraction(0))
    )
    assert norm.update_off == (Fraction(0), Fraction(0))


def test_normalize_single_assign():
    s = assign_one(2, 0, {1: Fraction(2)}, 1)
    norm = normalize_sequential(s)
    assert norm.guard_lhs.nrows == 0
    assert norm.update_lin.row(0) == (Fraction(0), Fraction(2))
    assert norm.update_off == (Fraction(1), Fraction(0))


def test_normalize_rejects_choice():
    a, b = atoms(2)
    with pytest.raises(TransformError):
        normalize_sequential(Choice((a, b)))


def test_normalize_concrete_agreement_fuzz():
    rng = random.Random(23)
    for _ in range(60):
        s = random_statement(rng, 2, 2)
        for sigma in enumerate_statement_strategies(s):
            branch = apply_strategy(s, sigma)
            norm = normalize_sequential(branch)
            for _ in range(5):
                x = (Fraction(rng.randint(-3, 3)), Fraction(rng.randint(-3, 3)))
                via_norm = norm.run_concrete(x)
                via_sem = concrete_post(branch, x)
                if via_norm is None:
                    assert via_sem == set()
                else:
                    assert via_sem == {via_norm}


# ---------------------------------------------------------------------------
# cut-sets


def test_verify_cutset_running(expanded_loop_program):
    assert verify_cutset(expanded_loop_program, {"1"})
    assert not verify_cutset(expanded_loop_program, set())
    assert not verify_cutset(expanded_loop_program, {"missing"})


def test_verify_cutset_acyclic(branchy_fragment_program):
    assert verify_cutset(branchy_fragment_program, set())


def test_cutset_rewrite_structure(expanded_loop_program):
    collapsed = cutset_rewrite(expanded_loop_program, {"1"})
    assert set(collapsed.nodes) == {"st", "1"}
    labels = {(u, v) for (u, _, v) in collapsed.edges}
    assert labels == {("st", "1"), ("1", "1")}
    (loop_stmt,) = [s for (u, s, v) in collapsed.edges if u == v == "1"]
    # two loop-free paths through the body
    assert count_paths(loop_stmt) == 2


def test_cutset_rewrite_transformer_equivalence(expanded_loop_program,
                                                running_statement,
                                                running_template):
    """The collapsed self-loop must have the same abstract transformer as the
    hand-written en-bloc statement."""
    collapsed = cutset_rewrite(expanded_loop_program, {"1"})
    (loop_stmt,) = [s for (u, s, v) in collapsed.edges if u == v == "1"]
    for d in (
        AbstractValue.of([0, 0]),
        AbstractValue.of([5, 5]),
        AbstractValue((POS_INF, Bound.of(3))),
        AbstractValue.bottom(2),
    ):
        assert brute_force_transformer(
            loop_stmt, d, running_template
        ) == brute_force_transformer(running_statement, d, running_template)


def test_cutset_rewrite_invalid():
    with pytest.raises(TransformError):
        cutset_rewrite(
            Program(
                var_names=("x",),
                nodes=("st", "a", "b"),
                start="st",
                edges=(
                    ("st", assign_one(1, 0, {}, 0), "a"),
                    ("a", assign_one(1, 0, {0: Fraction(1)}, 1), "b"),
                    ("b", assign_one(1, 0, {0: Fraction(1)}, 1), "a"),
                ),
            ),
            set(),
        )


def test_cutset_rewrite_chain():
    p = Program(
        var_names=("x",),
        nodes=("st", "a", "b"),
        start="st",
        edges=(
            ("st", assign_one(1, 0, {}, 1), "a"),
            ("a", assign_one(1, 0, {0: Fraction(2)}, 0), "b"),
        ),
    )
    collapsed = cutset_rewrite(p, {"b"})
    assert set(collapsed.nodes) == {"st", "b"}
    ((u, stmt, v),) = collapsed.edges
    assert (u, v) == ("st", "b")
    assert concrete_post(stmt, (Fraction(7),)) == {(Fraction(2),)}


def test_cutset_rewrite_concrete_soundness():
    """Reachable states at retained nodes are identical before/after."""
    # small loop: x := 0; while x <= 8: x2 := -x; branch double-or-flip
    body = seq(
        guard_le(2, {0: Fraction(1)}, 8),
        assign_one(2, 1, {0: Fraction(-1)}, 0),
        Choice((
            seq(guard_le(2, {1: Fraction(1)}, -1),
                assign_one(2, 0, {0: Fraction(-2)}, 0)),
            seq(guard_le(2, {1: Fraction(-1)}, 0),
                assign_one(2, 0, {0: Fraction(-1)}, 1)),
        )),
    )
    expanded = Program(
        var_names=("x1", "x2"),
        nodes=("st", "1", "2", "3", "4", "5"),
        start="st",
        edges=(
            ("st", assign_one(2, 0, {}, 0), "1"),
            ("1", guard_le(2, {0: Fraction(1)}, 8), "2"),
            ("2", assign_one(2, 1, {0: Fraction(-1)}, 0), "3"),
            ("3", guard_le(2, {1: Fraction(1)}, -1), "4"),
            ("4", assign_one(2, 0, {0: Fraction(-2)}, 0), "1"),
            ("3", guard_le(2, {1: Fraction(-1)}, 0), "5"),
            ("5", assign_one(2, 0, {0: Fraction(-1)}, 1), "1"),
        ),
    )
    collapsed = cutset_rewrite(expanded, {"1"})
    box = (-40, 40)
    before = concrete_enumerate(expanded, box, max_states=200_000)
    after = concrete_enumerate(collapsed, box, max_states=200_000)
    assert not before.truncated and not after.truncated
    for node in ("st", "1"):
        assert before.states[node] == after.states[node]
