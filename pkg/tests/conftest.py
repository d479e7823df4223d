import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from enbloc.core import (
    Choice,
    Program,
    assign_one,
    guard_le,
    make_template,
    seq,
)


@pytest.fixture(scope="session")
def running_statement():
    """x1 <= 1000; x2 := -x1; (x2 <= -1; x1 := -2x1 | -x2 <= 0; x1 := -x1+1)."""
    prefix = seq(
        guard_le(2, {0: Fraction(1)}, 1000),
        assign_one(2, 1, {0: Fraction(-1)}, 0),
    )
    branch_neg = seq(
        guard_le(2, {1: Fraction(1)}, -1),
        assign_one(2, 0, {0: Fraction(-2)}, 0),
    )
    branch_pos = seq(
        guard_le(2, {1: Fraction(-1)}, 0),
        assign_one(2, 0, {0: Fraction(-1)}, 1),
    )
    return seq(prefix, Choice((branch_neg, branch_pos)))


@pytest.fixture(scope="session")
def running_program(running_statement):
    """The collapsed two-node loop around `running_statement`."""
    return Program(
        var_names=("x1", "x2"),
        nodes=("st", "1"),
        start="st",
        edges=(
            ("st", assign_one(2, 0, {}, 0), "1"),
            ("1", running_statement, "1"),
        ),
    )


@pytest.fixture(scope="session")
def running_template():
    return make_template([[1, 0], [-1, 0]], var_names=("x1", "x2"))


@pytest.fixture(scope="session")
def expanded_loop_program():
    """The same loop before collapsing: one node per elementary statement."""
    e = [
        ("st", assign_one(2, 0, {}, 0), "1"),
        ("1", guard_le(2, {0: Fraction(1)}, 1000), "2"),
        ("2", assign_one(2, 1, {0: Fraction(-1)}, 0), "3"),
        ("3", guard_le(2, {1: Fraction(1)}, -1), "4"),
        ("4", assign_one(2, 0, {0: Fraction(-2)}, 0), "1"),
        ("3", guard_le(2, {1: Fraction(-1)}, 0), "5"),
        ("5", assign_one(2, 0, {0: Fraction(-1)}, 1), "1"),
    ]
    return Program(
        var_names=("x1", "x2"),
        nodes=("st", "1", "2", "3", "4", "5"),
        start="st",
        edges=tuple(e),
    )


@pytest.fixture(scope="session")
def branchy_fragment_program():
    """y := 0; if (x <= -1 or x >= 1) { if (x == 0) y := 1 }  -- loop free.

    Nodes: st -> a (y:=0), a -> b (either outer guard), b -> c (the inner
    then-branch or a skip), and a -> c for the outer else.  Every real run
    ends with y = 0; only a per-node convex analysis thinks y could be 1.
    """
    n = 2  # variables: x, y
    y0 = assign_one(n, 1, {}, 0)
    outer_l = guard_le(n, {0: Fraction(1)}, -1)     # x <= -1
    outer_r = guard_le(n, {0: Fraction(-1)}, -1)    # x >= 1
    inner_eq = seq(
        guard_le(n, {0: Fraction(1)}, 0),
        guard_le(n, {0: Fraction(-1)}, 0),          # x = 0 as two rows
        assign_one(n, 1, {}, 1),                    # y := 1
    )
    skip_edge = assign_one(n, 0, {0: Fraction(1)}, 0)  # identity
    return Program(
        var_names=("x", "y"),
        nodes=("st", "a", "b", "c"),
        start="st",
        edges=(
            ("st", y0, "a"),
            ("a", outer_l, "b"),
            ("a", outer_r, "b"),
            ("b", inner_eq, "c"),
            ("b", skip_edge, "c"),
            ("a", skip_edge, "c"),
        ),
    )
