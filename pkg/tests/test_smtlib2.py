import os
import random
import shutil
import sys
from fractions import Fraction

import pytest

from enbloc.core import AbstractValue, Bound, NEG_INF
from enbloc.smtlra import (
    BoolVar,
    Leq,
    LinExpr,
    Lt,
    encode_query,
    eq_exprs,
    evaluate_formula,
    land,
    lnot,
    lor,
    smt_solve,
)
from enbloc.smtlib2 import (
    Smtlib2Backend,
    SolverBackendError,
    parse_sexps,
    parse_smt_value,
    to_script,
)

from corpus import finite_region, interval, random_statement

F = Fraction

SHIM = f"{sys.executable} -m enbloc.smtshim"


def shim_backend():
    return Smtlib2Backend(SHIM, timeout_s=60.0)


def external_backend():
    """A real solver from the environment when configured, else the shim."""
    cmd = os.environ.get("ENBLOC_SMT_CMD")
    if cmd:
        return Smtlib2Backend(cmd)
    return shim_backend()


def var(i):
    return LinExpr.var(i)


def const(q):
    return LinExpr.constant(q)


# ---------------------------------------------------------------------------
# script emission and value parsing


def test_script_shape():
    f = land(BoolVar(0), Leq(var(1), const("5/2")), Lt(const(-1), var(1)))
    script = to_script(f)
    assert "(set-logic QF_LRA)" in script
    assert "(declare-const r1 Real)" in script
    assert "(declare-const b0 Bool)" in script
    assert "(check-sat)" in script and "(get-model)" in script


def test_parse_smt_values():
    assert parse_smt_value("5") == 5
    assert parse_smt_value("5.5") == F(11, 2)
    assert parse_smt_value(["/", "1.0", "3.0"]) == F(1, 3)
    assert parse_smt_value(["-", ["/", "7.0", "2.0"]]) == F(-7, 2)
    assert parse_smt_value(["-", "4"]) == -4
    with pytest.raises(SolverBackendError):
        parse_smt_value("zzz")


def test_parse_sexps_nested():
    out = parse_sexps("sat (model (define-fun r0 () Real (/ 1 2)))")
    assert out[0] == "sat"
    assert out[1][0] == "model"


# ---------------------------------------------------------------------------
# the subprocess client against the reference shim


def test_shim_sat_with_rational_model():
    backend = shim_backend()
    f = land(Leq(var(0) + var(0), const(1)), Leq(const(1), var(0) + var(0)))
    m = backend.solve(f)
    assert m is not None
    assert m.reals[0] == F(1, 2)


def test_shim_unsat():
    backend = shim_backend()
    f = land(Leq(var(0), const(-1)), Leq(const(2), var(0)))
    assert backend.solve(f) is None


def test_shim_negative_and_strict_values():
    backend = shim_backend()
    f = land(Lt(var(0), const(-2)), Leq(const("-5/2"), var(0)), BoolVar(3))
    m = backend.solve(f)
    assert m is not None
    assert F(-5, 2) <= m.reals[0] < F(-2)
    assert m.bools[3] is True
    assert evaluate_formula(f, m)


def test_shim_boolean_structure():
    backend = shim_backend()
    a, b = BoolVar(0), BoolVar(1)
    f = land(lor(a, b), lnot(a), lor(lnot(b), Leq(var(2), const(0))))
    m = backend.solve(f)
    assert m is not None
    assert evaluate_formula(f, m)


def test_missing_solver_reports_backend_error():
    backend = Smtlib2Backend("definitely-not-a-solver-xyz")
    with pytest.raises(SolverBackendError):
        backend.solve(Leq(var(0), const(0)))


def test_broken_output_reports_backend_error():
    backend = Smtlib2Backend(f"{sys.executable} -c \"print('hello')\"")
    with pytest.raises(SolverBackendError):
        backend.solve(Leq(var(0), const(0)))


def test_internal_external_agreement_on_corpus():
    """Same verdicts on the whole randomized corpus; external models replay
    exactly under rational arithmetic."""
    backend = external_backend()
    rng = random.Random(777)
    agreements = 0
    for _ in range(100):
        n = rng.randint(1, 3)
        tpl = interval(n)
        s = random_statement(rng, n, rng.randint(1, 4))
        d = finite_region(rng, 2 * n)
        j = rng.randrange(2 * n)
        c = rng.choice([NEG_INF, Bound.of(0), Bound.of(2)])
        q = encode_query(s, d, j, c, tpl)
        internal = smt_solve(q.formula)
        external = backend.solve(q.formula)
        assert (internal is None) == (external is None)
        if external is not None:
            assert evaluate_formula(q.formula, external)
        agreements += 1
    assert agreements == 100
