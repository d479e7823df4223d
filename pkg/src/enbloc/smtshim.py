"""Reference SMT-LIB2 responder over the internal solver.

Reads one SMT-LIB2 script on stdin (the QF_LRA subset the analyzer emits,
plus n-ary comparison/arithmetic forms), answers `(check-sat)` and
`(get-model)` on stdout.  Exists so the subprocess client can be exercised
end to end without any third-party solver; also handy as
``--solver smtlib2="python -m enbloc.smtshim"`` for debugging the protocol
path.
"""

from __future__ import annotations

import sys
from fractions import Fraction
from typing import Optional

from .smtlra import (
    FALSE,
    Formula,
    Leq,
    LinExpr,
    Lt,
    TRUE,
    BoolVar,
    land,
    lnot,
    lor,
    smt_solve,
)
from .smtlib2 import Sexp, parse_sexps, parse_smt_value


class ShimError(ValueError):
    pass


class _Session:
    def __init__(self):
        self.reals: dict[str, int] = {}
        self.bools: dict[str, int] = {}
        self.asserts: list[Formula] = []
        self.last: Optional[str] = None
        self.model = None

    # -- term parsing -------------------------------------------------------

    def parse_expr(self, t: Sexp) -> LinExpr:
        if isinstance(t, str):
            if t in self.reals:
                return LinExpr.var(self.reals[t])
            return LinExpr.constant(parse_smt_value(t))
        if not t:
            raise ShimError("empty arithmetic term")
        head = t[0]
        args = t[1:]
        if head == "+":
            out = LinExpr.constant(0)
            for a in args:
                out = out + self.parse_expr(a)
            return out
        if head == "-":
            if len(args) == 1:
                return self.parse_expr(args[0]).scaled(-1)
            out = self.parse_expr(args[0])
            for a in args[1:]:
                out = out - self.parse_expr(a)
            return out
        if head == "*":
            exprs = [self.parse_expr(a) for a in args]
            out = LinExpr.constant(1)
            seen_var = False
            acc = Fraction(1)
            linear: Optional[LinExpr] = None
            for e in exprs:
                if e.is_constant:
                    acc *= e.const
                elif linear is None:
                    linear = e
                    seen_var = True
                else:
                    raise ShimError("nonlinear product")
            return (linear.scaled(acc) if seen_var else LinExpr.constant(acc))
        if head == "/":
            num = self.parse_expr(args[0])
            den = self.parse_expr(args[1])
            if not den.is_constant or den.const == 0:
                raise ShimError("division by a non-constant")
            return num.scaled(Fraction(1) / den.const)
        raise ShimError(f"unsupported arithmetic operator {head!r}")

    def parse_formula(self, t: Sexp) -> Formula:
        if isinstance(t, str):
            if t == "true":
                return TRUE
            if t == "false":
                return FALSE
            if t in self.bools:
                return BoolVar(self.bools[t])
            raise ShimError(f"unknown symbol {t!r}")
        if not t:
            raise ShimError("empty formula term")
        head = t[0]
        args = t[1:]
        if head == "and":
            return land(*(self.parse_formula(a) for a in args))
        if head == "or":
            return lor(*(self.parse_formula(a) for a in args))
        if head == "not":
            return lnot(self.parse_formula(args[0]))
        if head in ("<=", "<", ">=", ">", "="):
            exprs = [self.parse_expr(a) for a in args]
            pairs = list(zip(exprs, exprs[1:]))
            parts: list[Formula] = []
            for a, b in pairs:
                if head == "<=":
                    parts.append(Leq(a, b))
                elif head == "<":
                    parts.append(Lt(a, b))
                elif head == ">=":
                    parts.append(Leq(b, a))
                elif head == ">":
                    parts.append(Lt(b, a))
                else:
                    parts.append(land(Leq(a, b), Leq(b, a)))
            return land(*parts)
        raise ShimError(f"unsupported formula operator {head!r}")

    # -- commands ------------------------------------------------------------

    def handle(self, cmd: Sexp, out) -> bool:
        """Process one command; returns False on (exit)."""
        if not isinstance(cmd, list) or not cmd:
            raise ShimError(f"not a command: {cmd!r}")
        head = cmd[0]
        if head in ("set-logic", "set-option", "set-info"):
            return True
        if head in ("declare-const", "declare-fun"):
            name = cmd[1]
            sort = cmd[-1]
            if head == "declare-fun" and cmd[2] != []:
                raise ShimError("only 0-ary declarations are supported")
            if sort == "Real":
                self.reals[name] = len(self.reals)
            elif sort == "Bool":
                self.bools[name] = len(self.bools)
            else:
                raise ShimError(f"unsupported sort {sort!r}")
            return True
        if head == "assert":
            self.asserts.append(self.parse_formula(cmd[1]))
            return True
        if head == "check-sat":
            self.model = smt_solve(land(*self.asserts))
            self.last = "sat" if self.model is not None else "unsat"
            print(self.last, file=out)
            return True
        if head == "get-model":
            if self.last != "sat" or self.model is None:
                print('(error "model is not available")', file=out)
                return True
            lines = ["(model"]
            for name, vid in sorted(self.reals.items(), key=lambda kv: kv[1]):
                q = self.model.reals.get(vid, Fraction(0))
                lines.append(
                    f"  (define-fun {name} () Real {_print_rational(q)})"
                )
            for name, vid in sorted(self.bools.items(), key=lambda kv: kv[1]):
                b = self.model.bools.get(vid, False)
                lines.append(
                    f"  (define-fun {name} () Bool {'true' if b else 'false'})"
                )
            lines.append(")")
            print("\n".join(lines), file=out)
            return True
        if head == "exit":
            return False
        raise ShimError(f"unsupported command {head!r}")


def _print_rational(q: Fraction) -> str:
    if q < 0:
        return f"(- {_print_rational(-q)})"
    if q.denominator == 1:
        return f"{q.numerator}.0"
    return f"(/ {q.numerator}.0 {q.denominator}.0)"


def main() -> int:
    text = sys.stdin.read()
    session = _Session()
    try:
        for cmd in parse_sexps(text):
            if not session.handle(cmd, sys.stdout):
                break
    except ShimError as exc:
        print(f'(error "{exc}")')
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
