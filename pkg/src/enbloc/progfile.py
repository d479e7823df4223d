"""Text format for affine programs, and custom template files.

Example::

    # loop with a branching body
    vars: x1, x2;
    start: st;
    edge st -> n1 : [ x1 := 0 ];
    edge n1 -> n1 : [ guard x1 <= 1000; x2 := -x1;
                      (guard x2 <= -1; x1 := -2*x1 | guard -x2 <= 0; x1 := -x1 + 1) ];

Header clauses: `vars:` (required), `init:` (linear constraints on the start
states, default all of space), `start:` (default: source of the first edge).
Statements: `skip`, parallel assignment `x, y := e1, e2`, `guard` with a
comma list of `<=` / `>=` / `=` comparisons, `;` sequencing and `( ... | ... )`
choice.  Constants are integers, fractions `p/q`, or exact decimals.
Comments run from `#` to end of line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .core import (
    Assign,
    Guard,
    Matrix,
    Program,
    Statement,
    Template,
    choice,
    make_template,
    parse_rational,
    seq,
    skip,
)


class ProgramParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class _Tok:
    kind: str  # IDENT NUMBER OP EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>->|:=|<=|>=|[=:;,()\[\]|+\-*])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[_Tok]:
    out = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ProgramParseError(f"unexpected character {text[pos]!r}", line, col)
        chunk = m.group(0)
        kind = m.lastgroup
        if kind == "number":
            out.append(_Tok("NUMBER", chunk, line, col))
        elif kind == "ident":
            out.append(_Tok("IDENT", chunk, line, col))
        elif kind == "op":
            out.append(_Tok("OP", chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    out.append(_Tok("EOF", "", line, col))
    return out


_KEYWORDS = {"vars", "init", "start", "node", "edge", "guard", "skip"}


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.var_index: dict[str, int] = {}

    # -- token plumbing ------------------------------------------------------

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def error(self, message: str, tok: Optional[_Tok] = None):
        t = tok or self.peek()
        raise ProgramParseError(message, t.line, t.col)

    def expect_op(self, text: str) -> _Tok:
        t = self.peek()
        if t.kind != "OP" or t.text != text:
            self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        return self.next()

    def expect_ident(self) -> _Tok:
        t = self.peek()
        if t.kind != "IDENT":
            self.error(f"expected a name, found {t.text or 'end of input'!r}")
        return self.next()

    def at_keyword(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "IDENT" and t.text == word

    # -- linear expressions ---------------------------------------------------

    def parse_linear(self) -> tuple[dict[int, Fraction], Fraction]:
        coeffs: dict[int, Fraction] = {}
        const = Fraction(0)
        sign = Fraction(1)
        first = True
        while True:
            t = self.peek()
            if first and t.kind == "OP" and t.text == "-":
                self.next()
                sign = Fraction(-1)
            c, v = self.parse_term()
            if v is None:
                const += sign * c
            else:
                coeffs[v] = coeffs.get(v, Fraction(0)) + sign * c
            first = False
            t = self.peek()
            if t.kind == "OP" and t.text in ("+", "-"):
                self.next()
                sign = Fraction(1) if t.text == "+" else Fraction(-1)
                continue
            return coeffs, const

    def parse_term(self) -> tuple[Fraction, Optional[int]]:
        t = self.peek()
        if t.kind == "NUMBER":
            self.next()
            q = parse_rational(t.text)
            nxt = self.peek()
            if nxt.kind == "OP" and nxt.text == "*":
                self.next()
                ident = self.expect_ident()
                return q, self.lookup_var(ident)
            if nxt.kind == "IDENT" and nxt.text not in _KEYWORDS:
                self.next()
                return q, self.lookup_var(nxt)
            return q, None
        if t.kind == "IDENT":
            if t.text in _KEYWORDS:
                self.error(f"unexpected keyword {t.text!r} in an expression")
            self.next()
            return Fraction(1), self.lookup_var(t)
        self.error(f"expected a term, found {t.text or 'end of input'!r}")

    def lookup_var(self, tok: _Tok) -> int:
        if tok.text not in self.var_index:
            self.error(f"unknown variable {tok.text!r}", tok)
        return self.var_index[tok.text]

    def parse_comparison_rows(self) -> list[tuple[dict[int, Fraction], Fraction]]:
        """One comparison, normalized to row(s) of the form coeffs . x <= rhs."""
        lhs_coeffs, lhs_const = self.parse_linear()
        op = self.peek()
        if op.kind != "OP" or op.text not in ("<=", ">=", "="):
            self.error("expected <=, >= or = in a constraint")
        self.next()
        rhs_coeffs, rhs_const = self.parse_linear()
        diff = dict(lhs_coeffs)
        for v, c in rhs_coeffs.items():
            diff[v] = diff.get(v, Fraction(0)) - c
        bound = rhs_const - lhs_const
        if op.text == "<=":
            return [(diff, bound)]
        if op.text == ">=":
            return [({v: -c for v, c in diff.items()}, -bound)]
        return [
            (diff, bound),
            ({v: -c for v, c in diff.items()}, -bound),
        ]

    def rows_to_guard(self, rows: list[tuple[dict[int, Fraction], Fraction]]) -> Guard:
        n = len(self.var_index)
        mat = [
            [coeffs.get(j, Fraction(0)) for j in range(n)] for coeffs, _ in rows
        ]
        return Guard(Matrix.from_rows(mat, n), tuple(b for _, b in rows))

    # -- statements ------------------------------------------------------------

    def parse_statement(self) -> Statement:
        items = [self.parse_item()]
        while self.peek().kind == "OP" and self.peek().text == ";":
            self.next()
            items.append(self.parse_item())
        return seq(*items)

    def parse_item(self) -> Statement:
        t = self.peek()
        if t.kind == "OP" and t.text == "(":
            self.next()
            alts = [self.parse_statement()]
            while self.peek().kind == "OP" and self.peek().text == "|":
                self.next()
                alts.append(self.parse_statement())
            self.expect_op(")")
            if len(alts) < 2:
                self.error("a choice needs at least two branches", t)
            return choice(*alts)
        return self.parse_atom()

    def parse_atom(self) -> Statement:
        n = len(self.var_index)
        t = self.peek()
        if self.at_keyword("skip"):
            self.next()
            return skip(n)
        if self.at_keyword("guard"):
            self.next()
            rows = self.parse_comparison_rows()
            while self.peek().kind == "OP" and self.peek().text == ",":
                self.next()
                rows.extend(self.parse_comparison_rows())
            return self.rows_to_guard(rows)
        # parallel assignment
        targets = [self.expect_ident()]
        while self.peek().kind == "OP" and self.peek().text == ",":
            self.next()
            targets.append(self.expect_ident())
        self.expect_op(":=")
        exprs = [self.parse_linear()]
        while self.peek().kind == "OP" and self.peek().text == ",":
            self.next()
            exprs.append(self.parse_linear())
        if len(exprs) != len(targets):
            self.error(
                f"{len(targets)} assignment targets but {len(exprs)} expressions",
                targets[0],
            )
        rows = [
            [Fraction(1 if i == j else 0) for j in range(n)] for i in range(n)
        ]
        offs = [Fraction(0)] * n
        seen: set[int] = set()
        for tok, (coeffs, const) in zip(targets, exprs):
            idx = self.lookup_var(tok)
            if idx in seen:
                self.error(f"variable {tok.text!r} assigned twice", tok)
            seen.add(idx)
            rows[idx] = [coeffs.get(j, Fraction(0)) for j in range(n)]
            offs[idx] = const
        return Assign(Matrix.from_rows(rows, n), tuple(offs))

    # -- top level ---------------------------------------------------------------

    def parse_program(self) -> Program:
        if not self.at_keyword("vars"):
            self.error("program must begin with 'vars:'")
        self.next()
        self.expect_op(":")
        names = [self.expect_ident().text]
        while self.peek().kind == "OP" and self.peek().text == ",":
            self.next()
            names.append(self.expect_ident().text)
        self.expect_op(";")
        for i, name in enumerate(names):
            if name in self.var_index:
                self.error(f"duplicate variable {name!r}")
            self.var_index[name] = i

        init_guard: Optional[Guard] = None
        if self.at_keyword("init"):
            self.next()
            self.expect_op(":")
            rows = self.parse_comparison_rows()
            while self.peek().kind == "OP" and self.peek().text == ",":
                self.next()
                rows.extend(self.parse_comparison_rows())
            self.expect_op(";")
            init_guard = self.rows_to_guard(rows)

        start: Optional[str] = None
        if self.at_keyword("start"):
            self.next()
            self.expect_op(":")
            start = self.expect_ident().text
            self.expect_op(";")

        nodes: list[str] = []
        node_set: set[str] = set()

        def add_node(name: str) -> None:
            if name not in node_set:
                node_set.add(name)
                nodes.append(name)

        edges = []
        while True:
            t = self.peek()
            if t.kind == "EOF":
                break
            if self.at_keyword("node"):
                self.next()
                add_node(self.expect_ident().text)
                while self.peek().kind == "OP" and self.peek().text == ",":
                    self.next()
                    add_node(self.expect_ident().text)
                self.expect_op(";")
                continue
            if self.at_keyword("edge"):
                self.next()
                u = self.expect_ident().text
                self.expect_op("->")
                v = self.expect_ident().text
                self.expect_op(":")
                self.expect_op("[")
                stmt = self.parse_statement()
                self.expect_op("]")
                self.expect_op(";")
                add_node(u)
                add_node(v)
                edges.append((u, stmt, v))
                continue
            self.error(
                f"expected 'node' or 'edge', found {t.text or 'end of input'!r}"
            )

        if start is None:
            if not edges:
                self.error("program has no edges; declare 'start:' explicitly")
            start = edges[0][0]
        if start not in node_set:
            add_node(start)
        return Program(
            var_names=tuple(names),
            nodes=tuple(nodes),
            start=start,
            edges=tuple(edges),
            init_guard=init_guard,
        )


def parse_program(text: str) -> Program:
    """Parse program text; raises ProgramParseError with line/column info."""
    return _Parser(text).parse_program()


def parse_template_file(text: str, var_names: Sequence[str]) -> Template:
    """Custom template rows: per line, n rationals plus an optional label."""
    n = len(var_names)
    rows = []
    labels = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < n:
            raise ProgramParseError(
                f"template row needs {n} rationals", lineno, 1
            )
        try:
            row = [parse_rational(tok) for tok in parts[:n]]
        except ValueError as exc:
            raise ProgramParseError(str(exc), lineno, 1) from exc
        label = " ".join(parts[n:])
        rows.append(row)
        labels.append(label)
    if not rows:
        raise ProgramParseError("template file has no rows", 1, 1)
    if any(labels):
        final_labels = [
            lab if lab else None for lab in labels
        ]
        # fill missing labels from the default formatter
        auto = make_template(rows, None, var_names).row_labels
        final = tuple(
            lab if lab is not None else auto[i] for i, lab in enumerate(final_labels)
        )
        return make_template(rows, final, var_names)
    return make_template(rows, None, var_names)
