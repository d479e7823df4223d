"""SMT-LIB2 text protocol: formula emission, model parsing, subprocess client.

Any executable that accepts an SMT-LIB2 script on stdin (logic QF_LRA) and
answers `(check-sat)` / `(get-model)` can serve as a backend, e.g.
``z3 -in`` or ``cvc5 --incremental=false -``.  The bundled reference
responder (``python -m enbloc.smtshim``) speaks the same protocol over the
internal solver and is what the test suite exercises the client against.

Each query runs one fresh process: no incremental state, no push/pop.
"""

from __future__ import annotations

import shlex
import subprocess
from fractions import Fraction
from typing import Optional, Sequence, Union

from .smtlra import (
    And,
    BoolVar,
    FalseConst,
    Formula,
    Leq,
    LinExpr,
    Lt,
    Model,
    Not,
    Or,
    TrueConst,
    free_variables,
)


class SolverBackendError(RuntimeError):
    """The external solver failed (crash, timeout, or unparseable output)."""


# ---------------------------------------------------------------------------
# emission


def _smt_rational(q: Fraction) -> str:
    if q < 0:
        return f"(- {_smt_rational(-q)})"
    if q.denominator == 1:
        return f"{q.numerator}.0"
    return f"(/ {q.numerator}.0 {q.denominator}.0)"


def _smt_linexpr(e: LinExpr) -> str:
    parts = []
    if e.const != 0 or not e.terms:
        parts.append(_smt_rational(e.const))
    for v, c in e.terms:
        if c == 1:
            parts.append(f"r{v}")
        else:
            parts.append(f"(* {_smt_rational(c)} r{v})")
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def _smt_formula(f: Formula) -> str:
    if isinstance(f, TrueConst):
        return "true"
    if isinstance(f, FalseConst):
        return "false"
    if isinstance(f, BoolVar):
        return f"b{f.vid}"
    if isinstance(f, Leq):
        return f"(<= {_smt_linexpr(f.lhs)} {_smt_linexpr(f.rhs)})"
    if isinstance(f, Lt):
        return f"(< {_smt_linexpr(f.lhs)} {_smt_linexpr(f.rhs)})"
    if isinstance(f, And):
        return "(and " + " ".join(_smt_formula(g) for g in f.items) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(_smt_formula(g) for g in f.items) + ")"
    if isinstance(f, Not):
        return f"(not {_smt_formula(f.item)})"
    raise TypeError(f"not a formula: {f!r}")


def to_script(f: Formula) -> str:
    """A complete SMT-LIB2 script deciding f and dumping a model."""
    reals, bools = free_variables(f)
    lines = ["(set-logic QF_LRA)"]
    for v in sorted(reals):
        lines.append(f"(declare-const r{v} Real)")
    for b in sorted(bools):
        lines.append(f"(declare-const b{b} Bool)")
    lines.append(f"(assert {_smt_formula(f)})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# s-expression parsing

Sexp = Union[str, list]


def tokenize_sexp(text: str) -> list[str]:
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in "()":
            out.append(ch)
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch.isspace():
            i += 1
        elif ch == "|":
            j = text.index("|", i + 1)
            out.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_sexps(text: str) -> list[Sexp]:
    tokens = tokenize_sexp(text)
    pos = 0

    def read() -> Sexp:
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(read())
            if pos >= len(tokens):
                raise SolverBackendError("unbalanced parenthesis in solver output")
            pos += 1
            return items
        if tok == ")":
            raise SolverBackendError("stray ')' in solver output")
        return tok

    out = []
    while pos < len(tokens):
        out.append(read())
    return out


def parse_smt_value(v: Sexp) -> Fraction:
    """Exact rational from an SMT-LIB value term ((/ p q), (- x), decimals)."""
    if isinstance(v, str):
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError) as exc:
            raise SolverBackendError(f"unparseable numeral {v!r}") from exc
    if not v:
        raise SolverBackendError("empty value term")
    head = v[0]
    if head == "-" and len(v) == 2:
        return -parse_smt_value(v[1])
    if head == "/" and len(v) == 3:
        return parse_smt_value(v[1]) / parse_smt_value(v[2])
    raise SolverBackendError(f"unparseable value term {v!r}")


def _model_from_sexp(sexp: Sexp, reals: set[int], bools: set[int]) -> Model:
    if not isinstance(sexp, list):
        raise SolverBackendError(f"expected a model, got {sexp!r}")
    entries = sexp
    if entries and entries[0] == "model":
        entries = entries[1:]
    real_vals: dict[int, Fraction] = {}
    bool_vals: dict[int, bool] = {}
    for entry in entries:
        if (
            not isinstance(entry, list)
            or len(entry) < 5
            or entry[0] != "define-fun"
            or not isinstance(entry[1], str)
        ):
            continue
        name, value = entry[1], entry[4]
        if name.startswith("r") and name[1:].isdigit():
            real_vals[int(name[1:])] = parse_smt_value(value)
        elif name.startswith("b") and name[1:].isdigit():
            if value not in ("true", "false"):
                raise SolverBackendError(f"unparseable boolean {value!r}")
            bool_vals[int(name[1:])] = value == "true"
    return Model(
        reals={v: real_vals.get(v, Fraction(0)) for v in sorted(reals)},
        bools={b: bool_vals.get(b, False) for b in sorted(bools)},
    )


# ---------------------------------------------------------------------------
# the client


class Smtlib2Backend:
    """One-shot subprocess client for an SMT-LIB2 QF_LRA solver.

    The solver must support `(get-model)`; backends without model output are
    not usable for strategy extraction and are reported as backend errors.
    """

    def __init__(self, command: Union[str, Sequence[str]],
                 timeout_s: Optional[float] = 60.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s
        self.name = f"smtlib2:{' '.join(self.command)}"
        self.queries = 0
        self.sat = 0
        self.unsat = 0

    def solve(self, f: Formula) -> Optional[Model]:
        self.queries += 1
        script = to_script(f)
        try:
            proc = subprocess.run(
                self.command,
                input=script,
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
            )
        except FileNotFoundError as exc:
            raise SolverBackendError(f"solver not found: {self.command[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SolverBackendError(
                f"solver timed out after {self.timeout_s}s"
            ) from exc
        verdict, model_sexp = _split_answer(proc.stdout)
        if verdict == "unsat":
            self.unsat += 1
            return None
        if verdict != "sat":
            raise SolverBackendError(
                f"solver answered {verdict!r} (stderr: {proc.stderr.strip()[:200]})"
            )
        self.sat += 1
        if model_sexp is None:
            raise SolverBackendError("solver reported sat but printed no model")
        reals, bools = free_variables(f)
        return _model_from_sexp(model_sexp, reals, bools)


def _split_answer(stdout: str) -> tuple[str, Optional[Sexp]]:
    sexps = parse_sexps(stdout)
    verdict = None
    model = None
    for s in sexps:
        if isinstance(s, str) and s in ("sat", "unsat", "unknown"):
            if verdict is None:
                verdict = s
        elif isinstance(s, list) and verdict == "sat" and model is None:
            if s and s[0] == "error":
                continue
            model = s
    if verdict is None:
        raise SolverBackendError(f"no sat/unsat answer in output: {stdout[:200]!r}")
    return verdict, model


def backend_from_spec(spec: str):
    """Build a backend from a CLI spec: 'internal' or 'smtlib2=<command>'."""
    from .smtlra import InternalBackend

    if spec == "internal":
        return InternalBackend()
    if spec.startswith("smtlib2="):
        cmd = spec[len("smtlib2="):]
        if not cmd.strip():
            raise ValueError("empty smtlib2 command")
        return Smtlib2Backend(cmd)
    raise ValueError(f"unknown solver spec {spec!r}")
