"""enbloc: exact template-domain invariants for affine programs.

The analyzer computes the least inductive invariant expressible in a template
constraint domain (intervals, zones, octagons, or custom rows), abstracting
loop-free code regions as a whole.  Strategy improvements are discovered with
SAT-modulo-linear-real-arithmetic queries; each selected strategy is evaluated
exactly with rational linear programming.
"""

from .core import (
    AbstractValue,
    Assign,
    Bound,
    Choice,
    Guard,
    Matrix,
    NEG_INF,
    POS_INF,
    Position,
    Program,
    Rational,
    Seq,
    Statement,
    Template,
    alpha_of_universe,
    choice,
    format_bound,
    gamma_contains,
    make_template,
    rat,
    seq,
    skip,
    statement_positions,
)
from .engine import SolveResult, build_equations, evaluate, improve, init_state, solve
from .progfile import parse_program, parse_template_file
from .smtlra import InternalBackend, encode_query, encode_statement, smt_solve
from .smtlib2 import Smtlib2Backend
from .templates import template_preset
from .transform import (
    apply_strategy,
    cutset_rewrite,
    normalize_sequential,
    path_expand,
    verify_cutset,
)

__version__ = "0.1.0"

__all__ = [
    "AbstractValue",
    "Assign",
    "Bound",
    "Choice",
    "Guard",
    "InternalBackend",
    "Matrix",
    "NEG_INF",
    "POS_INF",
    "Position",
    "Program",
    "Rational",
    "Seq",
    "Smtlib2Backend",
    "SolveResult",
    "Statement",
    "Template",
    "alpha_of_universe",
    "apply_strategy",
    "build_equations",
    "choice",
    "cutset_rewrite",
    "encode_query",
    "encode_statement",
    "evaluate",
    "format_bound",
    "gamma_contains",
    "improve",
    "init_state",
    "make_template",
    "normalize_sequential",
    "parse_program",
    "parse_template_file",
    "path_expand",
    "rat",
    "seq",
    "skip",
    "smt_solve",
    "solve",
    "statement_positions",
    "template_preset",
    "verify_cutset",
]
