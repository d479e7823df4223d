"""Command-line front end.

Subcommands:

* ``analyze``   - run the strategy-improvement analysis and report bounds
* ``paths``     - print the explicit path expansion of every edge statement
* ``kleene``    - bounded value iteration (an independent lower-bound oracle)
* ``enumerate`` - concrete reachability over an integer box (oracle)

Exit status: 0 on success, 1 on input errors, 2 when a step or time budget
was hit and only a partial (not yet inductive) result was printed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import format_bound, format_statement
from .engine import build_equations, solve
from .oracle import concrete_enumerate, kleene_bounded
from .progfile import ProgramParseError, parse_program, parse_template_file
from .report import (
    report_from_result,
    report_to_json,
    report_to_text,
    write_report_assets,
    write_trace_file,
)
from .smtlib2 import SolverBackendError, backend_from_spec
from .templates import template_preset
from .transform import (
    PathExplosionError,
    TransformError,
    cutset_rewrite,
    find_unbroken_cycle,
    path_expand,
    verify_cutset,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_LIMITS = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _load_program(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    try:
        return parse_program(text)
    except ProgramParseError as exc:
        raise CliError(f"{path}:{exc}")


def _load_template(spec: str, program):
    if spec.startswith("custom="):
        path = spec[len("custom="):]
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read template {path}: {exc}")
        try:
            return parse_template_file(text, program.var_names), f"custom={path}"
        except ProgramParseError as exc:
            raise CliError(f"{path}:{exc}")
    if spec in ("interval", "zone", "octagon"):
        return template_preset(spec, program.nvars, program.var_names), spec
    raise CliError(f"unknown template {spec!r}")


def _apply_cutset(program, cutset_arg: str):
    cut = [s.strip() for s in cutset_arg.split(",") if s.strip()]
    unknown = [c for c in cut if c not in program.nodes]
    if unknown:
        raise CliError(f"cut-set names unknown nodes: {', '.join(unknown)}")
    if not verify_cutset(program, cut):
        cycle = find_unbroken_cycle(program, cut)
        shown = " -> ".join(cycle + [cycle[0]])
        raise CliError(f"invalid cut-set: cycle {shown} is not broken")
    return cutset_rewrite(program, cut)


def _cmd_analyze(args) -> int:
    program = _load_program(args.file)
    tpl, tpl_name = _load_template(args.template, program)
    if args.cutset:
        program = _apply_cutset(program, args.cutset)
    try:
        backend = backend_from_spec(args.solver)
    except ValueError as exc:
        raise CliError(str(exc))
    try:
        result = solve(
            program,
            tpl,
            backend=backend,
            max_steps=args.max_steps,
            timeout_s=args.timeout,
        )
    except SolverBackendError as exc:
        raise CliError(f"solver backend failed: {exc}")
    report = report_from_result(result, tpl, args.file, tpl_name)
    if args.trace:
        write_trace_file(args.trace, result.trace)
    if args.report_dir:
        write_report_assets(args.report_dir, report, result, program, tpl)
    if args.format == "json":
        print(report_to_json(report))
    else:
        print(report_to_text(report), end="")
    return EXIT_LIMITS if result.hit_limits else EXIT_OK


def _cmd_paths(args) -> int:
    program = _load_program(args.file)
    for (u, stmt, v) in program.edges:
        try:
            expanded = path_expand(stmt, args.path_limit)
        except PathExplosionError as exc:
            print(f"edge {u} -> {v}: {exc}", file=sys.stderr)
            return EXIT_LIMITS
        print(f"edge {u} -> {v}:")
        print(f"  [ {format_statement(expanded, program.var_names)} ]")
    return EXIT_OK


def _cmd_kleene(args) -> int:
    program = _load_program(args.file)
    tpl, _ = _load_template(args.template, program)
    es = build_equations(program, tpl)
    res = kleene_bounded(es, args.iters)
    print(f"iterations: {args.iters} (stabilized: {str(res.stabilized).lower()})")
    for node in program.nodes:
        print(f"node {node}:")
        for i in range(tpl.nrows):
            from .engine import EqVar

            b = res.assignment[EqVar(node, i)]
            print(f"  {tpl.row_labels[i]} <= {format_bound(b)}")
    return EXIT_OK


def _parse_bounds(spec: str, program):
    if "=" not in spec:
        lo, hi = _parse_range(spec)
        return (lo, hi)
    out = {}
    for piece in spec.split(","):
        piece = piece.strip()
        if not piece:
            continue
        name, _, rng = piece.partition("=")
        name = name.strip()
        if name not in program.var_names:
            raise CliError(f"bounds name unknown variable {name!r}")
        out[name] = _parse_range(rng)
    missing = [v for v in program.var_names if v not in out]
    if missing:
        raise CliError(f"bounds missing variables: {', '.join(missing)}")
    return out


def _parse_range(text: str):
    lo, sep, hi = text.partition("..")
    if not sep:
        raise CliError(f"bad range {text!r} (expected lo..hi)")
    try:
        return int(lo), int(hi)
    except ValueError as exc:
        raise CliError(f"bad range {text!r}: {exc}")


def _cmd_enumerate(args) -> int:
    program = _load_program(args.file)
    bounds = _parse_bounds(args.bounds, program)
    result = concrete_enumerate(program, bounds, max_states=args.max_states)
    print(f"truncated: {str(result.truncated).lower()}")
    for node in program.nodes:
        states = sorted(result.states[node])
        print(f"node {node}: {len(states)} states")
        for s in states:
            print("  (" + ", ".join(str(q) for q in s) + ")")
    return EXIT_LIMITS if result.truncated else EXIT_OK


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enbloc",
        description="Exact template-domain invariants for affine programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="compute invariants")
    p.add_argument("file")
    p.add_argument("--template", default="interval",
                   help="interval | zone | octagon | custom=<file>")
    p.add_argument("--cutset", default=None,
                   help="comma-separated node names to retain (abstraction "
                        "applies only there; the rest is analyzed en bloc)")
    p.add_argument("--solver", default="internal",
                   help="internal | smtlib2=<command>")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--trace", default=None, metavar="FILE",
                   help="write line-delimited JSON improvement records")
    p.add_argument("--report-dir", default=None, metavar="DIR",
                   help="write bounds.csv and figures here")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--timeout", type=float, default=None, metavar="SECONDS")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("paths", help="print explicit path expansions")
    p.add_argument("file")
    p.add_argument("--path-limit", type=int, default=2 ** 20)
    p.set_defaults(func=_cmd_paths)

    p = sub.add_parser("kleene", help="bounded value iteration (oracle)")
    p.add_argument("file")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--template", default="interval")
    p.set_defaults(func=_cmd_kleene)

    p = sub.add_parser("enumerate", help="concrete reachability (oracle)")
    p.add_argument("file")
    p.add_argument("--bounds", required=True,
                   help="lo..hi for all variables, or x=lo..hi,y=lo..hi")
    p.add_argument("--max-states", type=int, default=100_000)
    p.set_defaults(func=_cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TransformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
