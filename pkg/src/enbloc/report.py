"""Analysis reports: text, JSON, CSV, trace records, and figures.

Bounds are always printed exactly (integer or p/q); nothing is rounded.  The
report directory flow writes `bounds.csv` plus matplotlib figures: one
convergence plot of the iteration and, for two-variable programs, the final
invariant region of each node.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .core import (
    AbstractValue,
    Bound,
    Program,
    Template,
    format_bound,
)
from .engine import EqVar, SolveResult, TraceStep

SCHEMA_VERSION = 1


@dataclass
class NodeRow:
    label: str
    bound: str  # exact: "p/q", "inf", or "-inf"


@dataclass
class AnalysisReport:
    nodes: dict[str, list[NodeRow]]
    iterations: int
    stats: dict
    flags: dict
    program: str = ""
    template: str = ""
    schema_version: int = SCHEMA_VERSION


def report_from_result(result: SolveResult, tpl: Template,
                       program_name: str = "", template_name: str = "") -> AnalysisReport:
    nodes = {}
    for node, value in result.invariants.items():
        nodes[node] = [
            NodeRow(tpl.row_labels[i], format_bound(value[i]))
            for i in range(tpl.nrows)
        ]
    stats = dict(result.stats)
    stats["wall_time_s"] = round(stats.get("wall_time_s", 0.0), 6)
    return AnalysisReport(
        nodes=nodes,
        iterations=result.steps,
        stats=stats,
        flags={
            "has_top_components": result.has_top_components,
            "hit_limits": result.hit_limits,
        },
        program=program_name,
        template=template_name,
    )


def report_to_json(report: AnalysisReport) -> str:
    doc = {
        "schema_version": report.schema_version,
        "program": report.program,
        "template": report.template,
        "iterations": report.iterations,
        "nodes": {
            node: [{"label": r.label, "bound": r.bound} for r in rows]
            for node, rows in report.nodes.items()
        },
        "stats": report.stats,
        "flags": report.flags,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def report_from_json(text: str) -> AnalysisReport:
    doc = json.loads(text)
    return AnalysisReport(
        nodes={
            node: [NodeRow(r["label"], r["bound"]) for r in rows]
            for node, rows in doc["nodes"].items()
        },
        iterations=doc["iterations"],
        stats=doc["stats"],
        flags=doc["flags"],
        program=doc.get("program", ""),
        template=doc.get("template", ""),
        schema_version=doc["schema_version"],
    )


def report_to_text(report: AnalysisReport) -> str:
    lines = []
    if report.program:
        lines.append(f"program:  {report.program}")
    if report.template:
        lines.append(f"template: {report.template}")
    lines.append(f"improvement steps: {report.iterations}")
    for name, value in sorted(report.flags.items()):
        if value:
            lines.append(f"flag: {name}")
    for node, rows in report.nodes.items():
        lines.append(f"node {node}:")
        width = max((len(r.label) for r in rows), default=0)
        for r in rows:
            lines.append(f"  {r.label.ljust(width)} <= {r.bound}")
    return "\n".join(lines) + "\n"


def write_trace_file(path, trace: list[TraceStep]) -> None:
    """Line-delimited JSON, one record per improvement step."""
    with open(path, "w", encoding="utf-8") as fh:
        for step in trace:
            fh.write(json.dumps(trace_record(step), sort_keys=True) + "\n")


def trace_record(step: TraceStep) -> dict:
    return {
        "step": step.index,
        "switched": [
            {
                "var": str(sw.var),
                "node": sw.var.node,
                "row": sw.var.row + 1,
                "atom": sw.atom,
                "path": {
                    ".".join(map(str, pos)) or "": branch
                    for pos, branch in (sw.path or {}).items()
                },
                "witness": format_bound(sw.witness),
            }
            for sw in step.switches
        ],
        "rho": {str(v): format_bound(b) for v, b in step.rho.items()},
        "promoted": [str(v) for v in step.promotions],
        "smt_queries": step.smt_queries,
        "lp_rounds": step.lp_rounds,
    }


# ---------------------------------------------------------------------------
# report directory: delimited output + figures


def write_report_assets(outdir, report: AnalysisReport, result: SolveResult,
                        program: Program, tpl: Template) -> list[str]:
    """Write bounds.csv and figures into outdir; returns the file names."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out / "bounds.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "row", "bound"])
        for node, rows in report.nodes.items():
            for r in rows:
                writer.writerow([node, r.label, r.bound])
    written.append(csv_path.name)

    written.extend(_render_convergence(out, result, tpl))
    if program.nvars == 2:
        written.extend(_render_regions(out, result, program, tpl))
    return written


def _finite_float(b: Bound) -> Optional[float]:
    if b.is_finite:
        return float(b.value)
    return None


def _render_convergence(out: Path, result: SolveResult, tpl: Template) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not result.trace:
        return []
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict[EqVar, list[tuple[int, float]]] = {}
    for step in result.trace:
        for var, bound in step.rho.items():
            y = _finite_float(bound)
            if y is not None:
                series.setdefault(var, []).append((step.index, y))
    # keep the most active series readable
    ranked = sorted(
        series.items(),
        key=lambda kv: -(max(p[1] for p in kv[1]) - min(p[1] for p in kv[1])),
    )
    for var, points in ranked[:12]:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        label = f"{var.node}: {tpl.row_labels[var.row]}"
        ax.step(xs, ys, where="post", marker=".", label=label)
    ax.set_xlabel("improvement step")
    ax.set_ylabel("bound")
    ax.set_title("bound convergence")
    if ranked:
        ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    name = "convergence.png"
    fig.savefig(out / name, dpi=150)
    plt.close(fig)
    return [name]


def _clip_halfplane(poly, a, b, bound):
    """Sutherland-Hodgman step: keep { p | a p_x + b p_y <= bound }."""
    if not poly:
        return []
    out = []
    m = len(poly)
    for i in range(m):
        p = poly[i]
        q = poly[(i + 1) % m]
        fp = a * p[0] + b * p[1] - bound
        fq = a * q[0] + b * q[1] - bound
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _region_polygon(tpl: Template, value: AbstractValue, window: Fraction):
    poly = [
        (-window, -window),
        (window, -window),
        (window, window),
        (-window, window),
    ]
    for i in range(tpl.nrows):
        b = value[i]
        if b.is_pos_inf:
            continue
        if b.is_neg_inf:
            return []
        row = tpl.t.row(i)
        poly = _clip_halfplane(poly, row[0], row[1], b.value)
        if not poly:
            return []
    return poly


def _render_regions(out: Path, result: SolveResult, program: Program,
                    tpl: Template) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    finite = [
        abs(b.value)
        for value in result.invariants.values()
        for b in value
        if b.is_finite
    ]
    window = max(finite, default=Fraction(10)) * Fraction(6, 5) + 1
    written = []
    for node, value in result.invariants.items():
        poly = _region_polygon(tpl, value, window)
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        if poly:
            xs = [float(p[0]) for p in poly]
            ys = [float(p[1]) for p in poly]
            ax.fill(xs, ys, alpha=0.35)
            ax.plot(xs + xs[:1], ys + ys[:1], lw=1.2)
        else:
            ax.text(0.5, 0.5, "empty", ha="center", va="center",
                    transform=ax.transAxes)
        ax.set_xlabel(program.var_names[0])
        ax.set_ylabel(program.var_names[1])
        ax.set_title(f"invariant at {node}")
        w = float(window)
        ax.set_xlim(-w, w)
        ax.set_ylim(-w, w)
        fig.tight_layout()
        name = f"invariant_{_safe(node)}.png"
        fig.savefig(out / name, dpi=150)
        plt.close(fig)
        written.append(name)
    return written


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)
