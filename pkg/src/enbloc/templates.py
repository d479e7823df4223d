"""Built-in template families: intervals, zones, octagons."""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

from .core import Template, make_template


def _unit(n: int, i: int, sign: int) -> list[Fraction]:
    row = [Fraction(0)] * n
    row[i] = Fraction(sign)
    return row


def template_preset(name: str, n: int,
                    var_names: Optional[Sequence[str]] = None) -> Template:
    """interval: +-x_i (lower-bound rows first); zone: intervals plus
    x_i - x_j; octagon: intervals plus +-x_i +- x_j."""
    if n < 1:
        raise ValueError("need at least one variable")
    names = list(var_names) if var_names is not None else [
        f"x{i + 1}" for i in range(n)
    ]
    rows: list[list[Fraction]] = []
    if name == "interval":
        rows += [_unit(n, i, -1) for i in range(n)]
        rows += [_unit(n, i, +1) for i in range(n)]
    elif name == "zone":
        rows += [_unit(n, i, -1) for i in range(n)]
        rows += [_unit(n, i, +1) for i in range(n)]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                row = [Fraction(0)] * n
                row[i] = Fraction(1)
                row[j] = Fraction(-1)
                rows.append(row)
    elif name == "octagon":
        rows += [_unit(n, i, -1) for i in range(n)]
        rows += [_unit(n, i, +1) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    row = [Fraction(0)] * n
                    row[i] = Fraction(si)
                    row[j] = Fraction(sj)
                    rows.append(row)
    else:
        raise ValueError(f"unknown template preset {name!r}")
    return make_template(rows, None, names)
