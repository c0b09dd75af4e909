"""Free-format MPS writer and reader.

Rows and columns are written in catalog order, which is deterministic for a
given build, so two builds of the same model are byte-identical.  Floats are
written with ``repr`` so a write/parse round trip is coefficient-exact.
"""
from __future__ import annotations

import math
import re
from pathlib import Path

from ..milp.catalog import LinConstraint, MilpModel

MAX_NAME = 255
_BAD = re.compile(r"[^A-Za-z0-9_\[\]\.,:+\-]")
_SENSE = {"<=": "L", ">=": "G", "==": "E"}
_RSENSE = {v: k for k, v in _SENSE.items()}
OBJ_ROW = "OBJ"


class MpsError(ValueError):
    pass


def sanitize(name: str) -> str:
    out = _BAD.sub("_", name)
    if len(out) > MAX_NAME:
        out = out[:MAX_NAME]
    return out


def _num(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def exchange_names(model: MilpModel) -> tuple[list[str], list[str]]:
    """Sanitized column and row names; raises on a collision."""
    cols = [sanitize(v.name) for v in model.variables]
    rows = [sanitize(c.name) for c in model.constraints]
    seen: dict[str, str] = {OBJ_ROW: OBJ_ROW}
    for orig, new in zip([v.name for v in model.variables] + [c.name for c in model.constraints],
                         cols + rows):
        prev = seen.get(new)
        if prev is not None and prev != orig:
            raise MpsError(f"name collision after sanitizing: {prev!r} and {orig!r} -> {new!r}")
        seen[new] = orig
    return cols, rows


def render_mps(model: MilpModel) -> str:
    cols, rows = exchange_names(model)
    # the FREE marker switches CBC's reader out of fixed-column mode
    out = [f"NAME {sanitize(model.name)} FREE", "ROWS", f" N {OBJ_ROW}"]
    for con, rn in zip(model.constraints, rows):
        out.append(f" {_SENSE[con.sense]} {rn}")
    # column-major coefficients
    by_col: list[list[tuple[int, float]]] = [[] for _ in model.variables]
    for r, con in enumerate(model.constraints):
        for i, c in con.terms:
            by_col[i].append((r, c))
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for v, cn in zip(model.variables, cols):
        if v.integer != in_int:
            tag = "INTORG" if v.integer else "INTEND"
            out.append(f" MARKER{marker} 'MARKER' '{tag}'")
            marker += 1
            in_int = v.integer
        obj = model.objective.get(v.index, 0.0)
        entries = by_col[v.index]
        if obj != 0.0 or not entries:
            out.append(f" {cn} {OBJ_ROW} {_num(obj)}")
        for r, c in entries:
            out.append(f" {cn} {rows[r]} {_num(c)}")
    if in_int:
        out.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    out.append("RHS")
    for con, rn in zip(model.constraints, rows):
        if con.rhs != 0.0:
            out.append(f" RHS {rn} {_num(con.rhs)}")
    out.append("BOUNDS")
    for v, cn in zip(model.variables, cols):
        lb, ub = v.lb, v.ub
        if lb == ub:
            out.append(f" FX BND {cn} {_num(lb)}")
            continue
        if lb == -math.inf and ub == math.inf:
            out.append(f" FR BND {cn}")
            continue
        if lb == -math.inf:
            out.append(f" MI BND {cn}")
        elif lb != 0.0 or v.integer:
            out.append(f" LO BND {cn} {_num(lb)}")
        if ub != math.inf:
            out.append(f" UP BND {cn} {_num(ub)}")
        elif v.integer:
            out.append(f" PL BND {cn}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def write_mps(model: MilpModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(render_mps(model))
    except OSError as exc:
        raise MpsError(f"cannot write {path}: {exc}") from None
    return path


def parse_mps(text: str) -> MilpModel:
    """Read a free-format MPS document back into a :class:`MilpModel`.

    Variable families and constraint tags are recovered from the name prefix
    (``family[...]`` and ``tag.label[...]``).
    """
    model = MilpModel(name="model")
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    row_terms: dict[str, dict[int, float]] = {}
    rhs: dict[str, float] = {}
    col_index: dict[str, int] = {}
    obj_row = None
    integer = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        if not raw[0].isspace():
            head = line.split()
            section = head[0]
            if section == "NAME":
                model.name = head[1] if len(head) > 1 else "model"
            elif section == "RANGES":
                raise MpsError(f"line {lineno}: RANGES section is not supported")
            elif section not in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA", "OBJSENSE"):
                raise MpsError(f"line {lineno}: unknown section {section}")
            continue
        f = line.split()
        if section == "ROWS":
            kind, name = f
            if kind == "N":
                if obj_row is None:
                    obj_row = name
                continue
            row_sense[name] = _RSENSE[kind]
            row_order.append(name)
            row_terms[name] = {}
        elif section == "COLUMNS":
            if len(f) >= 3 and f[1] == "'MARKER'":
                integer = f[2] == "'INTORG'"
                continue
            cn = f[0]
            if cn not in col_index:
                fam = cn.split("[", 1)[0]
                # foreign files may mix kinds under one prefix
                if model.families.get(fam, integer) != integer:
                    fam = f"{fam}#{'int' if integer else 'cont'}"
                v = model.add_var(fam, (cn,), 0.0, math.inf, integer=integer)
                v.name = cn
                col_index[cn] = v.index
            idx = col_index[cn]
            for rname, val in zip(f[1::2], f[2::2]):
                val = float(val)
                if rname == obj_row:
                    if val != 0.0:
                        model.objective[idx] = model.objective.get(idx, 0.0) + val
                elif rname in row_terms:
                    row_terms[rname][idx] = row_terms[rname].get(idx, 0.0) + val
                else:
                    raise MpsError(f"line {lineno}: unknown row {rname}")
        elif section == "RHS":
            for rname, val in zip(f[1::2], f[2::2]):
                if rname == obj_row:
                    model.objective_const = -float(val)
                else:
                    rhs[rname] = float(val)
        elif section == "BOUNDS":
            kind, cn = f[0], f[2]
            if cn not in col_index:
                raise MpsError(f"line {lineno}: bound on unknown column {cn}")
            v = model.variables[col_index[cn]]
            val = float(f[3]) if len(f) > 3 else None
            if kind == "LO":
                v.lb = val
            elif kind == "UP":
                v.ub = val
            elif kind == "FX":
                v.lb = v.ub = val
            elif kind == "FR":
                v.lb, v.ub = -math.inf, math.inf
            elif kind == "MI":
                v.lb = -math.inf
            elif kind == "PL":
                v.ub = math.inf
            elif kind == "BV":
                v.lb, v.ub = 0.0, 1.0
            else:
                raise MpsError(f"line {lineno}: unsupported bound type {kind}")
    for name in row_order:
        tag = name.split(".", 1)[0]
        model.constraints.append(LinConstraint(
            name=name, tag=tag, terms=tuple(row_terms[name].items()),
            sense=row_sense[name], rhs=rhs.get(name, 0.0)))
    return model


def read_mps(path: str | Path) -> MilpModel:
    return parse_mps(Path(path).read_text())
