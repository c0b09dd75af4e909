"""Cold-load pick-up staircase for critical and non-critical loads."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .milp.catalog import LinExpr


@dataclass(frozen=True)
class ClpuCoefficients:
    beta: tuple[float, float, float] = (0.6, 0.3, 0.1)

    def __post_init__(self):
        b1, b2, b3 = self.beta
        if not (b1 >= b2 >= b3 >= 0):
            raise ValueError(f"CLPU coefficients must be non-increasing and >= 0, got {self.beta}")


def clpu_multiplier(history: Sequence, beta: ClpuCoefficients, t: int):
    """Demand multiplier at step ``t`` given energisation statuses ``history``.

    ``history[s]`` is the 0/1 status at step ``s``; steps before 0 count as 0.
    Entries may be numbers or model variables; with variables the result is a
    :class:`LinExpr`, otherwise a float.
    """
    def u(s):
        return history[s] if s >= 0 else 0.0

    symbolic = any(not isinstance(u(s), (int, float)) for s in range(t - 3, t + 1))
    if not symbolic:
        out = float(u(t))
        for j, b in enumerate(beta.beta, start=1):
            out += b * (u(t - j + 1) - u(t - j))
        return out
    out = LinExpr.of(u(t))
    for j, b in enumerate(beta.beta, start=1):
        out.add(u(t - j + 1), b)
        out.add(u(t - j), -b)
    return out


def staircase(status: Sequence[int], beta: ClpuCoefficients) -> list[float]:
    return [clpu_multiplier(status, beta, t) for t in range(len(status))]


@dataclass(frozen=True)
class LoadExpressions:
    p: LinExpr
    q: LinExpr


def load_expressions(nominal_p: float, angle: float, history: Sequence, beta: ClpuCoefficients,
                     t: int) -> LoadExpressions:
    """Restored active/reactive demand of one load phase at step ``t``."""
    mult = LinExpr.of(clpu_multiplier(history, beta, t))
    p = mult * nominal_p
    return LoadExpressions(p=p, q=p * math.tan(angle))


def noncritical_links(z: Sequence, u_seg: Sequence, t: int) -> list[tuple[str, LinExpr, str]]:
    """Linking rows for a non-critical load: ``z_t <= u_seg_t`` and ``z_{t-1} <= z_t``.

    Returned as ``(label, lhs, sense)`` with an implicit zero right-hand side.
    """
    rows = [("z_le_seg", LinExpr.of(z[t]) - u_seg[t], "<=")]
    if t > 0:
        rows.append(("z_latch", LinExpr.of(z[t - 1]) - z[t], "<="))
    return rows
