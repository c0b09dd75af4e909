"""External MILP solvers driven across a process boundary.

A backend is a descriptor: executable, argument template and the format of
the solution file it leaves behind.  The model goes out as MPS, the solver
runs as a child process, and the solution is read back by column name.
"""
from __future__ import annotations

import importlib.util
import json
import math
import os
import platform
import re
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..milp.catalog import MilpModel
from .mps import exchange_names, write_mps

INT_TOL = 1e-6


class SolverError(RuntimeError):
    pass


class BackendMissing(SolverError):
    pass


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float = 600.0  # s
    gap: float = 1e-4          # relative
    int_tol: float = 1e-9      # handed to the solver

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if not 0 <= self.gap < 1:
            raise ValueError("gap must be in [0, 1)")


@dataclass
class SolverResult:
    status: str  # optimal | feasible | infeasible | unbounded | timeout
    objective: float = math.nan
    values: dict[str, float] = field(default_factory=dict)
    gap: float = math.nan
    wall_time: float = 0.0
    limit_reached: bool = False
    backend: str = ""
    log: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in ("optimal", "feasible")


@dataclass(frozen=True)
class SolverBackend:
    name: str
    executable: tuple[str, ...]
    args: tuple[str, ...]
    solution_format: str  # "cbc" or "json"
    env_var: str | None = None

    def resolve(self) -> list[str]:
        if self.env_var and os.environ.get(self.env_var):
            return [os.environ[self.env_var]]
        exe = list(self.executable)
        if not exe or not exe[0]:
            raise BackendMissing(f"backend {self.name}: no executable configured"
                                 + (f" (set {self.env_var})" if self.env_var else ""))
        if os.sep not in exe[0] and shutil.which(exe[0]) is None:
            raise BackendMissing(f"backend {self.name}: {exe[0]!r} not found on PATH")
        if os.sep in exe[0] and not os.access(exe[0], os.X_OK):
            raise BackendMissing(f"backend {self.name}: {exe[0]!r} is not executable")
        return exe

    def command(self, model_path: Path, sol_path: Path, limits: SolveLimits) -> list[str]:
        subs = {"model": str(model_path), "solution": str(sol_path),
                "time_limit": repr(float(limits.time_limit)), "gap": repr(float(limits.gap)),
                "int_tol": repr(float(limits.int_tol))}
        return self.resolve() + [a.format(**subs) for a in self.args]


def _bundled_cbc() -> str:
    found = shutil.which("cbc")
    if found:
        return found
    spec = importlib.util.find_spec("pulp")
    if spec is None or spec.origin is None:
        return ""
    base = Path(spec.origin).parent / "solverdir" / "cbc"
    plat = {"linux": "linux", "darwin": "osx", "win32": "win"}.get(sys.platform, sys.platform)
    arch = {"x86_64": "i64", "amd64": "i64", "aarch64": "arm64", "arm64": "arm64"}.get(
        platform.machine().lower(), platform.machine().lower())
    for cand in sorted(base.glob(f"{plat}/{arch}/cbc*")):
        if os.access(cand, os.X_OK):
            return str(cand)
    return ""


def cbc_backend() -> SolverBackend:
    return SolverBackend(
        name="cbc",
        executable=(_bundled_cbc(),),
        args=("{model}", "-sec", "{time_limit}", "-ratio", "{gap}", "-integerTolerance", "{int_tol}",
              "-solve", "-solu", "{solution}"),
        solution_format="cbc",
        env_var="BLACKSTART_CBC",
    )


def highs_backend() -> SolverBackend:
    return SolverBackend(
        name="highs",
        executable=(sys.executable, "-m", "blackstart.solver_io.highs_runner"),
        args=("{model}", "{solution}", "--time-limit", "{time_limit}", "--gap", "{gap}",
              "--int-tol", "{int_tol}"),
        solution_format="json",
        env_var="BLACKSTART_HIGHS",
    )


BACKENDS = {"cbc": cbc_backend, "highs": highs_backend}


def get_backend(spec: str | Mapping | SolverBackend) -> SolverBackend:
    """Backend from a registered name or a descriptor mapping."""
    if isinstance(spec, SolverBackend):
        return spec
    if isinstance(spec, str):
        try:
            return BACKENDS[spec]()
        except KeyError:
            raise BackendMissing(f"unknown backend {spec!r}; choose from {sorted(BACKENDS)}") from None
    exe = spec["executable"]
    return SolverBackend(
        name=str(spec.get("name", "custom")),
        executable=tuple(exe) if isinstance(exe, (list, tuple)) else (str(exe),),
        args=tuple(spec["args"]),
        solution_format=str(spec.get("format", "json")),
        env_var=spec.get("env_var"),
    )


# -- solution parsing ---------------------------------------------------------

_CBC_GAP = re.compile(r"^Gap:\s+([-+0-9.eE]+)", re.M)


def parse_cbc_solution(text: str, log: str = "") -> tuple[str, float, dict[str, float], float, bool]:
    lines = text.splitlines()
    if not lines:
        raise SolverError("empty CBC solution file")
    head = lines[0].strip()
    low = head.lower()
    m = re.search(r"objective value\s+([-+0-9.eE]+)", head)
    obj = float(m.group(1)) if m else math.nan
    values: dict[str, float] = {}
    for ln in lines[1:]:
        f = ln.split()
        if not f:
            continue
        if f[0] == "**":  # infeasibility markers precede the index
            f = f[1:]
        if len(f) < 3:
            raise SolverError(f"malformed CBC solution line: {ln!r}")
        try:
            values[f[1]] = float(f[2])
        except ValueError:
            raise SolverError(f"malformed CBC solution line: {ln!r}") from None
    gm = _CBC_GAP.search(log)
    gap = float(gm.group(1)) if gm else math.nan
    limit = False
    if low.startswith("optimal"):
        status = "optimal"
        gap = 0.0 if math.isnan(gap) else gap
    elif "infeasible" in low:
        status = "infeasible"
    elif "unbounded" in low:
        status = "unbounded"
    elif low.startswith("stopped"):
        limit = True
        status = "feasible" if values and abs(obj) < 1e40 else "timeout"
    else:
        raise SolverError(f"unrecognized CBC status line: {head!r}")
    return status, obj, values, gap, limit


def parse_json_solution(text: str) -> tuple[str, float, dict[str, float], float, bool]:
    try:
        doc = json.loads(text)
        status = str(doc["status"])
        values = {str(k): float(v) for k, v in doc.get("values", {}).items()}
        obj = float(doc.get("objective", math.nan))
        gap = float(doc.get("gap", math.nan))
    except (ValueError, KeyError, TypeError) as exc:
        raise SolverError(f"malformed JSON solution: {exc}") from None
    if status not in ("optimal", "feasible", "infeasible", "unbounded", "timeout"):
        raise SolverError(f"unknown status {status!r} in solution file")
    return status, obj, values, gap, bool(doc.get("limit_reached", False))


# -- solve --------------------------------------------------------------------

def solve(model: MilpModel, backend: str | Mapping | SolverBackend = "cbc",
          limits: SolveLimits | None = None, workdir: str | Path | None = None) -> SolverResult:
    """Write ``model`` to MPS, run the backend, read the solution back."""
    limits = limits or SolveLimits()
    be = get_backend(backend)
    cols, _ = exchange_names(model)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        mps = write_mps(model, tmp / "model.mps")
        sol = tmp / ("model.sol" if be.solution_format == "cbc" else "model.json")
        cmd = be.command(mps, sol, limits)
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, cwd=tmp,
                                  timeout=limits.time_limit + 120.0)
        except FileNotFoundError as exc:
            raise BackendMissing(f"backend {be.name}: {exc}") from None
        except subprocess.TimeoutExpired:
            return SolverResult("timeout", wall_time=time.perf_counter() - t0, limit_reached=True,
                                backend=be.name)
        wall = time.perf_counter() - t0
        log = proc.stdout + proc.stderr
        if not sol.exists():
            raise SolverError(f"backend {be.name} exited with {proc.returncode} and wrote no "
                              f"solution file:\n{log[-2000:]}")
        text = sol.read_text()
    if be.solution_format == "cbc":
        status, obj, raw, gap, limit = parse_cbc_solution(text, log)
    else:
        status, obj, raw, gap, limit = parse_json_solution(text)
    res = SolverResult(status=status, gap=gap, wall_time=wall, limit_reached=limit, backend=be.name, log=log)
    if not res.has_solution:
        return res
    values: dict[str, float] = {}
    for v, cn in zip(model.variables, cols):
        x = raw.get(cn, 0.0)
        if v.integer:
            r = round(x)
            if abs(x - r) > INT_TOL:
                raise SolverError(f"{be.name} returned non-integral {v.name} = {x!r}")
            x = float(r)
        values[v.name] = x
    res.values = values
    res.objective = model.objective_value({v.index: values[v.name] for v in model.variables})
    return res
