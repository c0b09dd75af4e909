"""Config-driven pipeline: scenarios, model, solve, extraction, audit, report.

Failures are re-raised as :class:`StageError` tagged with the stage that
failed, so a command-line user sees where the run broke.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .config import ConfigError, RunConfig
from .feeder import FeederError, FeederModel, load_feeder
from .milp.build import build_model, first_stage_names
from .milp.catalog import MilpModel
from .milp.params import BudgetError, BuildParams
from .plan import RestorationPlan, extract_plan
from .report import restored_energy, write_report, write_table
from .scenarios import ScenarioSet
from .solver_io.backends import SolverError, SolverResult, solve
from .validator import AuditReport, audit_plan

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class NoPlanError(StageError):
    """The solver finished without a usable plan (infeasible or no incumbent)."""

    def __init__(self, result: SolverResult, what: str = "model"):
        super().__init__("solve", f"{what}: solver status {result.status}, no plan available")
        self.result = result


@dataclass
class PlanOutcome:
    plan: RestorationPlan
    audit: AuditReport
    result: SolverResult
    model: MilpModel
    files: list[Path] = field(default_factory=list)


def prepare(cfg: RunConfig) -> tuple[FeederModel, ScenarioSet]:
    try:
        feeder = load_feeder(cfg.feeder)
    except FeederError as exc:
        raise StageError("feeder", str(exc)) from None
    try:
        scenarios = cfg.scenario_set()
    except (ConfigError, ValueError, OSError) as exc:
        raise StageError("scenarios", str(exc)) from None
    return feeder, scenarios


def solve_plan(feeder: FeederModel, scenarios: ScenarioSet, params: BuildParams, cfg: RunConfig,
               what: str = "model") -> tuple[MilpModel, SolverResult, RestorationPlan]:
    try:
        model = build_model(feeder, scenarios, params)
    except BudgetError:
        raise
    except (ValueError, KeyError) as exc:
        raise StageError("build", str(exc)) from None
    log.info("%s: %d rows, %d columns", what, len(model.constraints), len(model.variables))
    try:
        result = solve(model, cfg.solver.backend, cfg.solver.limits())
    except SolverError as exc:
        raise StageError("solve", str(exc)) from None
    log.info("%s: %s objective=%s gap=%s in %.1f s", what, result.status, result.objective,
             result.gap, result.wall_time)
    if not result.has_solution:
        raise NoPlanError(result, what)
    gap = None if math.isnan(result.gap) else result.gap
    plan = extract_plan(model, result.values, feeder, scenarios, params.clpu, objective=result.objective,
                        status=result.status, gap=gap, backend=result.backend)
    return model, result, plan


def run_plan(cfg: RunConfig, write: bool = True, figures: bool = True) -> PlanOutcome:
    """Solve the stochastic model for ``cfg`` and audit (and optionally report) the plan."""
    feeder, scenarios = prepare(cfg)
    model, result, plan = solve_plan(feeder, scenarios, cfg.params, cfg, "stochastic model")
    audit = audit_plan(plan, feeder, cfg.params)
    out = PlanOutcome(plan, audit, result, model)
    if write:
        try:
            out.files = write_report(plan, feeder, cfg.params, cfg.output, figures=figures, audit=audit)
        except OSError as exc:
            raise StageError("report", str(exc)) from None
    return out


def first_stage_of(model: MilpModel, result: SolverResult) -> dict[str, float]:
    return {name: result.values[name] for name in first_stage_names(model)}


def evaluate_first_stage(feeder: FeederModel, scenarios: ScenarioSet, params: BuildParams,
                         first_stage: Mapping[str, float], cfg: RunConfig,
                         what: str = "evaluation") -> tuple[SolverResult, RestorationPlan]:
    """Re-solve the recourse over ``scenarios`` with the first stage pinned."""
    fixed = dict(params.fixed or {}) | dict(first_stage)
    _, result, plan = solve_plan(feeder, scenarios, replace(params, fixed=fixed), cfg, what)
    return result, plan


@dataclass
class PlanEvaluation:
    label: str
    s_total: float
    e_total: float
    installed: int
    objective: float           # net objective over all scenarios (minimised)
    restored: dict[str, float]  # scenario -> weighted restored energy
    expected_restored: float
    status: str


def _evaluation(label: str, plan: RestorationPlan, result: SolverResult, params: BuildParams) -> PlanEvaluation:
    inst = plan.installed()
    restored = {tr.id: restored_energy(plan, tr, params) for tr in plan.scenarios}
    expected = math.fsum(tr.probability * restored[tr.id] for tr in plan.scenarios)
    return PlanEvaluation(label, sum(s.s_nom for s in inst), sum(s.e_nom for s in inst), len(inst),
                          result.objective, restored, expected, result.status)


def run_compare(cfg: RunConfig, ids: Sequence[str] | None = None, write: bool = True) -> list[PlanEvaluation]:
    """Stochastic plan against single-scenario deterministic plans, all evaluated on every scenario."""
    feeder, scenarios = prepare(cfg)
    ids = list(ids) if ids else [sc.id for sc in scenarios]
    for sid in ids:
        try:
            scenarios.by_id(sid)
        except KeyError:
            raise StageError("scenarios", f"unknown scenario id {sid!r}") from None
    params = cfg.params
    jobs = [("stochastic", scenarios)] + [(f"deterministic_{sid}", scenarios.subset([sid])) for sid in ids]

    def first(job):
        label, subset = job
        model, result, _ = solve_plan(feeder, subset, params, cfg, label)
        return label, first_stage_of(model, result)

    def second(item):
        label, fs = item
        result, plan = evaluate_first_stage(feeder, scenarios, params, fs, cfg, f"{label} evaluated")
        return _evaluation(label, plan, result, params)

    workers = max(1, cfg.solver.parallelism)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        stage_one = list(pool.map(first, jobs))
        evaluations = list(pool.map(second, stage_one))
    if write:
        write_comparison(evaluations, scenarios, params, cfg.output)
    return evaluations


def write_comparison(evaluations: Sequence[PlanEvaluation], scenarios: ScenarioSet, params: BuildParams,
                     out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    b = params.budgets
    ids = [sc.id for sc in scenarios]
    rows = []
    for ev in evaluations:
        rows.append([ev.label, ev.status, ev.installed, ev.s_total, ev.e_total, ev.s_total / b.s_budget,
                     ev.e_total / b.e_budget, ev.expected_restored, -ev.objective]
                    + [ev.restored[i] for i in ids])
    return write_table(
        out / "comparison.csv",
        ["Stochastic plan against single-scenario deterministic plans.",
         "Every plan's siting and sizing is fixed and its switching and dispatch re-solved on all scenarios.",
         "s_ratio / e_ratio: allocated rated power / energy over the fleet budget.",
         "expected_restored: probability-weighted restored energy (weight x MWh); "
         "net_value: expected_restored minus investment cost (the optimised quantity).",
         "Remaining columns: weighted restored energy per scenario."],
        ["plan", "status", "installed", "s_total_mw", "e_total_mwh", "s_ratio", "e_ratio",
         "expected_restored", "net_value"] + [f"restored_{i}" for i in ids],
        rows)
