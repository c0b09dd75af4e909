"""``blackstart`` command line.

Exit codes: 0 success with a passing audit, 1 other stage failure,
2 infeasible (including an unsatisfiable budget), 3 audit failure,
4 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_config, with_overrides
from .feeder import FeederError, load_feeder
from .milp.params import BudgetError, BuildParams
from .pipeline import NoPlanError, StageError, run_compare, run_plan
from .plan import PlanError, load_plan, save_plan
from .report import frequency_events, write_table
from .validator import audit_plan
from .vsg import freq_indices, response_shape

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_AUDIT, EXIT_CONFIG = 0, 1, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration (YAML)")
    p.add_argument("--feeder", help="feeder file; overrides the config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=("highs", "cbc"))
    p.add_argument("--time-limit", type=float)
    p.add_argument("--gap", type=float)
    p.add_argument("--seasons-file", help="season profile file (YAML or JSON)")
    p.add_argument("--outage-pmf", help="'60:0.4,120:0.6' or a file holding that text")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blackstart",
                                 description="Black-start BESS siting, sizing and restoration planning.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("plan", help="solve the stochastic model, audit the plan, write result files")
    _common(p)
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p = sub.add_parser("compare", help="stochastic plan against single-scenario deterministic plans")
    _common(p)
    p.add_argument("--scenarios", help="comma-separated scenario ids (default: all)")
    p = sub.add_parser("validate", help="audit a plan file")
    _common(p)
    p.add_argument("plan", help="plan JSON written by 'plan'")
    p = sub.add_parser("freq-indices", help="RoCoF, quasi-steady-state frequency and nadir")
    _common(p)
    p.add_argument("--plan", dest="plan_file", help="report every BESS output step of this plan")
    p.add_argument("--delta-p", type=float, help="step of BESS output, MW (pick-up positive)")
    p.add_argument("--s-nom", type=float, help="rated power, MW")
    p.add_argument("--f0", type=float, default=60.0, help="frequency before the step, Hz")
    return ap


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.feeder:
        cfg = parse_config({"feeder": args.feeder}, Path("."))
    else:
        raise ConfigError("either --config or --feeder is required")
    return with_overrides(cfg, feeder=args.feeder, output=args.out, seed=args.seed, backend=args.backend,
                          time_limit=args.time_limit, gap=args.gap, seasons_file=args.seasons_file,
                          outage_pmf=args.outage_pmf)


def cmd_plan(args) -> int:
    cfg = resolve_config(args)
    out = run_plan(cfg, figures=not args.no_figures)
    save_plan(out.plan, Path(cfg.output) / "plan.json")
    r = out.result
    print(f"solve: {r.status} objective={r.objective:.6f} gap={r.gap:.4g} backend={r.backend} "
          f"time={r.wall_time:.1f}s")
    for s in out.plan.installed():
        print(f"BESS at bus {s.bus} (segment {s.segment}): {s.s_nom:.3f} MW / {s.e_nom:.3f} MWh")
    print(out.audit.summary())
    print(f"results in {cfg.output}")
    return EXIT_OK if out.audit.passed else EXIT_AUDIT


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    ids = [s for s in args.scenarios.split(",") if s] if args.scenarios else None
    evals = run_compare(cfg, ids)
    print(f"{'plan':<22} {'S MW':>7} {'E MWh':>7} {'restored':>10} {'net':>10}")
    for ev in evals:
        print(f"{ev.label:<22} {ev.s_total:7.3f} {ev.e_total:7.3f} {ev.expected_restored:10.4f} "
              f"{-ev.objective:10.4f}")
    print(f"comparison written to {Path(cfg.output) / 'comparison.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = resolve_config(args)
    try:
        plan = load_plan(args.plan)
    except (OSError, PlanError) as exc:
        raise ConfigError(f"plan file: {exc}") from None
    feeder = load_feeder(cfg.feeder)
    report = audit_plan(plan, feeder, cfg.params)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "audit.json").write_text(report.to_json() + "\n")
    print(report.summary())
    for v in report.violations[:20]:
        print(f"  {v.rule} {v.index} magnitude={v.magnitude:.3g}")
    return EXIT_OK if report.passed else EXIT_AUDIT


def cmd_freq_indices(args) -> int:
    if args.config or args.feeder:
        params = resolve_config(args).params
    else:
        params = BuildParams()
    if args.plan_file:
        try:
            plan = load_plan(args.plan_file)
        except (OSError, PlanError) as exc:
            raise ConfigError(f"plan file: {exc}") from None
        events = frequency_events(plan, params)
        rows = [[e["scenario"], e["mg"], e["step"], e["delta_p"], e["rocof"], e["qss"], e["nadir"]]
                for e in events]
        header = ["scenario", "mg", "step", "delta_p_mw", "rocof_hz_s", "qss_hz", "nadir_hz"]
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            write_table(Path(args.out) / "frequency_indices.csv",
                        ["Exact transient frequency indices of every BESS output step."], header, rows)
        else:
            print(",".join(header))
            for r in rows:
                print(",".join(f"{x:.6f}" if isinstance(x, float) else str(x) for x in r))
        return EXIT_OK
    if args.delta_p is None or args.s_nom is None:
        raise ConfigError("freq-indices needs --plan, or --delta-p and --s-nom")
    shape = response_shape(params.vsg)
    ind = freq_indices(params.vsg, shape, args.f0, args.delta_p, args.s_nom)
    print(json.dumps({"rocof_hz_s": ind.rocof_max, "qss_hz": ind.f_qss, "nadir_hz": ind.f_nadir,
                      "natural_frequency": shape.natural_frequency, "damping_ratio": shape.damping_ratio,
                      "nadir_time_s": shape.nadir_time, "nadir_ratio": shape.nadir_ratio}, indent=1))
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "compare": cmd_compare, "validate": cmd_validate,
            "freq-indices": cmd_freq_indices}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except BudgetError as exc:
        print(f"error [budget]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NoPlanError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if exc.result.status == "infeasible" else EXIT_FAIL
    except (ConfigError, FeederError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_CONFIG if exc.stage in ("feeder", "scenarios") else EXIT_FAIL
    except ValueError as exc:
        print(f"error [input]: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
