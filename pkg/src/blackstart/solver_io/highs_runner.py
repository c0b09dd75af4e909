"""Child-process entry point: solve an MPS file with HiGHS, write JSON.

    python3 -m blackstart.solver_io.highs_runner model.mps out.json --time-limit 60 --gap 1e-4
"""
from __future__ import annotations

import argparse
import json
import math
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="highs_runner")
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--time-limit", type=float, default=600.0)
    ap.add_argument("--gap", type=float, default=1e-4)
    ap.add_argument("--int-tol", type=float, default=1e-9)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", args.time_limit)
    h.setOptionValue("mip_rel_gap", args.gap)
    h.setOptionValue("mip_feasibility_tolerance", max(args.int_tol, 1e-10))
    h.setOptionValue("threads", args.threads)
    if h.readModel(args.model) == highspy.HighsStatus.kError:
        print(f"cannot read {args.model}", file=sys.stderr)
        return 2
    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    has_sol = info.primal_solution_status == 2
    limit = False
    S = highspy.HighsModelStatus
    if ms == S.kOptimal:
        status = "optimal"
    elif ms == S.kInfeasible:
        status = "infeasible"
    elif ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        status = "unbounded" if ms == S.kUnbounded else "infeasible"
    elif ms in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
        limit = True
        status = "feasible" if has_sol else "timeout"
    else:
        status = "feasible" if has_sol else "timeout"
    doc = {"status": status, "limit_reached": limit, "model_status": h.modelStatusToString(ms)}
    if status in ("optimal", "feasible"):
        names = h.getLp().col_names_
        vals = h.getSolution().col_value
        doc["values"] = dict(zip(names, vals))
        doc["objective"] = info.objective_function_value
        gap = info.mip_gap
        doc["gap"] = gap if math.isfinite(gap) else (0.0 if status == "optimal" else None)
        if doc["gap"] is None:
            del doc["gap"]
    with open(args.solution, "w") as fh:
        json.dump(doc, fh)
    return 0


if __name__ == "__main__":
    sys.exit(main())
