from pathlib import Path

import pytest

from blackstart.config import DATA_DIR
from blackstart.feeder import load_feeder
from blackstart.milp.build import build_model
from blackstart.milp.params import BuildParams
from blackstart.plan import extract_plan
from blackstart.scenarios import OutageDistribution, build_scenarios, synthesize_season_profiles
from blackstart.solver_io.backends import SolveLimits, solve

FIXTURES = Path(__file__).parent / "fixtures"
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def scenario_set(seasons=("SU",), pmf=None, horizon=4, dt=15, seed=0):
    prof = [p for p in synthesize_season_profiles(seed, horizon, dt) if p.label in seasons]
    return build_scenarios(prof, OutageDistribution.from_mapping(pmf or {60: 1.0}), horizon, dt)


@pytest.fixture(scope="session")
def toy5():
    return load_feeder(DATA_DIR / "toy5.yaml")


@pytest.fixture(scope="session")
def toy13():
    return load_feeder(DATA_DIR / "toy13.yaml")


@pytest.fixture(scope="session")
def ieee123():
    return load_feeder(DATA_DIR / "ieee123.yaml")


@pytest.fixture(scope="session")
def toy5_solved(toy5):
    """Two scenarios, four steps; solves to proven optimality in a few seconds."""
    sc = scenario_set(("SU", "W"))
    params = BuildParams()
    model = build_model(toy5, sc, params)
    res = solve(model, "highs", SolveLimits(time_limit=120, gap=1e-6))
    assert res.status == "optimal"
    plan = extract_plan(model, res.values, toy5, sc, params.clpu, objective=res.objective,
                        status=res.status, backend=res.backend)
    return {"scenarios": sc, "params": params, "model": model, "result": res, "plan": plan}
