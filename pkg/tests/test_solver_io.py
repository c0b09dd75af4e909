import math
import sys

import pytest
from hypothesis import given, settings, strategies as st

import blackstart.solver_io.backends as be
from blackstart.milp.build import build_model
from blackstart.milp.catalog import MilpModel
from blackstart.solver_io.backends import (BackendMissing, SolveLimits, SolverError, get_backend,
                                           parse_cbc_solution, parse_json_solution, solve)
from blackstart.solver_io.mps import MpsError, parse_mps, render_mps, sanitize, write_mps

from conftest import scenario_set


def one_var():
    m = MilpModel(name="tiny")
    x = m.add_var("x", (), 0.0, 10.0)
    m.add_constr("c", "lo", (), x, ">=", 1.0)
    m.add_objective(x)
    return m


def same_model(a: MilpModel, b: MilpModel):
    assert [(v.name, v.lb, v.ub, v.integer) for v in a.variables] == \
        [(v.name, v.lb, v.ub, v.integer) for v in b.variables]
    assert [(c.name, c.sense, c.rhs, dict(c.terms)) for c in a.constraints] == \
        [(c.name, c.sense, c.rhs, dict(c.terms)) for c in b.constraints]
    assert {i: c for i, c in a.objective.items() if c} == b.objective


def test_one_variable_round_trip():
    m = one_var()
    text = render_mps(m)
    assert text.splitlines()[0] == "NAME tiny FREE"
    back = parse_mps(text)
    same_model(m, back)
    assert back.constraints[0].rhs == 1.0


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def small_models(draw):
    m = MilpModel(name="rand")
    n = draw(st.integers(1, 6))
    xs = []
    for i in range(n):
        kind = draw(st.sampled_from(["bin", "int", "cont", "free"]))
        if kind == "bin":
            xs.append(m.add_var("b", i, binary=True))
        elif kind == "int":
            lo = draw(st.integers(-5, 5))
            xs.append(m.add_var("n", i, lo, lo + draw(st.integers(0, 9)), integer=True))
        elif kind == "free":
            xs.append(m.add_var("z", i, -math.inf, math.inf))
        else:
            lo = draw(finite)
            xs.append(m.add_var("x", i, lo, lo + draw(st.floats(0, 1e3))))
    for r in range(draw(st.integers(1, 5))):
        picks = draw(st.lists(st.sampled_from(xs), min_size=1, max_size=n, unique_by=lambda v: v.index))
        expr = sum((v * draw(finite.filter(lambda c: c != 0)) for v in picks[1:]), picks[0] * 1.0)
        m.add_constr("row", draw(st.sampled_from(["a", "b"])), r, expr,
                     draw(st.sampled_from(["<=", ">=", "=="])), draw(finite))
    for v in xs:
        if draw(st.booleans()):
            m.add_objective(v, draw(finite))
    return m


@settings(max_examples=50, deadline=None)
@given(small_models())
def test_round_trip_random_models(m):
    same_model(m, parse_mps(render_mps(m)))


def test_build_is_byte_identical(toy5, tmp_path):
    sc = scenario_set(("SU", "W"), horizon=3)
    a = write_mps(build_model(toy5, sc), tmp_path / "a.mps").read_bytes()
    b = write_mps(build_model(toy5, sc), tmp_path / "b.mps").read_bytes()
    assert a == b


def test_sanitize_and_collision():
    assert sanitize("a b/c") == "a_b_c"
    assert len(sanitize("x" * 400)) == 255
    m = MilpModel()
    m.add_var("a b", ())
    m.add_var("a/b", ())
    with pytest.raises(MpsError, match="collision"):
        render_mps(m)


def test_unwritable_path(tmp_path):
    with pytest.raises(MpsError):
        write_mps(one_var(), tmp_path / "missing" / "dir" / "m.mps")


def test_ranges_section_rejected():
    text = "NAME t FREE\nROWS\n N OBJ\n L r\nCOLUMNS\n x r 1\nRANGES\n R r 1\nENDATA\n"
    with pytest.raises(MpsError, match="RANGES"):
        parse_mps(text)


@pytest.mark.parametrize("backend", ["highs", "cbc"])
def test_tiny_solve(backend):
    res = solve(one_var(), backend, SolveLimits(time_limit=30))
    assert res.status == "optimal"
    assert res.values["x"] == pytest.approx(1.0)
    assert res.objective == pytest.approx(1.0)


@pytest.mark.parametrize("backend", ["highs", "cbc"])
def test_infeasible_toy(backend):
    m = MilpModel()
    x = m.add_var("x", (), -10.0, 10.0)
    m.add_constr("c", "hi", (), x, "<=", 0.0)
    m.add_constr("c", "lo", (), x, ">=", 1.0)
    res = solve(m, backend, SolveLimits(time_limit=30))
    assert res.status == "infeasible"
    assert not res.values and not res.has_solution


def test_toy5_backends_agree(toy5):
    sc = scenario_set(horizon=3)
    model = build_model(toy5, sc)
    objs = {}
    for name in ("highs", "cbc"):
        res = solve(model, name, SolveLimits(time_limit=300, gap=1e-9))
        assert res.status == "optimal", name
        for v in model.variables:
            if v.integer:
                assert res.values[v.name] in (0.0, 1.0)
        objs[name] = res.objective
    assert objs["highs"] == pytest.approx(objs["cbc"], rel=1e-5, abs=1e-6)


def test_gap_is_recorded(toy5):
    res = solve(build_model(toy5, scenario_set(horizon=3)), "highs", SolveLimits(time_limit=60, gap=0.05))
    assert res.has_solution
    assert res.gap <= 0.05


def test_limits_validated():
    with pytest.raises(ValueError):
        SolveLimits(time_limit=0)
    with pytest.raises(ValueError):
        SolveLimits(gap=1.5)


def test_unknown_and_missing_backend():
    with pytest.raises(BackendMissing):
        get_backend("gurobi")
    spec = {"name": "ghost", "executable": "/nonexistent/solver", "args": ["{model}", "{solution}"]}
    with pytest.raises(BackendMissing):
        solve(one_var(), spec, SolveLimits(time_limit=5))


def test_descriptor_backend():
    spec = {"name": "h2", "executable": [sys.executable, "-m", "blackstart.solver_io.highs_runner"],
            "args": ["{model}", "{solution}", "--time-limit", "{time_limit}"], "format": "json"}
    assert solve(one_var(), spec, SolveLimits(time_limit=30)).status == "optimal"


def test_env_override(monkeypatch):
    monkeypatch.setenv("BLACKSTART_CBC", "/nonexistent/cbc")
    with pytest.raises(BackendMissing):
        solve(one_var(), "cbc", SolveLimits(time_limit=5))


def test_malformed_solution_files():
    with pytest.raises(SolverError):
        parse_json_solution("{not json")
    with pytest.raises(SolverError):
        parse_json_solution('{"status": "great"}')
    with pytest.raises(SolverError):
        parse_cbc_solution("")
    with pytest.raises(SolverError):
        parse_cbc_solution("Optimal - objective value 1\n 0 x\n")


def test_cbc_stopped_with_incumbent():
    status, obj, vals, _, limit = parse_cbc_solution(
        "Stopped on time - objective value 3.5\n      0 x    1    0\n")
    assert (status, obj, vals, limit) == ("feasible", 3.5, {"x": 1.0}, True)


def test_non_integral_binary_rejected(monkeypatch):
    m = MilpModel()
    m.add_var("b", (), binary=True)
    monkeypatch.setattr(be, "parse_json_solution", lambda text: ("optimal", 0.0, {"b": 0.4}, 0.0, False))
    with pytest.raises(SolverError, match="non-integral"):
        solve(m, "highs", SolveLimits(time_limit=5))
