import math
from collections import Counter
from dataclasses import replace

import pytest
import yaml

from blackstart.feeder import parse_feeder
from blackstart.milp.build import CONSTRAINT_TAGS, build_model, first_stage_names, rotated_impedance
from blackstart.milp.catalog import MilpModel, model_stats
from blackstart.milp.params import BudgetError, Budgets, BuildParams, SafeRanges
from blackstart.scenarios import OutageDistribution, SeasonProfile, build_scenarios
from blackstart.solver_io.backends import SolveLimits, solve
from blackstart.vsg import VsgParams, freq_indices, response_shape

from conftest import FIXTURES, scenario_set

FIRST_STAGE = {"y_mg", "y_bess", "s_nom", "e_nom", "s_bit", "y_ssw"}
TRANSITIONS = {"f_adj", "syn_new", "delta_syn", "ssw_closing", "u_syn", "u_syn_lo", "u_syn_hi"}


def flat_scenarios(load=1.0, pv=0.0, horizon=4, pmf=None):
    prof = SeasonProfile("X", (load,) * horizon, (pv,) * horizon)
    return build_scenarios([prof], OutageDistribution.from_mapping(pmf or {60: 1.0}), horizon, 15)


def micro_feeder(load_kind="critical", p_phase=0.05, r=0.5, pv=0.0):
    """Two three-phase buses in one candidate segment, BESS at bus 0."""
    diag = [[r if a == b else 0.0 for b in range(3)] for a in range(3)]
    zero = [[0.0] * 3 for _ in range(3)]
    doc = {
        "name": "micro", "nominal_voltage": 2401.8, "thermal_limit": 5.0,
        "buses": [{"id": "0", "phases": "ABC"}, {"id": "1", "phases": "ABC"}],
        "branches": [{"id": "L", "from": "0", "to": "1", "phases": "ABC", "kind": "line", "r": diag, "x": zero}],
        "segments": [{"id": 1, "buses": ["0", "1"], "candidate": True, "bess_sites": ["0"]}],
        "loads": [{"bus": "1", "kind": load_kind, "p": {ph: p_phase for ph in "ABC"}}],
    }
    if pv:
        doc["pv"] = [{"bus": "1", "rating": pv}]
    return parse_feeder(yaml.safe_dump(doc))


def row(model, name):
    return next(c for c in model.constraints if c.name == name)


def coef(model, con, var_name):
    idx = next(v.index for v in model.variables if v.name == var_name)
    return dict(con.terms).get(idx, 0.0)


# -- first stage ---------------------------------------------------------------

def test_fleet_rows_present(toy13):
    m = build_model(toy13, scenario_set(horizon=2))
    names = {c.name for c in m.constraints if c.tag == "fleet"}
    assert names == {"fleet.at_least_one", "fleet.power_budget", "fleet.energy_budget"}
    # SSW count equals installed count minus one
    con = row(m, "ssw_count.eq")
    assert con.sense == "==" and con.rhs == -1.0


def test_single_candidate_forces_install():
    f = micro_feeder()
    m = build_model(f, flat_scenarios(horizon=2))
    res = solve(m, "highs", SolveLimits(time_limit=60, gap=1e-6))
    assert res.status == "optimal"
    assert res.values["y_mg[1]"] == 1.0
    assert not any(v.family == "y_ssw" for v in m.variables)
    assert res.values["s_nom[0]"] >= 0.1 - 1e-9
    assert res.values["e_nom[0]"] >= 1.0 - 1e-9


def test_budget_below_unit_minimum_is_rejected(toy5):
    with pytest.raises(BudgetError, match="fleet budget rule"):
        build_model(toy5, scenario_set(horizon=2), BuildParams(budgets=Budgets(e_budget=0.0)))


def test_size_bits_cover_the_range():
    p = BuildParams()
    assert p.size_step * (2 ** p.size_bits - 1) >= p.budgets.s_max
    assert p.polygon_error() == pytest.approx(1 - math.cos(math.pi / 8))


# -- counts ----------------------------------------------------------------------

def test_toy5_counts_match_hand_table(toy5):
    want = yaml.safe_load((FIXTURES / "toy5_counts.yaml").read_text())
    st = model_stats(build_model(toy5, scenario_set(horizon=2)))
    assert st.n_vars == want["n_vars"]
    assert st.n_binary == want["n_binary"]
    assert st.n_constraints == want["n_constraints"]
    assert st.by_family == dict(sorted(want["variables"].items()))
    assert st.by_tag == dict(sorted(want["constraints"].items()))


def test_counts_linear_in_steps(toy5):
    stats = {T: model_stats(build_model(toy5, scenario_set(horizon=T))) for T in (2, 4, 8)}
    for fam, n2 in stats[2].by_family.items():
        n4, n8 = stats[4].by_family[fam], stats[8].by_family[fam]
        if fam in FIRST_STAGE:
            assert n2 == n4 == n8
        elif fam in TRANSITIONS:
            # one per transition, so T - 1 of them
            assert (n4, n8) == (3 * n2, 7 * n2)
        else:
            # indexed by step: doubling steps doubles the count
            assert (n4, n8) == (2 * n2, 4 * n2)
    for tag in stats[2].by_tag:
        a, b, c = (stats[T].by_tag[tag] for T in (2, 4, 8))
        assert c - b == 2 * (b - a)


def test_counts_scale_with_scenarios(toy5):
    one = model_stats(build_model(toy5, scenario_set(horizon=2)))
    pmf = {60: 0.25, 120: 0.25, 180: 0.25, 240: 0.25}
    many = build_model(toy5, scenario_set(("SP", "SU", "AU", "W"), pmf=pmf, horizon=2))
    sixteen = model_stats(many)
    for fam, n in one.by_family.items():
        assert sixteen.by_family[fam] == (n if fam in FIRST_STAGE else 16 * n)
    first = {"fleet", "bess_sizing", "bess_per_mg", "ssw_count"}
    for tag, n in one.by_tag.items():
        assert sixteen.by_tag[tag] == (n if tag in first else 16 * n)


def test_scenarios_are_separable(toy5):
    sc = scenario_set(("SU", "W"), horizon=3)
    m = build_model(toy5, sc)
    ids = {s.id for s in sc}
    owner = {v.index: next((k for k in v.key if k in ids), None) for v in m.variables}
    for con in m.constraints:
        seen = {owner[i] for i, _ in con.terms} - {None}
        assert len(seen) <= 1, con.name


def test_every_row_is_tagged(toy13, ieee123):
    small = build_model(toy13, scenario_set(horizon=3, pmf={60: 0.5, 120: 0.5}))
    assert {c.tag for c in small.constraints} == CONSTRAINT_TAGS - {"sync_merge"}  # two MGs never triple up
    # four candidates give merge triples, so every tag shows up
    big = build_model(ieee123, scenario_set(horizon=2))
    assert {c.tag for c in big.constraints} == CONSTRAINT_TAGS


def test_first_stage_names(toy5):
    m = build_model(toy5, scenario_set(horizon=2))
    names = first_stage_names(m)
    assert len(names) == 29
    assert {n.split("[")[0] for n in names} == FIRST_STAGE


# -- micro-models ---------------------------------------------------------------

def test_ssw_closing_frequency_window(toy5):
    params = BuildParams()
    m = build_model(toy5, scenario_set(horizon=2), params)
    rows = [row(m, f"ssw_action.freq_{s}[S1,SU-60,1]") for s in ("hi", "lo")]
    base = {v.index: 0.0 for v in m.variables}
    base[m.var("u_ssw", "S1", "SU-60", 1).index] = 1.0
    fi, fj = m.var("f_seg", 1, "SU-60", 1).index, m.var("f_seg", 2, "SU-60", 1).index

    def worst(diff):
        x = dict(base)
        x[fi], x[fj] = 60.0 + diff, 60.0
        return max(c.violation(x) for c in rows)
    eps = params.eps
    assert worst(eps / 2) <= 1e-12 and worst(-eps / 2) <= 1e-12
    assert worst(2 * eps) > 0 and worst(-2 * eps) > 0
    # an open switch leaves the ends unrelated
    base[m.var("u_ssw", "S1", "SU-60", 1).index] = 0.0
    assert worst(1.0) <= 1e-12


def _nadir_micro(security: bool):
    vsg = VsgParams(droop_gain=20.0)
    shape = response_shape(vsg)
    s_nom = 1.0
    # a pick-up that would drive the nadir to 57.7 Hz
    dp = 2.3 / (60.0 / vsg.stiffness * (1 + shape.nadir_ratio)) * s_nom
    assert freq_indices(vsg, shape, 60.0, dp, s_nom).f_nadir == pytest.approx(57.7)
    f = micro_feeder("noncritical", p_phase=dp / 1.6 / 3, r=0.01)
    params = BuildParams(
        vsg=vsg, frequency_security=security,
        budgets=Budgets(s_budget=s_nom, s_min=s_nom, s_max=s_nom, e_min=2.0),
        ranges=SafeRanges(frequency=(57.0, 63.0), qss=(57.0, 63.0)))
    m = build_model(f, flat_scenarios(horizon=4), params)
    res = solve(m, "highs", SolveLimits(time_limit=60, gap=1e-6))
    return m, res


def test_oversized_pickup_is_deferred():
    m, res = _nadir_micro(True)
    assert res.status == "optimal"
    assert all(res.values[f"z_nl[1,X-60,{t}]"] == 0.0 for t in range(4))
    m2, res2 = _nadir_micro(False)
    assert res2.status == "optimal"
    assert any(res2.values[f"z_nl[1,X-60,{t}]"] == 1.0 for t in range(4))
    # dropping the frequency rows only relaxes the model
    assert res2.objective < res.objective


def test_relaxation_is_monotone(toy5):
    sc = scenario_set(horizon=3)
    objs = {}
    for sec in (True, False):
        m = build_model(toy5, sc, BuildParams(frequency_security=sec))
        res = solve(m, "highs", SolveLimits(time_limit=60, gap=1e-6))
        assert res.status == "optimal"
        objs[sec] = res.objective
    assert objs[False] <= objs[True] + 1e-6


def test_two_bus_voltage_drop():
    f = micro_feeder("critical", p_phase=0.05, r=0.5)
    m = build_model(f, flat_scenarios(horizon=2))
    res = solve(m, "highs", SolveLimits(time_limit=60, gap=1e-6))
    assert res.status == "optimal"
    vb2 = 2.4018 ** 2
    for t in range(2):
        mult = 1.6 if t == 0 else 1.3
        for ph in "ABC":
            p = res.values[f"p_flow[L,{ph},X-60,{t}]"]
            assert p == pytest.approx(0.05 * mult, abs=1e-7)
            drop = res.values[f"v_sq[0,{ph},X-60,{t}]"] - res.values[f"v_sq[1,{ph},X-60,{t}]"]
            assert drop == pytest.approx(2 * 0.5 * p / vb2, abs=1e-7)


def test_rotated_impedance_single_phase(toy5):
    br = next(b for b in toy5.lines if b.id == "L3-4")
    r, x = rotated_impedance(br)
    assert r[0, 0] == pytest.approx(0.13292) and x[0, 0] == pytest.approx(0.13475)


def test_pv_injection_coefficients():
    f = micro_feeder("noncritical", pv=0.3)
    m = build_model(f, flat_scenarios(pv=0.5, horizon=2))
    for ph in "ABC":
        u = "u_sg[1,X-60,0]"
        assert coef(m, row(m, f"balance.p[1,{ph},X-60,0]"), u) == pytest.approx(0.05)
        assert coef(m, row(m, f"balance.q[1,{ph},X-60,0]"), u) == pytest.approx(0.0176)


def test_soc_arithmetic(toy5_solved):
    v = toy5_solved["result"].values
    dt = 0.25
    for o in ("SU-60", "W-60"):
        for site in ("1", "3"):
            prev = 0.9 * v[f"e_nom[{site}]"]
            for t in range(4):
                out = sum(v[f"p_bess[{site},{ph},{o},{t}]"] for ph in "ABC")
                e = v[f"energy[{site},{o},{t}]"]
                assert e == pytest.approx(prev - out * dt, abs=1e-6)
                assert 0.1 * v[f"e_nom[{site}]"] - 1e-6 <= e <= 0.9 * v[f"e_nom[{site}]"] + 1e-6
                prev = e


def test_tg_unavailable_during_outage(toy13):
    sc = scenario_set(horizon=12, pmf={120: 1.0})
    m = build_model(toy13, sc)
    rhs = [row(m, f"tg.available[SU-120,{t}]").rhs for t in range(12)]
    assert rhs == [0.0] * 8 + [1.0] * 4


def test_fixing_first_stage(toy5, toy5_solved):
    plan = toy5_solved["plan"]
    fixed = {n: toy5_solved["result"].values[n] for n in first_stage_names(toy5_solved["model"])}
    params = replace(toy5_solved["params"], fixed=fixed)
    m = build_model(toy5, toy5_solved["scenarios"], params)
    res = solve(m, "highs", SolveLimits(time_limit=60, gap=1e-6))
    assert res.objective == pytest.approx(plan.objective, abs=1e-5)


def test_empty_candidates_rejected(toy5):
    doc = yaml.safe_load(open(FIXTURES.parent.parent / "src/blackstart/data/toy5.yaml"))
    for seg in doc["segments"]:
        seg["candidate"] = False
        seg.pop("bess_sites", None)
    f = parse_feeder(yaml.safe_dump(doc))
    with pytest.raises(ValueError, match="candidate"):
        build_model(f, scenario_set(horizon=2))


def test_duplicate_names_rejected():
    m = MilpModel()
    m.add_var("x", 1)
    with pytest.raises(ValueError):
        m.add_var("x", 1)
    assert Counter(v.family for v in m.variables) == {"x": 1}
