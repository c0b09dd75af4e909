import pytest
import yaml

from blackstart.config import DATA_DIR, ConfigError, load_config, parse_config, with_overrides


def test_shipped_configs_load():
    for name in ("toy5", "toy13", "ieee123"):
        cfg = load_config(DATA_DIR / f"{name}.config.yaml")
        assert cfg.feeder.is_file()
    cfg = load_config(DATA_DIR / "ieee123.config.yaml")
    assert len(cfg.scenario_set()) == 16
    assert cfg.scenarios.horizon == 21 and cfg.scenarios.start == "08:45"


def test_defaults_carry_reference_parameters():
    cfg = parse_config({"feeder": "toy5.yaml"})
    p = cfg.params
    assert (p.vsg.inertia, p.vsg.pll_time_constant, p.vsg.damping, p.vsg.droop_gain) == (8.0, 0.05, 1.0, 89.0)
    assert (p.budgets.s_budget, p.budgets.e_budget) == (6.5, 10.0)
    assert p.ranges.nadir == (57.8, 61.8) and p.ranges.rocof == (-4.0, 4.0)
    assert (p.gamma_cl, p.gamma_nl, p.eps) == (10.0, 1.0, 0.02)


def test_sections_override(tmp_path):
    doc = {"feeder": "toy5.yaml", "vsg": {"inertia": 4.0}, "budgets": {"e_budget": 5.0},
           "ranges": {"nadir": [58.0, 61.0]}, "weights": {"gamma_cl": 20.0},
           "clpu": {"beta": [0.5, 0.2, 0.05]}, "scenarios": {"outage_pmf": "60:0.5,120:0.5", "horizon": 8}}
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(doc))
    cfg = load_config(p)
    assert cfg.params.vsg.inertia == 4.0
    assert cfg.params.budgets.e_budget == 5.0
    assert cfg.params.ranges.nadir == (58.0, 61.0)
    assert cfg.params.gamma_cl == 20.0
    assert cfg.params.clpu.beta == (0.5, 0.2, 0.05)
    assert cfg.scenarios.outage_pmf == {60: 0.5, 120: 0.5}


@pytest.mark.parametrize("doc, msg", [
    ({}, "feeder"),
    ({"feeder": "nope.yaml"}, "not found"),
    ({"feeder": "toy5.yaml", "colour": 1}, "unknown top-level"),
    ({"feeder": "toy5.yaml", "vsg": {"mass": 1}}, "unknown keys"),
    ({"feeder": "toy5.yaml", "ranges": {"nadir": [61.8, 57.8]}}, "lower < upper"),
    ({"feeder": "toy5.yaml", "ranges": {"nadir": 5}}, "lower, upper"),
    ({"feeder": "toy5.yaml", "solver": {"gap": 2}}, "gap"),
    ({"feeder": "toy5.yaml", "scenarios": {"outage_pmf": {60: 0.3}}}, "outage_pmf"),
    ({"feeder": "toy5.yaml", "scenarios": {"seasons_file": "missing.yaml"}}, "seasons file"),
])
def test_bad_configs(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(doc)


def test_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("feeder: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(p)


def test_unknown_season():
    cfg = parse_config({"feeder": "toy5.yaml", "scenarios": {"seasons": ["MONSOON"]}})
    with pytest.raises(ConfigError, match="MONSOON"):
        cfg.scenario_set()


def test_overrides_leave_original_alone():
    cfg = load_config(DATA_DIR / "toy5.config.yaml")
    new = with_overrides(cfg, backend="cbc", gap=0.1, seed=3, outage_pmf="120:1")
    assert (new.solver.backend, new.solver.gap, new.seed) == ("cbc", 0.1, 3)
    assert new.scenarios.outage_pmf == {120: 1.0}
    assert (cfg.solver.backend, cfg.seed) == ("highs", 0)
