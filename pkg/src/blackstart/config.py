"""Run configuration: one YAML file for the whole pipeline.

Relative paths inside a config file resolve against the file's directory.
Every section is optional; omitted values fall back to the library defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .clpu import ClpuCoefficients
from .milp.params import Budgets, BuildParams, SafeRanges
from .scenarios import (DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_OUTAGE_PMF, DEFAULT_START, SEASONS,
                        OutageDistribution, ScenarioSet, build_scenarios, load_season_profiles,
                        parse_outage_pmf, synthesize_season_profiles)
from .solver_io.backends import SolveLimits
from .vsg import VsgParams

DATA_DIR = Path(__file__).parent / "data"


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    seasons: tuple[str, ...] = SEASONS
    seasons_file: Path | None = None
    outage_pmf: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_OUTAGE_PMF))
    horizon: int = DEFAULT_HORIZON
    dt_minutes: int = DEFAULT_DT
    start: str = DEFAULT_START


@dataclass
class SolverConfig:
    backend: str | Mapping = "highs"
    time_limit: float = 600.0
    gap: float = 1e-4
    parallelism: int = 1

    def limits(self) -> SolveLimits:
        return SolveLimits(time_limit=self.time_limit, gap=self.gap)


@dataclass
class RunConfig:
    feeder: Path
    scenarios: ScenarioConfig = field(default_factory=ScenarioConfig)
    params: BuildParams = field(default_factory=BuildParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: Path = Path("out")
    seed: int = 0

    def scenario_set(self) -> ScenarioSet:
        sc = self.scenarios
        if sc.seasons_file is not None:
            profiles, dt, start = load_season_profiles(sc.seasons_file)
            if dt != sc.dt_minutes:
                raise ConfigError(f"{sc.seasons_file}: step {dt} min differs from configured {sc.dt_minutes} min")
        else:
            profiles = synthesize_season_profiles(self.seed, sc.horizon, sc.dt_minutes, sc.start)
            start = sc.start
        by_label = {p.label: p for p in profiles}
        missing = [s for s in sc.seasons if s not in by_label]
        if missing:
            raise ConfigError(f"seasons {missing} not available (have {sorted(by_label)})")
        chosen = [by_label[s] for s in sc.seasons]
        dist = OutageDistribution.from_mapping(dict(sc.outage_pmf))
        try:
            return build_scenarios(chosen, dist, sc.horizon, sc.dt_minutes, start)
        except ValueError as exc:
            raise ConfigError(f"scenarios: {exc}") from None


def _section(doc: Mapping, name: str) -> dict:
    val = doc.get(name) or {}
    if not isinstance(val, Mapping):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(val)


def _make(cls, raw: Mapping, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _pair(v, where):
    try:
        lo, hi = (float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected [lower, upper]") from None
    return lo, hi


def _path(base: Path, value) -> Path:
    p = Path(str(value)).expanduser()
    if not p.is_absolute():
        cand = base / p
        # bare names fall back to the shipped fixtures
        if not cand.exists() and (DATA_DIR / p).exists():
            return DATA_DIR / p
        return cand
    return p


def parse_config(doc: Mapping[str, Any], base: Path = Path(".")) -> RunConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a YAML mapping")
    known = {"feeder", "scenarios", "vsg", "clpu", "budgets", "ranges", "weights", "model",
             "solver", "output", "seed"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "feeder" not in doc:
        raise ConfigError("missing 'feeder'")
    feeder = _path(base, doc["feeder"])

    sc_raw = _section(doc, "scenarios")
    if "seasons" in sc_raw:
        sc_raw["seasons"] = tuple(str(s) for s in sc_raw["seasons"])
    if sc_raw.get("seasons_file"):
        sc_raw["seasons_file"] = _path(base, sc_raw["seasons_file"])
    if "outage_pmf" in sc_raw:
        pmf = sc_raw["outage_pmf"]
        try:
            if isinstance(pmf, Mapping):
                sc_raw["outage_pmf"] = {int(k): float(v) for k, v in pmf.items()}
                OutageDistribution.from_mapping(sc_raw["outage_pmf"])
            else:
                dist = parse_outage_pmf(str(pmf))
                sc_raw["outage_pmf"] = dict(zip(dist.durations, dist.probabilities))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenarios.outage_pmf: {exc}") from None
    scen = _make(ScenarioConfig, sc_raw, "scenarios")

    vsg = _make(VsgParams, _section(doc, "vsg"), "vsg")
    cl_raw = _section(doc, "clpu")
    if "beta" in cl_raw:
        cl_raw["beta"] = tuple(float(b) for b in cl_raw["beta"])
    clpu = _make(ClpuCoefficients, cl_raw, "clpu")
    budgets = _make(Budgets, _section(doc, "budgets"), "budgets")
    rg_raw = {k: _pair(v, f"ranges.{k}") for k, v in _section(doc, "ranges").items()}
    ranges = _make(SafeRanges, rg_raw, "ranges")

    model_raw = _section(doc, "model") | _section(doc, "weights")
    for key in ("soc_bounds",):
        if key in model_raw:
            model_raw[key] = _pair(model_raw[key], f"model.{key}")
    allowed = {f.name for f in fields(BuildParams)} - {"budgets", "ranges", "vsg", "clpu", "fixed"}
    bad = set(model_raw) - allowed
    if bad:
        raise ConfigError(f"model/weights: unknown keys {sorted(bad)}")
    params = _make(BuildParams, {"budgets": budgets, "ranges": ranges, "vsg": vsg, "clpu": clpu,
                                 **model_raw}, "model")

    solver = _make(SolverConfig, _section(doc, "solver"), "solver")
    cfg = RunConfig(feeder=feeder, scenarios=scen, params=params, solver=solver,
                    output=_path(Path("."), doc.get("output", "out")), seed=int(doc.get("seed", 0)))
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if not cfg.feeder.is_file():
        raise ConfigError(f"feeder file not found: {cfg.feeder}")
    sc = cfg.scenarios
    if sc.seasons_file is not None and not Path(sc.seasons_file).is_file():
        raise ConfigError(f"seasons file not found: {sc.seasons_file}")
    if sc.horizon < 1 or sc.dt_minutes < 1:
        raise ConfigError("horizon and dt_minutes must be positive")
    if cfg.solver.time_limit <= 0 or not 0 <= cfg.solver.gap < 1:
        raise ConfigError("solver time_limit must be positive and gap in [0, 1)")
    if cfg.solver.parallelism < 1:
        raise ConfigError("solver parallelism must be >= 1")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return parse_config(doc or {}, path.parent)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Copy of ``cfg`` with CLI-level overrides applied (``None`` leaves a value alone)."""
    out = replace(cfg)
    if kw.get("feeder") is not None:
        out.feeder = Path(kw["feeder"])
    if kw.get("output") is not None:
        out.output = Path(kw["output"])
    if kw.get("seed") is not None:
        out.seed = int(kw["seed"])
    solver = replace(cfg.solver)
    for key in ("backend", "time_limit", "gap"):
        if kw.get(key) is not None:
            setattr(solver, key, kw[key])
    out.solver = solver
    scen = replace(cfg.scenarios)
    if kw.get("seasons_file") is not None:
        scen.seasons_file = Path(kw["seasons_file"])
    if kw.get("outage_pmf") is not None:
        try:
            dist = parse_outage_pmf(kw["outage_pmf"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"--outage-pmf: {exc}") from None
        scen.outage_pmf = dict(zip(dist.durations, dist.probabilities))
    out.scenarios = scen
    validate_config(out)
    return out
