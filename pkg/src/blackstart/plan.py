"""Solved restoration plan: siting, SSW placement and per-scenario trajectories.

A plan is self-contained.  Each scenario carries its load and PV shapes and
its transmission-grid availability, so an audit needs only the plan and the
feeder it was built for.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .clpu import ClpuCoefficients, staircase
from .feeder import FeederModel
from .milp.catalog import MilpModel
from .scenarios import ScenarioSet

PLAN_FORMAT = 1


class PlanError(ValueError):
    pass


@dataclass
class Siting:
    bus: str
    segment: int
    installed: bool
    s_nom: float  # MW
    e_nom: float  # MWh


@dataclass
class ScenarioTrajectory:
    id: str
    season: str
    outage_minutes: int
    probability: float
    load_shape: list[float]
    pv_shape: list[float]
    tg_available: list[int]
    segment: dict[str, list[int]] = field(default_factory=dict)   # segment id -> status
    tg: list[int] = field(default_factory=list)
    esw: dict[str, list[int]] = field(default_factory=dict)
    ssw: dict[str, list[int]] = field(default_factory=dict)
    z_nl: dict[str, list[int]] = field(default_factory=dict)      # bus -> pick-up flag
    p_flow: dict[str, dict[str, list[float]]] = field(default_factory=dict)  # branch -> phase -> MW
    q_flow: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    v_sq: dict[str, dict[str, list[float]]] = field(default_factory=dict)    # bus -> phase -> pu^2
    p_bess: dict[str, dict[str, list[float]]] = field(default_factory=dict)  # site -> phase -> MW
    q_bess: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    energy: dict[str, list[float]] = field(default_factory=dict)  # site -> MWh
    dv_inc: dict[str, list[float]] = field(default_factory=dict)
    p_tg: dict[str, list[float]] = field(default_factory=dict)
    q_tg: dict[str, list[float]] = field(default_factory=dict)
    f_mg: dict[str, list[float]] = field(default_factory=dict)    # candidate segment -> Hz
    restored_cl: dict[str, list[float]] = field(default_factory=dict)  # bus -> MW (all phases)
    restored_nl: dict[str, list[float]] = field(default_factory=dict)

    def bus_status(self, feeder: FeederModel, bus: str) -> list[int]:
        seg = feeder.segment_of(bus)
        return self.tg if seg.is_tg else self.segment[str(seg.id)]


@dataclass
class RestorationPlan:
    feeder: str
    horizon: int
    dt_minutes: int
    start: str
    siting: list[Siting]
    ssw_placement: dict[str, bool]
    scenarios: list[ScenarioTrajectory]
    objective: float | None = None
    status: str = ""
    gap: float | None = None
    backend: str = ""

    def installed(self) -> list[Siting]:
        return [s for s in self.siting if s.installed]

    def scenario(self, sid: str) -> ScenarioTrajectory:
        for sc in self.scenarios:
            if sc.id == sid:
                return sc
        raise KeyError(sid)

    @property
    def dt_hours(self) -> float:
        return self.dt_minutes / 60.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format"] = PLAN_FORMAT
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RestorationPlan":
        try:
            if doc.get("format", PLAN_FORMAT) != PLAN_FORMAT:
                raise PlanError(f"unsupported plan format {doc.get('format')!r}")
            siting = [Siting(bus=str(s["bus"]), segment=int(s["segment"]), installed=bool(s["installed"]),
                             s_nom=float(s["s_nom"]), e_nom=float(s["e_nom"])) for s in doc["siting"]]
            scs = []
            fields = ScenarioTrajectory.__dataclass_fields__
            for raw in doc["scenarios"]:
                unknown = set(raw) - set(fields)
                if unknown:
                    raise PlanError(f"scenario {raw.get('id')!r}: unknown fields {sorted(unknown)}")
                scs.append(ScenarioTrajectory(**raw))
            plan = cls(feeder=str(doc["feeder"]), horizon=int(doc["horizon"]),
                       dt_minutes=int(doc["dt_minutes"]), start=str(doc.get("start", "00:00")),
                       siting=siting, ssw_placement={str(k): bool(v) for k, v in doc["ssw_placement"].items()},
                       scenarios=scs, objective=doc.get("objective"), status=str(doc.get("status", "")),
                       gap=doc.get("gap"), backend=str(doc.get("backend", "")))
        except PlanError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"malformed plan: {exc!r}") from None
        plan.check_shape()
        return plan

    def check_shape(self) -> None:
        """Trajectory lengths match the horizon and binaries are 0/1."""
        T = self.horizon
        for sc in self.scenarios:
            binaries = [("tg", sc.tg), ("tg_available", sc.tg_available)]
            binaries += [(f"segment {k}", v) for k, v in sc.segment.items()]
            binaries += [(f"esw {k}", v) for k, v in sc.esw.items()]
            binaries += [(f"ssw {k}", v) for k, v in sc.ssw.items()]
            binaries += [(f"z_nl {k}", v) for k, v in sc.z_nl.items()]
            for name, seq in binaries:
                if len(seq) != T:
                    raise PlanError(f"scenario {sc.id}: {name} has {len(seq)} steps, horizon is {T}")
                if any(x not in (0, 1) for x in seq):
                    raise PlanError(f"scenario {sc.id}: {name} is not binary")
            for name in ("load_shape", "pv_shape"):
                if len(getattr(sc, name)) != T:
                    raise PlanError(f"scenario {sc.id}: {name} length differs from horizon {T}")
            for fam in ("p_flow", "q_flow", "v_sq", "p_bess", "q_bess"):
                for k, per in getattr(sc, fam).items():
                    for ph, seq in per.items():
                        if len(seq) != T:
                            raise PlanError(f"scenario {sc.id}: {fam} {k}/{ph} length {len(seq)} != {T}")


def save_plan(plan: RestorationPlan, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(plan.to_dict(), indent=1, sort_keys=True) + "\n")
    return path


def load_plan(path: str | Path) -> RestorationPlan:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise PlanError(f"{path}: top level must be an object")
    return RestorationPlan.from_dict(doc)


def _bit(x: float) -> int:
    return int(round(x))


def extract_plan(model: MilpModel, values: Mapping[str, float], feeder: FeederModel,
                 scenarios: ScenarioSet, clpu: ClpuCoefficients | None = None, **meta) -> RestorationPlan:
    """Read a :class:`RestorationPlan` out of solved variable values."""
    clpu = clpu or ClpuCoefficients()
    T = scenarios.horizon

    def val(family, *key) -> float:
        return float(values.get(model.var(family, *key).name, 0.0))

    siting = []
    for seg in feeder.candidate_segments:
        for site in seg.bess_sites:
            on = _bit(val("y_bess", site))
            siting.append(Siting(site, seg.id, bool(on), val("s_nom", site) if on else 0.0,
                                 val("e_nom", site) if on else 0.0))
    placement = {sw.id: bool(_bit(val("y_ssw", sw.id))) for sw in feeder.switches if sw.ssw_eligible}
    tg_seg = next((s for s in feeder.segments if s.is_tg), None)
    sites = [s.bus for s in siting]

    out = []
    for sc in scenarios:
        o = sc.id
        steps = range(T)
        tr = ScenarioTrajectory(
            id=o, season=sc.season.label, outage_minutes=sc.outage_minutes, probability=sc.probability,
            load_shape=[float(x) for x in sc.season.load_shape[:T]],
            pv_shape=[float(x) for x in sc.season.pv_shape[:T]],
            tg_available=[int(x) for x in sc.tg_available[:T]])
        for seg in feeder.grid_segments:
            tr.segment[str(seg.id)] = [_bit(val("u_sg", seg.id, o, t)) for t in steps]
        tr.tg = [_bit(val("u_tg", o, t)) for t in steps] if tg_seg is not None else [0] * T
        for sw in feeder.switches:
            tr.esw[sw.id] = [_bit(val("u_esw", sw.id, o, t)) for t in steps]
            if sw.ssw_eligible:
                tr.ssw[sw.id] = [_bit(val("u_ssw", sw.id, o, t)) for t in steps]
        for ld in feeder.loads_of("noncritical"):
            tr.z_nl[ld.bus] = [_bit(val("z_nl", ld.bus, o, t)) for t in steps]
        for br in feeder.branches:
            tr.p_flow[br.id] = {ph: [val("p_flow", br.id, ph, o, t) for t in steps] for ph in br.phases}
            tr.q_flow[br.id] = {ph: [val("q_flow", br.id, ph, o, t) for t in steps] for ph in br.phases}
        for bus in feeder.buses:
            tr.v_sq[bus.id] = {ph: [val("v_sq", bus.id, ph, o, t) for t in steps] for ph in bus.phases}
        for site in sites:
            tr.p_bess[site] = {ph: [val("p_bess", site, ph, o, t) for t in steps] for ph in "ABC"}
            tr.q_bess[site] = {ph: [val("q_bess", site, ph, o, t) for t in steps] for ph in "ABC"}
            tr.energy[site] = [val("energy", site, o, t) for t in steps]
            tr.dv_inc[site] = [val("dv_inc", site, o, t) for t in steps]
        if tg_seg is not None:
            tr.p_tg = {ph: [val("p_tg", ph, o, t) for t in steps] for ph in "ABC"}
            tr.q_tg = {ph: [val("q_tg", ph, o, t) for t in steps] for ph in "ABC"}
        for seg in feeder.candidate_segments:
            tr.f_mg[str(seg.id)] = [val("f_mg", seg.id, o, t) for t in steps]
        for ld in feeder.loads:
            if ld.kind == "critical":
                hist = tr.bus_status(feeder, ld.bus)
                store = tr.restored_cl
            else:
                hist = tr.z_nl[ld.bus]
                store = tr.restored_nl
            mult = staircase(hist, clpu)
            p_nom = sum(p for _, p in ld.p)
            prev = store.get(ld.bus, [0.0] * T)
            store[ld.bus] = [prev[t] + mult[t] * p_nom * tr.load_shape[t] for t in steps]
        out.append(tr)
    return RestorationPlan(feeder=feeder.name, horizon=T, dt_minutes=scenarios.dt_minutes,
                           start=scenarios.start, siting=siting, ssw_placement=placement,
                           scenarios=out, **meta)
