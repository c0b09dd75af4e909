"""Feeder data model, YAML ingestion and derived set structure.

A feeder file is a single YAML document with the sections ``buses``,
``branches``, ``segments``, ``loads``, ``pv`` and ``tg``.  See
``docs/feeder_schema.md`` for the full field reference.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import networkx as nx
import yaml

PHASES = ("A", "B", "C")


class FeederError(ValueError):
    """Raised for malformed or inconsistent feeder files."""

    def __init__(self, message: str, line: int | None = None, where: str | None = None):
        self.line = line
        self.where = where
        prefix = ""
        if where:
            prefix += f"{where}: "
        if line is not None:
            prefix = f"line {line}: " + prefix
        super().__init__(prefix + message)


class PartitionError(FeederError):
    pass


class ConnectivityError(FeederError):
    pass


def _phases(value, where, line=None) -> tuple[str, ...]:
    if isinstance(value, str):
        items = list(value.replace(",", "").replace(" ", "").upper())
    elif isinstance(value, (list, tuple)):
        items = [str(v).upper() for v in value]
    else:
        raise FeederError(f"phases must be a string or list, got {value!r}", line, where)
    if not items or any(p not in PHASES for p in items) or len(set(items)) != len(items):
        raise FeederError(f"invalid phase set {value!r}", line, where)
    return tuple(p for p in PHASES if p in items)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[str, ...]
    nominal_voltage: float  # line-to-neutral, volts
    has_critical_load: bool = False
    has_noncritical_load: bool = False
    pv_rating: float = 0.0  # MW
    is_tg_interface: bool = False

    @property
    def three_phase(self) -> bool:
        return len(self.phases) == 3


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    phases: tuple[str, ...]
    kind: str  # "line" or "switch"
    r: tuple[tuple[float, ...], ...]  # ohms, |phases| x |phases|
    x: tuple[tuple[float, ...], ...]
    thermal_limit: float  # MVA
    ssw_eligible: bool = True

    @property
    def is_switch(self) -> bool:
        return self.kind == "switch"

    @property
    def ends(self) -> tuple[str, str]:
        return self.from_bus, self.to_bus


@dataclass(frozen=True)
class Segment:
    id: int
    buses: frozenset[str]
    internal_lines: frozenset[str]
    boundary_switches: frozenset[str]
    is_candidate_mg: bool = False
    is_tg: bool = False
    bess_sites: tuple[str, ...] = ()


@dataclass(frozen=True)
class Load:
    bus: str
    kind: str  # "critical" | "noncritical"
    p: tuple[tuple[str, float], ...]  # per-phase nominal MW
    power_factor_angle: float

    def p_phase(self, phase: str) -> float:
        return dict(self.p).get(phase, 0.0)


@dataclass(frozen=True)
class TgInterface:
    bus: str
    s_max: float  # MVA, three-phase


@dataclass(frozen=True)
class FeederModel:
    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    segments: tuple[Segment, ...]
    loads: tuple[Load, ...]
    tg: TgInterface | None
    sync_pairs: tuple[tuple[int, int], ...] = field(default=())
    sync_triples: tuple[tuple[tuple[int, int], tuple[int, int], tuple[int, int]], ...] = field(default=())

    # -- lookups ---------------------------------------------------------
    @property
    def bus_map(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @property
    def branch_map(self) -> dict[str, Branch]:
        return {b.id: b for b in self.branches}

    @property
    def segment_map(self) -> dict[int, Segment]:
        return {s.id: s for s in self.segments}

    @property
    def switches(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if b.is_switch)

    @property
    def lines(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if not b.is_switch)

    @property
    def grid_segments(self) -> tuple[Segment, ...]:
        """Switch-bounded bus blocks, excluding the transmission-grid section."""
        return tuple(s for s in self.segments if not s.is_tg)

    @property
    def candidate_segments(self) -> tuple[Segment, ...]:
        return tuple(s for s in self.segments if s.is_candidate_mg)

    @property
    def tg_buses(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses if b.is_tg_interface)

    def segment_of(self, bus_id: str) -> Segment:
        for seg in self.segments:
            if bus_id in seg.buses:
                return seg
        raise KeyError(bus_id)

    def switch_buses(self, seg: Segment) -> tuple[str, ...]:
        """Buses of ``seg`` that terminate one of its boundary switches."""
        bmap = self.branch_map
        out = set()
        for sw in seg.boundary_switches:
            for end in bmap[sw].ends:
                if end in seg.buses:
                    out.add(end)
        return tuple(sorted(out, key=_natural))

    def loads_of(self, kind: str) -> tuple[Load, ...]:
        return tuple(ld for ld in self.loads if ld.kind == kind)


def _natural(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def derive_sync_sets(candidates: Iterable[int]):
    """Enumerate MG pairs and the overlapping-pair family used by the merge rule.

    Returns ``(pairs, triples)`` where each triple is ``(pair_a, pair_b, leftover)``
    for two pairs sharing exactly one segment; ``leftover`` is their symmetric
    difference.  Ordered pair-of-pairs are listed once per unordered combination.
    """
    cands = sorted(set(candidates))
    pairs = tuple(itertools.combinations(cands, 2))
    triples = []
    for a, b in itertools.combinations(pairs, 2):
        shared = set(a) & set(b)
        if len(shared) == 1:
            leftover = tuple(sorted(set(a) ^ set(b)))
            triples.append((a, b, leftover))
    return pairs, tuple(triples)


# -- YAML loading with line numbers ---------------------------------------

class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _get(d: Mapping, key: str, where: str, default=...):
    if key in d:
        return d[key]
    if default is ...:
        raise FeederError(f"missing field '{key}'", d.get("__line__"), where)
    return default


def _matrix(value, n: int, where: str, line) -> tuple[tuple[float, ...], ...]:
    if value is None:
        return tuple(tuple(0.0 for _ in range(n)) for _ in range(n))
    if isinstance(value, (int, float)):
        # scalar: diagonal
        return tuple(tuple(float(value) if i == j else 0.0 for j in range(n)) for i in range(n))
    try:
        rows = tuple(tuple(float(v) for v in row) for row in value)
    except (TypeError, ValueError):
        raise FeederError("impedance must be a number or a square matrix", line, where) from None
    if len(rows) != n or any(len(r) != n for r in rows):
        raise FeederError(f"impedance matrix must be {n}x{n}", line, where)
    if any(not math.isfinite(v) for r in rows for v in r):
        raise FeederError("impedance entries must be finite", line, where)
    return rows


def load_feeder(path: str | Path) -> FeederModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_feeder(path.read_text(), source=str(path))


def parse_feeder(text: str, source: str = "<string>") -> FeederModel:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise FeederError(f"YAML parse error: {exc}", mark.line + 1 if mark else None, source) from None
    if not isinstance(doc, dict):
        raise FeederError("feeder document must be a mapping", None, source)
    return _build(doc)


def _build(doc: dict) -> FeederModel:
    name = str(doc.get("name", "feeder"))
    default_v = float(doc.get("nominal_voltage", 2401.8))

    raw_buses = _get(doc, "buses", "document")
    raw_loads = doc.get("loads") or []
    raw_pv = doc.get("pv") or []
    raw_tg = doc.get("tg")

    tg_bus = None
    tg = None
    if raw_tg is not None:
        tg_bus = str(_get(raw_tg, "bus", "tg"))
        tg = TgInterface(bus=tg_bus, s_max=float(_get(raw_tg, "s_max", "tg")))

    # loads first: they set bus flags
    loads: list[Load] = []
    for n, rl in enumerate(raw_loads):
        where = f"loads[{n}]"
        line = rl.get("__line__")
        kind = str(_get(rl, "kind", where))
        if kind not in ("critical", "noncritical"):
            raise FeederError(f"load kind must be critical|noncritical, got {kind!r}", line, where)
        p_raw = _get(rl, "p", where)
        if not isinstance(p_raw, dict):
            raise FeederError("load 'p' must map phase -> MW", line, where)
        p = []
        for ph in PHASES:
            if ph in p_raw:
                val = float(p_raw[ph])
                if val < 0:
                    raise FeederError("nominal load must be non-negative", line, where)
                p.append((ph, val))
        angle = float(rl.get("power_factor_angle", doc.get("power_factor_angle", math.acos(0.9))))
        if not 0.0 < angle < math.pi / 2:
            raise FeederError("power factor angle must lie in (0, pi/2)", line, where)
        loads.append(Load(bus=str(_get(rl, "bus", where)), kind=kind, p=tuple(p), power_factor_angle=angle))

    pv_map: dict[str, float] = {}
    for n, rp in enumerate(raw_pv):
        where = f"pv[{n}]"
        rating = float(_get(rp, "rating", where))
        if rating < 0:
            raise FeederError("pv rating must be non-negative", rp.get("__line__"), where)
        bus = str(_get(rp, "bus", where))
        pv_map[bus] = pv_map.get(bus, 0.0) + rating

    crit = {ld.bus for ld in loads if ld.kind == "critical"}
    noncrit = {ld.bus for ld in loads if ld.kind == "noncritical"}

    buses: list[Bus] = []
    seen: set[str] = set()
    for n, rb in enumerate(raw_buses):
        where = f"buses[{n}]"
        line = rb.get("__line__")
        bid = str(_get(rb, "id", where))
        if bid in seen:
            raise FeederError(f"duplicate bus id {bid!r}", line, where)
        seen.add(bid)
        phases = _phases(_get(rb, "phases", where), where, line)
        is_tg = bool(rb.get("tg", False)) or bid == tg_bus
        if is_tg and len(phases) != 3:
            raise FeederError("transmission-grid interface bus must carry all three phases", line, where)
        buses.append(Bus(
            id=bid,
            phases=phases,
            nominal_voltage=float(rb.get("nominal_voltage", default_v)),
            has_critical_load=bid in crit,
            has_noncritical_load=bid in noncrit,
            pv_rating=pv_map.get(bid, 0.0),
            is_tg_interface=is_tg,
        ))
    bmap = {b.id: b for b in buses}
    if tg_bus is not None and tg_bus not in bmap:
        raise FeederError(f"tg bus {tg_bus!r} is not a declared bus", raw_tg.get("__line__"), "tg")
    for ld in loads:
        if ld.bus not in bmap:
            raise FeederError(f"load references unknown bus {ld.bus!r}", None, "loads")
        missing = [ph for ph, _ in ld.p if ph not in bmap[ld.bus].phases]
        if missing:
            raise FeederError(f"load phases {missing} not present at bus {ld.bus}", None, "loads")
    for bus in pv_map:
        if bus not in bmap:
            raise FeederError(f"pv references unknown bus {bus!r}", None, "pv")

    branches: list[Branch] = []
    bseen: set[str] = set()
    for n, rb in enumerate(_get(doc, "branches", "document")):
        where = f"branches[{n}]"
        line = rb.get("__line__")
        f, t = str(_get(rb, "from", where)), str(_get(rb, "to", where))
        bid = str(rb.get("id", f"{f}-{t}"))
        if bid in bseen:
            raise FeederError(f"duplicate branch id {bid!r}", line, where)
        bseen.add(bid)
        for end in (f, t):
            if end not in bmap:
                raise FeederError(f"branch references unknown bus {end!r}", line, where)
        if f == t:
            raise FeederError("branch endpoints must differ", line, where)
        phases = _phases(_get(rb, "phases", where), where, line)
        common = set(bmap[f].phases) & set(bmap[t].phases)
        if not set(phases) <= common:
            raise FeederError(f"branch phases {''.join(phases)} not carried by both ends", line, where)
        kind = str(rb.get("kind", "line"))
        if kind not in ("line", "switch"):
            raise FeederError(f"branch kind must be line|switch, got {kind!r}", line, where)
        k = len(phases)
        branches.append(Branch(
            id=bid, from_bus=f, to_bus=t, phases=phases, kind=kind,
            r=_matrix(rb.get("r"), k, where, line),
            x=_matrix(rb.get("x"), k, where, line),
            thermal_limit=float(rb.get("thermal_limit", doc.get("thermal_limit", 10.0))),
            ssw_eligible=bool(rb.get("ssw_eligible", True)) if kind == "switch" else False,
        ))

    segments = _build_segments(doc, buses, branches, tg_bus)

    g = nx.MultiGraph()
    g.add_nodes_from(b.id for b in buses)
    g.add_edges_from(br.ends for br in branches)
    if not nx.is_connected(g):
        comps = nx.number_connected_components(g)
        raise ConnectivityError(f"feeder graph is disconnected ({comps} components)", None, "branches")

    pairs, triples = derive_sync_sets(s.id for s in segments if s.is_candidate_mg)
    return FeederModel(
        name=name, buses=tuple(buses), branches=tuple(branches), segments=tuple(segments),
        loads=tuple(loads), tg=tg, sync_pairs=pairs, sync_triples=triples,
    )


def _build_segments(doc, buses, branches, tg_bus) -> list[Segment]:
    bmap = {b.id: b for b in buses}
    owner: dict[str, int] = {}
    raw = _get(doc, "segments", "document")
    specs = []
    for n, rs in enumerate(raw):
        where = f"segments[{n}]"
        line = rs.get("__line__")
        sid = int(_get(rs, "id", where))
        members = [str(b) for b in _get(rs, "buses", where)]
        for b in members:
            if b not in bmap:
                raise FeederError(f"segment references unknown bus {b!r}", line, where)
            if b in owner:
                raise PartitionError(f"bus {b!r} listed in segments {owner[b]} and {sid}", line, where)
            owner[b] = sid
        specs.append((sid, members, rs, line, where))
    ids = [s[0] for s in specs]
    if len(set(ids)) != len(ids):
        raise FeederError("duplicate segment id", None, "segments")
    unassigned = [b.id for b in buses if b.id not in owner]
    if unassigned:
        raise PartitionError(f"buses not in any segment: {unassigned}", None, "segments")

    internal: dict[int, set[str]] = {sid: set() for sid in ids}
    boundary: dict[int, set[str]] = {sid: set() for sid in ids}
    for br in branches:
        sf, st = owner[br.from_bus], owner[br.to_bus]
        if br.is_switch:
            if sf == st:
                raise PartitionError(f"switch {br.id} has both ends in segment {sf}", None, "branches")
            boundary[sf].add(br.id)
            boundary[st].add(br.id)
        else:
            if sf != st:
                raise PartitionError(
                    f"line {br.id} crosses segments {sf} and {st}; segment boundaries must be switches",
                    None, "branches")
            internal[sf].add(br.id)

    segments = []
    for sid, members, rs, line, where in specs:
        is_tg = bool(rs.get("tg", False)) or (tg_bus is not None and tg_bus in members)
        cand = bool(rs.get("candidate", False))
        if is_tg and cand:
            raise FeederError("the transmission-grid section cannot be an MG candidate", line, where)
        three = [b for b in members if bmap[b].three_phase]
        if "bess_sites" in rs:
            sites = tuple(str(b) for b in rs["bess_sites"])
            for b in sites:
                if b not in members:
                    raise FeederError(f"bess site {b!r} not in segment", line, where)
                if not bmap[b].three_phase:
                    raise FeederError(f"bess site {b!r} is not a three-phase bus", line, where)
        else:
            sites = tuple(sorted(three, key=_natural)) if cand else ()
        if cand and not sites:
            raise FeederError("candidate segment has no three-phase bus for a BESS", line, where)
        segments.append(Segment(
            id=sid, buses=frozenset(members), internal_lines=frozenset(internal[sid]),
            boundary_switches=frozenset(boundary[sid]), is_candidate_mg=cand, is_tg=is_tg,
            bess_sites=sites if cand else (),
        ))
    return segments


# -- serialization -------------------------------------------------------

def feeder_to_dict(model: FeederModel) -> dict:
    out: dict = {"name": model.name}
    out["buses"] = [
        {"id": b.id, "phases": "".join(b.phases), "nominal_voltage": b.nominal_voltage,
         **({"tg": True} if b.is_tg_interface else {})}
        for b in model.buses
    ]
    branches = []
    for br in model.branches:
        d = {"id": br.id, "from": br.from_bus, "to": br.to_bus, "phases": "".join(br.phases),
             "kind": br.kind, "r": [list(r) for r in br.r], "x": [list(r) for r in br.x],
             "thermal_limit": br.thermal_limit}
        if br.is_switch:
            d["ssw_eligible"] = br.ssw_eligible
        branches.append(d)
    out["branches"] = branches
    segs = []
    for s in model.segments:
        d = {"id": s.id, "buses": sorted(s.buses, key=_natural)}
        if s.is_tg:
            d["tg"] = True
        if s.is_candidate_mg:
            d["candidate"] = True
            d["bess_sites"] = list(s.bess_sites)
        segs.append(d)
    out["segments"] = segs
    out["loads"] = [
        {"bus": ld.bus, "kind": ld.kind, "p": dict(ld.p), "power_factor_angle": ld.power_factor_angle}
        for ld in model.loads
    ]
    out["pv"] = [{"bus": b.id, "rating": b.pv_rating} for b in model.buses if b.pv_rating > 0]
    if model.tg is not None:
        out["tg"] = {"bus": model.tg.bus, "s_max": model.tg.s_max}
    return out


def dump_feeder(model: FeederModel) -> str:
    return yaml.safe_dump(feeder_to_dict(model), sort_keys=False, default_flow_style=None)
