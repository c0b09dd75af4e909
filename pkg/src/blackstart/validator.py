"""Independent audit of a solved restoration plan.

Nothing here touches the model builder.  Topology is checked with a
union-find walk over the energized graph, frequency with the closed-form
indices and the RK4 step response, and power flow by recomputing every
balance and voltage drop from the raw feeder data.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .clpu import staircase
from .feeder import FeederModel
from .milp.params import BuildParams
from .plan import RestorationPlan, ScenarioTrajectory
from .vsg import freq_indices, response_shape, step_response_oracle

TOL = 1e-6          # MW, pu^2, Hz
LIN_TOL = 0.02      # exact-vs-linearized frequency tolerance (relative)
ORACLE_STEPS = 3    # largest disturbances replayed through the ODE per scenario


@dataclass(frozen=True)
class Violation:
    rule: str
    index: tuple
    magnitude: float

    def __str__(self):
        idx = ",".join(str(i) for i in self.index)
        return f"{self.rule}[{idx}] {self.magnitude:.3g}"


@dataclass
class AuditReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)
    checks: Counter = field(default_factory=Counter)

    @property
    def passed(self) -> bool:
        return not self.violations

    def counts(self) -> dict[str, int]:
        return dict(sorted(Counter(v.rule for v in self.violations).items()))

    def merge(self, other: "AuditReport") -> "AuditReport":
        self.violations += other.violations
        self.warnings += other.warnings
        self.checks.update(other.checks)
        return self

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violation_counts": self.counts(),
            "checks": dict(sorted(self.checks.items())),
            "violations": [{"rule": v.rule, "index": list(v.index), "magnitude": v.magnitude}
                           for v in self.violations],
            "warnings": [{"rule": v.rule, "index": list(v.index), "magnitude": v.magnitude}
                         for v in self.warnings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=str)

    def summary(self) -> str:
        head = "PASS" if self.passed else "FAIL"
        lines = [f"audit {head}: {sum(self.checks.values())} checks, {len(self.violations)} violations, "
                 f"{len(self.warnings)} warnings"]
        for rule, n in self.counts().items():
            first = next(v for v in self.violations if v.rule == rule)
            lines.append(f"  {rule}: {n} (first {first})")
        return "\n".join(lines)


class _Audit:
    def __init__(self, report: AuditReport):
        self.r = report

    def check(self, rule: str, ok: bool, index: tuple, magnitude: float) -> bool:
        self.r.checks[rule] += 1
        if not ok:
            self.r.violations.append(Violation(rule, index, float(magnitude)))
        return ok

    def excess(self, rule: str, amount: float, index: tuple, tol: float = TOL) -> bool:
        """Flag ``amount`` if it is positive beyond ``tol``."""
        return self.check(rule, amount <= tol, index, amount)

    def warn(self, rule: str, index: tuple, magnitude: float) -> None:
        self.r.warnings.append(Violation(rule, index, float(magnitude)))


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _at(seq, t, default=0):
    return seq[t] if t >= 0 else default


# -- topology ---------------------------------------------------------------

def _mg_segments(plan: RestorationPlan) -> dict[int, float]:
    """Installed candidate segment -> total rated power."""
    out: dict[int, float] = {}
    for s in plan.installed():
        out[s.segment] = out.get(s.segment, 0.0) + s.s_nom
    return out


def audit_allocation(plan: RestorationPlan, feeder: FeederModel, params: BuildParams) -> AuditReport:
    rep = AuditReport()
    a = _Audit(rep)
    b = params.budgets
    inst = plan.installed()
    a.check("fleet_min", len(inst) >= 1, (), 1 - len(inst))
    a.excess("fleet_power", sum(s.s_nom for s in inst) - b.s_budget, ())
    a.excess("fleet_energy", sum(s.e_nom for s in inst) - b.e_budget, ())
    segs = feeder.segment_map
    for s in plan.siting:
        seg = segs.get(s.segment)
        ok = seg is not None and seg.is_candidate_mg and s.bus in seg.bess_sites
        a.check("site_allowed", ok or not s.installed, (s.bus,), 1.0)
        if s.installed:
            a.excess("unit_power", max(b.s_min - s.s_nom, s.s_nom - b.s_max), (s.bus,))
            a.excess("unit_energy", max(b.e_min - s.e_nom, s.e_nom - b.e_max), (s.bus,))
        else:
            a.excess("unit_idle", max(abs(s.s_nom), abs(s.e_nom)), (s.bus,))
    per_seg = Counter(s.segment for s in inst)
    for k, n in per_seg.items():
        a.check("one_per_mg", n <= 1, (k,), n - 1)
    eligible = {sw.id for sw in feeder.switches if sw.ssw_eligible}
    placed = [k for k, v in plan.ssw_placement.items() if v]
    for k in placed:
        a.check("ssw_eligible", k in eligible, (k,), 1.0)
    a.check("ssw_count", len(placed) == len(inst) - 1, (), len(placed) - (len(inst) - 1))
    return rep


def _islands(feeder: FeederModel, tr: ScenarioTrajectory, t: int, a: _Audit | None, o: str):
    """Union-find over live buses and closed branches at step ``t``.

    Returns (union-find, live set, number of cycle-closing edges).
    """
    live = {bus.id for bus in feeder.buses if _at(tr.bus_status(feeder, bus.id), t)}
    uf = _UnionFind(live)
    cycles = 0
    for br in feeder.branches:
        if br.is_switch:
            closed = tr.esw[br.id][t] or (br.id in tr.ssw and tr.ssw[br.id][t])
        else:
            closed = br.from_bus in live  # internal line follows its segment
        if not closed:
            continue
        i, j = br.ends
        if a is not None:
            dead = (i not in live) + (j not in live)
            a.check("closed_branch_live", dead == 0, (br.id, o, t), dead)
        if i in live and j in live and not uf.union(i, j):
            cycles += 1
    return uf, live, cycles


def audit_topology(plan: RestorationPlan, feeder: FeederModel, params: BuildParams | None = None
                   ) -> AuditReport:
    params = params or BuildParams()
    rep = audit_allocation(plan, feeder, params)
    a = _Audit(rep)
    mg = _mg_segments(plan)
    placed = {k for k, v in plan.ssw_placement.items() if v}
    tg_seg = next((s for s in feeder.segments if s.is_tg), None)
    T = plan.horizon
    for tr in plan.scenarios:
        o = tr.id
        for t in range(T):
            for seg in feeder.grid_segments:
                st = tr.segment[str(seg.id)]
                a.check("segment_latch", _at(st, t - 1) <= st[t], (seg.id, o, t), 1.0)
                if seg.id in mg:
                    a.check("mg_live", st[t] == 1, (seg.id, o, t), 1.0)
            if tg_seg is not None:
                a.check("tg_latch", _at(tr.tg, t - 1) <= tr.tg[t], (o, t), 1.0)
                a.check("tg_available", tr.tg[t] <= tr.tg_available[t], (o, t), 1.0)
            for sw in feeder.switches:
                i, j = sw.ends
                bi = tr.bus_status(feeder, i)
                bj = tr.bus_status(feeder, j)
                ue = tr.esw[sw.id]
                a.check("esw_latch", _at(ue, t - 1) <= ue[t], (sw.id, o, t), 1.0)
                if ue[t]:
                    a.check("esw_blocked", sw.id not in placed, (sw.id, o, t), 1.0)
                    a.check("esw_one_end", _at(bi, t - 1) + _at(bj, t - 1) >= 1, (sw.id, o, t), 1.0)
                    if not _at(ue, t - 1):
                        a.check("esw_live_join", _at(bi, t - 1) + _at(bj, t - 1) <= 1, (sw.id, o, t), 1.0)
                us = tr.ssw.get(sw.id)
                if us is None:
                    continue
                a.check("ssw_latch", _at(us, t - 1) <= us[t], (sw.id, o, t), 1.0)
                if us[t]:
                    a.check("ssw_placed", sw.id in placed, (sw.id, o, t), 1.0)
                    a.check("ssw_both_live", _at(bi, t - 1) + _at(bj, t - 1) == 2, (sw.id, o, t), 1.0)
            # energization of grid segments through their boundary switches
            for seg in feeder.grid_segments:
                st = tr.segment[str(seg.id)]
                if _at(st, t - 1) or not st[t] or seg.id in mg:
                    continue
                n_esw = sum(tr.esw[s][t] for s in seg.boundary_switches)
                a.check("one_esw", n_esw == 1, (seg.id, o, t), n_esw - 1)
            # radiality from first principles
            uf, live, cycles = _islands(feeder, tr, t, a, o)
            a.check("radiality_cycle", cycles == 0, (o, t), cycles)
            sources: Counter = Counter()
            for k in mg:
                bus = next(iter(feeder.segment_map[k].buses))
                if bus in live:
                    sources[uf.find(bus)] += 1
            if tg_seg is not None and tr.tg[t]:
                sources[uf.find(feeder.tg.bus)] += 1
            ssw_closed: Counter = Counter()
            for sw_id, us in tr.ssw.items():
                if us[t]:
                    i = feeder.branch_map[sw_id].from_bus
                    if i in live:
                        ssw_closed[uf.find(i)] += 1
            roots = {uf.find(b) for b in live}
            for root in roots:
                net = sources[root] - ssw_closed[root]
                a.check("island_source", net == 1, (root, o, t), net - 1)
            expected = len(mg) + (tr.tg[t] if tg_seg is not None else 0) - sum(
                us[t] for us in tr.ssw.values())
            a.check("root_count", len(roots) == expected, (o, t), len(roots) - expected)
    return rep


# -- frequency ---------------------------------------------------------------

def _mg_power(plan: RestorationPlan, tr: ScenarioTrajectory, k: int) -> list[float]:
    T = plan.horizon
    out = [0.0] * T
    for s in plan.installed():
        if s.segment != k:
            continue
        for ph, seq in tr.p_bess.get(s.bus, {}).items():
            for t in range(T):
                out[t] += seq[t]
    return out


def _sync_steps(plan: RestorationPlan, feeder: FeederModel, tr: ScenarioTrajectory) -> dict[int, set[int]]:
    """Steps at which an SSW closes, mapped to the MG segments it touches at that step."""
    out: dict[int, set[int]] = {}
    mg = _mg_segments(plan)
    for t in range(1, plan.horizon):
        closing = [sw for sw, us in tr.ssw.items() if us[t] and not us[t - 1]]
        if not closing:
            continue
        uf, live, _ = _islands(feeder, tr, t, None, tr.id)
        roots = {uf.find(feeder.branch_map[sw].from_bus) for sw in closing
                 if feeder.branch_map[sw].from_bus in live}
        hit = set()
        for k in mg:
            bus = next(iter(feeder.segment_map[k].buses))
            if bus in live and uf.find(bus) in roots:
                hit.add(k)
        out[t] = hit
    return out


def _island_frequency(plan, feeder, tr, t_members, t_freq, bus, uf, live, fb) -> float | None:
    if bus not in live:
        return None
    root = uf.find(bus)
    freqs = []
    if feeder.tg is not None and tr.tg[t_members] and uf.find(feeder.tg.bus) == root:
        freqs.append(fb)
    for k in _mg_segments(plan):
        b = next(iter(feeder.segment_map[k].buses))
        if b in live and uf.find(b) == root:
            freqs.append(tr.f_mg[str(k)][t_freq])
    return sum(freqs) / len(freqs) if freqs else None


def audit_frequency(plan: RestorationPlan, feeder: FeederModel, params: BuildParams | None = None
                    ) -> AuditReport:
    params = params or BuildParams()
    rep = AuditReport()
    a = _Audit(rep)
    vsg = params.vsg
    shape = response_shape(vsg)
    rng = params.ranges
    fb = vsg.base_frequency
    mg = _mg_segments(plan)
    T = plan.horizon
    for tr in plan.scenarios:
        o = tr.id
        syncs = _sync_steps(plan, feeder, tr)
        steps = []  # (|dp|, k, t, dp, s, f_prev)
        for k, s_nom in mg.items():
            p = _mg_power(plan, tr, k)
            f = tr.f_mg[str(k)]
            for t in range(T):
                idx = (k, o, t)
                dp = p[t] - _at(p, t - 1, 0.0)
                f_prev = f[t - 1] if t > 0 else fb
                ind = freq_indices(vsg, shape, f_prev, dp, s_nom)
                a.excess("rocof", max(rng.rocof[0] - ind.rocof_max, ind.rocof_max - rng.rocof[1]), idx)
                a.excess("qss", max(rng.qss[0] - ind.f_qss, ind.f_qss - rng.qss[1]), idx)
                a.excess("nadir", max(rng.nadir[0] - ind.f_nadir, ind.f_nadir - rng.nadir[1]), idx)
                a.excess("frequency", max(rng.frequency[0] - f[t], f[t] - rng.frequency[1]), idx)
                if t == 0:
                    a.excess("freq_start", abs(f[0] - fb), idx)
                elif k not in syncs.get(t, ()):
                    # without a synchronization event the MG settles at its QSS value
                    a.excess("freq_inherit", abs(f[t] - ind.f_qss), idx)
                steps.append((abs(dp), k, t, dp, s_nom, f_prev, ind))
        steps.sort(key=lambda x: (-x[0], x[1], x[2]))
        for _, k, t, dp, s_nom, f_prev, ind in steps[:ORACLE_STEPS]:
            if abs(dp) < 1e-9:
                continue
            resp = step_response_oracle(vsg, dp / s_nom)
            nadir = f_prev + resp.extremum * fb
            slope = resp.peak_slope * fb
            idx = (k, o, t)
            a.excess("oracle_nadir", max(rng.nadir[0] - nadir, nadir - rng.nadir[1]), idx,
                     tol=LIN_TOL * abs(f_prev - ind.f_nadir) + TOL)
            a.excess("oracle_rocof", max(rng.rocof[0] - slope, slope - rng.rocof[1]), idx,
                     tol=LIN_TOL * abs(ind.rocof_max) + TOL)
            dev_cf = f_prev - ind.f_nadir
            dev_ode = f_prev - nadir
            if abs(dev_ode - dev_cf) > LIN_TOL * max(abs(dev_cf), 1e-9):
                a.warn("nadir_linearization", idx, dev_ode - dev_cf)
        # SSW closing events: matched frequencies and no cross-flow
        for sw_id, us in tr.ssw.items():
            br = feeder.branch_map[sw_id]
            for t in range(1, T):
                if not (us[t] and not us[t - 1]):
                    continue
                idx = (sw_id, o, t)
                uf, live, _ = _islands(feeder, tr, t - 1, None, o)
                fi = _island_frequency(plan, feeder, tr, t - 1, t, br.from_bus, uf, live, fb)
                fj = _island_frequency(plan, feeder, tr, t - 1, t, br.to_bus, uf, live, fb)
                if fi is None or fj is None:
                    a.check("ssw_sides_sourced", False, idx, 1.0)
                    continue
                a.excess("ssw_delta_f", abs(fi - fj) - params.eps, idx)
                for fam in ("p_flow", "q_flow"):
                    for ph, seq in getattr(tr, fam)[sw_id].items():
                        a.excess("ssw_zero_flow", abs(seq[t]), (sw_id, ph, o, t))
    return rep


# -- power flow ---------------------------------------------------------------

def _rotated(branch) -> tuple[np.ndarray, np.ndarray]:
    """Phase-rotated (r, x) of a line: Re/-Im of gamma * conj(Z)."""
    z = np.asarray(branch.r, dtype=float) - 1j * np.asarray(branch.x, dtype=float)
    ang = {"A": 0.0, "B": -2.0 * math.pi / 3.0, "C": 2.0 * math.pi / 3.0}
    ph = np.array([ang[p] for p in branch.phases])
    gamma = np.exp(1j * (ph[:, None] - ph[None, :]))
    m = gamma * z
    return m.real, -m.imag


def audit_power(plan: RestorationPlan, feeder: FeederModel, params: BuildParams | None = None
                ) -> AuditReport:
    params = params or BuildParams()
    rep = AuditReport()
    a = _Audit(rep)
    T = plan.horizon
    dt = plan.dt_hours
    vmin2, vmax2 = (v * v for v in params.ranges.voltage)
    lo, hi = params.soc_bounds
    sites = {s.bus: s for s in plan.siting}
    rot = {br.id: _rotated(br) for br in feeder.lines}
    bmap = feeder.bus_map
    for tr in plan.scenarios:
        o = tr.id
        status = {bus.id: tr.bus_status(feeder, bus.id) for bus in feeder.buses}
        # CLPU and non-critical pick-up rules, recomputed demand
        demand: dict[tuple[str, str], list[float]] = {}
        demand_q: dict[tuple[str, str], list[float]] = {}
        for kind, store in (("critical", tr.restored_cl), ("noncritical", tr.restored_nl)):
            expect: dict[str, list[float]] = {}
            for ld in feeder.loads_of(kind):
                hist = status[ld.bus] if kind == "critical" else tr.z_nl[ld.bus]
                mult = staircase(hist, params.clpu)
                tan = math.tan(ld.power_factor_angle)
                tot = expect.setdefault(ld.bus, [0.0] * T)
                for ph, p_nom in ld.p:
                    dp = demand.setdefault((ld.bus, ph), [0.0] * T)
                    dq = demand_q.setdefault((ld.bus, ph), [0.0] * T)
                    for t in range(T):
                        x = mult[t] * p_nom * tr.load_shape[t]
                        dp[t] += x
                        dq[t] += x * tan
                        tot[t] += x
            for bus, seq in expect.items():
                got = store.get(bus, [0.0] * T)
                for t in range(T):
                    a.excess("clpu_restored", abs(got[t] - seq[t]), (bus, o, t))
        for bus, z in tr.z_nl.items():
            for t in range(T):
                a.check("nl_follows_bus", z[t] <= status[bus][t], (bus, o, t), 1.0)
                a.check("nl_latch", _at(z, t - 1) <= z[t], (bus, o, t), 1.0)
        for t in range(T):
            net_p: dict[tuple[str, str], float] = {}
            net_q: dict[tuple[str, str], float] = {}
            for bus in feeder.buses:
                u = status[bus.id][t]
                eta = tr.pv_shape[t]
                for ph in bus.phases:
                    key = (bus.id, ph)
                    pv = bus.pv_rating * eta / 3.0 * u if bus.pv_rating > 0 and eta > 0 else 0.0
                    net_p[key] = pv - demand.get(key, [0.0] * T)[t]
                    net_q[key] = pv * params.pv_q_ratio - demand_q.get(key, [0.0] * T)[t]
                    v = tr.v_sq[bus.id][ph][t]
                    idx = (bus.id, ph, o, t)
                    if u:
                        a.excess("voltage_box", max(vmin2 - v, v - vmax2), idx)
                    else:
                        a.excess("dead_voltage", abs(v), idx)
            # transmission grid
            if feeder.tg is not None:
                u = tr.tg[t]
                cap = feeder.tg.s_max / 3.0
                for ph in "ABC":
                    p, q = tr.p_tg[ph][t], tr.q_tg[ph][t]
                    idx = ("tg", ph, o, t)
                    if u:
                        a.excess("tg_capacity", math.hypot(p, q) - cap, idx)
                        a.excess("tg_voltage", abs(tr.v_sq[feeder.tg.bus][ph][t] - 1.0), idx)
                    else:
                        a.excess("tg_idle", max(abs(p), abs(q)), idx)
                    net_p[(feeder.tg.bus, ph)] += p
                    net_q[(feeder.tg.bus, ph)] += q
            # storage
            for site, s in sites.items():
                idx = (site, o, t)
                pb = tr.p_bess.get(site, {})
                qb = tr.q_bess.get(site, {})
                if not s.installed:
                    for ph in pb:
                        a.excess("bess_idle", max(abs(pb[ph][t]), abs(qb[ph][t])), (site, ph, o, t))
                    continue
                for ph in "ABC":
                    p, q = pb[ph][t], qb[ph][t]
                    a.excess("bess_capacity", math.hypot(p, q) - s.s_nom / 3.0, (site, ph, o, t))
                    if (site, ph) in net_p:
                        net_p[(site, ph)] += p
                        net_q[(site, ph)] += q
                    ref = 1.0 + tr.dv_inc[site][t]
                    a.excess("voltage_reference", abs(tr.v_sq[site][ph][t] - ref), (site, ph, o, t))
                e = tr.energy[site]
                prev = e[t - 1] if t > 0 else params.soc_initial * s.e_nom
                out = sum(pb[ph][t] for ph in "ABC")
                a.excess("soc_recursion", abs(e[t] - (prev - out * dt)), idx)
                a.excess("soc_floor", lo * s.e_nom - e[t], idx)
                a.excess("soc_ceiling", e[t] - hi * s.e_nom, idx)
            # branches
            closed_edges: list = []
            for br in feeder.branches:
                if br.is_switch:
                    closed = bool(tr.esw[br.id][t] or tr.ssw.get(br.id, [0] * T)[t])
                else:
                    closed = bool(status[br.from_bus][t])
                pf = tr.p_flow[br.id]
                qf = tr.q_flow[br.id]
                for ph in br.phases:
                    idx = (br.id, ph, o, t)
                    p, q = pf[ph][t], qf[ph][t]
                    if closed:
                        closed_edges.append((br, ph, p, q))
                    if not closed:
                        a.excess("open_branch_flow", max(abs(p), abs(q)), idx)
                    else:
                        a.excess("thermal", max(abs(p), abs(q)) - br.thermal_limit, idx)
                if not closed:
                    continue
                vb2 = (bmap[br.from_bus].nominal_voltage / 1000.0) ** 2
                for n, ph in enumerate(br.phases):
                    drop = 0.0
                    if not br.is_switch:
                        rr, xx = rot[br.id]
                        for m, ph2 in enumerate(br.phases):
                            drop += 2.0 * (rr[n, m] * pf[ph2][t] + xx[n, m] * qf[ph2][t]) / vb2
                    resid = tr.v_sq[br.to_bus][ph][t] - tr.v_sq[br.from_bus][ph][t] + drop
                    a.excess("voltage_drop", abs(resid), (br.id, ph, o, t))
            _flow_balance(a, feeder, closed_edges, net_p, "balance_p", o, t)
            _flow_balance(a, feeder, closed_edges, net_q, "balance_q", o, t)
    return rep


def _flow_balance(a: _Audit, feeder: FeederModel, edges, injection: dict, rule: str, o: str, t: int) -> None:
    """Power balance, checked branch by branch on radial islands.

    On a tree the flow of each closed branch must equal the net demand on its
    far side, so a single wrong flow shows up as exactly one violation.  Each
    island must also balance as a whole.  Meshed components (already flagged
    by the topology audit) fall back to per-bus conservation.
    """
    col = 2 if rule == "balance_p" else 3
    for ph in "ABC":
        g = nx.Graph()
        g.add_nodes_from(b.id for b in feeder.buses if ph in b.phases)
        flows = {}
        meshed = set()
        for e in edges:
            br = e[0]
            if e[1] != ph:
                continue
            if g.has_edge(br.from_bus, br.to_bus):
                meshed.update(br.ends)
            g.add_edge(br.from_bus, br.to_bus)
            flows.setdefault(frozenset(br.ends), []).append((br, e[col]))
        for comp in nx.connected_components(g):
            sub = g.subgraph(comp)
            total = math.fsum(injection[(b, ph)] for b in comp)
            root = min(comp)
            a.excess(rule, abs(total), ("island", root, ph, o, t))
            if sub.number_of_edges() != len(comp) - 1 or comp & meshed:
                for bus in comp:
                    net = injection[(bus, ph)]
                    for br, f in (x for k, v in flows.items() if bus in k for x in v):
                        net += f if br.to_bus == bus else -f
                    a.excess(rule, abs(net), ("bus", bus, ph, o, t))
                continue
            # subtree sums of injections, children before parents
            order = list(nx.dfs_preorder_nodes(sub, root))
            parent = {root: None}
            for u, v in nx.dfs_edges(sub, root):
                parent[v] = u
            below = {n: injection[(n, ph)] for n in comp}
            for n in reversed(order):
                if parent[n] is not None:
                    below[parent[n]] += below[n]
            for n in order:
                if parent[n] is None:
                    continue
                (br, f), = flows[frozenset((n, parent[n]))]
                # flow from -> to equals the net demand beyond the 'to' end
                expect = -below[n] if br.to_bus == n else below[n] - total
                a.excess(rule, abs(f - expect), (br.id, ph, o, t))


def audit_plan(plan: RestorationPlan, feeder: FeederModel, params: BuildParams | None = None) -> AuditReport:
    params = params or BuildParams()
    rep = AuditReport()
    if plan.feeder != feeder.name:
        rep.warnings.append(Violation("feeder_name", (plan.feeder, feeder.name), 0.0))
    rep.merge(audit_topology(plan, feeder, params))
    rep.merge(audit_frequency(plan, feeder, params))
    rep.merge(audit_power(plan, feeder, params))
    return rep
