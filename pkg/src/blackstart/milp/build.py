"""Assembly of the two-stage stochastic siting/sizing and restoration MILP.

Everything is written into a :class:`MilpModel` in extensive form: first-stage
variables carry no scenario index, every second-stage family is keyed by
``(..., scenario_id, step)``.

A few conventions used throughout:

* bus and internal-line statuses are the status variable of the owning segment
  (the per-bus equalities are substituted out); the transmission-grid section
  uses ``u_tg``;
* switch-end frequencies are one variable per segment (``f_seg``), which is
  the same thing as equating all switch-end buses of a segment;
* MG frequency dynamics are tracked as "deviation energy" ``D = (60 y - f) S``
  where the rated power ``S`` is binary-expanded, making ``D`` an exact linear
  function of McCormick products.
"""
from __future__ import annotations

import cmath
import math
from functools import cached_property

import networkx as nx
import numpy as np

from ..clpu import clpu_multiplier, noncritical_links
from ..feeder import Branch, FeederModel
from ..scenarios import ScenarioSet
from ..vsg import response_shape
from .catalog import LinExpr, MilpModel, lin_sum
from .params import BuildParams

# Every constraint family the builder can emit.  Names are ``{tag}.{label}[key]``.
CONSTRAINT_TAGS = frozenset({
    "fleet", "bess_sizing", "bess_per_mg", "ssw_count",                      # siting and sizing
    "esw_action", "esw_freq", "ssw_action", "ssw_zero_flow",                 # switching
    "seg_status", "radiality", "tg", "clpu_nl",                              # energization
    "freq_indices", "freq_security", "freq_inherit", "freq_prop_mg",         # frequency
    "freq_sync", "sync_capture", "sync_merge",
    "balance", "volt_box", "volt_drop", "flow_security", "voltage_ctrl",     # power flow
    "bess_output",                                                           # storage and PV
})


def rotated_impedance(branch: Branch) -> tuple[np.ndarray, np.ndarray]:
    """Phase-rotated resistance and reactance used by the linear voltage drop."""
    r = np.asarray(branch.r, dtype=float)
    x = np.asarray(branch.x, dtype=float)
    a = cmath.exp(-2j * math.pi / 3)
    rot = {"A": 1.0, "B": a, "C": a * a}
    vec = np.array([rot[p] for p in branch.phases])
    gamma = np.outer(vec, vec.conj())
    return gamma.real * r + gamma.imag * x, gamma.real * x - gamma.imag * r


class _Ctx:
    def __init__(self, model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                 params: BuildParams):
        self.m = model
        self.f = feeder
        self.sc = scenarios
        self.p = params
        self.T = scenarios.horizon
        self.seg_of = {b: s.id for s in feeder.segments for b in s.buses}
        self.tg_seg = next((s.id for s in feeder.segments if s.is_tg), None)
        self.bmap = feeder.bus_map

    @cached_property
    def eligible(self) -> list[Branch]:
        return [sw for sw in self.f.switches if sw.ssw_eligible]

    @cached_property
    def sites(self) -> list[tuple[int, str]]:
        return [(s.id, b) for s in self.f.candidate_segments for b in s.bess_sites]

    def seg_status(self, sid: int, o: str, t: int):
        if t < 0:
            return 0.0
        if sid == self.tg_seg:
            return self.m.var("u_tg", o, t)
        return self.m.var("u_sg", sid, o, t)

    def bus_status(self, bus: str, o: str, t: int):
        return self.seg_status(self.seg_of[bus], o, t)

    def y_ssw(self, sw: Branch):
        return self.m.var("y_ssw", sw.id) if sw.ssw_eligible else 0.0

    def u_esw(self, sw: Branch, o: str, t: int):
        return self.m.var("u_esw", sw.id, o, t) if t >= 0 else 0.0

    def u_ssw(self, sw: Branch, o: str, t: int):
        if t < 0 or not sw.ssw_eligible:
            return 0.0
        return self.m.var("u_ssw", sw.id, o, t)

    def line_status(self, br: Branch, o: str, t: int) -> LinExpr:
        if br.is_switch:
            return LinExpr.of(self.u_esw(br, o, t)) + self.u_ssw(br, o, t)
        return LinExpr.of(self.seg_status(self.seg_of[br.from_bus], o, t))

    def y_mg(self, k: int):
        return self.m.var("y_mg", k)

    def s_mg(self, k: int) -> LinExpr:
        seg = self.f.segment_map[k]
        return lin_sum(self.m.var("s_nom", b) for b in seg.bess_sites)

    def e_mg(self, k: int) -> LinExpr:
        seg = self.f.segment_map[k]
        return lin_sum(self.m.var("e_nom", b) for b in seg.bess_sites)

    def p_mg(self, k: int, o: str, t: int) -> LinExpr:
        if t < 0:
            return LinExpr()
        seg = self.f.segment_map[k]
        return lin_sum(self.m.var("p_bess", b, ph, o, t) for b in seg.bess_sites for ph in "ABC")

    def dev_energy(self, k: int, o: str, t: int) -> LinExpr:
        """``(60 y_k - f_k) * S_k`` at step ``t`` (0 before the horizon)."""
        if t < 0:
            return LinExpr()
        step = self.p.size_step
        return lin_sum(self.m.var("w_freq", k, j, o, t) * (step * 2 ** j) for j in range(self.p.size_bits))


# -- variable declaration ---------------------------------------------------

def declare_first_stage(model: MilpModel, feeder: FeederModel, params: BuildParams) -> None:
    b = params.budgets
    for seg in feeder.candidate_segments:
        model.add_var("y_mg", seg.id, binary=True)
        for site in seg.bess_sites:
            model.add_var("y_bess", site, binary=True)
            model.add_var("s_nom", site, 0.0, b.s_max)
            model.add_var("e_nom", site, 0.0, b.e_max)
        for j in range(params.size_bits):
            model.add_var("s_bit", (seg.id, j), binary=True)
    for sw in feeder.switches:
        if sw.ssw_eligible:
            model.add_var("y_ssw", sw.id, binary=True)


def declare_second_stage(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                         params: BuildParams) -> None:
    ctx = _Ctx(model, feeder, scenarios, params)
    rng = params.ranges
    vmax2 = rng.voltage[1] ** 2
    vmin2 = rng.voltage[0] ** 2
    fb = params.vsg.base_frequency
    d_lim = max(fb - rng.frequency[0], rng.frequency[1] - fb)
    f_lo, f_hi = rng.frequency
    s_phase = params.budgets.s_max / 3.0
    noncrit = sorted({ld.bus for ld in feeder.loads_of("noncritical")})
    for sc in scenarios:
        o = sc.id
        for t in range(ctx.T):
            for seg in feeder.grid_segments:
                model.add_var("u_sg", (seg.id, o, t), binary=True)
                # a dead segment's frequency is never read, so keep it in band
                model.add_var("f_seg", (seg.id, o, t), f_lo, f_hi)
            if ctx.tg_seg is not None:
                model.add_var("u_tg", (o, t), binary=True)
                model.add_var("f_seg", (ctx.tg_seg, o, t), 0.0, f_hi)
                for ph in "ABC":
                    model.add_var("p_tg", (ph, o, t), -feeder.tg.s_max / 3, feeder.tg.s_max / 3)
                    model.add_var("q_tg", (ph, o, t), -feeder.tg.s_max / 3, feeder.tg.s_max / 3)
            for sw in feeder.switches:
                model.add_var("u_esw", (sw.id, o, t), binary=True)
                if sw.ssw_eligible:
                    model.add_var("u_ssw", (sw.id, o, t), binary=True)
            for br in feeder.branches:
                lim = br.thermal_limit
                for ph in br.phases:
                    model.add_var("p_flow", (br.id, ph, o, t), -lim, lim)
                    model.add_var("q_flow", (br.id, ph, o, t), -lim, lim)
            for bus in feeder.buses:
                for ph in bus.phases:
                    model.add_var("v_sq", (bus.id, ph, o, t), 0.0, vmax2)
            for bus in noncrit:
                model.add_var("z_nl", (bus, o, t), binary=True)
            for k, site in ctx.sites:
                for ph in "ABC":
                    model.add_var("p_bess", (site, ph, o, t), -s_phase, s_phase)
                    model.add_var("q_bess", (site, ph, o, t), -s_phase, s_phase)
                model.add_var("energy", (site, o, t), 0.0, params.budgets.e_max)
                model.add_var("dv_inc", (site, o, t), vmin2 - 1.0, vmax2 - 1.0)
            for seg in feeder.candidate_segments:
                k = seg.id
                model.add_var("f_mg", (k, o, t), 0.0, rng.frequency[1])
                for j in range(params.size_bits):
                    model.add_var("w_freq", (k, j, o, t), -d_lim, d_lim)
                if t >= 1:
                    span = (rng.frequency[1] - rng.frequency[0]) * params.budgets.s_max
                    model.add_var("f_adj", (k, o, t), -span, span)
                    model.add_var("syn_new", (k, o, t), binary=True)
                    model.add_var("delta_syn", (k, o, t), binary=True)
            if t >= 1:
                if ctx.eligible:
                    model.add_var("ssw_closing", (o, t), binary=True)
                for k, l in feeder.sync_pairs:
                    for fam in ("u_syn", "u_syn_lo", "u_syn_hi"):
                        model.add_var(fam, (k, l, o, t), binary=True)


# -- first stage ------------------------------------------------------------

def build_first_stage(model: MilpModel, feeder: FeederModel, params: BuildParams) -> None:
    b = params.budgets
    b.check()
    cands = feeder.candidate_segments
    if not cands:
        raise ValueError("feeder declares no candidate MG segment")
    for seg in cands:
        k = seg.id
        for site in seg.bess_sites:
            y = model.var("y_bess", site)
            s = model.var("s_nom", site)
            e = model.var("e_nom", site)
            model.add_constr("bess_sizing", "s_lo", site, s - y * b.s_min, ">=")
            model.add_constr("bess_sizing", "s_hi", site, s - y * b.s_max, "<=")
            model.add_constr("bess_sizing", "e_lo", site, e - y * b.e_min, ">=")
            model.add_constr("bess_sizing", "e_hi", site, e - y * b.e_max, "<=")
        ys = lin_sum(model.var("y_bess", s) for s in seg.bess_sites)
        model.add_constr("bess_per_mg", "one", k, ys - model.var("y_mg", k), "==")
        # rated power on a discrete grid so frequency products stay linear
        bits = lin_sum(model.var("s_bit", k, j) * (params.size_step * 2 ** j)
                       for j in range(params.size_bits))
        s_k = lin_sum(model.var("s_nom", s) for s in seg.bess_sites)
        model.add_constr("bess_sizing", "quantize", k, s_k - bits, "==")
    ysum = lin_sum(model.var("y_mg", s.id) for s in cands)
    model.add_constr("fleet", "at_least_one", (), ysum, ">=", 1.0)
    s_all = lin_sum(model.var("s_nom", site) for s in cands for site in s.bess_sites)
    e_all = lin_sum(model.var("e_nom", site) for s in cands for site in s.bess_sites)
    model.add_constr("fleet", "power_budget", (), s_all, "<=", b.s_budget)
    model.add_constr("fleet", "energy_budget", (), e_all, "<=", b.e_budget)
    n_ssw = lin_sum(model.var("y_ssw", sw.id) for sw in feeder.switches if sw.ssw_eligible)
    model.add_constr("ssw_count", "eq", (), n_ssw - ysum, "==", -1.0)
    for seg in cands:
        model.add_objective(model.var("y_mg", seg.id), params.cost_fixed)
        for site in seg.bess_sites:
            model.add_objective(model.var("s_nom", site), params.cost_power)
            model.add_objective(model.var("e_nom", site), params.cost_energy)


# -- switches ---------------------------------------------------------------

def build_switch_constraints(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                             params: BuildParams) -> None:
    ctx = _Ctx(model, feeder, scenarios, params)
    fm = params.freq_big_m
    half = params.eps / 2.0
    for sc in scenarios:
        o = sc.id
        for t in range(ctx.T):
            for sw in feeder.switches:
                i, j = sw.ends
                key = (sw.id, o, t)
                ue = ctx.u_esw(sw, o, t)
                ue_prev = ctx.u_esw(sw, o, t - 1)
                bi_prev = ctx.bus_status(i, o, t - 1)
                bj_prev = ctx.bus_status(j, o, t - 1)
                model.add_constr("esw_action", "blocked", key, LinExpr.of(ue) + ctx.y_ssw(sw), "<=", 1.0)
                model.add_constr("esw_action", "one_end_live", key,
                                 LinExpr.of(ue) - bi_prev - bj_prev, "<=")
                model.add_constr("esw_action", "no_live_join", key,
                                 LinExpr.of(ue) - ue_prev + bi_prev + bj_prev, "<=", 2.0)
                if t > 0:
                    model.add_constr("esw_action", "latch", key, LinExpr.of(ue_prev) - ue, "<=")
                fi = model.var("f_seg", ctx.seg_of[i], o, t)
                fj = model.var("f_seg", ctx.seg_of[j], o, t)
                fm = _span_m(model, fi, fj)
                model.add_constr("esw_freq", "hi", key, fi - fj + ue * fm, "<=", fm)
                model.add_constr("esw_freq", "lo", key, fi - fj - ue * fm, ">=", -fm)
                if not sw.ssw_eligible:
                    continue
                us = ctx.u_ssw(sw, o, t)
                us_prev = ctx.u_ssw(sw, o, t - 1)
                model.add_constr("ssw_action", "placed", key, us - model.var("y_ssw", sw.id), "<=")
                if t > 0:
                    model.add_constr("ssw_action", "latch", key, LinExpr.of(us_prev) - us, "<=")
                model.add_constr("ssw_action", "both_live", key,
                                 us * 2.0 - bi_prev - bj_prev, "<=")
                model.add_constr("ssw_action", "freq_hi", key, fi - fj + us * fm, "<=", fm + half)
                model.add_constr("ssw_action", "freq_lo", key, fi - fj - us * fm, ">=", -fm - half)
                closing = LinExpr.of(us) - us_prev
                for ph in sw.phases:
                    lim = sw.thermal_limit
                    for fam in ("p_flow", "q_flow"):
                        flow = model.var(fam, sw.id, ph, o, t)
                        model.add_constr("ssw_zero_flow", f"{fam}_hi", (sw.id, ph, o, t),
                                         flow + closing * lim, "<=", lim)
                        model.add_constr("ssw_zero_flow", f"{fam}_lo", (sw.id, ph, o, t),
                                         flow - closing * lim, ">=", -lim)


# -- energization -----------------------------------------------------------

def _span_m(model: MilpModel, a, b) -> float:
    """Smallest M that relaxes |a - b| <= M given the variables' bounds."""
    va, vb = model.variables[a.index], model.variables[b.index]
    return max(va.ub - vb.lb, vb.ub - va.lb)


def _tree_segments(feeder: FeederModel) -> set[str]:
    """Internal lines of segments whose internal graph is a tree.

    With every injection in a dead segment at zero, balance alone forces the
    flows on such lines to zero, so they need no on/off gating.
    """
    out: set[str] = set()
    for seg in feeder.segments:
        g = nx.Graph()
        g.add_nodes_from(seg.buses)
        g.add_edges_from(feeder.branch_map[b].ends for b in seg.internal_lines)
        if nx.is_tree(g) and g.number_of_edges() == len(seg.internal_lines):
            out |= set(seg.internal_lines)
    return out


def build_energization_constraints(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                                   params: BuildParams) -> None:
    ctx = _Ctx(model, feeder, scenarios, params)
    bmap = feeder.branch_map
    for sc in scenarios:
        o = sc.id
        for t in range(ctx.T):
            for seg in feeder.segments:
                m = seg.id
                key = (m, o, t)
                u = ctx.seg_status(m, o, t)
                u_prev = ctx.seg_status(m, o, t - 1)
                if t > 0:
                    model.add_constr("seg_status", "latch", key, LinExpr.of(u_prev) - u, "<=")
                bsw = sorted(seg.boundary_switches)
                for sid in bsw:
                    model.add_constr("seg_status", "esw_live", (m, sid, o, t),
                                     LinExpr.of(ctx.u_esw(bmap[sid], o, t)) - u, "<=")
                if bsw:
                    closing = lin_sum(LinExpr.of(ctx.u_esw(bmap[s], o, t)) - ctx.u_esw(bmap[s], o, t - 1)
                                      for s in bsw)
                    model.add_constr("seg_status", "one_esw", key,
                                     closing - LinExpr.of(u_prev) * len(bsw), "<=", 1.0)
                if seg.is_tg:
                    continue
                # a segment only comes alive through a closing ESW or its own BESS
                source = lin_sum(ctx.u_esw(bmap[s], o, t) for s in bsw) + u_prev
                if seg.is_candidate_mg:
                    source = source + ctx.y_mg(m)
                    model.add_constr("seg_status", "mg_live", key, LinExpr.of(u) - ctx.y_mg(m), ">=")
                model.add_constr("seg_status", "source", key, LinExpr.of(u) - source, "<=")
            # radiality
            lines_on = LinExpr()
            for br in feeder.branches:
                lines_on.add(ctx.line_status(br, o, t))
            buses_on = lin_sum(ctx.seg_status(s.id, o, t) * len(s.buses) for s in feeder.segments)
            roots = lin_sum(ctx.y_mg(s.id) for s in feeder.candidate_segments)
            for bus in feeder.tg_buses:
                roots.add(ctx.bus_status(bus, o, t))
            for sw in ctx.eligible:
                roots.add(ctx.u_ssw(sw, o, t), -1.0)
            model.add_constr("radiality", "forest", (o, t), lines_on - buses_on + roots, "==")
            # transmission grid
            if ctx.tg_seg is None:
                continue
            u_tg = model.var("u_tg", o, t)
            key = (o, t)
            model.add_constr("tg", "available", key, u_tg, "<=", float(sc.tg_available[t]))
            if t > 0:
                model.add_constr("tg", "latch", key, model.var("u_tg", o, t - 1) - u_tg, "<=")
            model.add_constr("tg", "freq", key, model.var("f_seg", ctx.tg_seg, o, t)
                             - u_tg * params.vsg.base_frequency, "==")
            cap = feeder.tg.s_max / 3.0
            for ph in "ABC":
                pk = (ph, o, t)
                p = model.var("p_tg", ph, o, t)
                q = model.var("q_tg", ph, o, t)
                model.add_constr("tg", "volt", (feeder.tg.bus, ph, o, t),
                                 model.var("v_sq", feeder.tg.bus, ph, o, t) - u_tg, "==")
                for fam, x in (("p", p), ("q", q)):
                    model.add_constr("tg", f"{fam}_on_hi", pk, x - u_tg * cap, "<=")
                    model.add_constr("tg", f"{fam}_on_lo", pk, x + u_tg * cap, ">=")
                _polygon(model, "tg", pk, p, q, LinExpr(None, cap), params.polygon_sides)


def _polygon(model: MilpModel, tag: str, key, p, q, radius: LinExpr, sides: int) -> None:
    """Inscribed regular polygon: ``p cos(phi) + q sin(phi) <= radius cos(pi/N)``."""
    c = math.cos(math.pi / sides)
    for s in range(sides):
        phi = (2 * s + 1) * math.pi / sides
        expr = LinExpr.of(p) * math.cos(phi) + LinExpr.of(q) * math.sin(phi) - radius * c
        # drop numerically-zero coefficients so axis-aligned sides stay sparse
        expr.terms = {i: v for i, v in expr.terms.items() if abs(v) > 1e-12}
        model.add_constr(tag, f"cap{s}", key, expr, "<=")


# -- frequency --------------------------------------------------------------

def build_frequency_constraints(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                                params: BuildParams) -> None:
    ctx = _Ctx(model, feeder, scenarios, params)
    vsg = params.vsg
    shape = response_shape(vsg)
    fb = vsg.base_frequency
    rng = params.ranges
    c_qss = fb / vsg.stiffness
    c_nadir = c_qss * (1.0 + shape.nadir_ratio)
    c_rocof = fb / (2.0 * vsg.inertia)
    d_lim = max(fb - rng.frequency[0], rng.frequency[1] - fb)
    fm = params.freq_big_m
    eps = params.eps
    span = (rng.frequency[1] - rng.frequency[0]) * params.budgets.s_max
    pairs = feeder.sync_pairs
    for sc in scenarios:
        o = sc.id
        for t in range(ctx.T):
            for seg in feeder.candidate_segments:
                k = seg.id
                key = (k, o, t)
                y = ctx.y_mg(k)
                s = ctx.s_mg(k)
                f = model.var("f_mg", k, o, t)
                model.add_constr("freq_security", "f_lo", key, f - y * rng.frequency[0], ">=")
                model.add_constr("freq_security", "f_hi", key, f - y * rng.frequency[1], "<=")
                # switch-end frequency follows the MG when a BESS is installed
                # written against f + fb (1 - y) so a band-wide M suffices
                fs = model.var("f_seg", k, o, t)
                wb = rng.frequency[1] - rng.frequency[0]
                model.add_constr("freq_prop_mg", "hi", key, fs - f + y * (fb + wb), "<=", fb + wb)
                model.add_constr("freq_prop_mg", "lo", key, fs - f + y * (fb - wb), ">=", fb - wb)
                # w_j = (60 y - f) * bit_j, exact for binary bits
                dev = y * fb - f
                for j in range(params.size_bits):
                    w = model.var("w_freq", k, j, o, t)
                    b = model.var("s_bit", k, j)
                    jk = (k, j, o, t)
                    model.add_constr("freq_indices", "mc1", jk, w - b * d_lim, "<=")
                    model.add_constr("freq_indices", "mc2", jk, w + b * d_lim, ">=")
                    model.add_constr("freq_indices", "mc3", jk, w - dev + b * (-d_lim), ">=", -d_lim)
                    model.add_constr("freq_indices", "mc4", jk, w - dev + b * d_lim, "<=", d_lim)
                dp = ctx.p_mg(k, o, t) - ctx.p_mg(k, o, t - 1)
                d_prev = ctx.dev_energy(k, o, t - 1)
                qss = d_prev + dp * c_qss
                nadir = d_prev + dp * c_nadir
                if params.frequency_security:
                    # rocof = -c_rocof * dp / S within [lo, hi]
                    model.add_constr("freq_security", "rocof_lo", key,
                                     dp * (-c_rocof) - s * rng.rocof[0], ">=")
                    model.add_constr("freq_security", "rocof_hi", key,
                                     dp * (-c_rocof) - s * rng.rocof[1], "<=")
                    model.add_constr("freq_security", "qss_lo", key, qss - s * (fb - rng.qss[1]), ">=")
                    model.add_constr("freq_security", "qss_hi", key, qss - s * (fb - rng.qss[0]), "<=")
                    model.add_constr("freq_security", "nadir_lo", key, nadir - s * (fb - rng.nadir[1]), ">=")
                    model.add_constr("freq_security", "nadir_hi", key, nadir - s * (fb - rng.nadir[0]), "<=")
                if t == 0:
                    model.add_constr("freq_inherit", "start", key, f - y * fb, "==")
                    continue
                adj = model.var("f_adj", k, o, t)
                delta = model.var("delta_syn", k, o, t)
                model.add_constr("freq_inherit", "qss", key, ctx.dev_energy(k, o, t) - qss + adj, "==")
                model.add_constr("freq_sync", "adj_hi", key, adj - delta * span, "<=")
                model.add_constr("freq_sync", "adj_lo", key, adj + delta * span, ">=")
            # switch-end frequencies of ordinary segments need no extra rows:
            # one f_seg per segment already makes them uniform.
            if t == 0:
                continue
            # synchronization capture between MG pairs
            for k, l in pairs:
                key = (k, l, o, t)
                u = model.var("u_syn", k, l, o, t)
                lo = model.var("u_syn_lo", k, l, o, t)
                hi = model.var("u_syn_hi", k, l, o, t)
                if t > 1:
                    model.add_constr("sync_capture", "latch", key, model.var("u_syn", k, l, o, t - 1) - u, "<=")
                mu = 2.0 - LinExpr.of(ctx.y_mg(k)) - ctx.y_mg(l)
                diff = LinExpr.of(model.var("f_mg", l, o, t)) - model.var("f_mg", k, o, t) + mu
                model.add_constr("sync_capture", "partition", key, lo + u + hi, "==", 1.0)
                model.add_constr("sync_capture", "window_lo", key,
                                 lo * eps - u * (eps / 2) - hi * fm - diff, "<=")
                model.add_constr("sync_capture", "window_hi", key,
                                 lo * fm + u * (eps / 2) - hi * eps - diff, ">=")
            for (a, b, (l, n)) in feeder.sync_triples:
                key = (*a, *b, o, t)
                model.add_constr("sync_merge", "one", key,
                                 _d_syn(model, a, o, t) + _d_syn(model, b, o, t)
                                 - model.var("u_syn", l, n, o, t), "<=", 1.0)
            # delta = [some SSW closes] AND [k newly synchronized]
            if ctx.eligible:
                a_var = model.var("ssw_closing", o, t)
                closes = []
                for sw in ctx.eligible:
                    c = LinExpr.of(ctx.u_ssw(sw, o, t)) - ctx.u_ssw(sw, o, t - 1)
                    closes.append(c)
                    model.add_constr("freq_sync", "closing_ge", (sw.id, o, t), a_var - c, ">=")
                model.add_constr("freq_sync", "closing_le", (o, t), a_var - lin_sum(closes), "<=")
            else:
                a_var = 0.0
            for seg in feeder.candidate_segments:
                k = seg.id
                key = (k, o, t)
                bk = model.var("syn_new", k, o, t)
                mine = [p for p in pairs if k in p]
                news = [_d_syn(model, p, o, t) for p in mine]
                for p, e in zip(mine, news):
                    model.add_constr("freq_sync", "new_ge", (k, *p, o, t), bk - e, ">=")
                model.add_constr("freq_sync", "new_le", key, bk - lin_sum(news), "<=")
                d = model.var("delta_syn", k, o, t)
                model.add_constr("freq_sync", "and_a", key, LinExpr.of(d) - a_var, "<=")
                model.add_constr("freq_sync", "and_b", key, d - bk, "<=")
                model.add_constr("freq_sync", "and_ab", key, d - bk - a_var, ">=", -1.0)


def _d_syn(model: MilpModel, pair, o, t) -> LinExpr:
    k, l = pair
    cur = LinExpr.of(model.var("u_syn", k, l, o, t))
    if t > 1:
        cur = cur - model.var("u_syn", k, l, o, t - 1)
    return cur


# -- power flow -------------------------------------------------------------

def _injection_terms(ctx: _Ctx, o: str, t: int):
    """Per (bus, phase) restored load (p, q) expressions and PV injections."""
    sc = ctx.sc.by_id(o)
    load_mult = sc.season.load_shape[t]
    eta = sc.season.pv_shape[t]
    beta = ctx.p.clpu
    out_p: dict[tuple[str, str], LinExpr] = {}
    out_q: dict[tuple[str, str], LinExpr] = {}

    def acc(store, key, expr, coef):
        store.setdefault(key, LinExpr()).add(expr, coef)

    for ld in ctx.f.loads:
        if ld.kind == "critical":
            hist = [ctx.bus_status(ld.bus, o, s) for s in range(t + 1)]
        else:
            hist = [ctx.m.var("z_nl", ld.bus, o, s) for s in range(t + 1)]
        mult = LinExpr.of(clpu_multiplier(hist, beta, t))
        tan = math.tan(ld.power_factor_angle)
        for ph, p_nom in ld.p:
            acc(out_p, (ld.bus, ph), mult, -p_nom * load_mult)
            acc(out_q, (ld.bus, ph), mult, -p_nom * load_mult * tan)
    for bus in ctx.f.buses:
        if bus.pv_rating <= 0 or eta <= 0:
            continue
        u = ctx.bus_status(bus.id, o, t)
        p_pv = bus.pv_rating * eta / 3.0
        for ph in bus.phases:
            acc(out_p, (bus.id, ph), u, p_pv)
            acc(out_q, (bus.id, ph), u, p_pv * ctx.p.pv_q_ratio)
    return out_p, out_q


def build_power_flow(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                     params: BuildParams) -> None:
    ctx = _Ctx(model, feeder, scenarios, params)
    vmin2 = params.ranges.voltage[0] ** 2
    vmax2 = params.ranges.voltage[1] ** 2
    vm = vmax2
    sites = {b for _, b in ctx.sites}
    rot = {br.id: rotated_impedance(br) for br in feeder.lines}
    ungated = _tree_segments(feeder)
    tg_bus = feeder.tg.bus if feeder.tg else None
    for sc in scenarios:
        o = sc.id
        for t in range(ctx.T):
            inj_p, inj_q = _injection_terms(ctx, o, t)
            flow_p: dict[tuple[str, str], LinExpr] = {}
            flow_q: dict[tuple[str, str], LinExpr] = {}
            for br in feeder.branches:
                ul = ctx.line_status(br, o, t)
                lim = br.thermal_limit
                for ph in br.phases:
                    p = model.var("p_flow", br.id, ph, o, t)
                    q = model.var("q_flow", br.id, ph, o, t)
                    for store, x in ((flow_p, p), (flow_q, q)):
                        store.setdefault((br.from_bus, ph), LinExpr()).add(x, 1.0)
                        store.setdefault((br.to_bus, ph), LinExpr()).add(x, -1.0)
                    if br.id in ungated:
                        continue
                    key = (br.id, ph, o, t)
                    for fam, x in (("p", p), ("q", q)):
                        model.add_constr("flow_security", f"{fam}_hi", key, x - ul * lim, "<=")
                        model.add_constr("flow_security", f"{fam}_lo", key, x + ul * lim, ">=")
                # linear voltage drop, relaxed when the branch is open
                vb2 = (feeder.bus_map[br.from_bus].nominal_voltage / 1000.0) ** 2
                if br.is_switch:
                    r_t = x_t = np.zeros((len(br.phases), len(br.phases)))
                else:
                    r_t, x_t = rot[br.id]
                for a, ph in enumerate(br.phases):
                    drop = LinExpr.of(model.var("v_sq", br.to_bus, ph, o, t)) - model.var(
                        "v_sq", br.from_bus, ph, o, t)
                    for b, ph2 in enumerate(br.phases):
                        if r_t[a, b]:
                            drop.add(model.var("p_flow", br.id, ph2, o, t), 2.0 * r_t[a, b] / vb2)
                        if x_t[a, b]:
                            drop.add(model.var("q_flow", br.id, ph2, o, t), 2.0 * x_t[a, b] / vb2)
                    key = (br.id, ph, o, t)
                    if br.id in ungated:
                        # dead segment: flows and both voltages are already zero
                        model.add_constr("volt_drop", "eq", key, drop, "==")
                        continue
                    model.add_constr("volt_drop", "hi", key, drop + ul * vm, "<=", vm)
                    model.add_constr("volt_drop", "lo", key, drop - ul * vm, ">=", -vm)
            for bus in feeder.buses:
                u = ctx.bus_status(bus.id, o, t)
                for ph in bus.phases:
                    key = (bus.id, ph, o, t)
                    v = model.var("v_sq", bus.id, ph, o, t)
                    model.add_constr("volt_box", "lo", key, LinExpr.of(v) - LinExpr.of(u) * vmin2, ">=")
                    model.add_constr("volt_box", "hi", key, LinExpr.of(v) - LinExpr.of(u) * vmax2, "<=")
                    for fam, flows, inj in (("p", flow_p, inj_p), ("q", flow_q, inj_q)):
                        expr = LinExpr.of(inj.get((bus.id, ph), 0.0))
                        if bus.id == tg_bus:
                            expr.add(model.var(f"{fam}_tg", ph, o, t))
                        if bus.id in sites:
                            expr.add(model.var(f"{fam}_bess", bus.id, ph, o, t))
                        expr.add(flows.get((bus.id, ph), 0.0), -1.0)
                        model.add_constr("balance", fam, key, expr, "==")


# -- resources --------------------------------------------------------------

def build_resource_constraints(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                               params: BuildParams) -> None:
    ctx = _Ctx(model, feeder, scenarios, params)
    dt_h = scenarios.dt_hours
    lo, hi = params.soc_bounds
    vmax2 = params.ranges.voltage[1] ** 2
    for sc in scenarios:
        o = sc.id
        for t in range(ctx.T):
            for k, site in ctx.sites:
                y = model.var("y_bess", site)
                s = model.var("s_nom", site)
                e_nom = model.var("e_nom", site)
                for ph in "ABC":
                    key = (site, ph, o, t)
                    _polygon(model, "bess_output", key, model.var("p_bess", site, ph, o, t),
                             model.var("q_bess", site, ph, o, t), LinExpr.of(s) * (1.0 / 3.0),
                             params.polygon_sides)
                    # grid-forming voltage reference at the installed site
                    v = model.var("v_sq", site, ph, o, t)
                    ref = LinExpr.of(model.var("dv_inc", site, o, t)) + 1.0
                    model.add_constr("voltage_ctrl", "hi", key, LinExpr.of(v) - ref + y * vmax2, "<=", vmax2)
                    model.add_constr("voltage_ctrl", "lo", key, LinExpr.of(v) - ref - y * vmax2, ">=", -vmax2)
                key = (site, o, t)
                energy = model.var("energy", site, o, t)
                prev = model.var("energy", site, o, t - 1) if t > 0 else LinExpr.of(e_nom) * params.soc_initial
                out = lin_sum(model.var("p_bess", site, ph, o, t) for ph in "ABC")
                model.add_constr("bess_output", "soc", key, energy - prev + out * dt_h, "==")
                model.add_constr("bess_output", "soc_lo", key, energy - e_nom * lo, ">=")
                model.add_constr("bess_output", "soc_hi", key, energy - e_nom * hi, "<=")
            for bus in sorted({ld.bus for ld in feeder.loads_of("noncritical")}):
                z = [model.var("z_nl", bus, o, s) for s in range(t + 1)]
                u = [ctx.bus_status(bus, o, s) for s in range(t + 1)]
                for label, lhs, sense in noncritical_links(z, u, t):
                    model.add_constr("clpu_nl", label, (bus, o, t), lhs, sense)


# -- objective --------------------------------------------------------------

def restored_load_expr(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                       params: BuildParams, o: str) -> LinExpr:
    """Weighted restored energy of one scenario (the quantity being maximised)."""
    ctx = _Ctx(model, feeder, scenarios, params)
    sc = scenarios.by_id(o)
    total = LinExpr()
    for t in range(ctx.T):
        lm = sc.season.load_shape[t]
        for ld in feeder.loads:
            if ld.kind == "critical":
                hist = [ctx.bus_status(ld.bus, o, s) for s in range(t + 1)]
                w = params.gamma_cl
            else:
                hist = [model.var("z_nl", ld.bus, o, s) for s in range(t + 1)]
                w = params.gamma_nl
            p_nom = sum(p for _, p in ld.p) * lm
            total.add(clpu_multiplier(hist, params.clpu, t), w * p_nom * scenarios.dt_hours)
    return total


def build_objective(model: MilpModel, feeder: FeederModel, scenarios: ScenarioSet,
                    params: BuildParams) -> None:
    for sc in scenarios:
        model.add_objective(restored_load_expr(model, feeder, scenarios, params, sc.id), -sc.probability)


# -- orchestration ----------------------------------------------------------

def fix_variables(model: MilpModel, values) -> None:
    """Pin variables (by name) to given values, e.g. a first-stage decision."""
    by_name = {v.name: v for v in model.variables}
    for name, val in values.items():
        if name not in by_name:
            raise KeyError(f"no variable named {name}")
        by_name[name].lb = by_name[name].ub = float(val)


def first_stage_names(model: MilpModel) -> list[str]:
    fams = {"y_mg", "y_bess", "s_nom", "e_nom", "s_bit", "y_ssw"}
    return [v.name for v in model.variables if v.family in fams]


def build_model(feeder: FeederModel, scenarios: ScenarioSet, params: BuildParams | None = None,
                name: str = "blackstart") -> MilpModel:
    params = params or BuildParams()
    params.budgets.check()
    model = MilpModel(name=name, big_m=params.big_m, eps=params.eps)
    declare_first_stage(model, feeder, params)
    declare_second_stage(model, feeder, scenarios, params)
    build_first_stage(model, feeder, params)
    build_switch_constraints(model, feeder, scenarios, params)
    build_energization_constraints(model, feeder, scenarios, params)
    build_frequency_constraints(model, feeder, scenarios, params)
    build_power_flow(model, feeder, scenarios, params)
    build_resource_constraints(model, feeder, scenarios, params)
    build_objective(model, feeder, scenarios, params)
    if params.fixed:
        fix_variables(model, params.fixed)
    return model
