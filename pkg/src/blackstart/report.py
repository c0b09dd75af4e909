"""Result files: delimited tables plus PNG figures rendered next to them.

Every table starts with ``#`` comment lines saying what it holds and the
units of each column, followed by one header row.  Numbers are written with
a fixed six-decimal format so identical plans give identical files.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

from .feeder import FeederModel
from .milp.params import BuildParams
from .plan import RestorationPlan, ScenarioTrajectory
from .vsg import freq_indices, response_shape


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def write_table(path: Path, description: Sequence[str], header: Sequence[str],
                rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    for line in description:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue())
    return path


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _clock(plan: RestorationPlan, t: int) -> str:
    h, m = (int(x) for x in plan.start.split(":"))
    total = h * 60 + m + t * plan.dt_minutes
    return f"{(total // 60) % 24:02d}:{total % 60:02d}"


def _segment_restored(feeder: FeederModel, tr: ScenarioTrajectory, store: dict, seg_id: int,
                      t: int) -> float:
    buses = feeder.segment_map[seg_id].buses
    return sum(seq[t] for bus, seq in store.items() if bus in buses)


def _mg_output(plan: RestorationPlan, tr: ScenarioTrajectory, k: int) -> list[float]:
    out = [0.0] * plan.horizon
    for s in plan.installed():
        if s.segment == k:
            for seq in tr.p_bess[s.bus].values():
                out = [a + b for a, b in zip(out, seq)]
    return out


def frequency_events(plan: RestorationPlan, params: BuildParams) -> list[dict]:
    """Exact RoCoF / QSS / nadir of every BESS output step of every installed MG."""
    shape = response_shape(params.vsg)
    fb = params.vsg.base_frequency
    mg: dict[int, float] = {}
    for s in plan.installed():
        mg[s.segment] = mg.get(s.segment, 0.0) + s.s_nom
    out = []
    for tr in plan.scenarios:
        for k, s_nom in sorted(mg.items()):
            p = _mg_output(plan, tr, k)
            f = tr.f_mg[str(k)]
            for t in range(plan.horizon):
                dp = p[t] - (p[t - 1] if t else 0.0)
                ind = freq_indices(params.vsg, shape, f[t - 1] if t else fb, dp, s_nom)
                out.append({"scenario": tr.id, "mg": k, "step": t, "delta_p": dp,
                            "rocof": ind.rocof_max, "qss": ind.f_qss, "nadir": ind.f_nadir})
    return out


def restored_energy(plan: RestorationPlan, tr: ScenarioTrajectory, params: BuildParams) -> float:
    """Weighted restored energy of one scenario (critical and non-critical weights applied)."""
    dt = plan.dt_hours
    cl = sum(sum(seq) for seq in tr.restored_cl.values())
    nl = sum(sum(seq) for seq in tr.restored_nl.values())
    return (params.gamma_cl * cl + params.gamma_nl * nl) * dt


def write_report(plan: RestorationPlan, feeder: FeederModel, params: BuildParams, out: str | Path,
                 figures: bool = True, audit=None) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    T = plan.horizon

    alloc_rows = [("bess", s.bus, s.segment, s.installed, s.s_nom, s.e_nom) for s in plan.siting]
    alloc_rows += [("ssw", sw, "", placed, "", "") for sw, placed in sorted(plan.ssw_placement.items())]
    files.append(write_table(
        out / "allocation.csv",
        ["Resource allocation of the plan.",
         "kind=bess rows: candidate BESS site, its MG segment, installed flag, rated power (MW) and energy (MWh).",
         "kind=ssw rows: SSW-eligible switch and whether a synchronization switch is placed there.",
         f"objective={_fmt(float(plan.objective)) if plan.objective is not None else 'n/a'} "
         f"status={plan.status} backend={plan.backend}"],
        ["kind", "id", "segment", "installed", "s_nom_mw", "e_nom_mwh"], alloc_rows))

    grid = [s.id for s in feeder.grid_segments]
    sites = [s.bus for s in plan.installed()]
    mgs = sorted({s.segment for s in plan.installed()})
    for tr in plan.scenarios:
        header = ["step", "clock", "tg_live"]
        header += [f"seg{k}_live" for k in grid]
        header += [f"seg{k}_cl_mw" for k in grid] + [f"seg{k}_nl_mw" for k in grid]
        header += [f"soc_{b}" for b in sites] + [f"f_mg{k}_hz" for k in mgs]
        header += ["v_min_pu", "v_max_pu"]
        rows = []
        for t in range(T):
            row = [t, _clock(plan, t), tr.tg[t] if tr.tg else 0]
            row += [tr.segment[str(k)][t] for k in grid]
            row += [_segment_restored(feeder, tr, tr.restored_cl, k, t) for k in grid]
            row += [_segment_restored(feeder, tr, tr.restored_nl, k, t) for k in grid]
            for b in sites:
                e_nom = next(s.e_nom for s in plan.siting if s.bus == b)
                row.append(tr.energy[b][t] / e_nom if e_nom else 0.0)
            row += [tr.f_mg[str(k)][t] for k in mgs]
            vs = [seq[t] ** 0.5 for per in tr.v_sq.values() for seq in per.values() if seq[t] > 1e-9]
            row += [min(vs) if vs else 0.0, max(vs) if vs else 0.0]
            rows.append(row)
        files.append(write_table(
            out / f"trajectory_{tr.id}.csv",
            [f"Restoration trajectory of scenario {tr.id} (season {tr.season}, "
             f"grid outage {tr.outage_minutes} min, probability {tr.probability:.6f}).",
             "Per step: live flags, restored critical (cl) and non-critical (nl) load per segment in MW "
             "including cold-load pick-up, BESS state of charge (fraction), MG frequency (Hz), "
             "and extreme voltage magnitudes over live buses (pu)."],
            header, rows))

    # expected restored load per segment, averaged over scenarios
    rows = []
    for t in range(T):
        row = [t, _clock(plan, t)]
        for store in ("restored_cl", "restored_nl"):
            for k in grid:
                row.append(sum(tr.probability * _segment_restored(feeder, tr, getattr(tr, store), k, t)
                               for tr in plan.scenarios))
        rows.append(row)
    files.append(write_table(
        out / "restored_load.csv",
        ["Probability-weighted restored load per segment and step (MW).",
         "cl = critical, nl = non-critical; cold-load pick-up included."],
        ["step", "clock"] + [f"seg{k}_cl_mw" for k in grid] + [f"seg{k}_nl_mw" for k in grid], rows))

    # envelopes over all scenarios
    rows = []
    for t in range(T):
        socs, freqs, volts = [], [], []
        for tr in plan.scenarios:
            for b in sites:
                e_nom = next(s.e_nom for s in plan.siting if s.bus == b)
                socs.append(tr.energy[b][t] / e_nom)
            freqs += [tr.f_mg[str(k)][t] for k in mgs]
            volts += [seq[t] ** 0.5 for per in tr.v_sq.values() for seq in per.values() if seq[t] > 1e-9]
        rows.append([t, _clock(plan, t)] + [f(x) if x else 0.0 for x in (socs, freqs, volts) for f in (min, max)])
    files.append(write_table(
        out / "envelopes.csv",
        ["Per-step envelopes across all scenarios and installed BESSs:",
         "state of charge (fraction of rated energy), MG frequency (Hz), live-bus voltage magnitude (pu)."],
        ["step", "clock", "soc_min", "soc_max", "f_min_hz", "f_max_hz", "v_min_pu", "v_max_pu"], rows))

    events = frequency_events(plan, params)
    files.append(write_table(
        out / "frequency_indices.csv",
        ["Exact transient frequency indices of every BESS output step (closed form).",
         "delta_p in MW (positive = pick-up), rocof in Hz/s, qss and nadir in Hz."],
        ["scenario", "mg", "step", "delta_p_mw", "rocof_hz_s", "qss_hz", "nadir_hz"],
        [[e["scenario"], e["mg"], e["step"], e["delta_p"], e["rocof"], e["qss"], e["nadir"]] for e in events]))

    files.append(write_table(
        out / "scenario_summary.csv",
        ["Per-scenario probability and weighted restored energy (weight x MWh)."],
        ["scenario", "season", "outage_min", "probability", "restored_weighted"],
        [[tr.id, tr.season, tr.outage_minutes, tr.probability, restored_energy(plan, tr, params)]
         for tr in plan.scenarios]))

    if audit is not None:
        p = out / "audit.json"
        p.write_text(json.dumps(audit.to_dict(), indent=1, default=str) + "\n")
        files.append(p)
    if figures:
        files += render_figures(plan, feeder, params, out, events)
    return files


def render_figures(plan: RestorationPlan, feeder: FeederModel, params: BuildParams, out: Path,
                   events: list[dict] | None = None) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    events = events if events is not None else frequency_events(plan, params)
    meta = {"Software": None}
    T = plan.horizon
    steps = list(range(T))
    files = []

    fig, ax = plt.subplots(figsize=(7, 4))
    grid = [s.id for s in feeder.grid_segments]
    bottom = [0.0] * T
    for kind, store in (("CL", "restored_cl"), ("NL", "restored_nl")):
        for k in grid:
            vals = [sum(tr.probability * _segment_restored(feeder, tr, getattr(tr, store), k, t)
                        for tr in plan.scenarios) for t in steps]
            ax.bar(steps, vals, bottom=bottom, label=f"seg {k} {kind}")
            bottom = [a + b for a, b in zip(bottom, vals)]
    ax.set_xlabel("step")
    ax.set_ylabel("expected restored load (MW)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    p = out / "restored_load.png"
    fig.savefig(p, dpi=100, metadata=meta)
    plt.close(fig)
    files.append(p)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for tr in plan.scenarios:
        for k, seq in sorted(tr.f_mg.items()):
            if any(s.segment == int(k) for s in plan.installed()):
                axes[0].plot(steps, seq, lw=0.8)
        for s in plan.installed():
            axes[1].plot(steps, [e / s.e_nom for e in tr.energy[s.bus]], lw=0.8)
    rng = params.ranges
    for y in rng.frequency:
        axes[0].axhline(y, color="k", ls="--", lw=0.6)
    axes[0].set_ylabel("MG frequency (Hz)")
    axes[1].set_ylabel("state of charge")
    for ax in axes:
        ax.set_xlabel("step")
    fig.tight_layout()
    p = out / "envelopes.png"
    fig.savefig(p, dpi=100, metadata=meta)
    plt.close(fig)
    files.append(p)

    fig, ax = plt.subplots(figsize=(5, 4))
    moved = [e for e in events if abs(e["delta_p"]) > 1e-9]
    ax.scatter([e["nadir"] for e in moved], [e["rocof"] for e in moved], s=10)
    ax.axvspan(*rng.nadir, color="g", alpha=0.08)
    ax.axhspan(*rng.rocof, color="g", alpha=0.08)
    ax.set_xlabel("frequency nadir (Hz)")
    ax.set_ylabel("RoCoF (Hz/s)")
    fig.tight_layout()
    p = out / "frequency_indices.png"
    fig.savefig(p, dpi=100, metadata=meta)
    plt.close(fig)
    files.append(p)
    return files
