"""Generate the 123-bus, 11-segment fixture.

Topology follows the standard 123-node test feeder with the voltage
regulators collapsed onto their source buses and the transformer lateral
dropped.  Eleven sectionalizing switches plus one tie split the feeder into
a transmission-grid section (bus 150) and eleven segments.  Spot loads,
critical/non-critical labels and PV sites are synthesized from a fixed seed;
the published load data do not carry a criticality label anyway.
"""
import random
import sys
from pathlib import Path

import yaml

LINES = """
1-2 B; 1-3 C; 1-7 ABC; 3-4 C; 3-5 C; 5-6 C; 7-8 ABC; 8-12 B; 8-9 A; 8-13 ABC; 9-14 A;
13-34 C; 14-11 A; 14-10 A; 15-16 C; 15-17 C; 18-19 A; 18-21 ABC; 19-20 A; 21-22 B;
21-23 ABC; 23-24 C; 25-26 AC; 25-28 ABC; 26-27 AC; 26-31 C; 27-33 A; 28-29 ABC; 29-30 ABC;
30-250 ABC; 31-32 C; 34-15 C; 35-36 AB; 35-40 ABC; 36-37 A; 36-38 B; 38-39 B; 40-41 C;
40-42 ABC; 42-43 B; 42-44 ABC; 44-45 A; 44-47 ABC; 45-46 A; 47-48 ABC; 47-49 ABC; 49-50 ABC;
50-51 ABC; 51-151 ABC; 52-53 ABC; 53-54 ABC; 54-55 ABC; 54-57 ABC; 55-56 ABC; 57-58 B;
57-60 ABC; 58-59 B; 60-61 ABC; 62-63 ABC; 63-64 ABC; 64-65 ABC; 65-66 ABC; 67-68 A;
67-97 ABC; 68-69 A; 69-70 A; 70-71 A; 72-73 C; 72-76 ABC; 73-74 C; 74-75 C; 76-77 ABC;
77-78 ABC; 78-79 ABC; 78-80 ABC; 80-81 ABC; 81-82 ABC; 81-84 C; 82-83 ABC; 84-85 C;
86-87 ABC; 87-88 A; 87-89 ABC; 89-90 B; 89-91 ABC; 91-92 C; 91-93 ABC; 93-94 A; 93-95 ABC;
95-96 B; 98-99 ABC; 99-100 ABC; 101-102 C; 101-105 ABC; 102-103 C; 103-104 C; 105-106 B;
105-108 ABC; 106-107 B; 108-109 A; 108-300 ABC; 109-110 A; 110-111 A; 110-112 A; 112-113 A;
113-114 A; 135-35 ABC; 149-1 ABC; 152-52 ABC; 160-67 ABC; 197-101 ABC
"""

# (from, to, SSW-eligible)
SWITCHES = [
    (150, 149, True), (13, 18, False), (13, 152, True), (18, 135, True), (23, 25, False),
    (60, 160, True), (60, 62, True), (97, 98, True), (97, 197, True), (67, 72, False),
    (76, 86, False), (151, 300, True),
]

SEGMENTS = {
    1: [149, *range(1, 18), 34],
    2: list(range(18, 25)),
    3: [*range(25, 34), 250],
    4: [135, *range(35, 52), 151],
    5: list(range(62, 67)),
    6: [152, *range(52, 62)],
    7: [197, *range(101, 115), 300],
    8: [98, 99, 100],
    9: [160, *range(67, 72), 97],
    10: list(range(72, 86)),
    11: list(range(86, 97)),
}
CANDIDATES = {2: [18, 21], 5: [62, 63], 8: [98, 99], 10: [72, 76]}

# overhead configurations, ohm per mile
R3 = [[0.4576, 0.1560, 0.1535], [0.1560, 0.4666, 0.1580], [0.1535, 0.1580, 0.4615]]
X3 = [[1.0780, 0.5017, 0.3849], [0.5017, 1.0482, 0.4236], [0.3849, 0.4236, 1.0651]]
R1, X1 = 1.3292, 1.3475


def _sub(m, idx):
    return [[m[i][j] for j in idx] for i in idx]


def impedance(phases, miles):
    if len(phases) == 1:
        return [[round(R1 * miles, 6)]], [[round(X1 * miles, 6)]]
    idx = ["ABC".index(p) for p in phases]
    scale = lambda m: [[round(v * miles, 6) for v in row] for row in m]
    return scale(_sub(R3, idx)), scale(_sub(X3, idx))


def main(out, seed=123):
    rng = random.Random(seed)
    lines = []
    for item in LINES.replace("\n", " ").split(";"):
        ends, phases = item.split()
        a, b = ends.split("-")
        lines.append((int(a), int(b), phases))

    phases: dict[int, set] = {}
    for a, b, ph in lines:
        for n in (a, b):
            phases.setdefault(n, set()).update(ph)
    for a, b, _ in SWITCHES:
        for n in (a, b):
            phases.setdefault(n, set()).update("ABC")
    assert len(phases) == 123, len(phases)
    owner = {bus: k for k, buses in SEGMENTS.items() for bus in buses}
    assert set(owner) | {150} == set(phases)

    branches = []
    for a, b, ph in lines:
        miles = round(rng.uniform(0.02, 0.06), 4)
        r, x = impedance(ph, miles)
        branches.append({"id": f"L{a}-{b}", "from": str(a), "to": str(b), "phases": ph,
                         "kind": "line", "r": r, "x": x})
    for a, b, elig in SWITCHES:
        branches.append({"id": f"S{a}-{b}", "from": str(a), "to": str(b), "phases": "ABC",
                         "kind": "switch", "ssw_eligible": elig})

    segments = [{"id": 0, "buses": ["150"], "tg": True}]
    for k, buses in SEGMENTS.items():
        seg = {"id": k, "buses": [str(b) for b in buses]}
        if k in CANDIDATES:
            seg["candidate"] = True
            seg["bess_sites"] = [str(b) for b in CANDIDATES[k]]
        segments.append(seg)

    # 85 spot loads of 20 or 40 kW per phase; about 40 percent critical
    load_buses = sorted(rng.sample(sorted(b for b in phases if b not in (150, 149)), 85))
    loads = []
    for bus in load_buses:
        ph = sorted(phases[bus])
        kw = rng.choice((20, 40)) if len(ph) == 1 else rng.choice((20, 40)) / 2
        kind = "critical" if rng.random() < 0.4 else "noncritical"
        loads.append({"bus": str(bus), "kind": kind, "p": {p: round(kw / 1000, 4) for p in ph}})

    pv_sites = {18: 0.165, 47: 0.16, 65: 0.16, 76: 0.16, 98: 0.16, 108: 0.16}
    doc = {
        "name": "ieee123",
        "nominal_voltage": 2401.8,
        "thermal_limit": 5.0,
        "power_factor_angle": 0.451,
        "buses": [{"id": str(b), "phases": "".join(sorted(phases[b]))} for b in sorted(phases)],
        "branches": branches,
        "segments": segments,
        "loads": loads,
        "pv": [{"bus": str(b), "rating": r} for b, r in pv_sites.items()],
        "tg": {"bus": "150", "s_max": 10.0},
    }
    Path(out).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/blackstart/data/ieee123.yaml")
