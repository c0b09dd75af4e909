"""Generate the 13-bus, 4-segment toy feeder used by the end-to-end tests."""
import sys
from pathlib import Path

import yaml

# short three-phase overhead segment (0.1 mi of a typical 4-wire configuration)
R3 = [[0.4576, 0.1560, 0.1535], [0.1560, 0.4666, 0.1580], [0.1535, 0.1580, 0.4615]]
X3 = [[1.0780, 0.5017, 0.3849], [0.5017, 1.0482, 0.4236], [0.3849, 0.4236, 1.0651]]


def scaled(m, k):
    return [[round(v * k, 6) for v in row] for row in m]


def main(out):
    buses = [{"id": str(i), "phases": "ABC"} for i in range(12)] + [{"id": "12", "phases": "A"}]
    lines = [(1, 2), (2, 3), (4, 5), (5, 6), (7, 8), (8, 9), (10, 11)]
    branches = [{"id": f"L{a}-{b}", "from": str(a), "to": str(b), "phases": "ABC", "kind": "line",
                 "r": scaled(R3, 0.1), "x": scaled(X3, 0.1)} for a, b in lines]
    branches.append({"id": "L11-12", "from": "11", "to": "12", "phases": "A", "kind": "line",
                     "r": [[round(1.3292 * 0.1, 6)]], "x": [[round(1.3475 * 0.1, 6)]]})
    for name, (a, b), elig in (("S1", (0, 1), True), ("S2", (3, 4), False),
                               ("S3", (6, 7), True), ("S4", (9, 10), False)):
        branches.append({"id": name, "from": str(a), "to": str(b), "phases": "ABC",
                         "kind": "switch", "ssw_eligible": elig})
    segments = [
        {"id": 0, "buses": ["0"], "tg": True},
        {"id": 1, "buses": ["1", "2", "3"], "candidate": True, "bess_sites": ["2", "3"]},
        {"id": 2, "buses": ["4", "5", "6"]},
        {"id": 3, "buses": ["7", "8", "9"], "candidate": True, "bess_sites": ["8"]},
        {"id": 4, "buses": ["10", "11", "12"]},
    ]

    def three(p):
        return {"A": p, "B": p, "C": p}

    loads = [
        {"bus": "2", "kind": "critical", "p": three(0.05)},
        {"bus": "3", "kind": "noncritical", "p": three(0.04)},
        {"bus": "5", "kind": "critical", "p": three(0.06)},
        {"bus": "6", "kind": "noncritical", "p": three(0.05)},
        {"bus": "8", "kind": "critical", "p": three(0.05)},
        {"bus": "9", "kind": "noncritical", "p": three(0.03)},
        {"bus": "11", "kind": "critical", "p": three(0.04)},
        {"bus": "12", "kind": "noncritical", "p": {"A": 0.05}},
    ]
    doc = {
        "name": "toy13",
        "nominal_voltage": 2401.8,
        "thermal_limit": 5.0,
        "power_factor_angle": 0.451,
        "buses": buses,
        "branches": branches,
        "segments": segments,
        "loads": loads,
        "pv": [{"bus": "3", "rating": 0.15}, {"bus": "8", "rating": 0.10}],
        "tg": {"bus": "0", "s_max": 5.0},
    }
    Path(out).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/blackstart/data/toy13.yaml")
