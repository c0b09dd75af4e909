import itertools
import math

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from blackstart.feeder import (FeederError, PartitionError, derive_sync_sets, dump_feeder, feeder_to_dict,
                               load_feeder, parse_feeder)


def test_toy5_counts(toy5):
    assert len(toy5.buses) == 5
    assert len(toy5.grid_segments) == 2
    assert len(toy5.switches) == 1
    assert toy5.tg is None


def test_ieee123_counts(ieee123):
    assert len(ieee123.buses) == 123
    assert len(ieee123.grid_segments) == 11
    assert len(ieee123.switches) == 12
    assert [s.id for s in ieee123.segments if s.is_tg] == [0]


def test_bess_sites_are_three_phase(ieee123, toy13):
    for f in (ieee123, toy13):
        bmap = f.bus_map
        for seg in f.candidate_segments:
            assert seg.bess_sites
            assert all(bmap[b].three_phase and b in seg.buses for b in seg.bess_sites)


def _doc(f):
    return feeder_to_dict(f)


def test_bus_in_two_segments_is_rejected(toy5):
    doc = _doc(toy5)
    doc["segments"][1]["buses"].append("1")
    with pytest.raises(PartitionError, match="listed in segments"):
        parse_feeder(yaml.safe_dump(doc))


def test_line_across_segments_is_rejected(toy5):
    doc = _doc(toy5)
    for br in doc["branches"]:
        if br["id"] == "S1":
            br["kind"] = "line"
    with pytest.raises(PartitionError, match="crosses segments"):
        parse_feeder(yaml.safe_dump(doc))


def test_error_reports_line_number():
    text = "name: bad\nbuses:\n  - {id: '0', phases: ABC}\n  - {id: '1', phases: XYZ}\nbranches: []\nsegments: []\n"
    with pytest.raises(FeederError) as err:
        parse_feeder(text)
    assert err.value.line == 4


def test_disconnected_feeder_rejected(toy5):
    doc = _doc(toy5)
    doc["branches"] = [b for b in doc["branches"] if b["id"] != "L3-4"]
    with pytest.raises(FeederError, match="disconnected"):
        parse_feeder(yaml.safe_dump(doc))


@pytest.mark.parametrize("name", ["toy5", "toy13", "ieee123"])
def test_round_trip(name, request):
    f = request.getfixturevalue(name)
    again = parse_feeder(dump_feeder(f))
    assert again == f


@pytest.mark.parametrize("name", ["toy5", "toy13", "ieee123"])
def test_partition_and_boundary(name, request):
    f = request.getfixturevalue(name)
    assert sum(len(s.buses) for s in f.segments) == len(f.buses)
    for a, b in itertools.combinations(f.segments, 2):
        assert not a.buses & b.buses
    for sw in f.switches:
        owners = [s.id for s in f.segments if sw.id in s.boundary_switches]
        assert len(owners) == 2
        assert {f.segment_of(sw.from_bus).id, f.segment_of(sw.to_bus).id} == set(owners)


# -- random radial feeders ---------------------------------------------------

@st.composite
def radial_feeders(draw):
    n = draw(st.integers(3, 14))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    cut = [draw(st.booleans()) for _ in parents]
    phases = ["ABC"] + [draw(st.sampled_from(["ABC", "ABC", "A", "B", "C"])) for _ in parents]
    # a lateral cannot carry a phase its parent lacks
    for i, p in enumerate(parents, start=1):
        if not set(phases[i]) <= set(phases[p]):
            phases[i] = phases[p]
    # segments: connected components after cutting switch edges
    owner = list(range(n))

    def find(x):
        while owner[x] != x:
            x = owner[x]
        return x
    branches = []
    for i, (p, c) in enumerate(zip(parents, cut), start=1):
        c = c and phases[i] == "ABC" and phases[p] == "ABC"
        ph = phases[i]
        k = len(ph)
        if c:
            branches.append({"id": f"S{i}", "from": str(p), "to": str(i), "phases": ph, "kind": "switch"})
        else:
            owner[find(i)] = find(p)
            diag = [[0.01 if a == b else 0.004 for b in range(k)] for a in range(k)]
            branches.append({"id": f"L{i}", "from": str(p), "to": str(i), "phases": ph, "kind": "line",
                             "r": diag, "x": diag})
    groups: dict[int, list[str]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(str(i))
    segments = []
    for sid, (root, members) in enumerate(sorted(groups.items()), start=1):
        three = [b for b in members if phases[int(b)] == "ABC"]
        segments.append({"id": sid, "buses": members, "candidate": bool(three) and draw(st.booleans())})
    loads = [{"bus": str(i), "kind": draw(st.sampled_from(["critical", "noncritical"])),
              "p": {ph: 0.01 for ph in phases[i]}} for i in range(n) if draw(st.booleans())]
    doc = {"name": "random", "buses": [{"id": str(i), "phases": phases[i]} for i in range(n)],
           "branches": branches, "segments": segments, "loads": loads}
    return doc, n, sum(cut)


@settings(max_examples=50, deadline=None)
@given(radial_feeders())
def test_random_feeders_round_trip_and_partition(case):
    doc, n, _ = case
    f = parse_feeder(yaml.safe_dump(doc))
    assert len(f.buses) == n
    assert sum(len(s.buses) for s in f.segments) == n
    assert len(f.grid_segments) == len(f.switches) + 1  # a tree cut at every switch
    assert parse_feeder(dump_feeder(f)) == f


# -- synchronization sets ----------------------------------------------------

def test_sync_sets_three():
    pairs, triples = derive_sync_sets([2, 5, 8])
    assert set(pairs) == {(2, 5), (2, 8), (5, 8)}
    assert len(triples) == 3
    for a, b, left in triples:
        assert set(left) == set(a) ^ set(b)


def test_sync_sets_degenerate():
    assert derive_sync_sets([4]) == ((), ())


def test_sync_sets_four():
    pairs, triples = derive_sync_sets([1, 2, 3, 4])
    assert len(pairs) == 6
    assert len(triples) == 12


@given(st.sets(st.integers(0, 40), max_size=8))
def test_sync_sets_match_brute_force(cands):
    pairs, triples = derive_sync_sets(cands)
    n = len(cands)
    assert len(pairs) == math.comb(n, 2)
    brute = {frozenset((a, b)) for a in itertools.combinations(sorted(cands), 2)
             for b in itertools.combinations(sorted(cands), 2) if len(set(a) & set(b)) == 1}
    assert {frozenset((a, b)) for a, b, _ in triples} == brute
    assert len(triples) == len(brute)


def test_load_feeder_from_path(tmp_path, toy5):
    p = tmp_path / "f.yaml"
    p.write_text(dump_feeder(toy5))
    assert load_feeder(p) == toy5
