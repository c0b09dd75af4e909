import math

import pytest
from hypothesis import given, strategies as st

from blackstart.clpu import ClpuCoefficients, clpu_multiplier, load_expressions, noncritical_links, staircase
from blackstart.milp.catalog import LinExpr, MilpModel

BETA = ClpuCoefficients()


def energized_at(t0, horizon=12):
    return [1 if t >= t0 else 0 for t in range(horizon)]


@pytest.mark.parametrize("t0", range(12))
def test_staircase_every_energization_time(t0):
    m = staircase(energized_at(t0), BETA)
    expected = [0.0] * t0 + [1.6, 1.3, 1.1] + [1.0] * 12
    assert m == pytest.approx(expected[:12])


def test_never_energized():
    assert staircase([0] * 12, BETA) == [0.0] * 12


def test_pre_horizon_history_is_dead():
    # live at t=0 counts as an energization at t=0
    assert staircase([1] * 4, BETA) == pytest.approx([1.6, 1.3, 1.1, 1.0])


def test_steady_state_without_step():
    # a window that starts after the transient has decayed
    hist = [1] * 8
    assert [clpu_multiplier(hist, BETA, t) for t in range(3, 8)] == pytest.approx([1.0] * 5)


def test_coefficients_validated():
    with pytest.raises(ValueError):
        ClpuCoefficients((0.1, 0.3, 0.1))
    with pytest.raises(ValueError):
        ClpuCoefficients((0.5, 0.2, -0.1))


betas = st.tuples(st.floats(0, 2), st.floats(0, 2), st.floats(0, 2)).map(
    lambda b: ClpuCoefficients(tuple(sorted(b, reverse=True))))


@given(betas, st.integers(0, 11))
def test_decay_properties(beta, t0):
    m = staircase(energized_at(t0), beta)
    assert all(x == 0 for x in m[:t0])
    live = m[t0:]
    assert all(x >= 1 - 1e-12 for x in live)
    assert all(a >= b - 1e-12 for a, b in zip(live, live[1:]))
    assert all(math.isclose(x, 1.0) for x in live[3:])


def test_symbolic_matches_numeric():
    model = MilpModel()
    u = [model.add_var("u", t, binary=True) for t in range(6)]
    hist = energized_at(2, 6)
    for t in range(6):
        expr = clpu_multiplier(u, BETA, t)
        assert isinstance(expr, LinExpr)
        assert expr.value({v.index: hist[v.index] for v in u}) == pytest.approx(clpu_multiplier(hist, BETA, t))


def test_load_expressions_power_factor():
    le = load_expressions(0.1, 0.451, energized_at(0, 4), BETA, 3)
    assert le.p.const == pytest.approx(0.1)
    assert le.q.const / le.p.const == pytest.approx(0.4843, abs=1e-4)


def test_noncritical_links():
    model = MilpModel()
    z = [model.add_var("z", t, binary=True) for t in range(3)]
    u = [model.add_var("u", t, binary=True) for t in range(3)]
    rows = noncritical_links(z, u, 0)
    assert [r[0] for r in rows] == ["z_le_seg"]
    rows = noncritical_links(z, u, 2)
    assert {r[0] for r in rows} == {"z_le_seg", "z_latch"}
    # deferral: z = 0 while the segment is live satisfies both rows
    x = {v.index: 0.0 for v in z} | {v.index: 1.0 for v in u}
    for _, lhs, sense in rows:
        assert lhs.value(x) <= 0
