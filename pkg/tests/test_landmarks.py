from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shellwalk.environment import (ConductanceView, EnvironmentField, EnvironmentSpec,
                                   bernoulli_delta, finite_delta)
from shellwalk.geometry import ball_array, shell_array
from shellwalk.landmarks import (ScanBudgetExceeded, find_landmarks, obstacle_height,
                                 quenched_ratios, realized_offsets, scan_valley, shell_extrema)

# S_0..S_11: a dip to -4 at index 5, then a steady climb of 6
STAIR = (0, -1, -2, -1, -3, -4, -3, -2, -1, 0, 1, 2) + tuple(range(3, 23))


def stair_field(d=1):
    return EnvironmentField(EnvironmentSpec(d), fixed_s=(STAIR, (0, 1, 2, 3)))


def test_staircase_by_hand():
    lm = find_landmarks(stair_field(), log_n=4.0)
    # threshold 4 + 2 = 6 first reached at index 11 (2 - (-4))
    assert lm.threshold == 6.0
    assert (lm.M_n, lm.m_n) == (11, 5)
    # only climb on the way in: S_3 - S_2 = 1
    assert lm.Delta_n == 1.0
    assert lm.conditions["c1"] and lm.conditions["c3"]
    assert not lm.conditions["c2"]          # m_n = 5 is below (log n)^{1.8}
    assert not lm.in_A_n


def test_increasing_potential_has_no_valley():
    f = EnvironmentField(EnvironmentSpec(1), fixed_s=(tuple(range(40)), (0,)))
    lm = find_landmarks(f, log_n=4.0)
    assert not lm.valley and lm.m_n is None
    assert lm.to_dict()["valley"] is False


def test_flat_potential_exhausts_budget():
    f = EnvironmentField(EnvironmentSpec(1), fixed_s=((0,) * 50, (0,)))
    with pytest.raises(ScanBudgetExceeded):
        find_landmarks(f, log_n=4.0)


def brute_obstacle(vmax, vmin, m, M):
    best = 0.0
    for i in range(m + 1):
        for j in range(i, m + 1):
            best = max(best, vmax[j] - vmin[i])
    for j in range(m, M + 1):
        for i in range(j, M + 1):
            best = max(best, vmax[j] - vmin[i])
    return best


@settings(max_examples=60)
@given(st.lists(st.integers(-5, 5), min_size=2, max_size=30), st.data())
def test_obstacle_height_matches_brute_force(vals, data):
    vmin = np.array(vals, dtype=float)
    vmax = vmin + np.array(data.draw(st.lists(st.integers(0, 3), min_size=len(vals),
                                              max_size=len(vals))))
    M = len(vals) - 1
    m = data.draw(st.integers(0, M))
    assert obstacle_height(vmax, vmin, m, M) == brute_obstacle(vmax, vmin, m, M)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 63), st.floats(2.0, 8.0))
def test_scan_definitions(seed, log_n):
    f = EnvironmentField(EnvironmentSpec(2, seed=seed))
    thr = log_n + math.sqrt(log_n)
    M, m = scan_valley(f.s_range, thr)
    s = f.s_range(0, M)
    runmin = np.minimum.accumulate(s)
    rise = s - runmin
    assert rise[M] >= thr and np.all(rise[:M] < thr)
    if m is not None:
        assert s[m] == s.min() and 0 < m <= M
        assert np.all(s[1:m] > s[m])
    else:
        assert np.all(s[1:] > 0)


def test_shell_extrema_match_direct_enumeration():
    f = EnvironmentField(EnvironmentSpec(2, delta_law=finite_delta([-1, 0, 2], [0.3, 0.4, 0.3]),
                                         seed=6))
    vmax, vmin = shell_extrema(f, 12)
    for k in range(13):
        v = f.potential_array(shell_array(k, 2))
        assert vmax[k] == v.max() and vmin[k] == v.min()
    offs = realized_offsets(f, 12)
    assert offs[0] in ([-1], [0], [2])
    assert all(len(o) == 3 for o in offs[3:])


def test_ratios_on_staircase_by_hand():
    f = stair_field()
    view = ConductanceView(f)
    lm = find_landmarks(f, log_n=4.0)
    q = quenched_ratios(view, lm, [0, 1, -1], shift=False)
    pts = ball_array(lm.M_n, 1)
    total = math.fsum(view.capacitance(tuple(p)) for p in pts.tolist())
    for l in (0, 1, -1):
        k = lm.m_n + l
        want = math.fsum(view.capacitance(tuple(p)) for p in shell_array(k, 1).tolist()) / total
        assert q.shell_total(l) == pytest.approx(want, rel=1e-13)
    assert q.full_sum == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_ratios_shift_invariant_and_normalised(seed):
    f = EnvironmentField(EnvironmentSpec(2, delta_law=bernoulli_delta(0.5), seed=seed))
    lm = find_landmarks(f, log_n=3.0)
    if not lm.valley:
        return
    a = quenched_ratios(ConductanceView(f), lm, [0, 1])
    b = quenched_ratios(ConductanceView(f), lm, [0, 1], shift=False)
    assert a.full_sum == pytest.approx(1.0, abs=1e-12)
    for x, y in zip(a.entries, b.entries):
        assert x["R"] == pytest.approx(y["R"], rel=1e-9)
        assert x["Rtilde"] == pytest.approx(y["Rtilde"], rel=1e-9)
    assert sum(e["count"] for e in a.entries if e["l"] == 0) == shell_array(lm.m_n, 2).shape[0]


def test_landmarks_need_a_scale():
    with pytest.raises(ValueError):
        find_landmarks(stair_field(), n=2)
