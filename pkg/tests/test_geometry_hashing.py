from __future__ import annotations

import itertools

import numpy as np
from hypothesis import given, settings, strategies as st

from shellwalk import _hashing
from shellwalk.geometry import (ball_array, box_coordinates, box_sup_norm, face_interior_cardinality,
                                is_face_interior, iter_shell, neighbors, shell_array,
                                shell_cardinality, sup_norm)


def brute_shell(k, d):
    return sorted(p for p in itertools.product(range(-k, k + 1), repeat=d) if max(map(abs, p)) == k)


@given(st.integers(0, 6), st.integers(1, 3))
def test_shell_matches_brute_force(k, d):
    pts = sorted(map(tuple, shell_array(k, d).tolist()))
    assert pts == brute_shell(k, d)
    assert len(pts) == shell_cardinality(k, d)
    assert sorted(iter_shell(k, d)) == pts


@given(st.integers(1, 8), st.integers(1, 4))
def test_shell_cardinality_formula(k, d):
    assert shell_cardinality(k, d) == (2 * k + 1) ** d - (2 * k - 1) ** d


@given(st.integers(1, 6), st.integers(1, 3))
def test_face_interior_count(k, d):
    n = sum(is_face_interior(p, k) for p in brute_shell(k, d))
    assert n == face_interior_cardinality(k, d)


def test_face_interior_has_one_outward_and_one_inward_neighbour():
    for p in brute_shell(4, 3):
        if not is_face_interior(p, 4):
            continue
        shells = sorted(sup_norm(y) for y in neighbors(p))
        assert shells == [3] + [4] * 4 + [5]


def test_neighbors_order_and_count():
    assert neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]
    assert len(neighbors((3, -2, 7))) == 6


def test_ball_is_ordered_by_shell():
    b = ball_array(3, 2)
    r = np.abs(b).max(axis=1)
    assert len(b) == 49
    assert np.all(np.diff(r) >= 0)


def test_box_sup_norm_consistent():
    c = box_coordinates(3, 2)
    assert np.array_equal(box_sup_norm(3, 2), np.abs(c).max(axis=1))


def test_site_draws_independent_of_query_order():
    values = np.array([0, 1], dtype=np.int64)
    cdf = np.array([0.5, 1.0])
    pts = ball_array(4, 2).astype(np.int64)
    a = _hashing.site_draws(11, pts, values, cdf)
    perm = np.random.default_rng(0).permutation(len(pts))
    b = _hashing.site_draws(11, pts[perm], values, cdf)
    assert np.array_equal(a[perm], b)
    c = _hashing.site_draws(12, pts, values, cdf)
    assert not np.array_equal(a, c)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 63 - 1), st.integers(0, 10 ** 6))
def test_index_draws_are_chunk_invariant(seed, start):
    values = np.array([-1.0, 1.0])
    cdf = np.array([0.5, 1.0])
    whole = _hashing.index_draws(seed, start, 50, values, cdf)
    parts = np.concatenate([_hashing.index_draws(seed, start, 20, values, cdf),
                            _hashing.index_draws(seed, start + 20, 30, values, cdf)])
    assert np.array_equal(whole, parts)


def test_uniform_draws_look_uniform():
    values = np.arange(4, dtype=np.float64)
    cdf = np.array([0.25, 0.5, 0.75, 1.0])
    x = _hashing.index_draws(3, 0, 200000, values, cdf)
    freq = np.bincount(x.astype(int), minlength=4) / len(x)
    assert np.abs(freq - 0.25).max() < 0.005
