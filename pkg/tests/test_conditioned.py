from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shellwalk.conditioned import (LimitProfile, TailNotConverged, bernoulli_gamma, d1_profile,
                                   empirical_law, endpoint_law_finite_horizon,
                                   endpoint_law_h_transform, h_transform_paths, limit_profile,
                                   profile_json, rejection_paths, sample_conditioned,
                                   total_variation, trivial_profile)
from shellwalk.environment import (bernoulli_delta, finite_delta, rademacher, two_point,
                                   uniform_symmetric, zero_delta)
from shellwalk.levelsets import face_class_law


# -- independent oracles ------------------------------------------------------

def h_law_by_enumeration(T):
    law = {}
    for steps in itertools.product((1, -1), repeat=T):
        x, w = 0, Fraction(1)
        for s in steps:
            up = Fraction(x + 2, 2 * (x + 1))
            w *= up if s == 1 else 1 - up
            x += s
            if x < 0:
                break
        else:
            law[x] = law.get(x, 0) + w
    return law


def nonneg_paths(length, y):
    # reflection principle: walks of `length` steps from y >= 0 never below 0
    total = 0
    for z in range(0, y + length + 1):
        if (length + z - y) % 2:
            continue
        up = (length + z - y) // 2
        up_reflected = (length + z + y + 2) // 2
        a = math.comb(length, up) if 0 <= up <= length else 0
        b = math.comb(length, up_reflected) if 0 <= up_reflected <= length else 0
        total += a - b
    return total


def finite_horizon_law_exact(T, horizon):
    counts = {}
    for steps in itertools.product((1, -1), repeat=T):
        s = np.cumsum(steps)
        if s.min() >= 0:
            counts[int(s[-1])] = counts.get(int(s[-1]), 0) + 1
    w = {y: c * nonneg_paths(horizon - T, y) for y, c in counts.items()}
    z = sum(w.values())
    return {y: Fraction(v, z) for y, v in w.items()}


def test_h_transform_law_matches_enumeration():
    got = endpoint_law_h_transform(10)
    want = h_law_by_enumeration(10)
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(float(want[k]), rel=1e-13)
    assert sum(want.values()) == 1


def test_finite_horizon_law_matches_reflection_principle():
    got = endpoint_law_finite_horizon(10, 200)
    want = finite_horizon_law_exact(10, 200)
    for k in want:
        assert got[k] == pytest.approx(float(want[k]), rel=1e-10)


def test_exact_tv_at_horizon_ten():
    # frozen from the reflection-principle oracle above
    tv = total_variation(endpoint_law_h_transform(10), endpoint_law_finite_horizon(10, 200))
    exact = total_variation({k: float(v) for k, v in h_law_by_enumeration(10).items()},
                            {k: float(v) for k, v in finite_horizon_law_exact(10, 200).items()})
    assert tv == pytest.approx(exact, abs=1e-12)
    assert tv == pytest.approx(0.007774805496943703, abs=1e-12)


def test_finite_horizon_approaches_h_transform():
    tvs = [total_variation(endpoint_law_h_transform(10), endpoint_law_finite_horizon(10, h))
           for h in (20, 50, 200, 800)]
    assert all(a > b for a, b in zip(tvs, tvs[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 63), st.integers(1, 300))
def test_exact_sampler_path_constraints(seed, W):
    p = sample_conditioned(rademacher(), W, seed)
    p.check()
    assert p.values.shape == (2 * W + 1,)
    assert np.all(np.abs(np.diff(p.values)) == 1) or W == 1 and abs(p.values[0] - 0) == 1


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 63), st.integers(1, 100))
def test_extension_keeps_the_prefix(seed, W):
    p = sample_conditioned(rademacher(), W, seed)
    q = p.extend(3 * W)
    assert np.array_equal(q.window(-W, W), p.values)
    q.check()
    r = q.extend(5 * W)
    assert np.array_equal(r.window(-3 * W, 3 * W), q.values)


def test_h_transform_paths_match_exact_law():
    paths = h_transform_paths(200000, 10, 1)
    assert paths.min() >= 0
    tv = total_variation(empirical_law(paths[:, -1].tolist()), endpoint_law_h_transform(10))
    assert tv < 0.01


def test_rejection_paths_respect_constraint():
    paths, attempts = rejection_paths(two_point(-1, 2), 500, 8, 40, 3)
    assert paths.shape == (500, 8) and paths.min() >= 0
    assert attempts >= 500
    strict, _ = rejection_paths(rademacher(), 200, 5, 20, 4, strict=True)
    assert strict.min() > 0


@pytest.mark.parametrize("law", [uniform_symmetric(1), two_point(-1, 2)])
def test_rejection_sampler_for_other_laws(law):
    p = sample_conditioned(law, 20, 5, horizon=60)
    p.check()
    with pytest.raises(TailNotConverged):
        p.extend(40)


def test_exact_sampler_needs_rademacher():
    with pytest.raises(ValueError):
        sample_conditioned(two_point(-1, 2), 10, 0, method="exact")


# -- profiles ---------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 3])
def test_trivial_profile_equals_general_bitwise(d):
    for seed in range(5):
        path = sample_conditioned(rademacher(), 256, seed)
        gen = limit_profile(path, face_class_law(zero_delta(), d), 20, d)
        triv = trivial_profile(gen.path, d, 20)
        assert np.array_equal(gen.values, triv.values)
        assert gen.normalizer == triv.normalizer
        assert gen.meta["sup_all"] == triv.meta["sup_all"]


@pytest.mark.parametrize("d", [2, 3])
def test_bernoulli_gamma_matches_general(d):
    path = sample_conditioned(rademacher(), 512, 7)
    gen = limit_profile(path, face_class_law(bernoulli_delta(0.3), d), 15, d)
    gam = bernoulli_gamma(gen.path, d, 0.3, 15)
    assert np.allclose(gen.values, gam.values, rtol=1e-12, atol=0)


def test_d1_profile_zero_delta_is_trivial():
    path = limit_profile(sample_conditioned(rademacher(), 256, 3),
                         face_class_law(zero_delta(), 1), 10, 1).path
    a = d1_profile(path, lambda i: 0, 10)
    b = trivial_profile(path, 1, 10)
    assert np.allclose(a.values, b.values, rtol=1e-13)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 9), st.sampled_from([zero_delta(), bernoulli_delta(0.5),
                                                 finite_delta([-1, 0, 1], [0.2, 0.6, 0.2])]))
def test_profile_is_a_sub_probability(seed, law):
    path = sample_conditioned(rademacher(), 128, seed)
    prof = limit_profile(path, face_class_law(law, 2), 10, 2)
    assert np.all(prof.values >= 0)
    assert prof.values.sum() <= 1 + 1e-12
    assert prof.tail_bound <= 1e-6
    assert 0 < prof.sup <= prof.meta["sup_all"] <= 1


def test_profile_tail_raises_for_short_fixed_path():
    p = sample_conditioned(two_point(-1, 2), 6, 0, horizon=24)
    with pytest.raises(TailNotConverged):
        limit_profile(p, face_class_law(zero_delta(), 2), 2, 2)


def test_profile_rejects_bad_proportions():
    path = sample_conditioned(rademacher(), 64, 0)
    with pytest.raises(ValueError):
        limit_profile(path, {(0, (-1, 1)): 0.5}, 2, 1)


def test_profile_serialisation():
    path = sample_conditioned(rademacher(), 128, 0)
    prof = limit_profile(path, face_class_law(zero_delta(), 2), 3, 2)
    text = prof.to_csv()
    assert text.startswith("i,Pi_bar\n-3,")
    assert '"profile"' in profile_json(prof)
    assert prof.value(prof.argmax) == prof.sup
    assert isinstance(prof, LimitProfile)
