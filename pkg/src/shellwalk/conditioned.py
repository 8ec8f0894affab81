"""The two-sided walk conditioned to stay non-negative, and the limit profile.

Right of the origin the path is conditioned to stay ``>= 0``; left of it,
``> 0``.  For +-1 increments both sides are exact Doob transforms of the
simple walk by its renewal function: from ``x >= 0`` the right side steps up
with probability ``(x + 2) / (2(x + 1))``; the left side is ``1 +`` an
independent copy of the right side.  Other increment laws are sampled by
rejection over a finite horizon.

The profile at offset ``i`` is ``sum_j p_j pibar_i^j`` normalised over all
offsets, with ``pibar_i^j = e^{-Sbar[i+a0]/2} sum_l e^{-Sbar[i+a_l]/2}``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .environment import FiniteLaw, rademacher
from .levelsets import signature_str

DEFAULT_TAIL_TOL = 1e-6
DEFAULT_MAX_ATTEMPTS = 10 ** 8


class RejectionBudgetExceeded(RuntimeError):
    """Too few finite-horizon paths survived the sign constraint."""


class TailNotConverged(RuntimeError):
    """The normalising sum's tail estimate stayed above tolerance."""


# -- samplers ---------------------------------------------------------------

@njit(cache=True)
def _h_chain(start, steps, rng, out):
    # Doob transform of the simple walk on {0, 1, ...} with h(x) = x + 1.
    x = start
    for t in range(steps):
        if rng.random() * (2.0 * (x + 1)) < x + 2:
            x += 1
        else:
            x -= 1
        out[t] = x
    return x


@njit(cache=True)
def _h_batch(n, T, rng):
    out = np.empty((n, T), dtype=np.int64)
    for i in range(n):
        _h_chain(0, T, rng, out[i])
    return out


@njit(cache=True)
def _rejection_batch(values, cdf, n, horizon, keep, strict, max_attempts, rng):
    """First ``keep`` values of paths that stay >= 0 (> 0 if strict) for ``horizon`` steps."""
    out = np.empty((n, keep))
    buf = np.empty(horizon)
    attempts = 0
    got = 0
    while got < n:
        if attempts >= max_attempts:
            return out[:got], attempts
        attempts += 1
        s = 0.0
        ok = True
        for t in range(horizon):
            u = rng.random()
            j = 0
            while j < cdf.shape[0] - 1 and u >= cdf[j]:
                j += 1
            s += values[j]
            if s < 0.0 or (strict and s <= 0.0):
                ok = False
                break
            buf[t] = s
        if ok:
            out[got, :] = buf[:keep]
            got += 1
    return out, attempts


def _is_rademacher(law: FiniteLaw) -> bool:
    return sorted(law.support) == [-1.0, 1.0]


@dataclass
class ConditionedPath:
    """``Sbar_i`` for ``|i| <= W``; ``values[i + W]``."""

    W: int
    values: np.ndarray
    sampler: str
    seed: int | None = None
    _state: tuple | None = field(default=None, repr=False)

    def at(self, i: int) -> float:
        return float(self.values[i + self.W])

    def window(self, lo: int, hi: int) -> np.ndarray:
        return self.values[lo + self.W: hi + self.W + 1]

    def check(self) -> None:
        v = self.values
        W = self.W
        assert v[W] == 0
        assert np.all(v[W + 1:] >= 0)
        assert np.all(v[:W] > 0)

    def extend(self, new_W: int) -> "ConditionedPath":
        """Continue both sides to radius ``new_W`` (exact sampler only)."""
        if new_W <= self.W:
            return self
        if self._state is None:
            raise TailNotConverged("path cannot be extended: finite-horizon sampler")
        rng, = self._state
        extra = new_W - self.W
        right = np.empty(extra, dtype=np.int64)
        left = np.empty(extra, dtype=np.int64)
        _h_chain(int(self.values[-1]), extra, rng, right)
        # left side is 1 + a right-type chain; continue from its current state
        _h_chain(int(self.values[0]) - 1, extra, rng, left)
        vals = np.concatenate([(left + 1)[::-1].astype(np.float64), self.values,
                               right.astype(np.float64)])
        return ConditionedPath(new_W, vals, self.sampler, self.seed, self._state)

    def to_dict(self) -> dict:
        return {"W": self.W, "sampler": self.sampler, "seed": self.seed,
                "values": [float(v) for v in self.values]}


def sample_conditioned(law: FiniteLaw | None, W: int, seed: int, *, method: str = "auto",
                       horizon: int | None = None,
                       max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> ConditionedPath:
    """Sample ``Sbar`` on ``[-W, W]``.

    ``method`` is ``"exact"`` (+-1 increments only), ``"rejection"`` or
    ``"auto"``.  Rejection keeps the first ``W`` steps of paths respecting the
    sign constraint up to ``horizon`` (default ``4 W``); its acceptance rate
    decays like ``horizon^{-1/2}``.
    """
    law = law or rademacher()
    if W < 1:
        raise ValueError("W must be >= 1")
    rng = np.random.default_rng(seed)
    if method == "auto":
        method = "exact" if _is_rademacher(law) else "rejection"
    if method == "exact":
        if not _is_rademacher(law):
            raise ValueError("exact sampler needs +-1 increments")
        right = np.empty(W, dtype=np.int64)
        left = np.empty(W, dtype=np.int64)
        _h_chain(0, W, rng, right)
        left[0] = 0
        _h_chain(0, W - 1, rng, left[1:])
        left += 1
        vals = np.concatenate([left[::-1], [0], right]).astype(np.float64)
        return ConditionedPath(W, vals, "exact_h_transform", seed, (rng,))
    horizon = horizon or 4 * W
    if horizon < W:
        raise ValueError("horizon must be >= W")
    values = np.asarray(law.values, dtype=np.float64)
    cdf = law.cdf()
    sides = []
    for strict in (False, True):
        out, att = _rejection_batch(values, cdf, 1, horizon, W, strict, max_attempts, rng)
        if len(out) < 1:
            raise RejectionBudgetExceeded(f"no path survived {horizon} steps in {att} attempts")
        sides.append(out[0])
    vals = np.concatenate([sides[1][::-1], [0.0], sides[0]])
    return ConditionedPath(W, vals, "rejection_finite_horizon", seed, None)


def h_transform_paths(n: int, T: int, seed: int) -> np.ndarray:
    """``n`` right-side paths of length ``T`` from the exact transform."""
    return _h_batch(int(n), int(T), np.random.default_rng(seed))


def rejection_paths(law: FiniteLaw, n: int, T: int, horizon: int, seed: int, *,
                    strict: bool = False, max_attempts: int = 10 ** 10):
    """``n`` paths (first ``T`` steps) conditioned to respect the sign up to ``horizon``.

    Returns ``(paths, attempts)``.
    """
    out, att = _rejection_batch(np.asarray(law.values, dtype=np.float64), law.cdf(), int(n),
                                int(horizon), int(T), strict, int(max_attempts),
                                np.random.default_rng(seed))
    if len(out) < n:
        raise RejectionBudgetExceeded(f"only {len(out)} of {n} paths accepted in {att} attempts")
    return out, att


def endpoint_law_h_transform(T: int) -> dict:
    """Exact law of the state after ``T`` steps of the transformed chain."""
    p = {0: 1.0}
    for _ in range(T):
        q: dict = {}
        for x, w in p.items():
            up = (x + 2) / (2 * (x + 1))
            q[x + 1] = q.get(x + 1, 0.0) + w * up
            if x > 0:
                q[x - 1] = q.get(x - 1, 0.0) + w * (1 - up)
        p = q
    return dict(sorted(p.items()))


def endpoint_law_finite_horizon(T: int, horizon: int) -> dict:
    """Exact law of ``S_T`` for the simple walk conditioned on ``S_1..S_horizon >= 0``."""
    # paths that stay >= 0 for T steps, by endpoint
    count = {0: 1.0}
    for _ in range(T):
        nxt: dict = {}
        for x, w in count.items():
            for y in (x - 1, x + 1):
                if y >= 0:
                    nxt[y] = nxt.get(y, 0.0) + 0.5 * w
        count = nxt
    # survival of the remaining horizon - T steps from each endpoint
    top = max(count) + horizon - T + 1
    surv = np.ones(top + 2)
    for _ in range(horizon - T):
        new = np.zeros_like(surv)
        new[1:-1] = 0.5 * (surv[:-2] + surv[2:])
        new[0] = 0.5 * surv[1]
        surv = new
    w = {x: c * surv[x] for x, c in count.items()}
    z = sum(w.values())
    return {x: v / z for x, v in sorted(w.items())}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical_law(samples) -> dict:
    c = Counter(samples)
    n = sum(c.values())
    return {k: v / n for k, v in sorted(c.items())}


# -- limit profile ----------------------------------------------------------

@dataclass
class LimitProfile:
    offsets: np.ndarray
    values: np.ndarray
    radius: int
    tail_bound: float
    normalizer: float
    W: int
    sampler: str = ""
    meta: dict = field(default_factory=dict)
    path: ConditionedPath | None = field(default=None, repr=False)

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def argmax(self) -> int:
        return int(self.offsets[int(np.argmax(self.values))])

    def value(self, i: int) -> float:
        return float(self.values[i - int(self.offsets[0])])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "Pi_bar"])
        for i, v in zip(self.offsets, self.values):
            w.writerow([int(i), repr(float(v))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"W": self.W, "sampler": self.sampler, "radius": self.radius,
                "tail_bound": self.tail_bound, "normalizer": self.normalizer,
                "profile": {str(int(i)): float(v) for i, v in zip(self.offsets, self.values)},
                **self.meta}


def _class_weights(E: np.ndarray, W: int, sig, lo: int, hi: int) -> np.ndarray:
    """``e^{-s[i+a0]/2} * sum_a count_a e^{-s[i+a]/2}`` for ``i = lo..hi``.

    Distinct offsets are added in ascending order, each scaled by its multiplicity.
    """
    a0, rest = sig
    idx = np.arange(lo, hi + 1) + W
    inner = np.zeros(hi - lo + 1)
    for a, c in sorted(Counter(rest).items()):
        inner = inner + c * E[idx + a]
    return E[idx + a0] * inner


def _max_offset(signatures) -> int:
    return max(max(abs(sig[0]), *(abs(a) for a in sig[1])) for sig in signatures)


def _tail_estimate(E: np.ndarray, W: int, R: int, n_terms: int, Z: float) -> float:
    # realized-path proxy: n_terms * sum_{R < |x| <= W} e^{-Sbar_x/2}, relative to Z
    tail = math.fsum(E[:W - R]) + math.fsum(E[W + R + 1:])
    return n_terms * tail / Z


def limit_profile(path: ConditionedPath, proportions: dict, k: int, d: int | None = None, *,
                  tol: float = DEFAULT_TAIL_TOL, auto_extend: bool = True,
                  max_W: int = 1 << 20) -> LimitProfile:
    """Normalised profile at offsets ``-k..k`` for class proportions ``{signature: p_j}``.

    The normaliser sums every offset whose terms lie inside the path window;
    when the tail estimate exceeds ``tol`` the path is extended (exact
    sampler) or :class:`TailNotConverged` is raised.
    """
    if abs(math.fsum(proportions.values()) - 1.0) > 1e-9:
        raise ValueError("proportions must sum to 1")
    sigs = [s for s, p in proportions.items() if p > 0]
    amax = _max_offset(sigs)
    n_terms = len(sigs[0][1])
    while True:
        W = path.W
        R = W - amax
        if R < k:
            if auto_extend and path._state is not None and 2 * W <= max_W:
                path = path.extend(2 * W)
                continue
            raise TailNotConverged(f"window {W} too small for offsets up to {k}")
        E = np.exp(-0.5 * path.values)
        total = np.zeros(2 * R + 1)
        for sig in sigs:
            total = total + proportions[sig] * _class_weights(E, W, sig, -R, R)
        Z = math.fsum(total)
        tail = _tail_estimate(E, W, R, n_terms, Z)
        if tail <= tol:
            break
        if auto_extend and path._state is not None and 2 * W <= max_W:
            path = path.extend(2 * W)
            continue
        raise TailNotConverged(f"tail estimate {tail:.3e} > {tol:.1e} at W={W}")
    prof = total[R - k: R + k + 1] / Z
    return LimitProfile(np.arange(-k, k + 1), prof, R, tail, Z, path.W, path.sampler,
                        {"p_j": {signature_str(s): proportions[s] for s in sigs},
                         "sup_all": float(total.max() / Z)}, path)


def trivial_profile(path: ConditionedPath, d: int, k: int, *, tol: float = DEFAULT_TAIL_TOL
                    ) -> LimitProfile:
    """Zero-delta profile ``e^{-s_l/2} (e_{l-1} + (2d-2) e_l + e_{l+1})``, normalised."""
    W = path.W
    R = W - 1
    E = np.exp(-0.5 * path.values)
    idx = np.arange(-R, R + 1) + W
    weights = E[idx] * (E[idx - 1] + (2 * d - 2) * E[idx] + E[idx + 1])
    Z = math.fsum(weights)
    tail = _tail_estimate(E, W, R, 2 * d, Z)
    if tail > tol:
        raise TailNotConverged(f"tail estimate {tail:.3e} > {tol:.1e} at W={W}")
    return LimitProfile(np.arange(-k, k + 1), weights[R - k: R + k + 1] / Z, R, tail, Z, W,
                        path.sampler, {"sup_all": float(weights.max() / Z)}, path)


def bernoulli_gamma(path: ConditionedPath, d: int, p: float, k: int, *,
                    tol: float = DEFAULT_TAIL_TOL) -> LimitProfile:
    """Profile ``Gamma_i / sum_l Gamma_l`` from the closed-form Bernoulli classes."""
    from .levelsets import bernoulli_enumeration
    classes = bernoulli_enumeration(d, p)
    W = path.W
    R = W - 2
    s = path.values

    def s_at(i):
        return float(s[i + W])

    gam = np.array([math.fsum(c.probability * c.evaluate(s_at, i) for c in classes)
                    for i in range(-R, R + 1)])
    Z = math.fsum(gam)
    tail = _tail_estimate(np.exp(-0.5 * s), W, R, 2 * d, Z)
    if tail > tol:
        raise TailNotConverged(f"tail estimate {tail:.3e} > {tol:.1e} at W={W}")
    return LimitProfile(np.arange(-k, k + 1), gam[R - k: R + k + 1] / Z, R, tail, Z, W,
                        path.sampler)


def d1_profile(path: ConditionedPath, delta, k: int, *, tol: float = DEFAULT_TAIL_TOL
               ) -> LimitProfile:
    """One-dimensional profile with a delta value per site.

    ``delta`` is a callable ``i -> delta_i`` or an array indexed by ``i + W``.
    Weight at ``i``: ``e^{-s[i+d_i]/2} (e^{-s[i-1+d_{i-1}]/2} + e^{-s[i+1+d_{i+1}]/2})``.
    """
    W = path.W
    get = delta if callable(delta) else (lambda i: int(delta[i + W]))
    dvals = {i: int(get(i)) for i in range(-W, W + 1)}
    dmax = max(abs(v) for v in dvals.values())
    R = W - dmax - 1
    if R < k:
        raise TailNotConverged(f"window {W} too small for offsets up to {k}")
    E = np.exp(-0.5 * path.values)

    def e(j):
        return E[j + dvals[j] + W]

    weights = np.array([e(i) * (e(i - 1) + e(i + 1)) for i in range(-R, R + 1)])
    Z = math.fsum(weights)
    tail = _tail_estimate(E, W, R, 2, Z)
    if tail > tol:
        raise TailNotConverged(f"tail estimate {tail:.3e} > {tol:.1e} at W={W}")
    return LimitProfile(np.arange(-k, k + 1), weights[R - k: R + k + 1] / Z, R, tail, Z, W,
                        path.sampler)


def profile_json(profile: LimitProfile) -> str:
    return json.dumps(profile.to_dict(), sort_keys=True, indent=2)
