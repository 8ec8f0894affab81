"""Valley coordinates of the potential and the quenched occupation ratios.

``M_n`` is the first index where ``S`` has risen ``log n + sqrt(log n)`` above
its running minimum, ``m_n`` the first positive index attaining the minimum of
``S`` on ``[0, M_n]``, and ``Delta_n`` the largest potential climb met on the
way from the origin down to ``C_{m_n}`` or from ``C_{M_n}`` back to it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from . import _hashing
from .environment import ConductanceView
from .levelsets import face_class_law, partition_shell, evaluate_signature, signature_str

DEFAULT_EPSILON = 0.2
DEFAULT_SCAN_BUDGET = 10 ** 7
EXACT_SHELL_SITES = 2 * 10 ** 8  # cube size up to which realized deltas are enumerated
SAMPLES_PER_SHELL = 4096


class ScanBudgetExceeded(RuntimeError):
    """The rise defining ``M_n`` did not occur within the scan budget."""


@dataclass
class ValleyLandmarks:
    n: float
    log_n: float
    threshold: float
    M_n: int | None
    m_n: int | None
    Delta_n: float | None
    conditions: dict = field(default_factory=dict)
    epsilon: float = DEFAULT_EPSILON
    const: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def valley(self) -> bool:
        return self.m_n is not None

    @property
    def in_A_n(self) -> bool:
        return self.valley and all(self.conditions.values())

    def to_dict(self) -> dict:
        return {"n": self.n, "log_n": self.log_n, "threshold": self.threshold,
                "M_n": self.M_n, "m_n": self.m_n, "Delta_n": self.Delta_n,
                "valley": self.valley, "A_n": dict(self.conditions),
                "in_A_n": self.in_A_n, "epsilon": self.epsilon, "const": self.const,
                "details": dict(self.details)}


def scan_valley(s_values_fn, threshold: float, budget: int = DEFAULT_SCAN_BUDGET,
                chunk: int = 4096):
    """Return ``(M, m)``; ``m`` is None when no positive index attains the minimum.

    ``s_values_fn(lo, hi)`` must return ``S_lo..S_hi``.
    """
    runmin = 0.0
    lo = 1
    M = None
    while lo <= budget:
        hi = min(lo + chunk - 1, budget)
        s = s_values_fn(lo, hi)
        mins = np.minimum.accumulate(np.concatenate(([runmin], s)))[1:]
        hit = np.flatnonzero(s - mins >= threshold)
        if hit.size:
            M = lo + int(hit[0])
            break
        runmin = float(mins[-1])
        lo = hi + 1
        chunk *= 2
    if M is None:
        raise ScanBudgetExceeded(f"no rise of {threshold:.3f} within {budget} steps")
    s = s_values_fn(0, M)
    smin = s.min()
    pos = np.flatnonzero(s[1:] == smin)
    m = int(pos[0]) + 1 if pos.size else None
    return M, m


@njit(cache=True)
def _shell_delta_masks(seed, radius, d, cdf):
    """Bitmask per shell of the delta-support indices realized on that shell."""
    side = 2 * radius + 1
    total = side ** d
    key = _hashing.stream_key(seed, _hashing.TAG_DELTA)
    masks = np.zeros(radius + 1, dtype=np.int64)
    coords = np.empty(d, dtype=np.int64)
    for flat in range(total):
        rem = flat
        sup = 0
        for axis in range(d - 1, -1, -1):
            c = rem % side - radius
            rem //= side
            coords[axis] = c
            if abs(c) > sup:
                sup = abs(c)
        j = _hashing.inverse_cdf(_hashing.site_uniform(key, coords), cdf)
        masks[sup] |= 1 << j
    return masks


def _random_shell_points(rng, k, d, count):
    # Uniform over the faces of C_k (corners slightly oversampled; only used for support detection).
    pts = rng.integers(-k, k + 1, size=(count, d))
    axis = rng.integers(0, d, size=count)
    sign = rng.choice(np.array([-k, k]), size=count)
    pts[np.arange(count), axis] = sign
    return pts


def realized_offsets(field, M: int) -> list:
    """For each shell ``k <= M`` the delta values occurring on ``C_k``."""
    law = field.spec.delta_law
    vals = list(law.values)
    if field._delta_zero:
        return [[0]] * (M + 1)
    d = field.d
    if (2 * M + 1) ** d <= EXACT_SHELL_SITES:
        masks = _shell_delta_masks(np.uint64(field.spec.seed), M, d, law.cdf())
        return [[v for j, v in enumerate(vals) if (int(m) >> j) & 1] for m in masks]
    # Large cubes: exact up to radius 50, then sampling per shell.
    out = realized_offsets_exact_upto(field, 50)
    rng = np.random.default_rng([field.spec.seed, 0x5EED])
    for k in range(51, M + 1):
        pts = _random_shell_points(rng, k, d, SAMPLES_PER_SHELL)
        out.append(sorted(set(field.delta_array(pts).tolist())))
    return out


def realized_offsets_exact_upto(field, K: int) -> list:
    law = field.spec.delta_law
    masks = _shell_delta_masks(np.uint64(field.spec.seed), K, field.d, law.cdf())
    return [[v for j, v in enumerate(law.values) if (int(m) >> j) & 1] for m in masks]


def shell_extrema(field, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact max and min of ``V`` over each ``C_k``, ``k = 0..M``."""
    offs = realized_offsets(field, M)
    top = M + max(max(o) for o in offs)
    s = field.s_range(0, max(top, 0))
    vmax = np.empty(M + 1)
    vmin = np.empty(M + 1)
    for k, o in enumerate(offs):
        vals = [s[max(k + e, 0)] for e in o]
        vmax[k] = max(vals)
        vmin[k] = min(vals)
    return vmax, vmin


def obstacle_height(vmax: np.ndarray, vmin: np.ndarray, m: int, M: int) -> float:
    """Largest climb ``V(y) - V(x)`` inward-to-outward on ``[0, m]`` or outward-to-inward on ``[m, M]``."""
    # climb from shell k up to shell l >= k inside [0, m]
    prefix_min = np.minimum.accumulate(vmin[: m + 1])
    up = float(np.max(vmax[: m + 1] - prefix_min))
    # climb from shell l down to k <= l inside [m, M]: V(x) at k minus V(y) at l
    suffix_min = np.minimum.accumulate(vmin[m: M + 1][::-1])[::-1]
    down = float(np.max(vmax[m: M + 1] - suffix_min))
    return max(up, down, 0.0)


def default_const(spec) -> float:
    eta = spec.increment_law.max_abs
    dmax = max(abs(v) for v in spec.delta_law.support)
    return eta * (dmax + 1) + eta


def find_landmarks(field, n: float | None = None, epsilon: float = DEFAULT_EPSILON, *,
                   log_n: float | None = None, const: float | None = None,
                   budget: int = DEFAULT_SCAN_BUDGET) -> ValleyLandmarks:
    """Locate ``(M_n, m_n, Delta_n)`` and evaluate the three good-environment conditions.

    Give either ``n`` or ``log_n`` directly.  A realization without a valley
    (minimum only at the origin) returns a result with ``valley == False``.
    """
    if log_n is None:
        if n is None or n < 3:
            raise ValueError("need n >= 3")
        log_n = math.log(n)
    else:
        n = math.exp(log_n)
    if log_n <= 1:
        raise ValueError("need log n > 1")
    thr = log_n + math.sqrt(log_n)
    if const is None:
        const = default_const(field.spec) if hasattr(field, "spec") else 0.0
    limit = getattr(field, "s_limit", None)
    M, m = scan_valley(field.s_range, thr, budget if limit is None else min(budget, limit))
    out = ValleyLandmarks(float(n), log_n, thr, M, m, None, epsilon=epsilon, const=const)
    if m is None:
        out.conditions = {"c1": False, "c2": False, "c3": False}
        return out
    if hasattr(field, "spec"):
        vmax, vmin = shell_extrema(field, M)
    else:
        vmax = vmin = field.s_range(0, M)
    out.Delta_n = obstacle_height(vmax, vmin, m, M)
    # (1) V(y) - V(x) close to the threshold for x in C_m, y in C_M
    dev = max(vmax[M] - vmin[m] - thr, thr - (vmin[M] - vmax[m]))
    lo_w, hi_w = log_n ** (2 - epsilon), log_n ** (2 + epsilon)
    eps_n = math.log(log_n) ** 2 / log_n
    bound3 = log_n * (1 - eps_n)
    out.conditions = {
        "c1": bool(dev <= const),
        "c2": bool(lo_w <= m <= hi_w and lo_w <= M <= hi_w and M / m <= log_n ** epsilon),
        "c3": bool(out.Delta_n <= bound3),
    }
    out.details = {"c1_deviation": float(dev), "window": [lo_w, hi_w],
                   "ratio_bound": log_n ** epsilon, "eps_n": eps_n, "c3_bound": bound3}
    return out


# -- quenched ratios --------------------------------------------------------

@dataclass
class QuenchedRatios:
    m_n: int
    M_n: int
    offsets: list
    window: int
    entries: list              # {l, j, signature, count, R, Rtilde}
    full: dict                 # shell -> list of (signature, count, R)
    full_sum: float
    shift: float

    def shell_total(self, l: int) -> float:
        return float(sum(e["R"] for e in self.entries if e["l"] == l))

    def to_dict(self) -> dict:
        return {"m_n": self.m_n, "M_n": self.M_n, "window": self.window,
                "full_sum": self.full_sum,
                "ratios": [dict(e) for e in self.entries]}


def _partitions(field, M: int):
    return {k: partition_shell(field, k, check=False) for k in range(1, M + 1)}


def quenched_ratios(view, landmarks: ValleyLandmarks, offsets: Sequence[int],
                    proportions: dict | None = None, *, shift: bool = True,
                    partitions: dict | None = None) -> QuenchedRatios:
    """Both ratio variants at shells ``m_n + l``.

    ``R`` divides by the total measure of ``B_{M_n}``; ``Rtilde`` uses the
    class proportions ``p_j`` (default: exact face-interior law of the delta
    law) over the window ``|i| <= (log n)^{2 - eps}`` around ``m_n``.  With
    ``shift`` every ``S`` value is taken relative to ``S_{m_n}``.
    """
    field = getattr(view, "source", view)
    m, M = landmarks.m_n, landmarks.M_n
    if m is None:
        raise ValueError("no valley in this environment")
    offsets = [int(l) for l in offsets]
    if any(m + l < 1 for l in offsets):
        raise ValueError("offsets must keep m_n + l >= 1")
    if proportions is None:
        proportions = face_class_law(field.spec.delta_law, field.d)
    W = int(math.floor(landmarks.log_n ** (2 - landmarks.epsilon)))
    parts = partitions if partitions is not None else _partitions(field, max(M, m + max(offsets)))
    lo_s = 0
    hi_s = max(M, m + W, m + max(offsets)) + 8
    s_vals = field.s_range(lo_s, hi_s)
    ref = float(s_vals[m - lo_s]) if shift else 0.0

    def s_at(i):
        # negative indices are clamped to S_0, as in the potential
        return float(s_vals[max(i, 0)]) - ref

    # Total measure of B_M: origin plus every class of every shell.
    origin_pi = _origin_capacitance(field) * (math.exp(ref) if shift else 1.0)
    shell_mass = {}
    for k in range(1, M + 1):
        shell_mass[k] = [(e.signature, e.count, e.count * evaluate_signature(e.signature, s_at, k))
                         for e in parts[k].entries]
    total = origin_pi + math.fsum(w for k in shell_mass for _, _, w in shell_mass[k])
    full = {k: [(sig, c, w / total) for sig, c, w in v] for k, v in shell_mass.items()}
    full[0] = [(None, 1, origin_pi / total)]
    full_sum = math.fsum(r for v in full.values() for _, _, r in v)

    def ptilde(k):
        return math.fsum(p * evaluate_signature(sig, s_at, k) for sig, p in proportions.items())

    denom = math.fsum(ptilde(m + i) for i in range(-W, W + 1) if m + i >= 1)
    entries = []
    for l in offsets:
        k = m + l
        part = parts.get(k) or partition_shell(field, k, check=False)
        for e in part.entries:
            R = e.count * evaluate_signature(e.signature, s_at, k) / total if k <= M else float("nan")
            p = proportions.get(e.signature, 0.0)
            Rt = p * evaluate_signature(e.signature, s_at, k) / denom
            entries.append({"l": l, "j": e.index, "signature": signature_str(e.signature),
                            "count": e.count, "face_count": e.face_count, "p": p,
                            "R": R, "Rtilde": Rt})
    return QuenchedRatios(m, M, offsets, W, entries, full, full_sum, ref)


def _origin_capacitance(field) -> float:
    return ConductanceView(field).capacitance((0,) * field.d)
