"""Seeded, lazily evaluated random environment and its electrical network.

The potential is ``V(x) = S[|x| + delta_x]`` (sup-norm ``|x|``), or ``0`` when
that index is negative.  ``S`` is a two-sided random walk with i.i.d.
increments and ``delta`` an i.i.d. integer field on the lattice.  Both are
generated by a counter-based hash of ``(seed, index)`` so any value can be
queried in any order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _hashing
from .geometry import box_coordinates, box_sup_norm, neighbors, sup_norm

_TOL = 1e-12


@dataclass(frozen=True)
class FiniteLaw:
    """A law on finitely many values; ``kind`` records how it was declared."""

    kind: str
    values: tuple
    probs: tuple
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and aligned")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probabilities must be non-negative and sum to 1")

    @property
    def mean(self) -> float:
        return float(sum(v * p for v, p in zip(self.values, self.probs)))

    @property
    def variance(self) -> float:
        m = self.mean
        return float(sum((v - m) ** 2 * p for v, p in zip(self.values, self.probs)))

    @property
    def max_abs(self) -> float:
        return max(abs(v) for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def support(self) -> tuple:
        return tuple(v for v, p in zip(self.values, self.probs) if p > 0)

    def cdf(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.probs, dtype=np.float64))
        c[-1] = 1.0
        return c

    def prob_of(self, value) -> float:
        return float(sum(p for v, p in zip(self.values, self.probs) if v == value))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


# -- increment laws ---------------------------------------------------------

def rademacher() -> FiniteLaw:
    return FiniteLaw("rademacher", (-1.0, 1.0), (0.5, 0.5))


def uniform_symmetric(half_width: int) -> FiniteLaw:
    m = int(half_width)
    if m < 1:
        raise ValueError("half_width must be >= 1")
    vals = tuple(float(v) for v in range(-m, m + 1))
    return FiniteLaw("uniform", vals, (1.0 / len(vals),) * len(vals), {"half_width": m})


def two_point(low: float, high: float) -> FiniteLaw:
    """Centered two-point law on ``{low, high}`` with ``low < 0 < high``."""
    if not low < 0 < high:
        raise ValueError("need low < 0 < high")
    p_high = -low / (high - low)
    return FiniteLaw("two_point", (float(low), float(high)), (1.0 - p_high, p_high),
                     {"low": low, "high": high})


# -- delta laws -------------------------------------------------------------

def zero_delta() -> FiniteLaw:
    return FiniteLaw("zero", (0,), (1.0,))


def bernoulli_delta(p: float) -> FiniteLaw:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return FiniteLaw("bernoulli", (0, 1), (1.0 - p, p), {"p": p})


def finite_delta(values: Sequence[int], probs: Sequence[float]) -> FiniteLaw:
    vals = tuple(int(v) for v in values)
    if any(v != orig for v, orig in zip(vals, values)):
        raise ValueError("delta values must be integers")
    return FiniteLaw("finite", vals, tuple(float(p) for p in probs),
                     {"values": list(vals), "probs": [float(p) for p in probs]})


def law_from_dict(data: dict, *, role: str) -> FiniteLaw:
    kind = data["kind"]
    if role == "increment":
        if kind == "rademacher":
            return rademacher()
        if kind == "uniform":
            return uniform_symmetric(data["half_width"])
        if kind == "two_point":
            return two_point(data["low"], data["high"])
    else:
        if kind == "zero":
            return zero_delta()
        if kind == "bernoulli":
            return bernoulli_delta(data["p"])
        if kind == "finite":
            return finite_delta(data["values"], data["probs"])
    raise ValueError(f"unknown {role} law {kind!r}")


@dataclass(frozen=True)
class EnvironmentSpec:
    d: int
    increment_law: FiniteLaw = field(default_factory=rademacher)
    delta_law: FiniteLaw = field(default_factory=zero_delta)
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        inc = self.increment_law
        if abs(inc.mean) > 1e-12:
            raise ValueError("increment law must be centered")
        if inc.variance <= 0:
            raise ValueError("increment law must have positive variance")
        if any(int(v) != v for v in self.delta_law.values):
            raise ValueError("delta law must be integer valued")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def noise_band(self) -> float:
        """Bound on ``|V(x) - S[|x|]|`` implied by bounded increments and deltas."""
        return self.increment_law.max_abs * max(abs(v) for v in self.delta_law.support)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "increment_law": self.increment_law.to_dict(),
            "delta_law": self.delta_law.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentSpec":
        return cls(
            d=int(data["d"]),
            increment_law=law_from_dict(data.get("increment_law", {"kind": "rademacher"}),
                                        role="increment"),
            delta_law=law_from_dict(data.get("delta_law", {"kind": "zero"}), role="delta"),
            seed=int(data.get("seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EnvironmentSpec":
        return cls.from_dict(json.loads(text))


class EnvironmentField:
    """Lazy random environment ``(S, delta, V)`` for one :class:`EnvironmentSpec`.

    ``S`` is memoised on a contiguous two-sided range that grows geometrically;
    ``delta`` is recomputed from the hash on every query.  Passing ``fixed_s``
    as ``(S_0..S_P, S_0..S_-N)`` replaces the random walk by a given sequence,
    which is handy for hand-checkable environments.
    """

    def __init__(self, spec: EnvironmentSpec, *, fixed_s: tuple | None = None):
        self.spec = spec
        self.d = spec.d
        self._inc_values = np.asarray(spec.increment_law.values, dtype=np.float64)
        self._inc_cdf = spec.increment_law.cdf()
        self._delta_values = np.asarray(spec.delta_law.values, dtype=np.int64)
        self._delta_cdf = spec.delta_law.cdf()
        self._delta_zero = spec.delta_law.support == (0,)
        self._lock = threading.Lock()
        self._seed = np.uint64(spec.seed)  # numba would reject seeds >= 2**63 as int64
        self._fixed = fixed_s is not None
        if self._fixed:
            pos, neg = (np.asarray(a, dtype=np.float64) for a in fixed_s)
            if pos[0] != 0 or (len(neg) and neg[0] != 0):
                raise ValueError("fixed S must start with S_0 = 0")
            self._pos = pos
            self._neg = neg if len(neg) else np.zeros(1)
        else:
            self._pos = np.zeros(1)
            self._neg = np.zeros(1)

    @property
    def s_limit(self) -> int | None:
        """Largest positive index available (None for the unbounded random walk)."""
        return len(self._pos) - 1 if self._fixed else None

    def __repr__(self):
        return f"EnvironmentField({self.spec!r})"

    # -- S --------------------------------------------------------------

    def _extend(self, positive: bool, upto: int):
        with self._lock:
            arr = self._pos if positive else self._neg
            have = len(arr) - 1
            if upto <= have:
                return
            if self._fixed:
                raise IndexError(f"fixed S does not cover index {'' if positive else '-'}{upto}")
            new_top = max(upto, 2 * have, 64)
            count = new_top - have
            if positive:
                # S_k - S_{k-1} = eta_k
                inc = _hashing.index_draws(self._seed, have + 1, count,
                                           self._inc_values, self._inc_cdf)
            else:
                # S_{-k} - S_{-(k-1)} = -eta_{-k+1}
                inc = -_hashing.index_draws(self._seed, -(new_top - 1), count,
                                            self._inc_values, self._inc_cdf)[::-1]
            # Sequential left-to-right sum keeps values independent of growth history.
            ext = np.cumsum(np.concatenate(([arr[-1]], inc)))[1:]
            if positive:
                self._pos = np.concatenate((arr, ext))
            else:
                self._neg = np.concatenate((arr, ext))

    def s_value(self, k: int) -> float:
        k = int(k)
        if k >= 0:
            if k >= len(self._pos):
                self._extend(True, k)
            return float(self._pos[k])
        if -k >= len(self._neg):
            self._extend(False, -k)
        return float(self._neg[-k])

    def s_range(self, lo: int, hi: int) -> np.ndarray:
        """``S_lo, ..., S_hi`` as an array."""
        lo, hi = int(lo), int(hi)
        if hi < lo:
            return np.empty(0)
        if hi >= len(self._pos):
            self._extend(True, hi)
        if lo < 0 and -lo >= len(self._neg):
            self._extend(False, -lo)
        parts = []
        if lo < 0:
            parts.append(self._neg[1:-lo + 1][::-1][: min(hi, -1) - lo + 1])
        if hi >= 0:
            parts.append(self._pos[max(lo, 0): hi + 1])
        return np.concatenate(parts)

    def increment(self, k: int) -> float:
        """eta_k for any integer k."""
        return float(_hashing.index_draws(self._seed, k, 1, self._inc_values, self._inc_cdf)[0])

    # -- delta and V ------------------------------------------------------

    def delta_value(self, x: Sequence[int]) -> int:
        return int(self.delta_array(np.asarray([x], dtype=np.int64))[0])

    def delta_array(self, points: np.ndarray) -> np.ndarray:
        points = np.ascontiguousarray(points, dtype=np.int64).reshape(-1, self.d)
        if self._delta_zero:
            return np.zeros(len(points), dtype=np.int64)
        return _hashing.site_draws(self._seed, points, self._delta_values, self._delta_cdf)

    def potential_index_array(self, points: np.ndarray) -> np.ndarray:
        """Index ``|x| + delta_x`` clamped at 0, so ``V = S[index]``."""
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        idx = np.abs(points).max(axis=1) + self.delta_array(points)
        return np.maximum(idx, 0)

    def potential(self, x: Sequence[int]) -> float:
        idx = sup_norm(x) + self.delta_value(x)
        return self.s_value(idx) if idx >= 0 else 0.0

    def potential_array(self, points: np.ndarray) -> np.ndarray:
        idx = self.potential_index_array(points)
        if len(idx) == 0:
            return np.empty(0)
        return self.s_range(0, int(idx.max()))[idx]

    def potential_box(self, R: int) -> np.ndarray:
        """V on every site of [-R, R]^d, flat in C order."""
        xbar = box_sup_norm(R, self.d).astype(np.int64)
        if self._delta_zero:
            idx = xbar
        else:
            delta = _hashing.box_site_draws(self._seed, R, self.d,
                                            self._delta_values, self._delta_cdf)
            idx = np.maximum(xbar + delta, 0)
        return self.s_range(0, int(idx.max()))[idx]

    def delta_box(self, R: int) -> np.ndarray:
        if self._delta_zero:
            return np.zeros((2 * R + 1) ** self.d, dtype=np.int64)
        return _hashing.box_site_draws(self._seed, R, self.d,
                                       self._delta_values, self._delta_cdf)


class CustomPotential:
    """An arbitrary deterministic potential, for hand-built test environments.

    ``fn`` maps an ``(N, d)`` integer array to ``N`` potential values.
    """

    def __init__(self, d: int, fn: Callable[[np.ndarray], np.ndarray], name: str = "custom"):
        self.d = d
        self._fn = fn
        self.name = name

    @classmethod
    def flat(cls, d: int) -> "CustomPotential":
        return cls(d, lambda pts: np.zeros(len(pts)), name="flat")

    @classmethod
    def radial(cls, d: int, profile: Callable[[int], float], name: str = "radial"):
        def fn(pts):
            r = np.abs(np.asarray(pts).reshape(-1, d)).max(axis=1)
            return np.array([float(profile(int(k))) for k in r])
        return cls(d, fn, name=name)

    @classmethod
    def from_table(cls, d: int, table: dict, default: float = 0.0, base=None):
        """Override selected sites of ``base`` (or a constant) with ``table``."""
        def fn(pts):
            pts = np.asarray(pts).reshape(-1, d)
            out = base.potential_array(pts) if base is not None else np.full(len(pts), default)
            out = np.array(out, dtype=np.float64)
            for i, p in enumerate(map(tuple, pts.tolist())):
                if p in table:
                    out[i] = table[p]
            return out
        return cls(d, fn, name="table")

    def potential(self, x: Sequence[int]) -> float:
        return float(self.potential_array(np.asarray([x], dtype=np.int64))[0])

    def potential_array(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        return np.asarray(self._fn(points), dtype=np.float64)

    def potential_box(self, R: int) -> np.ndarray:
        return self.potential_array(box_coordinates(R, self.d))


class ConductanceView:
    """Conductances ``pi(x,y)``, capacitances ``pi(x)`` and kernel ``p(x,y)``."""

    def __init__(self, source):
        self.source = source
        self.d = source.d

    def potential(self, x) -> float:
        return self.source.potential(x)

    def conductance(self, x, y) -> float:
        x, y = tuple(x), tuple(y)
        if sum(abs(a - b) for a, b in zip(x, y)) != 1:
            return 0.0
        return math.exp(-0.5 * self.potential(x) - 0.5 * self.potential(y))

    def capacitance(self, x) -> float:
        vx = self.potential(x)
        return math.fsum(math.exp(-0.5 * vx - 0.5 * self.potential(y)) for y in neighbors(x))

    def step_probabilities(self, x) -> tuple[list, np.ndarray]:
        """Neighbours of ``x`` and their transition probabilities.

        Only potential differences enter, so deep potentials do not underflow.
        """
        nbrs = neighbors(x)
        v = np.array([self.potential(y) for y in nbrs])
        w = np.exp(-0.5 * (v - v.min()))
        return nbrs, w / w.sum()

    def step_prob(self, x, y) -> float:
        nbrs, probs = self.step_probabilities(x)
        y = tuple(y)
        for z, p in zip(nbrs, probs):
            if z == y:
                return float(p)
        return 0.0


def dump_csv(field_or_source, radius: int, stream=None) -> str:
    """CSV rows ``x1..xd, xbar, delta, V, pi`` for the box [-radius, radius]^d."""
    d = field_or_source.d
    view = ConductanceView(field_or_source)
    pts = box_coordinates(radius, d)
    V = field_or_source.potential_array(pts)
    has_delta = hasattr(field_or_source, "delta_array")
    delta = field_or_source.delta_array(pts) if has_delta else None
    buf = stream if stream is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(d)] + ["xbar", "delta", "V", "pi"])
    for i, p in enumerate(pts.tolist()):
        w.writerow(p + [max(abs(c) for c in p), int(delta[i]) if has_delta else "",
                        repr(float(V[i])), repr(view.capacitance(p))])
    return buf.getvalue() if stream is None else ""
