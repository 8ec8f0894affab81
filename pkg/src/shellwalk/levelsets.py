"""Level sets of the reversible measure on a shell, and their signatures.

For ``x`` in ``C_k`` every potential in ``pi(x)`` is a value of ``S`` at
``k + a`` for a small integer offset ``a``.  The signature of ``x`` is
``(a_0; a_1..a_2d)`` with ``a_0`` the offset of ``x`` and the neighbour
offsets taken as a sorted multiset, so that

    pi(x) = exp(-S[k+a_0]/2) * sum_l exp(-S[k+a_l]/2).

Classes are defined by signature identity; numerically equal values of
different signatures stay separate classes.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import neighbor_offsets, shell_array

Signature = tuple  # (a0, (a1, ..., a2d)) with the tuple sorted ascending


def canonical(a0: int, rest: Sequence[int]) -> Signature:
    return (int(a0), tuple(sorted(int(a) for a in rest)))


def evaluate_signature(sig: Signature, s_at: Callable[[int], float], k: int) -> float:
    """``exp(-s(k+a0)/2) * sum_l exp(-s(k+a_l)/2)``, summed in ascending offset order."""
    a0, rest = sig
    total = 0.0
    for a in rest:
        total += math.exp(-0.5 * s_at(k + a))
    return math.exp(-0.5 * s_at(k + a0)) * total


def signature_str(sig: Signature) -> str:
    return f"{sig[0]};" + ",".join(str(a) for a in sig[1])


def _source_field(view):
    return getattr(view, "source", view)


def signature_offsets(field, points: np.ndarray, k: int) -> np.ndarray:
    """Raw (unsorted) offsets ``[a0, a_1..a_2d]`` for each point of ``C_k``.

    The clamp ``V = 0 = S_0`` for negative indices is encoded as offset ``-k``.
    """
    d = field.d
    pts = np.asarray(points, dtype=np.int64).reshape(-1, d)
    off = neighbor_offsets(d)
    allpts = np.concatenate([pts] + [pts + o for o in off])
    idx = field.potential_index_array(allpts).reshape(2 * d + 1, len(pts)).T
    return idx - k


def point_signatures(field, points: np.ndarray, k: int) -> np.ndarray:
    raw = signature_offsets(field, points, k)
    return np.concatenate([raw[:, :1], np.sort(raw[:, 1:], axis=1)], axis=1)


@dataclass
class LevelClass:
    signature: Signature
    value: float
    count: int
    face_count: int
    edge_count: int
    index: int
    members: list | None = None

    def to_dict(self) -> dict:
        out = {"signature": signature_str(self.signature), "value": self.value,
               "count": self.count, "face_count": self.face_count,
               "edge_count": self.edge_count, "j": self.index}
        if self.members is not None:
            out["members"] = [list(m) for m in self.members]
        return out


@dataclass
class LevelSetPartition:
    k: int
    d: int
    entries: list

    @property
    def n_distinct(self) -> int:
        return len(self.entries)

    def distinct_values(self, rtol: float = 1e-12) -> int:
        """Number of numerically distinct pi values (classes can coincide in value)."""
        vals = sorted(e.value for e in self.entries)
        n = 0
        last = None
        for v in vals:
            if last is None or abs(v - last) > rtol * max(abs(v), abs(last)):
                n += 1
                last = v
        return n

    def by_signature(self) -> dict:
        return {e.signature: e for e in self.entries}

    def to_dict(self) -> dict:
        return {"k": self.k, "classes": [e.to_dict() for e in self.entries]}


def _face_flags(pts: np.ndarray, k: int) -> np.ndarray:
    return (np.abs(pts) == k).sum(axis=1) == 1


def partition_shell(view, k: int, *, keep_members: bool = False,
                    check: bool = True) -> LevelSetPartition:
    """Group ``C_k`` by signature and evaluate each class value.

    With ``check`` each member's capacitance, computed directly from ``V``, is
    compared with its class value (relative 1e-12).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    field = _source_field(view)
    d = field.d
    pts = shell_array(k, d)
    sigs = point_signatures(field, pts, k)
    uniq, inv, cnt = np.unique(sigs, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    face = _face_flags(pts, k)
    face_cnt = np.bincount(inv, weights=face, minlength=len(uniq)).astype(np.int64)
    lo = int(sigs.min()) + k
    hi = int(sigs.max()) + k
    s_vals = field.s_range(lo, hi) if hasattr(field, "s_range") else None

    def s_at(i):
        return float(s_vals[i - lo])

    entries = []
    for j, row in enumerate(uniq):
        sig = (int(row[0]), tuple(int(a) for a in row[1:]))
        val = evaluate_signature(sig, s_at, k) if s_vals is not None else float("nan")
        members = [tuple(p) for p in pts[inv == j].tolist()] if keep_members else None
        entries.append(LevelClass(sig, val, int(cnt[j]), int(face_cnt[j]),
                                  int(cnt[j] - face_cnt[j]), j, members))
    if check and s_vals is not None:
        direct = direct_capacitance(field, pts)
        vals = np.array([e.value for e in entries])[inv]
        err = np.abs(direct - vals) / np.abs(direct)
        if err.max() > 1e-12:
            raise AssertionError(f"signature value mismatch on shell {k}: {err.max():.3e}")
    return LevelSetPartition(k, d, entries)


def direct_capacitance(field, points: np.ndarray) -> np.ndarray:
    """pi(x) summed over neighbours straight from V, vectorised."""
    d = field.d
    pts = np.asarray(points, dtype=np.int64).reshape(-1, d)
    vx = field.potential_array(pts)
    total = np.zeros(len(pts))
    for o in neighbor_offsets(d):
        total += np.exp(-0.5 * vx - 0.5 * field.potential_array(pts + o))
    return total


def brute_force_grouping(view, k: int) -> dict:
    """Group ``C_k`` by exact float value of the directly computed pi (test oracle)."""
    field = _source_field(view)
    pts = shell_array(k, field.d)
    vals = direct_capacitance(field, pts)
    groups: dict = {}
    for p, v in zip(map(tuple, pts.tolist()), vals):
        groups.setdefault(float(v), []).append(p)
    return groups


# -- proportions ------------------------------------------------------------

@dataclass
class ProportionEstimate:
    signatures: list
    p_hat: np.ndarray
    stderr: np.ndarray
    shells: list
    n_points: int

    def as_dict(self) -> dict:
        return {sig: float(p) for sig, p in zip(self.signatures, self.p_hat)}

    def to_dict(self) -> dict:
        return {"shells": list(self.shells), "n_points": self.n_points,
                "classes": [{"signature": signature_str(s), "p": float(p), "se": float(e)}
                            for s, p, e in zip(self.signatures, self.p_hat, self.stderr)]}


def estimate_proportions(view, shells: Sequence[int]) -> ProportionEstimate:
    """Pooled signature frequencies over the face-interior points of ``shells``."""
    shells = [int(k) for k in shells]
    if not shells:
        raise ValueError("need at least one shell")
    field = _source_field(view)
    tally: Counter = Counter()
    for k in shells:
        if k < 1:
            raise ValueError("shells must be >= 1")
        pts = shell_array(k, field.d)
        pts = pts[_face_flags(pts, k)]
        sigs = point_signatures(field, pts, k)
        uniq, cnt = np.unique(sigs, axis=0, return_counts=True)
        for row, c in zip(uniq, cnt):
            tally[(int(row[0]), tuple(int(a) for a in row[1:]))] += int(c)
    sigs = sorted(tally)
    n = sum(tally.values())
    counts = np.array([tally[s] for s in sigs], dtype=np.float64)
    p = counts / n
    p[-1] = 1.0 - p[:-1].sum() if len(p) > 1 else 1.0
    se = np.sqrt(p * (1 - p) / n)
    return ProportionEstimate(sigs, p, se, shells, n)


# -- exact face-interior class law -----------------------------------------

def face_class_law(delta_law, d: int) -> dict:
    """Exact law of the face-interior signature for i.i.d. deltas.

    A face-interior point has one outward, one inward and ``2d-2`` lateral
    neighbours, giving offsets ``delta+1``, ``delta-1`` and ``delta``.  The
    lateral multiset is enumerated with multinomial weights.  Valid once the
    shell index exceeds the largest negative delta (no clamping).
    """
    vals = [v for v, p in zip(delta_law.values, delta_law.probs) if p > 0]
    probs = {v: p for v, p in zip(delta_law.values, delta_law.probs) if p > 0}
    m = 2 * d - 2
    law: dict = {}
    for a0, dout, din in itertools.product(vals, repeat=3):
        base = probs[a0] * probs[dout] * probs[din]
        for lat in itertools.combinations_with_replacement(vals, m):
            c = Counter(lat)
            w = math.factorial(m)
            for r in c.values():
                w //= math.factorial(r)
            pr = base * w
            for v, r in c.items():
                pr *= probs[v] ** r
            sig = canonical(a0, [dout + 1, din - 1, *lat])
            law[sig] = law.get(sig, 0.0) + pr
    return dict(sorted(law.items()))


def face_class_law_bruteforce(delta_law, d: int) -> dict:
    """Same law by enumerating every ``(2d+1)``-tuple of deltas (test oracle)."""
    vals = [v for v, p in zip(delta_law.values, delta_law.probs) if p > 0]
    probs = {v: p for v, p in zip(delta_law.values, delta_law.probs) if p > 0}
    law: dict = {}
    for tup in itertools.product(vals, repeat=2 * d + 1):
        pr = 1.0
        for v in tup:
            pr *= probs[v]
        a0, dout, din, *lat = tup
        sig = canonical(a0, [dout + 1, din - 1, *lat])
        law[sig] = law.get(sig, 0.0) + pr
    return dict(sorted(law.items()))


# -- Bernoulli closed form ---------------------------------------------------

@dataclass(frozen=True)
class BernoulliClass:
    i0: int
    i1: int
    i2: int
    cnt: int
    d: int
    probability: float

    @property
    def signature(self) -> Signature:
        m = 2 * self.d - 2
        return canonical(self.i0, [self.i1, self.i2] + [1] * self.cnt + [0] * (m - self.cnt))

    def evaluate(self, s_at: Callable[[int], float], i: int) -> float:
        """``e^{-s(i+i0)/2} (e^{-s(i+i1)/2} + e^{-s(i+i2)/2} + cnt e^{-s(i+1)/2}
        + (2d-2-cnt) e^{-s(i)/2})``."""
        m = 2 * self.d - 2
        inner = (math.exp(-0.5 * s_at(i + self.i1)) + math.exp(-0.5 * s_at(i + self.i2))
                 + self.cnt * math.exp(-0.5 * s_at(i + 1))
                 + (m - self.cnt) * math.exp(-0.5 * s_at(i)))
        return math.exp(-0.5 * s_at(i + self.i0)) * inner

    @property
    def symbolic(self) -> str:
        def e(a):
            return "e^{-S_{i}/2}" if a == 0 else f"e^{{-S_{{i{a:+d}}}/2}}"
        m = 2 * self.d - 2
        return (f"{e(self.i0)}({e(self.i1)}+{e(self.i2)}+{self.cnt}{e(1)}"
                f"+{m - self.cnt}{e(0)})")


def bernoulli_probability(p: float, d: int, i0: int, i1: int, i2: int, cnt: int) -> float:
    m = 2 * d - 2
    ones = i0 + i1 + i2  # number of deltas equal to 1 among x, inward, outward
    return (p ** ones * (1 - p) ** (3 - ones)
            * math.comb(m, cnt) * p ** cnt * (1 - p) ** (m - cnt))


def bernoulli_enumeration(d: int, p: float) -> list:
    """All classes ``(i0, i1, i2, cnt)`` of the Bernoulli(p) delta law.

    ``i0`` is delta at the point, ``i1 = delta_in - 1``, ``i2 = delta_out + 1``
    and ``cnt`` the number of lateral neighbours with delta 1.
    """
    if d < 2 or not 0 < p < 1:
        raise ValueError("need d >= 2 and 0 < p < 1")
    out = []
    for i0, i1, i2 in itertools.product((0, 1), (-1, 0), (1, 2)):
        for cnt in range(2 * d - 1):
            out.append(BernoulliClass(i0, i1, i2, cnt, d,
                                      bernoulli_probability(p, d, i0, i1, i2, cnt)))
    return out


def bernoulli_csv(classes: Sequence[BernoulliClass]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i0", "i1", "i2", "cnt", "probability"])
    for c in classes:
        w.writerow([c.i0, c.i1, c.i2, c.cnt, repr(c.probability)])
    return buf.getvalue()
