"""Quenched simulation of the nearest-neighbour walk with local-time ledgers.

The heavy loop runs in numba on a dense cube ``[-R-1, R+1]^d`` holding the
unnormalised neighbour weights ``u(y) = exp(-(V(y) - Vref)/2)``.  Since
``p(x, y)`` is proportional to ``u(y)``, one step needs 2d loads and one
uniform draw.  In free mode the cube doubles whenever the walker touches its
edge; in restricted mode the weights outside ``B_K`` are zero, which removes
the edges leaving the ball (the reflected chain on ``B_K``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .environment import ConductanceView
from .geometry import box_coordinates, box_sup_norm, sup_norm

MAX_TARGETS = 8
DEFAULT_BUDGET = 10 ** 9
_MAX_SPAN = 1400.0  # V range that exp(-(V - Vref)/2) can hold without under/overflow


class Unreached(RuntimeError):
    """An excursion exceeded its step budget (or left the simulated region)."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"{count} excursion(s) did not return within {budget} steps")
        self.count = count
        self.budget = budget


# -- numba kernels ----------------------------------------------------------

@njit(cache=True)
def _run_kernel(u, shell, offsets, pos, n_steps, rng, counts, shell_counts, dir_counts,
                mask, occ_times, occ_n, occ_last, t0, stop_shell):
    """Advance up to ``n_steps`` steps; returns (position, steps taken)."""
    nd = offsets.shape[0]
    w = np.empty(nd)
    n_targets = occ_times.shape[0]
    max_occ = occ_times.shape[1]
    for t in range(n_steps):
        total = 0.0
        for j in range(nd):
            total += u[pos + offsets[j]]
            w[j] = total
        r = rng.random() * total
        j = 0
        while j < nd - 1 and r >= w[j]:
            j += 1
        pos += offsets[j]
        counts[pos] += 1
        shell_counts[shell[pos]] += 1
        dir_counts[j] += 1
        m = mask[pos]
        if m != 0:
            now = t0 + t + 1
            for b in range(n_targets):
                if (m >> b) & 1:
                    c = occ_n[b]
                    if c < max_occ:
                        occ_times[b, c] = now
                    occ_n[b] = c + 1
                    occ_last[b] = now
        if shell[pos] == stop_shell:
            return pos, t + 1
    return pos, n_steps


@njit(cache=True)
def _excursion_kernel(u, shell, offsets, starts, in_a, target, reps, budget, rng, stop_shell):
    """Local time at ``target`` during excursions from uniform starts until return to A.

    Returns per-excursion counts; -1 marks an excursion that did not return.
    """
    nd = offsets.shape[0]
    w = np.empty(nd)
    out = np.empty(reps, dtype=np.int64)
    for rep in range(reps):
        pos = starts[rng.integers(0, starts.shape[0])]
        c = 0
        done = False
        for t in range(budget):
            total = 0.0
            for j in range(nd):
                total += u[pos + offsets[j]]
                w[j] = total
            r = rng.random() * total
            j = 0
            while j < nd - 1 and r >= w[j]:
                j += 1
            pos += offsets[j]
            if pos == target:
                c += 1
            if in_a[pos]:
                done = True
                break
            if shell[pos] == stop_shell:
                break
        out[rep] = c if done else -1
    return out


# -- box arrays -------------------------------------------------------------

class _Box:
    """Dense per-site arrays on ``[-R-1, R+1]^d`` for one potential source."""

    def __init__(self, source, radius: int, restrict: int | None):
        self.d = d = source.d
        self.radius = radius
        self.outer = outer = radius + 1
        self.side = 2 * outer + 1
        self.restrict = restrict
        V = np.asarray(source.potential_box(outer), dtype=np.float64)
        sh = box_sup_norm(outer, d)
        if restrict is not None:
            live = sh <= restrict
            vlo, vhi = V[live].min(), V[live].max()
        else:
            vlo, vhi = V.min(), V.max()
        if vhi - vlo > _MAX_SPAN:
            raise OverflowError("potential range too wide for a single weight table")
        self.vref = 0.5 * (vlo + vhi)
        self.u = np.exp(-0.5 * (V - self.vref))
        if restrict is not None:
            self.u[sh > restrict] = 0.0
        self.shell = sh
        self.strides = np.array([self.side ** (d - 1 - i) for i in range(d)], dtype=np.int64)
        off = []
        for i in range(d):
            off += [self.strides[i], -self.strides[i]]
        self.offsets = np.array(off, dtype=np.int64)
        self.center = int(outer * self.strides.sum())

    def flat(self, x: Sequence[int]) -> int:
        return self.center + int(np.dot(np.asarray(x, dtype=np.int64), self.strides))

    def point(self, flat: int) -> tuple:
        out = []
        for s in self.strides:
            q, flat = divmod(flat, int(s))
            out.append(q - self.outer)
        return tuple(out)

    def flat_array(self, points: np.ndarray) -> np.ndarray:
        return self.center + np.asarray(points, dtype=np.int64).reshape(-1, self.d) @ self.strides

    def coordinates(self) -> np.ndarray:
        return box_coordinates(self.outer, self.d)


def _engine_box(view_or_source, radius: int, restrict: int | None) -> _Box:
    source = getattr(view_or_source, "source", view_or_source)
    cache = source.__dict__.setdefault("_walk_boxes", {})
    key = (restrict, radius)
    box = cache.get(key)
    if box is None:
        # Keep only the largest box per mode so memory stays bounded.
        for k in [k for k in cache if k[0] == restrict]:
            del cache[k]
        box = cache[key] = _Box(source, radius, restrict)
    return box


# -- public types -----------------------------------------------------------

@dataclass
class WalkState:
    position: tuple
    n: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    seed: int | None = None

    @classmethod
    def start(cls, position: Sequence[int], seed: int) -> "WalkState":
        return cls(tuple(int(c) for c in position), 0, np.random.default_rng(seed), seed)


class LocalTimeLedger:
    """Visit counts over steps ``1..n`` on sites and shells.

    Site counts live in a dense cube centred at the origin; ``merge`` and
    box growth re-embed them.
    """

    def __init__(self, d: int, radius: int = 0):
        self.d = d
        self.outer = radius
        self.counts = np.zeros((2 * radius + 1) ** d, dtype=np.int64)
        self.shells = np.zeros(radius + 1, dtype=np.int64)
        self.directions = np.zeros(2 * d, dtype=np.int64)
        self.n = 0

    def _resize(self, outer: int):
        if outer <= self.outer:
            return
        old = self.counts.reshape((2 * self.outer + 1,) * self.d)
        new = np.zeros((2 * outer + 1,) * self.d, dtype=np.int64)
        lo = outer - self.outer
        new[(slice(lo, lo + 2 * self.outer + 1),) * self.d] = old
        self.counts = new.ravel()
        shells = np.zeros(outer + 1, dtype=np.int64)
        shells[: len(self.shells)] = self.shells
        self.shells = shells
        self.outer = outer

    @property
    def total(self) -> int:
        return self.n

    def site_count(self, x: Sequence[int]) -> int:
        x = np.asarray(x, dtype=np.int64)
        if np.abs(x).max(initial=0) > self.outer:
            return 0
        strides = (2 * self.outer + 1) ** np.arange(self.d - 1, -1, -1)
        return int(self.counts[int((x + self.outer) @ strides)])

    def site_counts(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        out = np.zeros(len(pts), dtype=np.int64)
        ok = np.abs(pts).max(axis=1) <= self.outer
        strides = (2 * self.outer + 1) ** np.arange(self.d - 1, -1, -1)
        out[ok] = self.counts[(pts[ok] + self.outer) @ strides]
        return out

    def shell_count(self, k: int) -> int:
        return int(self.shells[k]) if 0 <= k < len(self.shells) else 0

    def set_count(self, points) -> int:
        return int(self.site_counts(np.asarray(list(points))).sum())

    def visited(self) -> dict:
        idx = np.flatnonzero(self.counts)
        coords = box_coordinates(self.outer, self.d)[idx]
        return {tuple(c): int(v) for c, v in zip(coords.tolist(), self.counts[idx])}

    def top_sites(self, m: int = 10) -> list:
        idx = np.flatnonzero(self.counts)
        order = idx[np.lexsort((idx, -self.counts[idx]))][:m]
        coords = box_coordinates(self.outer, self.d)[order]
        return [(tuple(c), int(self.counts[i])) for c, i in zip(coords.tolist(), order)]

    def shell_histogram(self) -> dict:
        nz = np.flatnonzero(self.shells)
        return {int(k): int(self.shells[k]) for k in nz}

    def check(self) -> None:
        """Assert conservation and shell consistency."""
        assert int(self.counts.sum()) == self.n
        assert int(self.shells.sum()) == self.n
        recomputed = np.bincount(box_sup_norm(self.outer, self.d), weights=self.counts,
                                 minlength=len(self.shells)).astype(np.int64)
        assert np.array_equal(recomputed[: len(self.shells)], self.shells)

    def merge(self, other: "LocalTimeLedger") -> "LocalTimeLedger":
        out = LocalTimeLedger(self.d, max(self.outer, other.outer))
        for led in (self, other):
            tmp = LocalTimeLedger(self.d, led.outer)
            tmp.counts = led.counts.copy()
            tmp.shells = led.shells.copy()
            tmp._resize(out.outer)
            out.counts += tmp.counts
            out.shells += tmp.shells
            out.directions += led.directions
        out.n = self.n + other.n
        return out


@dataclass(frozen=True)
class Target:
    """A watched set: ``site``, ``shell``, ``sites`` (a level set) or ``ball_complement``."""

    kind: str
    site: tuple = ()
    k: int = 0
    sites: tuple = ()

    @classmethod
    def at_site(cls, x) -> "Target":
        return cls("site", site=tuple(int(c) for c in x))

    @classmethod
    def shell_of(cls, k: int) -> "Target":
        return cls("shell", k=int(k))

    @classmethod
    def level_set(cls, points) -> "Target":
        return cls("sites", sites=tuple(tuple(int(c) for c in p) for p in points))

    @classmethod
    def outside_ball(cls, k: int) -> "Target":
        return cls("ball_complement", k=int(k))

    def contains(self, x) -> bool:
        x = tuple(x)
        if self.kind == "site":
            return x == self.site
        if self.kind == "shell":
            return sup_norm(x) == self.k
        if self.kind == "sites":
            return x in self.sites
        return sup_norm(x) > self.k

    def mask(self, box: _Box) -> np.ndarray:
        if self.kind == "shell":
            return box.shell == self.k
        if self.kind == "ball_complement":
            return box.shell > self.k
        pts = [self.site] if self.kind == "site" else list(self.sites)
        out = np.zeros(box.side ** box.d, dtype=bool)
        pts = [p for p in pts if sup_norm(p) <= box.outer]
        if pts:
            out[box.flat_array(np.array(pts))] = True
        return out

    def describe(self) -> dict:
        if self.kind == "site":
            return {"kind": "site", "site": list(self.site)}
        if self.kind == "sites":
            return {"kind": "sites", "size": len(self.sites)}
        return {"kind": self.kind, "k": self.k}


@dataclass
class HittingRecord:
    """Occurrence times ``T_{A,1} < T_{A,2} < ...`` of a target (``T_{A,0} = 0``)."""

    target: Target
    times: list = field(default_factory=list)
    occurrences: int = 0
    last: int | None = None

    def time(self, p: int) -> int | None:
        """T_{A,p}; ``None`` when unreached (or beyond the stored occurrences)."""
        if p == 0:
            return 0
        return self.times[p - 1] if p <= len(self.times) else None

    def to_dict(self) -> dict:
        return {"target": self.target.describe(), "times": list(self.times),
                "occurrences": self.occurrences, "last": self.last}


# -- operations -------------------------------------------------------------

def step(state: WalkState, view: ConductanceView) -> WalkState:
    """One transition drawn from ``p(x, .)`` using potential differences only."""
    nbrs, probs = view.step_probabilities(state.position)
    r = state.rng.random()
    j = int(np.searchsorted(np.cumsum(probs), r, side="right"))
    j = min(j, len(nbrs) - 1)
    return WalkState(nbrs[j], state.n + 1, state.rng, state.seed)


def _initial_radius(x, restrict):
    if restrict is not None:
        return restrict + 1
    return max(16, 2 * sup_norm(x) + 8)


def run(state: WalkState, view, n_steps: int, ledger: LocalTimeLedger | None = None,
        watch: Sequence[Target] = (), *, restrict: int | None = None, max_occ: int = 64,
        records: list | None = None):
    """Advance ``state`` by ``n_steps`` in place, updating ledger and hitting records.

    ``restrict=K`` simulates the chain with edges leaving ``B_K`` removed.
    Returns ``(ledger, records)``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if len(watch) > MAX_TARGETS:
        raise ValueError(f"at most {MAX_TARGETS} targets")
    d = view.d
    if restrict is not None and sup_norm(state.position) > restrict:
        raise ValueError("start outside the restricted ball")
    if records is None:
        records = [HittingRecord(t) for t in watch]
    radius = _initial_radius(state.position, restrict)
    if ledger is None:
        ledger = LocalTimeLedger(d, radius)
    occ_times = np.full((len(watch), max_occ), -1, dtype=np.int64)
    occ_n = np.array([r.occurrences for r in records], dtype=np.int64)
    occ_last = np.array([-1 if r.last is None else r.last for r in records], dtype=np.int64)
    for i, r in enumerate(records):
        occ_times[i, : min(len(r.times), max_occ)] = r.times[:max_occ]
    remaining = int(n_steps)
    if restrict is None:
        radius = max(radius, ledger.outer - 1)
    while True:
        box = _engine_box(view, radius, restrict)
        ledger._resize(box.outer)
        same = ledger.outer == box.outer
        counts = ledger.counts if same else np.zeros(box.side ** d, dtype=np.int64)
        mask = np.zeros(box.side ** d, dtype=np.uint8)
        for b, t in enumerate(watch):
            mask[t.mask(box)] |= np.uint8(1 << b)
        stop = -1 if restrict is not None else box.radius
        pos = box.flat(state.position)
        new_pos, done = _run_kernel(box.u, box.shell, box.offsets, pos, remaining, state.rng,
                                    counts, ledger.shells, ledger.directions, mask, occ_times,
                                    occ_n, occ_last, state.n, stop)
        if not same:
            tmp = LocalTimeLedger(d, box.outer)
            tmp.counts = counts
            tmp._resize(ledger.outer)
            ledger.counts += tmp.counts
        state.position = box.point(int(new_pos))
        state.n += int(done)
        ledger.n += int(done)
        remaining -= int(done)
        if remaining == 0:
            break
        radius *= 2
    for i, r in enumerate(records):
        r.occurrences = int(occ_n[i])
        r.times = [int(t) for t in occ_times[i, : min(occ_n[i], max_occ)]]
        r.last = None if occ_last[i] < 0 else int(occ_last[i])
    return ledger, records


@dataclass(frozen=True)
class ExcursionEstimate:
    """Monte Carlo estimate of ``sum_{z in A} E_z L(x, T_A^+)``."""

    estimate: float
    stderr: float
    repetitions: int
    set_size: int
    unreached: int = 0


def excursion_local_time(view, A: Sequence, x: Sequence[int], repetitions: int, seed: int,
                         *, restrict: int | None = None, budget: int = DEFAULT_BUDGET,
                         radius: int | None = None) -> ExcursionEstimate:
    """Average local time at ``x`` before returning to ``A``, scaled by ``|A|``.

    Starts are uniform over ``A``, so ``|A|`` times the mean is an unbiased
    estimate of the summed expectation.  Without ``restrict`` the walk lives on
    a cube of the given ``radius``; leaving it counts as not returning.
    """
    A = [tuple(int(c) for c in a) for a in A]
    x = tuple(int(c) for c in x)
    if restrict is None:
        radius = radius or max(64, 4 * max(sup_norm(p) for p in A + [x]))
        box = _engine_box(view, radius, None)
        stop = box.radius
    else:
        box = _engine_box(view, restrict + 1, restrict)
        stop = -1
    in_a = np.zeros(box.side ** view.d, dtype=np.bool_)
    starts = box.flat_array(np.array(A))
    in_a[starts] = True
    rng = np.random.default_rng(seed)
    out = _excursion_kernel(box.u, box.shell, box.offsets, starts, in_a, box.flat(x),
                            int(repetitions), int(budget), rng, stop)
    bad = int((out < 0).sum())
    if bad:
        raise Unreached(bad, budget)
    vals = out.astype(np.float64)
    m = len(A)
    se = m * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else float("nan")
    return ExcursionEstimate(float(m * vals.mean()), float(se), int(repetitions), m)


def trajectory_summary(state: WalkState, ledger: LocalTimeLedger, records=(), top: int = 10) -> dict:
    return {
        "n": int(ledger.n),
        "seed": state.seed,
        "position": list(state.position),
        "top_sites": [{"site": list(s), "count": c} for s, c in ledger.top_sites(top)],
        "shell_histogram": {str(k): v for k, v in ledger.shell_histogram().items()},
        "hitting": [r.to_dict() for r in records],
    }


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2)
