"""Exact finite-state computations for excursion local times and escape bounds.

A :class:`FiniteChain` is the walk on ``B_K`` built from a potential source.
Two boundary treatments are available:

``reflect``
    edges leaving ``B_K`` are removed and rows renormalised.  The chain stays
    reversible with weights ``pi_K`` that coincide with ``pi`` on ``B_{K-1}``,
    so excursion identities for sets inside ``B_{K-1}`` hold exactly.
``absorb``
    the exterior is one absorbing state.

Every verifier returns :class:`CheckResult` records; right-hand sides use an
independent :class:`ConductanceView` so that a corrupted chain is detected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .environment import ConductanceView
from .geometry import ball_array, neighbors, shell_array, sup_norm

IDENTITY_RTOL = 1e-9


class SingularSystem(RuntimeError):
    """The killed chain cannot reach the target set from some state."""


class PathInvalid(ValueError):
    """A supplied path is not self-avoiding, not nearest-neighbour, or leaves its region."""


# -- chain ------------------------------------------------------------------

@dataclass
class FiniteChain:
    states: list
    P: np.ndarray
    weights: np.ndarray          # reversible weights of the finite chain (nan for absorbing)
    K: int | None = None
    boundary: str = "reflect"
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {s: i for i, s in enumerate(self.states)}

    @property
    def n(self) -> int:
        return len(self.states)

    @classmethod
    def build(cls, source, K: int, boundary: str = "reflect") -> "FiniteChain":
        if boundary not in ("reflect", "absorb"):
            raise ValueError("boundary must be 'reflect' or 'absorb'")
        d = source.d
        big = ball_array(K + 1, d)
        Vall = np.asarray(source.potential_array(big), dtype=np.float64)
        Vof = {tuple(p): v for p, v in zip(big.tolist(), Vall)}
        states = [tuple(p) for p in big.tolist() if sup_norm(p) <= K]
        index = {s: i for i, s in enumerate(states)}
        absorb = boundary == "absorb"
        N = len(states) + (1 if absorb else 0)
        P = np.zeros((N, N))
        weights = np.full(N, np.nan)
        for i, s in enumerate(states):
            nb = neighbors(s)
            keep = [y for y in nb if absorb or y in index]
            v = np.array([Vof[y] for y in keep])
            w = np.exp(-0.5 * (v - v.min()))
            w /= w.sum()
            for y, q in zip(keep, w):
                P[i, index.get(y, N - 1)] += q
            weights[i] = math.fsum(math.exp(-0.5 * Vof[s] - 0.5 * Vof[y]) for y in keep)
        if absorb:
            P[-1, -1] = 1.0
            states = states + [("boundary",)]
            index[("boundary",)] = N - 1
        return cls(states, P, weights, K, boundary, index)

    @classmethod
    def from_matrix(cls, P: np.ndarray, weights: np.ndarray, labels=None) -> "FiniteChain":
        labels = labels or [(i,) for i in range(len(P))]
        return cls(list(labels), np.asarray(P, float), np.asarray(weights, float), None, "custom")

    def idx(self, points) -> np.ndarray:
        return np.array([self.index[tuple(p)] for p in points], dtype=np.int64)

    def row_sum_error(self) -> float:
        return float(np.abs(self.P.sum(axis=1) - 1).max())

    def detailed_balance_error(self) -> float:
        live = ~np.isnan(self.weights)
        F = self.weights[live, None] * self.P[np.ix_(live, live)]
        return float(np.abs(F - F.T).max() / np.nanmax(self.weights))


# -- excursion algebra -------------------------------------------------------

class Excursions:
    """Exact quantities for excursions from a set ``A`` until the return to ``A``.

    ``G = (I - P_BB)^{-1}`` on the complement ``B``; ``M1 = P_AB G`` holds
    expected local times, ``Q`` the law of the return location and
    ``H = G P_BA`` the hitting location from ``B``.
    """

    def __init__(self, chain: FiniteChain, A: Sequence):
        self.chain = chain
        self.A = [tuple(a) for a in A]
        ia = chain.idx(self.A)
        if chain.boundary == "absorb":
            raise ValueError("excursion identities need a chain without absorption")
        mask = np.ones(chain.n, dtype=bool)
        mask[ia] = False
        ib = np.flatnonzero(mask)
        self.ia, self.ib = ia, ib
        self.pos_b = {int(j): k for k, j in enumerate(ib)}
        self.pos_a = {int(j): k for k, j in enumerate(ia)}
        P = chain.P
        I = np.eye(len(ib))
        try:
            lu = scipy.linalg.lu_factor(I - P[np.ix_(ib, ib)], check_finite=True)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystem(str(exc)) from exc
        G = scipy.linalg.lu_solve(lu, I)
        if not np.all(np.isfinite(G)) or np.abs(G).max() > 1e14:
            raise SingularSystem("target set not reachable from every state")
        self.G = G
        self.M1 = P[np.ix_(ia, ib)] @ G
        self.H = G @ P[np.ix_(ib, ia)]
        self.Q = P[np.ix_(ia, ia)] + self.M1 @ P[np.ix_(ib, ia)]

    def first_moment(self, x) -> np.ndarray:
        """``E_u L(x, T_A^+)`` for each ``u`` in ``A``."""
        j = self.chain.index[tuple(x)]
        if j in self.pos_a:
            return self.Q[:, self.pos_a[j]].copy()
        return self.M1[:, self.pos_b[j]].copy()

    def set_first_moment(self, xs) -> np.ndarray:
        return sum(self.first_moment(x) for x in xs)

    def second_moment(self, x) -> np.ndarray:
        """``E_u L(x, T_A^+)^2``."""
        j = self.chain.index[tuple(x)]
        if j in self.pos_a:
            return self.Q[:, self.pos_a[j]].copy()
        k = self.pos_b[j]
        return self.M1[:, k] * (2 * self.G[k, k] - 1)

    def joint(self, x) -> np.ndarray:
        """``J[u, w] = E_u[L(x, T_A^+) 1{X_{T_A^+} = w}]``."""
        j = self.chain.index[tuple(x)]
        if j in self.pos_a:
            a = self.pos_a[j]
            J = np.zeros_like(self.Q)
            J[:, a] = self.Q[:, a]
            return J
        k = self.pos_b[j]
        return np.outer(self.M1[:, k], self.H[k])

    def escape(self, z) -> float:
        """``P_z(T_A^+ < T_z^+)`` for ``z`` outside ``A``."""
        k = self.pos_b[self.chain.index[tuple(z)]]
        return 1.0 / self.G[k, k]

    def multi_moments(self, x, l: int):
        """First and second moments of ``L(x, T_{A,l}^+)`` from each start in ``A``."""
        g1 = self.first_moment(x)
        g2 = self.second_moment(x)
        J = self.joint(x)
        m1 = np.zeros(len(self.A))
        m2 = np.zeros(len(self.A))
        for _ in range(l):
            m2 = g2 + 2 * J @ m1 + self.Q @ m2
            m1 = g1 + self.Q @ m1
        return m1, m2

    def multi_set_first_moment(self, xs, l: int) -> np.ndarray:
        g = self.set_first_moment(xs)
        m = np.zeros(len(self.A))
        for _ in range(l):
            m = g + self.Q @ m
        return m


# -- reports ----------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    instance: dict
    lhs: float
    rhs: float
    kind: str = "identity"       # identity: |lhs - rhs| small; bound: lhs <= rhs
    tol: float = IDENTITY_RTOL
    scale: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.extra = {k: float(v) if isinstance(v, (np.floating, np.integer)) else v
                      for k, v in self.extra.items()}

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs) / (self.scale if self.scale else max(abs(self.rhs), 1e-300))

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        if not (math.isfinite(self.lhs) and math.isfinite(self.rhs)):
            return False
        if self.kind == "identity":
            return bool(self.gap <= self.tol)
        # bounds: allow rounding at the size of the operands
        return bool(self.slack >= -1e-12 * max(abs(self.lhs), abs(self.rhs), 1.0))

    def to_dict(self) -> dict:
        out = {"name": self.name, "instance": self.instance, "lhs": self.lhs,
               "rhs": self.rhs, "kind": self.kind, "pass": self.passed}
        if self.kind == "identity":
            out["gap"] = self.gap
        else:
            out["slack"] = self.slack
        if self.extra:
            out["extra"] = self.extra
        return out


def report_json(results: Sequence[CheckResult]) -> str:
    return json.dumps([r.to_dict() for r in results], sort_keys=True, indent=2)


def _check_const(view: ConductanceView, A) -> float:
    vals = np.array([view.capacitance(a) for a in A])
    spread = np.abs(vals - vals[0]).max() / vals[0]
    if spread > 1e-12:
        raise ValueError(f"pi is not constant on the target set (spread {spread:.2e})")
    return float(vals[0])


def _inside(chain: FiniteChain, pts) -> None:
    if chain.K is None:
        return
    for p in pts:
        if sup_norm(p) > chain.K - 1:
            raise ValueError(f"{p} must lie in B_{chain.K - 1} where the weights are exact")


# -- verifiers --------------------------------------------------------------

def verify_moment_identities(chain: FiniteChain, view: ConductanceView, A, x, A2=None,
                             ls: Sequence[int] = (1, 2, 5), instance: dict | None = None):
    """Summed expected local times at ``x`` (and on ``A2``) over ``l`` excursions from ``A``."""
    instance = dict(instance or {})
    A = [tuple(a) for a in A]
    _inside(chain, A + [tuple(x)] + [tuple(v) for v in (A2 or [])])
    piA = _check_const(view, A)
    ex = Excursions(chain, A)
    out = []
    rhs1 = view.capacitance(x) / piA
    for l in ls:
        lhs = float(ex.multi_moments(x, l)[0].sum())
        name = "local_time_mean" if l == 1 else "local_time_mean_multi"
        out.append(CheckResult(name, {**instance, "x": list(x), "l": l}, lhs, l * rhs1))
    if A2:
        A2 = [tuple(v) for v in A2]
        piA2 = _check_const(view, A2)
        for l in ls:
            lhs = float(ex.multi_set_first_moment(A2, l).sum())
            name = "set_local_time_mean" if l == 1 else "set_local_time_mean_multi"
            out.append(CheckResult(name, {**instance, "set2_size": len(A2), "l": l}, lhs,
                                   l * len(A2) * piA2 / piA))
    return out


def verify_variance_bound(chain: FiniteChain, view: ConductanceView, A, z,
                          instance: dict | None = None):
    """Centered second moment of ``L(z, T_A^+)`` summed over starts in ``A``.

    Returns the bound check plus two identity checks for the raw second
    moment: the closed form ``R (2/e - 1)`` and the form ``R/e + R``, where
    ``R = pi(z)/pi(A)`` and ``e = P_z(T_A^+ < T_z^+)``.
    """
    instance = dict(instance or {})
    A = [tuple(a) for a in A]
    z = tuple(z)
    if z in A:
        raise ValueError("z must lie outside A")
    _inside(chain, A + [z])
    piA = _check_const(view, A)
    ex = Excursions(chain, A)
    R = view.capacitance(z) / piA
    c = R / len(A)
    m1 = ex.first_moment(z)
    m2 = ex.second_moment(z)
    raw = float(m2.sum())
    centered = float((m2 - 2 * c * m1 + c * c).sum())
    e = ex.escape(z)
    inst = {**instance, "z": list(z), "set_size": len(A)}
    return [
        CheckResult("variance_bound", inst, centered, 2 * R / e, kind="bound",
                    extra={"escape": e, "R": R}),
        CheckResult("second_moment_closed_form", inst, raw, R * (2 / e - 1)),
        CheckResult("second_moment_as_printed", inst, raw, R / e + R,
                    extra={"escape": e}),
    ]


def verify_second_moment_decomposition(chain: FiniteChain, view: ConductanceView, A, x,
                                       l: int, instance: dict | None = None):
    """Centered second moment over ``l`` excursions: direct value vs the expansion.

    The expansion is evaluated with the return-location kernel raised to the
    power ``i - 1`` (gap between excursion indices minus one) and, for
    comparison, to the power ``i``. The expansion relies on reversing an
    excursion, which only preserves the local time when ``x`` is outside
    ``A``; for ``x`` in ``A`` the checks are named with an ``_in_set`` suffix.
    """
    instance = dict(instance or {})
    A = [tuple(a) for a in A]
    _inside(chain, A + [tuple(x)])
    _check_const(view, A)
    ex = Excursions(chain, A)
    nA = len(A)
    g1 = ex.first_moment(x)
    e_x = float(g1.sum())
    m1, m2 = ex.multi_moments(x, l)
    cl = l * e_x / nA
    lhs = float((m2 - 2 * cl * m1 + cl * cl).sum())
    c1 = e_x / nA
    single = float((ex.second_moment(x) - 2 * c1 * g1 + c1 * c1).sum())
    Ebar = g1 - c1
    cross_prev = 0.0
    cross_i = 0.0
    Qp = np.eye(nA)
    for i in range(1, l):
        cross_prev += (l - i) * float(Ebar @ Qp @ Ebar)  # Q^{i-1}
        Qp = Qp @ ex.Q
        cross_i += (l - i) * float(Ebar @ Qp @ Ebar)      # Q^{i}
    scale = max(abs(lhs), l * abs(single), 1e-300)
    inst = {**instance, "x": list(x), "l": l, "set_size": nA}
    centered_sum = float(Ebar.sum())
    sfx = "_in_set" if tuple(x) in set(A) else ""
    return [
        CheckResult("second_moment_decomposition" + sfx, inst, lhs, l * single + 2 * cross_prev,
                    scale=scale),
        CheckResult("second_moment_decomposition_as_printed" + sfx, inst, lhs,
                    l * single + 2 * cross_i, scale=scale),
        CheckResult("centered_means_sum_zero", inst, centered_sum, 0.0,
                    scale=max(e_x, 1e-300)),
    ]


def verify_mixing_bound(chain: FiniteChain, view: ConductanceView, A, ls=(1, 2, 5, 10),
                        instance: dict | None = None):
    """``max_{u0,u} |P_{u0}(X_{T_{A,l}} = u) - 1/|A||`` against ``(1 - 1/|A|)^l``."""
    instance = dict(instance or {})
    A = [tuple(a) for a in A]
    _inside(chain, A)
    _check_const(view, A)
    ex = Excursions(chain, A)
    nA = len(A)
    out = []
    Ql = np.eye(nA)
    for l in range(1, max(ls) + 1):
        Ql = Ql @ ex.Q
        if l in ls:
            dev = float(np.abs(Ql - 1.0 / nA).max())
            uniform_dev = float(np.abs(Ql.mean(axis=0) - 1.0 / nA).max())
            out.append(CheckResult("mixing_bound", {**instance, "l": l, "set_size": nA},
                                   dev, (1 - 1 / nA) ** l, kind="bound",
                                   extra={"uniform_start_deviation": uniform_dev,
                                          "symmetry_error": float(np.abs(ex.Q - ex.Q.T).max())}))
    return out


# -- hitting probabilities ---------------------------------------------------

@dataclass
class HittingSolution:
    target: list
    h: np.ndarray
    residual: float
    chain: FiniteChain

    def at(self, x) -> float:
        return float(self.h[self.chain.index[tuple(x)]])


def hitting_solution(chain: FiniteChain, A) -> HittingSolution:
    """``h(x) = P_x(T_A < T_boundary)`` on an absorbing chain."""
    if chain.boundary != "absorb":
        raise ValueError("needs an absorbing chain")
    ia = set(chain.idx(A).tolist())
    bd = chain.n - 1
    free = np.array([i for i in range(chain.n) if i not in ia and i != bd])
    h = np.zeros(chain.n)
    h[list(ia)] = 1.0
    if free.size:
        M = np.eye(free.size) - chain.P[np.ix_(free, free)]
        rhs = chain.P[np.ix_(free, sorted(ia))].sum(axis=1)
        try:
            h[free] = scipy.linalg.solve(M, rhs)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
    res = float(np.abs(chain.P[free] @ h - h[free]).max()) if free.size else 0.0
    return HittingSolution([tuple(a) for a in A], h, res, chain)


# -- Dirichlet bounds ---------------------------------------------------------

def boundary_crossing_sum(view: ConductanceView, k: int) -> float:
    """Sum of conductances over edges joining ``C_k`` and ``C_{k+1}``."""
    total = []
    for z in shell_array(k, view.d).tolist():
        for y in neighbors(z):
            if sup_norm(y) == k + 1:
                total.append(view.conductance(y, z))
    return math.fsum(total)


def dirichlet_energy_of_indicator(view: ConductanceView, k: int) -> float:
    """``Phi(h_k) = sum_{y,z} pi(y) p(y,z) (h(y) - h(z))^2`` for ``h = 1_{B_k}``.

    Ordered pairs: every crossing edge counts twice.
    """
    return 2.0 * boundary_crossing_sum(view, k)


def escape_probability(view: ConductanceView, z, region: Sequence, success: set,
                       cut_radius: int | None = None) -> float:
    """``P_z(T_success < T_z^+)`` for the walk living on ``region``.

    ``region`` lists the non-absorbing sites; ``success`` sites absorb.
    Edges to sites with sup-norm above ``cut_radius`` are removed.
    """
    z = tuple(z)
    free = [tuple(p) for p in region if tuple(p) != z and tuple(p) not in success]
    fidx = {p: i for i, p in enumerate(free)}
    n = len(free)
    M = np.eye(n)
    rhs = np.zeros(n)

    def kernel(x):
        nbrs = [y for y in neighbors(x) if cut_radius is None or sup_norm(y) <= cut_radius]
        v = np.array([view.potential(y) for y in nbrs])
        w = np.exp(-0.5 * (v - v.min()))
        return nbrs, w / w.sum()

    for p in free:
        i = fidx[p]
        for y, q in zip(*kernel(p)):
            if y in success:
                rhs[i] += q
            elif y in fidx:
                M[i, fidx[y]] -= q
            elif y != z:
                raise ValueError(f"site {y} outside the declared region")
    h = scipy.linalg.solve(M, rhs) if n else np.zeros(0)
    total = 0.0
    for y, q in zip(*kernel(z)):
        if y in success:
            total += q
        elif y in fidx:
            total += q * h[fidx[y]]
    return float(total)


def outward_path(z, k: int) -> list:
    """Monotone axis path from ``z`` in ``B_k`` to ``C_{k+1}`` along its largest coordinate."""
    z = list(z)
    i = int(np.argmax(np.abs(z)))
    sign = 1 if z[i] >= 0 else -1
    path = [tuple(z)]
    while abs(z[i]) < k + 1:
        z[i] += sign
        path.append(tuple(z))
    return path


def inward_path(z, k: int) -> list:
    """Monotone path from ``z`` outside ``B_k`` to ``C_k`` staying outside ``B_k`` until the end."""
    z = list(z)
    path = [tuple(z)]
    for i in range(len(z)):            # first pull coordinates down to k+1
        while abs(z[i]) > k + 1:
            z[i] -= 1 if z[i] > 0 else -1
            path.append(tuple(z))
    for i in range(len(z)):            # then the ones sitting at k+1, one by one
        if abs(z[i]) == k + 1:
            z[i] -= 1 if z[i] > 0 else -1
            path.append(tuple(z))
    return path


def validate_path(path, start, end_shell: int, allowed_shells: range) -> None:
    path = [tuple(p) for p in path]
    if not path or path[0] != tuple(start):
        raise PathInvalid("path must start at z")
    if len(set(path)) != len(path):
        raise PathInvalid("path is not self-avoiding")
    for a, b in zip(path, path[1:]):
        if sum(abs(u - v) for u, v in zip(a, b)) != 1:
            raise PathInvalid(f"{a} -> {b} is not a nearest-neighbour step")
    if sup_norm(path[-1]) != end_shell:
        raise PathInvalid(f"path must end on shell {end_shell}")
    for p in path[:-1]:
        if sup_norm(p) not in allowed_shells:
            raise PathInvalid(f"{p} leaves the allowed region")
    if len(path) < 2:
        raise PathInvalid("path needs at least one step")


def _path_min_conductance(view, path) -> float:
    return min(view.conductance(a, b) for a, b in zip(path, path[1:]))


def dirichlet_bounds(view: ConductanceView, k: int, z, *, out_path=None,
                     z_out=None, in_path=None, y_target=None, instance: dict | None = None):
    """Escape-probability bounds from the Dirichlet principle around ``B_k``.

    * upper: ``P_z(T_{C_{k+1}} < T_z^+) <= Phi(h_k) / (2 pi(z))``;
    * lower, outward: ``>= min_q pi(path edge) / (2 m pi(z))`` along a path
      from ``z`` to ``C_{k+1}`` inside shells ``|z|..k``;
    * lower, inward (for ``z_out`` outside ``B_k``): the same with a path down
      to ``C_k`` inside shells ``k+1..|z_out|``, evaluated on the walk cut at
      radius ``|z_out| + 1``; cutting only lowers the escape probability.
    """
    instance = dict(instance or {})
    z = tuple(z)
    if sup_norm(z) > k:
        raise ValueError("z must lie in B_k")
    d = view.d
    inner = [tuple(p) for p in ball_array(k, d).tolist()]
    outer = {tuple(p) for p in shell_array(k + 1, d).tolist()}
    exact = escape_probability(view, z, inner, outer)
    crossing = boundary_crossing_sum(view, k)
    phi = dirichlet_energy_of_indicator(view, k)
    piz = view.capacitance(z)
    inst = {**instance, "k": k, "z": list(z)}
    res = [CheckResult("escape_upper", inst, exact, phi / (2 * piz), kind="bound",
                       extra={"crossing_sum": crossing,
                              "crossing_sum_over_2pi": crossing / (2 * piz)})]
    path = out_path if out_path is not None else outward_path(z, k)
    validate_path(path, z, k + 1, range(sup_norm(z), k + 1))
    m = len(path) - 1
    res.append(CheckResult("escape_lower_outward", {**inst, "path_len": m},
                           _path_min_conductance(view, path) / (2 * m * piz), exact,
                           kind="bound"))
    if z_out is not None:
        z_out = tuple(z_out)
        r = sup_norm(z_out)
        if r <= k:
            raise ValueError("z_out must lie outside B_k")
        R = r + 1
        region = [tuple(p) for p in ball_array(R, d).tolist() if sup_norm(p) > k]
        target = {tuple(p) for p in shell_array(k, d).tolist()}
        exact_in = escape_probability(view, z_out, region, target, cut_radius=R)
        pth = in_path if in_path is not None else inward_path(z_out, k)
        validate_path(pth, z_out, k, range(k + 1, r + 1))
        mm = len(pth) - 1
        res.append(CheckResult("escape_lower_inward",
                               {**inst, "z_out": list(z_out), "path_len": mm, "cut": R},
                               _path_min_conductance(view, pth) / (2 * mm * view.capacitance(z_out)),
                               exact_in, kind="bound"))
    if y_target is not None:
        y = tuple(y_target)
        pth = _straight_path(z, y)
        mq = len(pth) - 1
        lower = 1 - math.sqrt(phi * mq / _path_min_conductance(view, pth)) if mq else 1.0
        to_z = _hit_before_exit(view, y, z, inner, outer)
        to_y = _hit_before_exit(view, z, y, inner, outer)
        res.append(CheckResult("hit_lower", {**inst, "y": list(y)}, lower, to_z, kind="bound",
                               extra={"P_z_hits_y_first": to_y}))
    return res


def _straight_path(a, b) -> list:
    a = list(a)
    path = [tuple(a)]
    for i in range(len(a)):
        while a[i] != b[i]:
            a[i] += 1 if b[i] > a[i] else -1
            path.append(tuple(a))
    return path


def _hit_before_exit(view, start, target, inner, outer) -> float:
    """``P_start(T_target < T_{C_{k+1}})`` (1 when start == target)."""
    start, target = tuple(start), tuple(target)
    if start == target:
        return 1.0
    free = [p for p in inner if p != target]
    fidx = {p: i for i, p in enumerate(free)}
    M = np.eye(len(free))
    rhs = np.zeros(len(free))
    for p in free:
        nbrs, probs = view.step_probabilities(p)
        for y, q in zip(nbrs, probs):
            if y == target:
                rhs[fidx[p]] += q
            elif y in fidx:
                M[fidx[p], fidx[y]] -= q
    h = scipy.linalg.solve(M, rhs)
    return float(h[fidx[start]])


# -- randomized suite -------------------------------------------------------

def _level_sets_inside(source, K: int) -> list:
    """Constant-pi sets inside ``B_{K-1}``: signature classes of each shell, plus the origin."""
    from .levelsets import partition_shell
    sets = [[(0,) * source.d]]
    for k in range(1, K):
        part = partition_shell(source, k, keep_members=True, check=False)
        sets += [e.members for e in part.entries]
    return sets


def instance_checks(source, K: int, rng: np.random.Generator, *, view=None,
                    instance: dict | None = None, ls=(1, 2, 5), decomposition_ls=(2, 3, 4),
                    mixing_ls=(1, 2, 5, 10)) -> list:
    """All excursion verifiers on one reflected chain.

    The chain is built from ``source``; right-hand sides use ``view``
    (default: a view of the same source).
    """
    view = view or ConductanceView(source)
    chain = FiniteChain.build(source, K, "reflect")
    sets = _level_sets_inside(view.source, K)
    inner = [tuple(p) for p in ball_array(K - 1, source.d).tolist()]
    pick = rng.permutation(len(sets))
    A = sets[pick[0]]
    A2 = sets[pick[1]] if len(sets) > 1 else None
    # prefer a non-singleton target when one exists
    multi = [i for i in pick if len(sets[i]) > 1]
    if multi:
        A = sets[multi[0]]
    inst = dict(instance or {})
    inst.update({"K": K, "set_size": len(A)})
    x = inner[int(rng.integers(len(inner)))]
    out = verify_moment_identities(chain, view, A, x, A2, ls, inst)
    out += verify_moment_identities(chain, view, A, A[0], None, (1,), inst)
    outside = [p for p in inner if p not in set(A)]
    if outside:
        z = outside[int(rng.integers(len(outside)))]
        out += verify_variance_bound(chain, view, A, z, inst)
        for l in decomposition_ls:
            out += verify_second_moment_decomposition(chain, view, A, z, l, inst)
    for l in decomposition_ls:
        out += verify_second_moment_decomposition(chain, view, A, A[0], l, inst)
    out += verify_mixing_bound(chain, view, A, mixing_ls, inst)
    return out


def dirichlet_instance(view, k: int, rng: np.random.Generator, instance: dict | None = None):
    d = view.d
    ball = [tuple(p) for p in ball_array(k, d).tolist()]
    z = ball[int(rng.integers(len(ball)))]
    r = k + 1 + int(rng.integers(2))
    shell = [tuple(p) for p in shell_array(r, d).tolist()]
    z_out = shell[int(rng.integers(len(shell)))]
    y = ball[int(rng.integers(len(ball)))]
    return dirichlet_bounds(view, k, z, z_out=z_out, y_target=y, instance=instance)
