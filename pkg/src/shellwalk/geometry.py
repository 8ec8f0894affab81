"""Sup-norm geometry of Z^d: balls, shells, face interiors and neighbours.

``B_k`` is the closed sup-norm ball of radius ``k`` and ``C_k = B_k \\ B_{k-1}``
the shell of points at sup-norm exactly ``k``.  A shell point is
*face-interior* when exactly one coordinate attains ``|x_i| = k``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

Point = tuple[int, ...]


def sup_norm(x: Sequence[int]) -> int:
    return max((abs(int(c)) for c in x), default=0)


def neighbors(x: Sequence[int]) -> list[Point]:
    """The 2d nearest neighbours in the order +e_1, -e_1, ..., +e_d, -e_d."""
    x = tuple(int(c) for c in x)
    out = []
    for i in range(len(x)):
        for sign in (1, -1):
            y = list(x)
            y[i] += sign
            out.append(tuple(y))
    return out


def neighbor_offsets(d: int) -> np.ndarray:
    """Offset vectors in the canonical neighbour order, shape (2d, d)."""
    off = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        off[2 * i, i] = 1
        off[2 * i + 1, i] = -1
    return off


def is_face_interior(x: Sequence[int], k: int | None = None) -> bool:
    k = sup_norm(x) if k is None else k
    if k == 0:
        return False
    return sum(1 for c in x if abs(c) == k) == 1


def shell_cardinality(k: int, d: int) -> int:
    """|C_k| = (2k+1)^d - (2k-1)^d, and 1 for the origin shell."""
    if k < 0 or d < 1:
        raise ValueError("need k >= 0 and d >= 1")
    if k == 0:
        return 1
    return (2 * k + 1) ** d - (2 * k - 1) ** d


def face_interior_cardinality(k: int, d: int) -> int:
    if k < 1 or d < 1:
        raise ValueError("need k >= 1 and d >= 1")
    return 2 * d * (2 * k - 1) ** (d - 1)


def side_length_shell_cardinality(k: int, d: int) -> int:
    """Boundary size ``k^d - (k-2)^d`` of a cube with ``k`` points per edge.

    This is *not* ``|C_k|`` for the radius-indexed shells used everywhere else
    in the package; both agree only in the growth rate ``k^(d-1)``.
    """
    return k ** d - (k - 2) ** d


def _shell_faces(k: int, d: int):
    # Face i: |x_i| = k, |x_j| < k for j < i, |x_j| <= k for j > i.
    inner = range(-k + 1, k)
    outer = range(-k, k + 1)
    for i in range(d):
        for sign in (1, -1):
            yield i, sign * k, [inner] * i, [outer] * (d - 1 - i)


def iter_shell(k: int, d: int) -> Iterator[Point]:
    if k < 0 or d < 1:
        raise ValueError("need k >= 0 and d >= 1")
    if k == 0:
        yield (0,) * d
        return
    for i, xi, before, after in _shell_faces(k, d):
        for head in itertools.product(*before):
            for tail in itertools.product(*after):
                yield head + (xi,) + tail


def shell_array(k: int, d: int) -> np.ndarray:
    """All points of C_k as an (N, d) int64 array, in ``iter_shell`` order."""
    if k == 0:
        return np.zeros((1, d), dtype=np.int64)
    blocks = []
    for i, xi, before, after in _shell_faces(k, d):
        axes = [np.arange(r.start, r.stop) for r in before] + [np.array([xi])]
        axes += [np.arange(r.start, r.stop) for r in after]
        grid = np.meshgrid(*axes, indexing="ij")
        blocks.append(np.stack([g.ravel() for g in grid], axis=1))
    return np.concatenate(blocks).astype(np.int64)


def ball_array(K: int, d: int) -> np.ndarray:
    """Points of B_K ordered shell by shell (C_0, C_1, ..., C_K)."""
    return np.concatenate([shell_array(k, d) for k in range(K + 1)])


def box_coordinates(R: int, d: int) -> np.ndarray:
    """Coordinates of the cube [-R, R]^d in C order, shape ((2R+1)^d, d)."""
    axis = np.arange(-R, R + 1, dtype=np.int64)
    grid = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def box_sup_norm(R: int, d: int) -> np.ndarray:
    """Sup-norm of every site of [-R, R]^d in C order, as a flat int32 array."""
    axis = np.abs(np.arange(-R, R + 1, dtype=np.int32))
    out = axis
    for _ in range(d - 1):
        out = np.maximum.outer(out, axis)
    return np.ascontiguousarray(out, dtype=np.int32).ravel()


@dataclass(frozen=True)
class ShellEnumeration:
    """Lazy view of one shell ``C_k``; iterating yields its points."""

    k: int
    d: int

    def __post_init__(self):
        if self.k < 0 or self.d < 1:
            raise ValueError("need k >= 0 and d >= 1")

    def __iter__(self) -> Iterator[Point]:
        return iter_shell(self.k, self.d)

    def __len__(self) -> int:
        return shell_cardinality(self.k, self.d)

    @property
    def cardinality(self) -> int:
        return len(self)

    def face_interior(self, x: Sequence[int]) -> bool:
        return sup_norm(x) == self.k and is_face_interior(x, self.k)

    def face_interior_points(self) -> Iterator[Point]:
        return (x for x in self if is_face_interior(x, self.k))

    def to_array(self) -> np.ndarray:
        return shell_array(self.k, self.d)


def shell_points(k: int, d: int) -> ShellEnumeration:
    return ShellEnumeration(k, d)
