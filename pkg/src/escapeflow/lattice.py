"""Finite lattice geometry: boxes and tori standing in for Z^d.

Vertices are tuples of ints.  Internally a vertex is also addressed by its
C-order ravel index, which coincides with ascending lexicographic order of
coordinates; everything downstream that needs a canonical order uses it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from escapeflow.errors import DomainError

Vertex = tuple[int, ...]

TOPOLOGIES = ("torus", "box-zero", "box-sink")


@dataclass(frozen=True)
class LatticeSpec:
    d: int
    sides: tuple[int, ...]
    topology: str = "box-zero"

    def __post_init__(self) -> None:
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        if self.d < 1:
            raise DomainError(f"dimension must be >= 1, got {self.d}")
        if len(self.sides) != self.d:
            raise DomainError(f"expected {self.d} side lengths, got {len(self.sides)}")
        if any(s < 2 for s in self.sides):
            raise DomainError(f"all side lengths must be >= 2, got {self.sides}")
        if self.topology not in TOPOLOGIES:
            raise DomainError(f"unknown topology {self.topology!r}")

    @classmethod
    def box(cls, *sides: int, topology: str = "box-zero") -> "LatticeSpec":
        return cls(len(sides), tuple(sides), topology)

    @property
    def periodic(self) -> bool:
        return self.topology == "torus"

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.sides))

    def contains(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(0 <= c < s for c, s in zip(x, self.sides))

    def canonical(self, x: Sequence[int]) -> Vertex:
        """Wrap coordinates on a torus; on a box, reject out-of-range points."""
        if len(x) != self.d:
            raise DomainError(f"vertex {tuple(x)} has wrong dimension for d={self.d}")
        if self.periodic:
            return tuple(int(c) % s for c, s in zip(x, self.sides))
        v = tuple(int(c) for c in x)
        if not self.contains(v):
            raise DomainError(f"vertex {v} lies outside the box {self.sides}")
        return v

    def check(self, x: Sequence[int]) -> Vertex:
        v = tuple(int(c) for c in x)
        if not self.contains(v):
            raise DomainError(f"vertex {v} is not in the lattice {self.sides}")
        return v

    def index(self, x: Sequence[int]) -> int:
        return int(np.ravel_multi_index(self.check(x), self.sides))

    def coord(self, i: int) -> Vertex:
        return tuple(int(c) for c in np.unravel_index(int(i), self.sides))

    def vertices(self) -> Iterator[Vertex]:
        """All vertices in ascending lexicographic order."""
        return itertools.product(*(range(s) for s in self.sides))

    def boundary_distance(self, x: Sequence[int]) -> int:
        """Number of unit steps from ``x`` to the outermost layer of the box."""
        return min(min(c, s - 1 - c) for c, s in zip(x, self.sides))

    def to_json(self) -> dict:
        return {"d": self.d, "sides": list(self.sides), "topology": self.topology}


def _unit_offsets(d: int) -> list[Vertex]:
    out = []
    for axis in range(d):
        for sign in (-1, 1):
            off = [0] * d
            off[axis] = sign
            out.append(tuple(off))
    return out


def _shift(x: Vertex, off: Sequence[int], spec: LatticeSpec) -> Vertex | None:
    y = tuple(c + o for c, o in zip(x, off))
    if spec.periodic:
        return tuple(c % s for c, s in zip(y, spec.sides))
    return y if spec.contains(y) else None


def neighbors(x: Sequence[int], spec: LatticeSpec) -> list[Vertex]:
    """Closed von Neumann neighbourhood of ``x`` (including ``x``), sorted.

    Positions outside a box are omitted: an absent vertex behaves exactly like
    one that holds zero resource forever.
    """
    v = spec.check(x)
    out = {v}
    for off in _unit_offsets(spec.d):
        y = _shift(v, off, spec)
        if y is not None:
            out.add(y)
    return sorted(out)


def lattice_neighbors(x: Sequence[int], spec: LatticeSpec) -> list[Vertex]:
    """Neighbours of ``x`` at 1-norm distance exactly one."""
    v = spec.check(x)
    return [y for y in neighbors(v, spec) if y != v]


def window(center: Sequence[int], radius: int, spec: LatticeSpec) -> set[Vertex]:
    """All in-lattice vertices within 1-norm (graph) distance ``radius`` of ``center``."""
    if radius < 0:
        raise DomainError(f"radius must be >= 0, got {radius}")
    c = spec.check(center)
    out: set[Vertex] = set()
    ranges = [range(-radius, radius + 1)] * spec.d
    for off in itertools.product(*ranges):
        if sum(abs(o) for o in off) > radius:
            continue
        y = _shift(c, off, spec)
        if y is not None:
            out.add(y)
    return out


def edges(spec: LatticeSpec) -> list[tuple[Vertex, Vertex]]:
    """Undirected lattice edges as ``(u, v)`` with ``u < v``, sorted."""
    out = set()
    for x in spec.vertices():
        for y in lattice_neighbors(x, spec):
            if x < y:
                out.add((x, y))
    return sorted(out)


@lru_cache(maxsize=64)
def neighbor_table(spec: LatticeSpec) -> np.ndarray:
    """Ravel-index table of closed neighbourhoods, shape ``(V, 2d+1)``.

    Row ``i`` lists the neighbourhood of vertex ``i`` in ascending order and is
    padded with ``-1`` where a box truncates it (or a tiny torus folds it).
    """
    V = spec.n_vertices
    K = 2 * spec.d + 1
    grid = np.arange(V, dtype=np.int64).reshape(spec.sides)
    cols = [grid.ravel()]
    for axis in range(spec.d):
        for sign in (-1, 1):
            if spec.periodic:
                shifted = np.roll(grid, -sign, axis=axis)
            else:
                shifted = np.full(spec.sides, -1, dtype=np.int64)
                src = [slice(None)] * spec.d
                dst = [slice(None)] * spec.d
                if sign == 1:
                    dst[axis] = slice(0, -1)
                    src[axis] = slice(1, None)
                else:
                    dst[axis] = slice(1, None)
                    src[axis] = slice(0, -1)
                shifted[tuple(dst)] = grid[tuple(src)]
            cols.append(shifted.ravel())
    table = np.stack(cols, axis=1)
    # Sort ascending with -1 pushed to the end, then blank out duplicates.
    key = np.where(table < 0, V, table)
    key.sort(axis=1)
    dup = np.zeros_like(key, dtype=bool)
    dup[:, 1:] = key[:, 1:] == key[:, :-1]
    key[dup] = V
    key.sort(axis=1)
    table = np.where(key >= V, -1, key)
    table.setflags(write=False)
    assert table.shape == (V, K)
    return table


@lru_cache(maxsize=64)
def edge_index_pairs(spec: LatticeSpec) -> np.ndarray:
    """Lattice edges as an ``(E, 2)`` array of ravel indices, ``u < v``, sorted."""
    table = neighbor_table(spec)
    V = spec.n_vertices
    u = np.repeat(np.arange(V), table.shape[1])
    v = table.ravel()
    keep = (v > u)
    pairs = np.stack([u[keep], v[keep]], axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    pairs.setflags(write=False)
    return pairs
