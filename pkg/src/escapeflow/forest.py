"""Random rooted forests embedded in the lattice.

Construction path for the escape experiments:

1. ``sample_weights`` draws i.i.d. uniform edge weights;
2. ``build_msf`` keeps the minimum spanning tree (on a finite connected graph
   this is exactly what survives when the heaviest edge of every cycle is
   deleted; ``cycle_rule_violations`` checks that afterwards);
3. ``orient`` picks a root per component and points every edge towards it;
4. ``scale_up`` doubles the forest, subdividing each edge, and shifts it by a
   random ``W`` in ``{0,1}^d`` so that any two lattice-adjacent members are
   joined by a forest edge.

On the infinite lattice each component would be one-ended; here a root plays
the part of the end and hands its mass to a virtual sink.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from escapeflow import lattice
from escapeflow.errors import DomainError, PreconditionError
from escapeflow.lattice import LatticeSpec, Vertex
from escapeflow.rng import substream

Edge = tuple[Vertex, Vertex]
EdgeWeights = dict[Edge, float]

ROOT_POLICIES = ("boundary", "lexmin")


def _edge(u: Vertex, v: Vertex) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class Forest:
    """A forest on a subset of lattice vertices.

    ``edges`` is always populated.  ``parent`` and ``roots`` are empty for an
    unoriented forest (as returned by ``build_msf``); once oriented, every
    member is either a root or has exactly one parent.
    """

    spec: LatticeSpec
    vertices: frozenset[Vertex]
    edges: frozenset[Edge]
    parent: Mapping[Vertex, Vertex] = field(default_factory=dict)
    roots: frozenset[Vertex] = frozenset()

    @classmethod
    def from_parents(
        cls, spec: LatticeSpec, parent: Mapping[Vertex, Vertex], roots: Iterable[Vertex]
    ) -> "Forest":
        parent = {tuple(c): tuple(p) for c, p in parent.items()}
        roots = frozenset(tuple(r) for r in roots)
        verts = frozenset(parent) | frozenset(parent.values()) | roots
        edges = frozenset(_edge(c, p) for c, p in parent.items())
        f = cls(spec, verts, edges, parent, roots)
        f.validate()
        return f

    @property
    def oriented(self) -> bool:
        return bool(self.roots) or not self.vertices

    def validate(self) -> None:
        """Check membership, acyclicity of parent links and reachability of a root."""
        for v in self.vertices:
            self.spec.check(v)
        if not self.oriented:
            return
        if set(self.parent) & self.roots:
            raise PreconditionError("a root cannot have a parent")
        if len(self.parent) + len(self.roots) != len(self.vertices):
            raise PreconditionError("every non-root member needs exactly one parent")
        # depth() raises if some member never reaches a root
        self.depth

    @cached_property
    def children(self) -> dict[Vertex, list[Vertex]]:
        out: dict[Vertex, list[Vertex]] = {v: [] for v in self.vertices}
        for c, p in self.parent.items():
            out[p].append(c)
        for kids in out.values():
            kids.sort()
        return out

    @cached_property
    def depth(self) -> dict[Vertex, int]:
        """Distance (in forest steps) from each member to its root."""
        depth = {r: 0 for r in self.roots}
        queue = deque(sorted(self.roots))
        while queue:
            v = queue.popleft()
            for c in self.children[v]:
                if c in depth:
                    raise PreconditionError(f"parent links revisit {c}")
                depth[c] = depth[v] + 1
                queue.append(c)
        if len(depth) != len(self.vertices):
            raise PreconditionError("parent links contain a cycle or a dangling member")
        return depth

    @cached_property
    def parent_index(self) -> np.ndarray:
        """Ravel-indexed parent array: -2 for non-members, -1 for roots."""
        if not self.oriented:
            raise PreconditionError("forest has no orientation")
        out = np.full(self.spec.n_vertices, -2, dtype=np.int64)
        for r in self.roots:
            out[self.spec.index(r)] = -1
        for c, p in self.parent.items():
            out[self.spec.index(c)] = self.spec.index(p)
        out.setflags(write=False)
        return out

    @cached_property
    def member_mask(self) -> np.ndarray:
        out = np.zeros(self.spec.n_vertices, dtype=bool)
        for v in self.vertices:
            out[self.spec.index(v)] = True
        out.setflags(write=False)
        return out

    @cached_property
    def root_mask(self) -> np.ndarray:
        out = np.zeros(self.spec.n_vertices, dtype=bool)
        for r in self.roots:
            out[self.spec.index(r)] = True
        out.setflags(write=False)
        return out

    def is_descendant(self, y: Vertex, x: Vertex) -> bool:
        """The partial order ``y <= x``: ``x`` lies on the path from ``y`` to its root."""
        if y not in self.vertices or x not in self.vertices:
            return False
        v: Vertex | None = y
        while v is not None:
            if v == x:
                return True
            v = self.parent.get(v)
        return False

    def to_json(self) -> dict:
        return {
            "d": self.spec.d,
            "sides": list(self.spec.sides),
            "roots": [list(r) for r in sorted(self.roots)],
            "parents": [[list(c), list(self.parent[c])] for c in sorted(self.parent)],
        }

    @classmethod
    def from_json(cls, obj: Mapping, topology: str = "box-sink") -> "Forest":
        spec = LatticeSpec(int(obj["d"]), tuple(obj["sides"]), topology)
        parent = {tuple(c): tuple(p) for c, p in obj["parents"]}
        return cls.from_parents(spec, parent, [tuple(r) for r in obj["roots"]])


@dataclass(frozen=True)
class ForestStats:
    """Subtree heights and descendant counts (self included) of an oriented forest."""

    height: dict[Vertex, int]
    desc: dict[Vertex, int]
    height_array: np.ndarray
    desc_array: np.ndarray


def sample_weights(spec: LatticeSpec, seed: int, stream: str = "weights") -> EdgeWeights:
    """I.i.d. uniform ``[0, 1)`` weight per lattice edge, pairwise distinct."""
    es = lattice.edges(spec)
    rng = substream(seed, stream)
    w = rng.random(len(es))
    # Redraw collisions; never triggers with float64 draws on realistic sizes.
    while len(np.unique(w)) < len(w):
        _, first = np.unique(w, return_index=True)
        dup = np.setdiff1d(np.arange(len(w)), first)
        w[dup] = rng.random(len(dup))
    return {e: float(x) for e, x in zip(es, w)}


class _UnionFind:
    def __init__(self, items: Iterable[Vertex]):
        self.up = {v: v for v in items}

    def find(self, v: Vertex) -> Vertex:
        root = v
        while self.up[root] != root:
            root = self.up[root]
        while self.up[v] != root:
            self.up[v], v = root, self.up[v]
        return root

    def union(self, a: Vertex, b: Vertex) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.up[max(ra, rb)] = min(ra, rb)
        return True


def build_msf(
    spec: LatticeSpec, w: Mapping[Edge, float], vertices: Iterable[Vertex] | None = None
) -> Forest:
    """Minimum spanning forest of the graph whose edges are the keys of ``w``.

    ``vertices`` defaults to the whole lattice.  The result is unoriented.
    """
    verts = frozenset(spec.vertices()) if vertices is None else frozenset(map(tuple, vertices))
    if len(set(w.values())) != len(w):
        raise PreconditionError("edge weights must be pairwise distinct")
    for u, v in w:
        if u not in verts or v not in verts:
            raise PreconditionError(f"edge {(u, v)} leaves the vertex set")
    uf = _UnionFind(verts)
    kept = []
    for e in sorted(w, key=w.__getitem__):
        if uf.union(*e):
            kept.append(_edge(*e))
            if len(kept) == len(verts) - 1:
                break
    return Forest(spec, verts, frozenset(kept))


def cycle_rule_violations(f: Forest, w: Mapping[Edge, float]) -> list[Edge]:
    """Non-forest edges of ``w`` that are not the heaviest edge on the cycle they close.

    An edge joining two different components closes no cycle, so it is also
    reported: a minimal spanning forest would have kept it.
    """
    g = f if f.oriented else orient(f)
    depth = g.depth
    bad = []
    for e, we in w.items():
        e = _edge(*e)
        if e in f.edges:
            continue
        u, v = e
        heaviest = -np.inf
        while u != v:
            if u in g.roots and v in g.roots:
                heaviest = np.inf
                break
            if depth[u] < depth[v]:
                u, v = v, u
            p = g.parent[u]
            heaviest = max(heaviest, w[_edge(u, p)])
            u = p
        if not we > heaviest:
            bad.append(e)
    return sorted(bad)


def _components(f: Forest) -> list[list[Vertex]]:
    adj: dict[Vertex, list[Vertex]] = {v: [] for v in f.vertices}
    for u, v in f.edges:
        adj[u].append(v)
        adj[v].append(u)
    seen: set[Vertex] = set()
    comps = []
    for s in sorted(f.vertices):
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        stack = [s]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    comp.append(y)
                    stack.append(y)
        comps.append(sorted(comp))
    return comps


def choose_root(component: Sequence[Vertex], spec: LatticeSpec, policy: str = "boundary") -> Vertex:
    if policy == "boundary":
        return min(component, key=lambda v: (spec.boundary_distance(v), v))
    if policy == "lexmin":
        return min(component)
    raise DomainError(f"unknown root policy {policy!r}")


def orient(t: Forest, root: Vertex | None = None, policy: str = "boundary") -> Forest:
    """Point every edge of ``t`` towards a root.

    With an explicit ``root``, ``t`` must be a single tree containing it.
    Otherwise each component gets its own root chosen by ``policy``.
    """
    adj: dict[Vertex, list[Vertex]] = {v: [] for v in t.vertices}
    for u, v in t.edges:
        adj[u].append(v)
        adj[v].append(u)
    if root is not None:
        root = tuple(root)
        if root not in t.vertices:
            raise PreconditionError(f"root {root} is not a vertex of the forest")
        roots = [root]
    else:
        roots = [choose_root(c, t.spec, policy) for c in _components(t)]
    parent: dict[Vertex, Vertex] = {}
    seen = set(roots)
    for r in roots:
        queue = deque([r])
        while queue:
            x = queue.popleft()
            for y in sorted(adj[x]):
                if y in seen:
                    if parent.get(x) != y:
                        raise PreconditionError("input contains a cycle")
                    continue
                seen.add(y)
                parent[y] = x
                queue.append(y)
    if len(seen) != len(t.vertices):
        raise PreconditionError("explicit root given but the forest is not connected")
    return Forest(t.spec, t.vertices, t.edges, parent, frozenset(roots))


def layer_embed(spec: LatticeSpec, seed: int) -> Forest:
    """Independent 2-D minimal spanning trees in every layer ``Z^2 x {z}``."""
    if spec.d < 3:
        raise DomainError("layer_embed needs d >= 3")
    topo = "torus" if spec.periodic else "box-zero"
    plane = LatticeSpec(2, spec.sides[:2], topo)
    plane_edges = lattice.edges(plane)
    verts: set[Vertex] = set()
    kept: set[Edge] = set()
    for z in itertools.product(*(range(s) for s in spec.sides[2:])):
        rng = substream(seed, "weights", *z)
        w = rng.random(len(plane_edges))
        while len(np.unique(w)) < len(w):
            w = rng.random(len(plane_edges))
        t = build_msf(plane, dict(zip(plane_edges, w.tolist())))
        verts.update(v + z for v in t.vertices)
        kept.update((u + z, v + z) for u, v in t.edges)
    return Forest(spec, frozenset(verts), frozenset(kept))


def scale_up(h: Forest, W: Sequence[int], target: LatticeSpec | None = None) -> Forest:
    """Double ``h``, subdividing every edge, then translate by ``W``.

    Edge ``(x, y)`` of ``h`` becomes ``(2x+W, x+y+W)`` and ``(x+y+W, 2y+W)``.
    If ``y``'s parent is ``x``, the midpoint's parent is ``2x+W``.
    """
    W = tuple(int(c) for c in W)
    if len(W) != h.spec.d or any(c not in (0, 1) for c in W):
        raise DomainError(f"shift {W} is not in {{0,1}}^{h.spec.d}")
    if not h.oriented:
        raise PreconditionError("scale_up needs an oriented forest")
    if target is None:
        target = LatticeSpec(h.spec.d, tuple(2 * s for s in h.spec.sides), "box-sink")

    def img(x: Vertex) -> Vertex:
        return tuple(2 * a + b for a, b in zip(x, W))

    parent: dict[Vertex, Vertex] = {}
    for y, x in h.parent.items():
        mid = tuple(a + b + c for a, b, c in zip(x, y, W))
        parent[img(y)] = mid
        parent[mid] = img(x)
    roots = [img(r) for r in h.roots]
    for v in itertools.chain(parent, roots):
        if not target.contains(v):
            raise PreconditionError(f"scaled vertex {v} does not fit in {target.sides}")
    return Forest.from_parents(target, parent, roots)


def verify_property_ii(f: Forest, spec: LatticeSpec | None = None) -> tuple[bool, list[Edge]]:
    """Every lattice edge with both endpoints in the forest must be a forest edge."""
    spec = spec or f.spec
    if not f.vertices:
        return True, []
    V = spec.n_vertices
    member = np.zeros(V, dtype=bool)
    for v in f.vertices:
        member[spec.index(v)] = True
    pairs = lattice.edge_index_pairs(spec)
    inside = pairs[member[pairs[:, 0]] & member[pairs[:, 1]]]
    fkeys = np.array(
        sorted(spec.index(u) * V + spec.index(v) for u, v in f.edges), dtype=np.int64
    )
    lo = np.minimum(inside[:, 0], inside[:, 1])
    hi = np.maximum(inside[:, 0], inside[:, 1])
    missing = ~np.isin(lo * V + hi, fkeys)
    bad = [(spec.coord(a), spec.coord(b)) for a, b in zip(lo[missing], hi[missing])]
    return not bad, bad


def stats(f: Forest) -> ForestStats:
    """Heights (0 for leaves) and descendant counts for every member."""
    if not f.oriented:
        raise PreconditionError("stats needs an oriented forest")
    spec = f.spec
    par = f.parent_index
    depth_arr = np.full(spec.n_vertices, -1, dtype=np.int64)
    for v, dv in f.depth.items():
        depth_arr[spec.index(v)] = dv
    desc = np.where(f.member_mask, 1, 0).astype(np.int64)
    height = np.zeros(spec.n_vertices, dtype=np.int64)
    max_depth = int(depth_arr.max(initial=0))
    for level in range(max_depth, 0, -1):
        nodes = np.flatnonzero(depth_arr == level)
        np.add.at(desc, par[nodes], desc[nodes])
        np.maximum.at(height, par[nodes], height[nodes] + 1)
    height = np.where(f.member_mask, height, -1)
    idx = {v: spec.index(v) for v in f.vertices}
    return ForestStats(
        height={v: int(height[i]) for v, i in idx.items()},
        desc={v: int(desc[i]) for v, i in idx.items()},
        height_array=height,
        desc_array=desc,
    )


def draw_shift(seed: int, d: int) -> tuple[int, ...]:
    """Uniform element of ``{0,1}^d`` from the seed's shift substream."""
    return tuple(int(c) for c in substream(seed, "shift").integers(0, 2, size=d))


def base_forest(spec: LatticeSpec, seed: int, root_policy: str = "boundary") -> Forest:
    """Oriented minimal spanning forest (d = 2) or layered forest (d > 2) on ``spec``."""
    if spec.d == 2:
        t = build_msf(spec, sample_weights(spec, seed))
    elif spec.d > 2:
        t = layer_embed(spec, seed)
    else:
        raise DomainError("forest constructions need d >= 2")
    return orient(t, policy=root_policy)


def escape_forest(
    side: int | Sequence[int],
    seed: int,
    d: int = 2,
    root_policy: str = "boundary",
    W: Sequence[int] | None = None,
) -> Forest:
    """Scaled-up random forest filling a box-sink box of the given side(s).

    The base forest lives on a box of half the side; ``W`` defaults to a
    uniform draw from the seed's shift substream.
    """
    sides = (side,) * d if isinstance(side, int) else tuple(side)
    if any(s < 4 for s in sides):
        raise DomainError(f"scaled forests need sides >= 4, got {sides}")
    base = base_forest(LatticeSpec(len(sides), tuple(s // 2 for s in sides)), seed, root_policy)
    W = draw_shift(seed, len(sides)) if W is None else W
    return scale_up(base, W, LatticeSpec(len(sides), sides, "box-sink"))
