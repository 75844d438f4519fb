"""Forest-intrinsic evolution: leaf peeling and parent forwarding.

``T_0`` is the forest; ``T_{n+1}`` deletes every leaf of ``T_n``.  A root is
never a leaf while it has a live child, because its link to the sink counts as
a neighbour.  Consequently ``T_n = {x : height(x) >= n}``.

Under the descendant-count configuration every live vertex forwards its whole
amount to its parent (roots forward to the sink), so the field at step ``n+1``
is the child sum of the field at step ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from escapeflow.dynamics import ResourceField
from escapeflow.errors import ConsistencyError, PreconditionError
from escapeflow.forest import Forest, ForestStats, stats
from escapeflow.lattice import Vertex


@dataclass(frozen=True)
class PeelState:
    """Membership of ``T_n`` as a ravel-indexed mask.

    ``removed_index`` holds, per vertex, the first ``n`` with the vertex
    outside ``T_n`` (-1 while still alive or never a member).
    """

    forest: Forest
    alive_mask: np.ndarray
    n: int
    removed_index: np.ndarray

    @classmethod
    def initial(cls, f: Forest) -> "PeelState":
        if not f.oriented:
            raise PreconditionError("peeling needs an oriented forest")
        return cls(f, f.member_mask.copy(), 0, np.full(f.spec.n_vertices, -1, dtype=np.int64))

    @property
    def alive(self) -> set[Vertex]:
        spec = self.forest.spec
        return {spec.coord(i) for i in np.flatnonzero(self.alive_mask)}

    @property
    def removed_at(self) -> dict[Vertex, int]:
        spec = self.forest.spec
        return {spec.coord(i): int(self.removed_index[i]) for i in np.flatnonzero(self.removed_index >= 0)}

    @property
    def empty(self) -> bool:
        return not self.alive_mask.any()


def _child_sum(values: np.ndarray, f: Forest) -> np.ndarray:
    par = f.parent_index
    out = np.zeros_like(values)
    if values.dtype == object:
        out[:] = 0
    src = np.flatnonzero(par >= 0)
    np.add.at(out, par[src], values[src])
    return out


def live_degree(state: PeelState) -> np.ndarray:
    """Live forest neighbours of each live vertex; a root's sink link counts as one."""
    f = state.forest
    par = f.parent_index
    alive = state.alive_mask
    deg = _child_sum(alive.astype(np.int64), f)
    nonroot = par >= 0
    deg[nonroot] += alive[par[nonroot]]
    deg[f.root_mask] += 1
    return np.where(alive, deg, 0)


def peel(state: PeelState, f: Forest | None = None) -> PeelState:
    """Delete every live vertex with exactly one live neighbour."""
    f = f or state.forest
    if f is not state.forest:
        raise PreconditionError("state belongs to a different forest")
    leaves = state.alive_mask & (live_degree(state) == 1)
    alive = state.alive_mask & ~leaves
    removed = state.removed_index.copy()
    removed[leaves] = state.n + 1
    return PeelState(f, alive, state.n + 1, removed)


def peel_to(f: Forest, n: int) -> PeelState:
    state = PeelState.initial(f)
    for _ in range(n):
        state = peel(state)
    return state


def membership_by_height(f: Forest, n: int, st: ForestStats | None = None) -> set[Vertex]:
    """``{x : height(x) >= n}``, which equals ``T_n``."""
    st = st or stats(f)
    return {v for v, h in st.height.items() if h >= n}


def parent_forward_step(field: ResourceField, f: Forest, state: PeelState) -> ResourceField:
    """Child-sum update from step ``state.n`` to ``state.n + 1``; root mass goes to the sink."""
    if field.step_index != state.n:
        raise PreconditionError(f"field is at step {field.step_index}, state at {state.n}")
    vals = field.values
    if np.any(vals[~state.alive_mask] != 0):
        raise ConsistencyError(f"field is not supported on T_{state.n}")
    new = _child_sum(vals, f)
    roots = f.root_mask
    if field.value_mode == "exact":
        sink = field.sink + int(sum(vals[roots].tolist()))
    else:
        sink = field.sink + float(vals[roots].sum())
    nxt = peel(state, f)
    if np.any(new[~nxt.alive_mask] != 0):
        raise ConsistencyError(f"child sum leaks outside T_{nxt.n}")
    return ResourceField._trusted(field.spec, new, sink, field.step_index + 1)


@dataclass(frozen=True)
class FluxReport:
    ok: bool
    not_dominating: list[Vertex]
    outside_support: list[Vertex]


def check_flux_stab(field: ResourceField, f: Forest, state: PeelState) -> FluxReport:
    """Each live vertex strictly exceeds the sum of its children; dead vertices are 0."""
    if field.value_mode != "exact":
        raise PreconditionError("strict inequalities need exact-integer values")
    vals = field.values
    alive = state.alive_mask
    csum = _child_sum(vals, f)
    weak = alive & ~(vals > csum)
    leak = ~alive & (vals != 0)
    spec = f.spec
    return FluxReport(
        ok=not weak.any() and not leak.any(),
        not_dominating=[spec.coord(i) for i in np.flatnonzero(weak)],
        outside_support=[spec.coord(i) for i in np.flatnonzero(leak)],
    )


def verbatim_observation_failures(f: Forest, max_n: int | None = None) -> list[tuple[Vertex, Vertex, int]]:
    """Triples ``(y, parent(y), n)`` where "parent in T_{n+1} iff y in T_n" fails."""
    st = stats(f)
    max_n = max(st.height.values(), default=0) + 1 if max_n is None else max_n
    out = []
    for n in range(max_n + 1):
        for y, x in sorted(f.parent.items()):
            if (st.height[x] >= n + 1) != (st.height[y] >= n):
                out.append((y, x, n))
    return out


def corrected_observation_holds(f: Forest, max_n: int | None = None) -> bool:
    """``x in T_{n+1}`` iff some child of ``x`` is in ``T_n``, and children in ``T_n`` lift their parent."""
    st = stats(f)
    max_n = max(st.height.values(), default=0) + 1 if max_n is None else max_n
    state = PeelState.initial(f)
    for n in range(max_n + 1):
        nxt = peel(state)
        alive, alive_next = state.alive, nxt.alive
        for x in f.vertices:
            has_live_child = any(c in alive for c in f.children[x])
            if (x in alive_next) != has_live_child:
                return False
        for y, x in f.parent.items():
            if y in alive and x not in alive_next:
                return False
        state = nxt
    return True


@dataclass
class ClosedFormTrace:
    fields: list[ResourceField]
    states: list[PeelState]

    @property
    def extinction_step(self) -> int:
        return self.fields[-1].step_index


def closed_form_run(field: ResourceField, f: Forest, budget: int | None = None) -> ClosedFormTrace:
    """Parent-forward until ``T_n`` is empty (or ``budget`` steps)."""
    state = PeelState.initial(f)
    fields, states = [field], [state]
    while not state.empty and (budget is None or state.n < budget):
        field = parent_forward_step(field, f, state)
        state = peel(state, f)
        fields.append(field)
        states.append(state)
    return ClosedFormTrace(fields, states)
