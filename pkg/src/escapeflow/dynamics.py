"""The raw clustering process.

At step ``n`` every vertex with positive resource sends all of it to a vertex
of its closed neighbourhood holding the maximum amount (ties broken uniformly
at random); vertices with zero resource keep pointing at themselves.  The new
amount at ``x`` is the sum of everything routed to ``x``.

Fields are flat arrays in ravel (= lexicographic) order.  Exact mode stores
int64 when the total provably cannot overflow and Python ints otherwise;
float mode stores float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from escapeflow.errors import ConsistencyError, DomainError
from escapeflow.lattice import LatticeSpec, Vertex, neighbor_table
from escapeflow.rng import substream

SINK = -1
_INT64_MAX = np.iinfo(np.int64).max


def _exact_total(values: np.ndarray) -> int:
    if values.dtype == object:
        return int(sum(values.tolist()))
    return int(values.sum(dtype=object))


@dataclass
class ResourceField:
    spec: LatticeSpec
    values: np.ndarray
    sink: int | float = 0
    step_index: int = 0

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.shape != (self.spec.n_vertices,):
            v = v.reshape(-1)
            if v.shape != (self.spec.n_vertices,):
                raise DomainError(f"field has {v.size} values for {self.spec.n_vertices} vertices")
        if v.dtype.kind == "f":
            v = v.astype(np.float64, copy=False)
            if not np.all(np.isfinite(v)):
                raise DomainError("resource values must be finite")
            if np.any(v < 0):
                raise DomainError("resource values must be nonnegative")
            self.sink = float(self.sink)
        elif v.dtype.kind in "iuO":
            as_list = v.tolist()
            if any(not isinstance(a, (int, np.integer)) for a in as_list):
                raise DomainError("exact mode needs integer values")
            if any(a < 0 for a in as_list):
                raise DomainError("resource values must be nonnegative")
            self.sink = int(self.sink)
            total = sum(int(a) for a in as_list) + self.sink
            if total <= _INT64_MAX:
                v = np.array([int(a) for a in as_list], dtype=np.int64)
            else:
                v = np.empty(len(as_list), dtype=object)
                v[:] = [int(a) for a in as_list]
        else:
            raise DomainError(f"unsupported value dtype {v.dtype}")
        self.values = v

    @classmethod
    def _trusted(cls, spec, values, sink, step_index) -> "ResourceField":
        # Skips validation; callers guarantee the invariants.
        out = cls.__new__(cls)
        out.spec, out.values, out.sink, out.step_index = spec, values, sink, step_index
        return out

    @property
    def value_mode(self) -> str:
        return "float" if self.values.dtype.kind == "f" else "exact"

    @property
    def interior_total(self) -> int | float:
        if self.value_mode == "exact":
            return _exact_total(self.values)
        return float(self.values.sum())

    @property
    def total(self) -> int | float:
        """Resource on the lattice plus whatever the sink has absorbed."""
        return self.interior_total + self.sink

    @property
    def positive(self) -> int:
        return int(np.count_nonzero(self.values > 0))

    def value(self, x: Sequence[int]):
        v = self.values[self.spec.index(x)]
        return float(v) if self.value_mode == "float" else int(v)

    def as_dict(self, nonzero: bool = True) -> dict[Vertex, int | float]:
        idx = np.flatnonzero(self.values > 0) if nonzero else range(self.spec.n_vertices)
        cast = float if self.value_mode == "float" else int
        return {self.spec.coord(i): cast(self.values[i]) for i in idx}

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.spec.sides)

    def copy(self) -> "ResourceField":
        return ResourceField(self.spec, self.values.copy(), self.sink, self.step_index)

    @classmethod
    def from_mapping(
        cls, spec: LatticeSpec, values: dict[Sequence[int], int | float], value_mode: str = "exact"
    ) -> "ResourceField":
        arr = np.zeros(spec.n_vertices, dtype=np.int64 if value_mode == "exact" else np.float64)
        if value_mode == "exact":
            arr = arr.astype(object)
            arr[:] = 0
        for x, v in values.items():
            arr[spec.index(x)] = v
        return cls(spec, arr)

    def same_as(self, other: "ResourceField") -> bool:
        """Exact equality of values, sink and step index."""
        return (
            self.spec.sides == other.spec.sides
            and self.step_index == other.step_index
            and self.sink == other.sink
            and bool(np.array_equal(self.values, other.values))
        )


@dataclass
class RoutingDecision:
    """Argmax sets and targets for one step.

    ``candidates`` is the neighbour table and ``mask[i, k]`` marks the columns
    of row ``i`` that attain the neighbourhood maximum.  ``target[i]`` is a
    ravel index or ``SINK``.
    """

    spec: LatticeSpec
    candidates: np.ndarray
    mask: np.ndarray
    target: np.ndarray
    tie_count: int

    def argmax_set(self, x: Sequence[int]) -> set[Vertex]:
        i = self.spec.index(x)
        return {self.spec.coord(j) for j in self.candidates[i][self.mask[i]]}

    @cached_property
    def argmax_sets(self) -> dict[Vertex, set[Vertex]]:
        return {self.spec.coord(i): self.argmax_set(self.spec.coord(i)) for i in range(len(self.target))}

    def target_of(self, x: Sequence[int]) -> Vertex | str:
        t = int(self.target[self.spec.index(x)])
        return "sink" if t == SINK else self.spec.coord(t)

    @property
    def all_stay(self) -> bool:
        """Every vertex keeps its own resource (no transfer happens at this step)."""
        return bool(np.array_equal(self.target, np.arange(len(self.target))))


def _root_mask(spec: LatticeSpec, roots) -> np.ndarray | None:
    if roots is None or spec.topology != "box-sink":
        return None
    if isinstance(roots, np.ndarray) and roots.dtype == bool:
        return roots
    mask = np.zeros(spec.n_vertices, dtype=bool)
    for r in roots:
        mask[spec.index(r)] = True
    return mask


def route(field: ResourceField, roots=None, seed: int = 0) -> RoutingDecision:
    """Richest-neighbour targets for every vertex of ``field``.

    Ties draw from a substream keyed by ``(seed, step_index)``; vertex ``x``
    uses the ``x``-th uniform of that stream, so the choice does not depend on
    evaluation order.  In box-sink topology a positive root always targets the
    sink.
    """
    spec = field.spec
    table = neighbor_table(spec)
    vals = field.values
    sentinel = -1.0 if vals.dtype.kind == "f" else -1
    ext = np.append(vals, np.array([sentinel], dtype=vals.dtype))
    nv = ext[table]  # -1 in the table picks up the sentinel
    top = nv.max(axis=1)
    mask = (nv == top[:, None]) & (table >= 0)
    count = mask.sum(axis=1)
    V = spec.n_vertices
    positive = vals > 0
    col = np.argmax(mask, axis=1)
    tied = positive & (count > 1)
    tie_count = int(np.count_nonzero(tied))
    if tie_count:
        u = substream(seed, "ties", field.step_index).random(V)
        k = np.floor(u * count).astype(np.int64)
        pick = (np.cumsum(mask, axis=1) == (k + 1)[:, None]) & mask
        col = np.where(tied, np.argmax(pick, axis=1), col)
    target = table[np.arange(V), col]
    target = np.where(positive, target, np.arange(V))
    rmask = _root_mask(spec, roots)
    if rmask is not None:
        target = np.where(rmask & positive, SINK, target)
    return RoutingDecision(spec, table, mask, target, tie_count)


def step(field: ResourceField, decision: RoutingDecision) -> ResourceField:
    """Aggregate: the new value at ``x`` sums old values routed to ``x`` in ascending order."""
    vals = field.values
    tgt = decision.target
    to_sink = tgt == SINK
    moving = ~to_sink
    src = np.flatnonzero(moving)
    if vals.dtype.kind == "f":
        new = np.bincount(tgt[src], weights=vals[src], minlength=len(vals))
        sink = field.sink + float(vals[to_sink].sum())
    else:
        new = np.zeros_like(vals)
        if vals.dtype == object:
            new[:] = 0
        np.add.at(new, tgt[src], vals[src])
        sink = field.sink + _exact_total(vals[to_sink])
    if vals.dtype == np.int64 and np.any(new < 0):
        raise ConsistencyError("integer overflow during aggregation")
    return ResourceField._trusted(field.spec, new, sink, field.step_index + 1)


def is_fixed(field: ResourceField, decision: RoutingDecision) -> bool:
    """Every positive vertex is its own strict argmax and nothing moves.

    A vertex that stays only because a tie happened to pick itself is not
    fixed, so ties among positive vertices rule fixation out.  Under this
    condition the configuration is constant forever.
    """
    return decision.tie_count == 0 and decision.all_stay


@dataclass(frozen=True)
class StepRecord:
    step: int
    total: int | float
    sink: int | float
    positive: int
    ties: int


@dataclass
class Trace:
    records: list[StepRecord]
    final: ResourceField
    status: str  # "fixation", "empty", "budget" or "truncated"
    stop_step: int | None = None

    @property
    def truncated(self) -> bool:
        return self.status == "truncated"


def evolve(
    field: ResourceField, roots=None, seed: int = 0
) -> Iterator[tuple[ResourceField, RoutingDecision]]:
    """Yield ``(C_n, decision_n)`` forever."""
    rmask = _root_mask(field.spec, roots)
    while True:
        decision = route(field, rmask, seed)
        yield field, decision
        field = step(field, decision)


def run(
    field: ResourceField,
    budget: int,
    stop: str = "fixation",
    roots=None,
    seed: int = 0,
    on_step: Callable[[ResourceField, RoutingDecision], None] | None = None,
) -> Trace:
    """Iterate route + step for at most ``budget`` steps.

    ``stop='fixation'`` halts at the first fixed configuration (an empty field
    counts), ``'empty'`` when no positive value remains, ``'budget'`` only on
    the budget.  Missing the requested stop yields status ``truncated``.
    """
    if budget < 0:
        raise DomainError("budget must be >= 0")
    if stop not in ("fixation", "empty", "budget"):
        raise DomainError(f"unknown stop rule {stop!r}")
    records: list[StepRecord] = []
    for cur, decision in evolve(field, roots, seed):
        records.append(StepRecord(cur.step_index, cur.total, cur.sink, cur.positive, decision.tie_count))
        if on_step is not None:
            on_step(cur, decision)
        n = cur.step_index - field.step_index
        if stop == "fixation" and is_fixed(cur, decision):
            return Trace(records, cur, "fixation", cur.step_index)
        if stop == "empty" and cur.positive == 0:
            return Trace(records, cur, "empty", cur.step_index)
        if n >= budget:
            status = "budget" if stop == "budget" else "truncated"
            return Trace(records, cur, status, cur.step_index if stop == "budget" else None)
    raise AssertionError("unreachable")
