"""Cross-checks between the raw dynamics and the closed form, and batch experiments."""

from __future__ import annotations

import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from escapeflow.closed_form import PeelState, check_flux_stab, parent_forward_step, peel
from escapeflow.dynamics import ResourceField, route, run, step
from escapeflow.errors import PreconditionError
from escapeflow.forest import Forest, escape_forest, verify_property_ii
from escapeflow.init import descendant_init, iid_init
from escapeflow.lattice import LatticeSpec

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("ESCAPEFLOW_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_seeds(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Apply ``fn`` to independent items, preserving input order in the result."""
    items = list(items)
    workers = min(worker_count(), len(items) or 1)
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def interior_mask(spec: LatticeSpec) -> np.ndarray:
    """Vertices at distance >= side/4 from the boundary along every axis."""
    axes = []
    for s in spec.sides:
        c = np.arange(s)
        axes.append((c >= s / 4) & (s - 1 - c >= s / 4))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.logical_and.reduce(grids).ravel()


def interior_mean(field: ResourceField) -> float:
    mask = interior_mask(field.spec)
    vals = field.values[mask]
    if field.value_mode == "exact":
        return int(sum(vals.tolist())) / len(vals)
    return float(vals.mean())


@dataclass
class RunReport:
    config_digest: str | None
    steps: list[int] = field(default_factory=list)
    total: list[int | float] = field(default_factory=list)
    sink: list[int | float] = field(default_factory=list)
    positive: list[int] = field(default_factory=list)
    ties: list[int] = field(default_factory=list)
    verdicts: dict[str, str] = field(default_factory=dict)
    escape: dict[str, float | int | bool] = field(default_factory=dict)
    extinction_step: int | None = None
    truncated: bool = False
    mismatch_step: int | None = None

    def record(self, fld: ResourceField, ties: int) -> None:
        self.steps.append(fld.step_index)
        self.total.append(fld.total)
        self.sink.append(fld.sink)
        self.positive.append(fld.positive)
        self.ties.append(ties)

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.verdicts.values())

    def to_json(self) -> dict:
        return asdict(self)


def equivalence_check(
    f: Forest, budget: int | None = None, seed: int = 0, digest: str | None = None
) -> RunReport:
    """Run the raw dynamics and parent forwarding side by side from the descendant configuration.

    Verdicts: ``equivalence`` (identical fields at every step, zero ties),
    ``flux_stab`` (strict domination at every step) and ``escape`` (interior
    exactly 0 at the end, sink equal to the initial total).
    """
    ok, bad = verify_property_ii(f)
    if not ok:
        raise PreconditionError(f"forest violates property (ii) on {len(bad)} edge(s), e.g. {bad[0]}")
    if f.spec.topology != "box-sink":
        f = Forest(LatticeSpec(f.spec.d, f.spec.sides, "box-sink"), f.vertices, f.edges, f.parent, f.roots)
    report = RunReport(digest)
    raw = descendant_init(f)
    initial_total = raw.total
    initial_mean = interior_mean(raw)
    cf = raw
    state = PeelState.initial(f)
    roots = f.root_mask
    equal = True
    flux_ok = True
    while True:
        decision = route(raw, roots, seed)
        report.record(raw, decision.tie_count)
        if decision.tie_count:
            equal = False
        if not check_flux_stab(cf, f, state).ok:
            flux_ok = False
        if state.empty:
            break
        if budget is not None and state.n >= budget:
            report.truncated = True
            break
        raw = step(raw, decision)
        cf = parent_forward_step(cf, f, state)
        state = peel(state, f)
        if equal and not raw.same_as(cf):
            equal = False
            report.mismatch_step = raw.step_index
    report.verdicts["equivalence"] = "pass" if equal else "fail"
    report.verdicts["flux_stab"] = "pass" if flux_ok else "fail"
    final_mean = interior_mean(raw)
    if report.truncated:
        report.verdicts["escape"] = "not-run"
    else:
        report.extinction_step = raw.step_index
        drained = raw.positive == 0 and raw.sink == initial_total
        report.verdicts["escape"] = "pass" if drained and final_mean < initial_mean else "fail"
    report.escape = {
        "initial_total": initial_total,
        "sink_total": raw.sink,
        "initial_interior_mean": initial_mean,
        "final_interior_mean": final_mean,
    }
    return report


def escape_run(side: int, seed: int, budget: int | None = None, root_policy: str = "boundary") -> RunReport:
    return equivalence_check(escape_forest(side, seed, root_policy=root_policy), budget, seed)


def escape_report(reports: Sequence[RunReport]) -> dict:
    """Aggregate completed runs; truncated runs are counted but excluded from the exact claims."""
    done = [r for r in reports if not r.truncated]
    return {
        "runs": len(reports),
        "completed": len(done),
        "truncated": len(reports) - len(done),
        "all_interior_zero": all(r.escape["final_interior_mean"] == 0 and r.positive[-1] == 0 for r in done),
        "all_sink_equals_initial": all(r.escape["sink_total"] == r.escape["initial_total"] for r in done),
        "min_initial_interior_mean": min((r.escape["initial_interior_mean"] for r in done), default=None),
        "mean_initial_interior_mean": (
            statistics.fmean(r.escape["initial_interior_mean"] for r in done) if done else None
        ),
        "max_final_interior_mean": max((r.escape["final_interior_mean"] for r in done), default=None),
    }


@dataclass(frozen=True)
class ProbeRow:
    side: int
    median: float
    means: tuple[float, ...]


def _central_mean_descendants(side: int, seed: int) -> float:
    return interior_mean(descendant_init(escape_forest(side, seed)))


def _central_mean_uniform(side: int, seed: int) -> float:
    spec = LatticeSpec(2, (side, side), "box-zero")
    return interior_mean(iid_init(spec, ("iid-uniform", 0.0, 1.0), seed))


def divergence_probe(sides: Sequence[int], seeds: Sequence[int], kind: str = "descendants") -> list[ProbeRow]:
    """Median over seeds of the central-window mean of C_0, per box side."""
    probe = {"descendants": _central_mean_descendants, "iid-uniform": _central_mean_uniform}[kind]
    rows = []
    for side in sides:
        means = map_seeds(lambda s: probe(side, s), seeds)
        rows.append(ProbeRow(side, float(statistics.median(means)), tuple(means)))
    return rows


@dataclass(frozen=True)
class FixationSummary:
    runs: int
    fixed: int
    times: tuple[int | None, ...]

    @property
    def fraction(self) -> float:
        return self.fixed / self.runs if self.runs else 1.0


def fixation_stats(
    side: int,
    seeds: Sequence[int],
    budget: int | None = None,
    dist: tuple = ("iid-uniform", 0.0, 1.0),
    topology: str = "torus",
    d: int = 2,
) -> FixationSummary:
    spec = LatticeSpec(d, (side,) * d, topology)
    budget = 10 * side if budget is None else budget

    def one(seed: int) -> int | None:
        fld = iid_init(spec, dist, seed)
        tr = run(fld, budget, "fixation", seed=seed)
        return tr.stop_step if tr.status == "fixation" else None

    times = tuple(map_seeds(one, seeds))
    return FixationSummary(len(times), sum(t is not None for t in times), times)


def light_cone_check(L: int, m: int, r: int, n: int, seed: int = 0) -> str:
    """Compare a central window of a side-L box against the same window of a side-(L+2m) box.

    Both boxes carry the same values on the overlap (the big box holds the
    descendant configuration of a scaled forest).  Returns ``pass``, ``fail``
    or ``not-run`` (a tie occurred in either run).
    """
    if m < 0 or r < 0 or n < 0:
        raise PreconditionError("L, m, r, n must be nonnegative")
    small = LatticeSpec(2, (L, L), "box-zero")
    center = (L // 2, L // 2)
    margin = small.boundary_distance(center) - r
    if r + 2 * n > margin:
        raise PreconditionError(f"radius {r} + 2*{n} exceeds the window margin {margin}")
    big_forest = escape_forest(L + 2 * m, seed)
    big = descendant_init(big_forest)
    grid = big.grid()
    small_field = ResourceField(small, grid[m : m + L, m : m + L].copy())

    offs = np.array([(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1) if abs(a) + abs(b) <= r])
    win_small = np.ravel_multi_index(tuple((offs + center).T), small.sides)
    win_big = np.ravel_multi_index(tuple((offs + center + m).T), big.spec.sides)

    a, b = small_field, big
    for k in range(n + 1):
        if not np.array_equal(a.values[win_small], b.values[win_big]):
            return "fail"
        if k == n:
            break
        da = route(a, seed=seed)
        db = route(b, big_forest.root_mask, seed)
        if da.tie_count or db.tie_count:
            return "not-run"
        a, b = step(a, da), step(b, db)
    return "pass"
