"""Named verification suites shared by the CLI ``verify`` command and the acceptance tests.

Every suite returns a JSON-ready dict with at least ``suite`` and ``verdict``
(``pass`` or ``fail``).
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Sequence

import numpy as np

from escapeflow import lattice
from escapeflow.analysis import (
    divergence_probe,
    equivalence_check,
    escape_report,
    fixation_stats,
    light_cone_check,
    map_seeds,
)
from escapeflow.closed_form import (
    PeelState,
    corrected_observation_holds,
    membership_by_height,
    peel,
    verbatim_observation_failures,
)
from escapeflow.dynamics import run
from escapeflow.forest import (
    Forest,
    build_msf,
    cycle_rule_violations,
    escape_forest,
    sample_weights,
    stats,
    verify_property_ii,
)
from escapeflow.init import iid_init
from escapeflow.lattice import LatticeSpec, Vertex

DEFAULT_SIZES = (8, 16, 32, 64)


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


# -- minimal spanning forest ------------------------------------------------


def _connected(verts: Sequence[Vertex], es: Sequence[tuple[Vertex, Vertex]]) -> bool:
    if not verts:
        return True
    adj = {v: [] for v in verts}
    for u, v in es:
        adj[u].append(v)
        adj[v].append(u)
    seen = {verts[0]}
    stack = [verts[0]]
    while stack:
        for y in adj[stack.pop()]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(verts)


def spanning_trees(verts: Sequence[Vertex], es: Sequence[tuple[Vertex, Vertex]]) -> list[frozenset]:
    """Every spanning tree, by checking all (|V|-1)-edge subsets for connectivity."""
    k = len(verts) - 1
    if k <= 0:
        return [frozenset()]
    return [frozenset(c) for c in itertools.combinations(es, k) if _connected(verts, c)]


def brute_force_mst(verts, es, w) -> frozenset:
    trees = spanning_trees(list(verts), list(es))
    return min(trees, key=lambda t: sum(w[e] for e in t))


@lru_cache(maxsize=None)
def _msf_cases() -> list[tuple[LatticeSpec, tuple, tuple, tuple]]:
    """(spec, vertices, edges, spanning trees) for every connected induced subgraph of the
    3x3 grid plus the full 2x2 and 2x3 boxes."""
    cases = []
    grid = LatticeSpec(2, (3, 3))
    allv = list(grid.vertices())
    alle = lattice.edges(grid)
    for r in range(1, len(allv) + 1):
        for sub in itertools.combinations(allv, r):
            s = set(sub)
            es = tuple(e for e in alle if e[0] in s and e[1] in s)
            if _connected(list(sub), es):
                cases.append((grid, tuple(sub), es, tuple(spanning_trees(list(sub), es))))
    for sides in ((2, 2), (2, 3)):
        spec = LatticeSpec(2, sides)
        verts = tuple(spec.vertices())
        es = tuple(lattice.edges(spec))
        cases.append((spec, verts, es, tuple(spanning_trees(list(verts), es))))
    return cases


def msf_suite(seeds: Sequence[int] = range(100)) -> dict:
    cases = _msf_cases()
    mismatches = []
    cycle_failures = []
    checked = 0
    for seed in seeds:
        weights = {}
        for spec, verts, es, trees in cases:
            if spec not in weights:
                weights[spec] = sample_weights(spec, seed)
            w = {e: weights[spec][e] for e in es}
            got = build_msf(spec, w, verts)
            best = min(trees, key=lambda t: sum(w[e] for e in t))
            if got.edges != best:
                mismatches.append((seed, verts))
            if cycle_rule_violations(got, w):
                cycle_failures.append((seed, verts))
            checked += 1
    return {
        "suite": "msf",
        "verdict": _verdict(not mismatches and not cycle_failures),
        "graphs": len(cases),
        "checked": checked,
        "mismatches": [[s, [list(v) for v in vs]] for s, vs in mismatches[:5]],
        "cycle_rule_failures": len(cycle_failures),
    }


# -- property (ii) -------------------------------------------------------------


def property_ii_suite(seeds: Sequence[int] = range(100), sizes: Sequence[int] = DEFAULT_SIZES) -> dict:
    def one(i: int) -> bool:
        seed = seeds[i]
        f = escape_forest(sizes[i % len(sizes)], seed)
        return verify_property_ii(f)[0]

    results = map_seeds(one, range(len(seeds)))
    return {
        "suite": "property-ii",
        "verdict": _verdict(all(results)),
        "runs": len(results),
        "failures": [seeds[i] for i, ok in enumerate(results) if not ok],
    }


# -- closed form, flux_stab and escape ----------------------------------------


def closedform_suite(seeds: Sequence[int] = range(100), sizes: Sequence[int] = DEFAULT_SIZES) -> dict:
    def one(i: int):
        seed = seeds[i]
        return equivalence_check(escape_forest(sizes[i % len(sizes)], seed), seed=seed)

    reports = map_seeds(one, range(len(seeds)))
    runs = []
    for i, r in enumerate(reports):
        runs.append(
            {
                "seed": seeds[i],
                "size": sizes[i % len(sizes)],
                "verdicts": r.verdicts,
                "extinction_step": r.extinction_step,
                "ties": sum(r.ties),
            }
        )
    summary = escape_report(reports)
    ok = all(r.passed for r in reports) and all(sum(r.ties) == 0 for r in reports)
    return {
        "suite": "closedform",
        "verdict": _verdict(ok),
        "equivalence": _verdict(all(r.verdicts["equivalence"] == "pass" for r in reports)),
        "flux_stab": _verdict(all(r.verdicts["flux_stab"] == "pass" for r in reports)),
        "escape": _verdict(all(r.verdicts["escape"] == "pass" for r in reports)),
        "escape_summary": summary,
        "runs": runs,
    }


def escape_suite(seeds: Sequence[int] = range(100), sizes: Sequence[int] = DEFAULT_SIZES) -> dict:
    res = closedform_suite(seeds, sizes)
    s = res["escape_summary"]
    ok = (
        s["truncated"] == 0
        and s["all_interior_zero"]
        and s["all_sink_equals_initial"]
        and s["min_initial_interior_mean"] is not None
        and s["min_initial_interior_mean"] >= 1
    )
    return {"suite": "escape", "verdict": _verdict(ok), **s}


# -- peeling --------------------------------------------------------------------


def observation_counterexample() -> Forest:
    """Six-vertex tree: r <- x; x has a leaf child and a child heading a path of length two.

    With ``y`` the leaf child and ``n = 1``: ``x`` is in ``T_2`` but ``y`` is
    not in ``T_1``, so "x in T_{n+1} iff y in T_n" fails for this ``y``.
    """
    spec = LatticeSpec(2, (4, 4), "box-sink")
    r, x, leaf, a, b, c = (0, 0), (1, 0), (1, 1), (2, 0), (3, 0), (3, 1)
    parent = {x: r, leaf: x, a: x, b: a, c: b}
    return Forest.from_parents(spec, parent, [r])


def peeling_suite(seeds: Sequence[int] = range(20), sizes: Sequence[int] = (8, 16, 32)) -> dict:
    failures = []
    for i, seed in enumerate(seeds):
        f = escape_forest(sizes[i % len(sizes)], seed)
        st = stats(f)
        state = PeelState.initial(f)
        top = max(st.height.values())
        for n in range(top + 2):
            if state.alive != membership_by_height(f, n, st):
                failures.append(("peel != height", seed, n))
                break
            state = peel(state)
        removed = state.removed_at
        if any(removed[v] != st.height[v] + 1 for v in f.vertices):
            failures.append(("removed_at != height+1", seed))
        if any(removed[v] > 1 + st.desc[v] for v in f.vertices):
            failures.append(("removed_at > 1+desc", seed))
        if not corrected_observation_holds(f):
            failures.append(("corrected observation", seed))
    cx = observation_counterexample()
    verbatim = verbatim_observation_failures(cx)
    leaf_case = ((1, 1), (1, 0), 1) in verbatim
    return {
        "suite": "peeling",
        "verdict": _verdict(not failures and leaf_case and corrected_observation_holds(cx)),
        "failures": [list(map(str, f)) for f in failures],
        "counterexample_failures": [[list(y), list(x), n] for y, x, n in verbatim],
    }


# -- conservation and fixation --------------------------------------------------


def conservation_suite(
    seeds: Sequence[int] = range(100), side: int = 16, steps: int = 50, float_steps: int = 1000
) -> dict:
    topologies = ("torus", "box-zero")

    def one(i: int) -> bool:
        spec = LatticeSpec(2, (side, side), topologies[i % 2])
        fld = iid_init(spec, ("iid-integer", 0, 9), seeds[i])
        tr = run(fld, steps, "budget", seed=seeds[i])
        return all(rec.total == tr.records[0].total for rec in tr.records)

    exact = map_seeds(one, range(len(seeds)))
    drifts = []
    for topo in topologies:
        spec = LatticeSpec(2, (side, side), topo)
        fld = iid_init(spec, ("iid-uniform", 0.0, 1.0), seeds[0])
        tr = run(fld, float_steps, "budget", seed=seeds[0])
        t0 = tr.records[0].total
        drifts.append(max(abs(rec.total - t0) for rec in tr.records) / t0)
    drift = max(drifts)
    return {
        "suite": "conservation",
        "verdict": _verdict(all(exact) and drift <= 1e-9),
        "exact_runs": len(exact),
        "exact_failures": [seeds[i] for i, ok in enumerate(exact) if not ok],
        "float_relative_drift": drift,
        "float_steps": float_steps,
    }


def fixation_suite(seeds: Sequence[int] = range(100), side: int = 64) -> dict:
    s = fixation_stats(side, seeds, budget=10 * side)
    fixed = [t for t in s.times if t is not None]
    return {
        "suite": "fixation",
        "verdict": _verdict(s.fixed == s.runs),
        "runs": s.runs,
        "fixed": s.fixed,
        "budget": 10 * side,
        "max_time": max(fixed, default=None),
        "median_time": float(np.median(fixed)) if fixed else None,
    }


# -- light cone and divergence ---------------------------------------------------


def lightcone_suite(seed: int = 0, L: int = 32, m: int = 4, r: int = 2, n: int = 3) -> dict:
    v = light_cone_check(L, m, r, n, seed)
    return {"suite": "lightcone", "verdict": _verdict(v == "pass"), "result": v, "L": L, "m": m, "r": r, "n": n}


def divergence_suite(
    seeds: Sequence[int] = range(30),
    sides: Sequence[int] = (16, 32, 64),
    control_seeds: Sequence[int] = range(100),
    flat_tol: float = 0.05,
) -> dict:
    rows = divergence_probe(sides, seeds, "descendants")
    control = divergence_probe(sides, control_seeds, "iid-uniform")
    medians = [r.median for r in rows]
    increasing = all(a < b for a, b in zip(medians, medians[1:]))
    cmed = [r.median for r in control]
    spread = (max(cmed) - min(cmed)) / float(np.mean(cmed))
    return {
        "suite": "divergence",
        "verdict": _verdict(increasing and spread <= flat_tol),
        "sides": list(sides),
        "medians": medians,
        "control_medians": cmed,
        "control_relative_spread": spread,
    }


SUITES = {
    "msf": msf_suite,
    "property-ii": property_ii_suite,
    "closedform": closedform_suite,
    "peeling": peeling_suite,
    "lightcone": lightcone_suite,
    "conservation": conservation_suite,
    "fixation": fixation_suite,
    "escape": escape_suite,
    "divergence": divergence_suite,
}
