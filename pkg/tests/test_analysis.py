import os

import pytest

from escapeflow.analysis import (
    divergence_probe,
    equivalence_check,
    escape_report,
    fixation_stats,
    interior_mask,
    light_cone_check,
    map_seeds,
    worker_count,
)
from escapeflow.errors import PreconditionError
from escapeflow.forest import Forest, escape_forest
from escapeflow.lattice import LatticeSpec


def test_equivalence_path_and_star(path_forest, star_forest):
    for forest, ext, total in ((path_forest, 3, 6), (star_forest, 2, 9)):
        rep = equivalence_check(forest)
        assert rep.verdicts == {"equivalence": "pass", "flux_stab": "pass", "escape": "pass"}
        assert rep.extinction_step == ext
        assert rep.escape["sink_total"] == total == rep.escape["initial_total"]
        assert rep.sink[-1] == total and rep.positive[-1] == 0
        assert len(rep.steps) == len(rep.total) == len(rep.ties)


def test_equivalence_rejects_missing_property_ii_edge():
    # a U-shaped path around a unit square: (1,0)-(0,0) is a lattice edge between members
    spec = LatticeSpec(2, (4, 4), "box-sink")
    g = Forest.from_parents(spec, {(0, 1): (0, 0), (1, 1): (0, 1), (1, 0): (1, 1)}, [(0, 0)])
    with pytest.raises(PreconditionError):
        equivalence_check(g)


def test_escape_report_aggregates():
    reps = [equivalence_check(escape_forest(8, s)) for s in range(3)]
    summary = escape_report(reps)
    assert summary["completed"] == 3
    assert summary["all_interior_zero"] and summary["all_sink_equals_initial"]
    assert summary["max_final_interior_mean"] == 0
    assert summary["min_initial_interior_mean"] > 0


def test_truncated_runs_flagged():
    rep = equivalence_check(escape_forest(16, 1), budget=2)
    assert rep.truncated and rep.verdicts["escape"] == "not-run"
    assert escape_report([rep])["completed"] == 0


def test_interior_mask_is_central_quarter():
    m = interior_mask(LatticeSpec(2, (16, 16))).reshape(16, 16)
    assert m.sum() == 64
    assert m[4:12, 4:12].all()


def test_divergence_probe_reproducible_and_control_flat():
    a = divergence_probe([8, 16], range(4))
    b = divergence_probe([8, 16], range(4))
    assert a == b
    ctl = divergence_probe([16, 32], range(40), "iid-uniform")
    assert all(abs(r.median - 0.5) < 0.05 for r in ctl)


def test_fixation_trivial_cases():
    s = fixation_stats(8, range(3), dist=("iid-integer", 0, 0))
    assert s.fraction == 1.0 and s.times == (0, 0, 0)


def test_light_cone():
    assert light_cone_check(32, 4, 2, 0) == "pass"
    assert light_cone_check(32, 4, 2, 3) == "pass"
    with pytest.raises(PreconditionError):
        light_cone_check(16, 4, 2, 5)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ESCAPEFLOW_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ESCAPEFLOW_THREADS", "1")
    assert map_seeds(lambda s: s * s, range(5)) == [0, 1, 4, 9, 16]
    monkeypatch.setenv("ESCAPEFLOW_THREADS", "4")
    assert map_seeds(lambda s: s * s, range(5)) == [0, 1, 4, 9, 16]
    monkeypatch.delenv("ESCAPEFLOW_THREADS")
    assert worker_count() == (os.cpu_count() or 1)


def test_results_independent_of_worker_count(monkeypatch):
    from escapeflow.suites import closedform_suite

    monkeypatch.setenv("ESCAPEFLOW_THREADS", "1")
    one = closedform_suite(range(4), (8, 16))
    monkeypatch.setenv("ESCAPEFLOW_THREADS", "4")
    four = closedform_suite(range(4), (8, 16))
    assert one == four
