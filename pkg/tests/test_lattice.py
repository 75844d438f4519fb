import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from escapeflow.errors import DomainError
from escapeflow.lattice import (
    LatticeSpec,
    edge_index_pairs,
    edges,
    neighbor_table,
    neighbors,
    window,
)


def test_interior_neighbors_sorted():
    spec = LatticeSpec(2, (5, 5))
    assert neighbors((2, 2), spec) == [(1, 2), (2, 1), (2, 2), (2, 3), (3, 2)]


def test_torus_wraps():
    spec = LatticeSpec(2, (4, 4), "torus")
    assert neighbors((0, 0), spec) == [(0, 0), (0, 1), (0, 3), (1, 0), (3, 0)]


def test_box_corner_truncated():
    spec = LatticeSpec(2, (5, 5), "box-zero")
    assert neighbors((0, 0), spec) == [(0, 0), (0, 1), (1, 0)]


def test_out_of_lattice_rejected():
    spec = LatticeSpec(2, (5, 5))
    with pytest.raises(DomainError):
        neighbors((5, 0), spec)
    with pytest.raises(DomainError):
        neighbors((1, 2, 3), spec)


@pytest.mark.parametrize(
    "kwargs",
    [dict(d=0, sides=()), dict(d=2, sides=(1, 4)), dict(d=2, sides=(4,)), dict(d=1, sides=(4,), topology="mobius")],
)
def test_bad_specs(kwargs):
    with pytest.raises(DomainError):
        LatticeSpec(**kwargs)


def test_window_sizes():
    spec = LatticeSpec(2, (9, 9))
    c = (4, 4)
    assert window(c, 0, spec) == {c}
    assert window(c, 1, spec) == set(neighbors(c, spec))
    # 1-norm ball of radius 2 in Z^2, counted by enumeration
    ball = [o for o in itertools.product(range(-2, 3), repeat=2) if abs(o[0]) + abs(o[1]) <= 2]
    assert len(ball) == 13
    assert len(window(c, 2, spec)) == 13
    with pytest.raises(DomainError):
        window(c, -1, spec)


def test_edge_counts():
    assert len(edges(LatticeSpec(2, (2, 2)))) == 4
    assert len(edges(LatticeSpec(2, (2, 3)))) == 7
    assert len(edges(LatticeSpec(2, (4, 4), "torus"))) == 32


specs = st.builds(
    lambda d, sides, topo: LatticeSpec(d, tuple(sides[:d]), topo),
    st.integers(1, 3),
    st.lists(st.integers(2, 5), min_size=3, max_size=3),
    st.sampled_from(["torus", "box-zero", "box-sink"]),
)


@given(specs, st.data())
def test_neighbor_invariants(spec, data):
    x = tuple(data.draw(st.integers(0, s - 1)) for s in spec.sides)
    nb = neighbors(x, spec)
    assert x in nb
    assert nb == sorted(set(nb))
    assert len(nb) <= 2 * spec.d + 1
    interior = all(0 < c < s - 1 for c, s in zip(x, spec.sides))
    if interior or (spec.periodic and min(spec.sides) >= 3):
        assert len(nb) == 2 * spec.d + 1
    for y in nb:
        assert x in neighbors(y, spec)
    assert nb == neighbors(x, spec)


@given(specs)
def test_neighbor_table_matches_neighbors(spec):
    table = neighbor_table(spec)
    for i, x in enumerate(spec.vertices()):
        row = [spec.coord(j) for j in table[i] if j >= 0]
        assert row == neighbors(x, spec)
    pairs = edge_index_pairs(spec)
    assert [(spec.coord(a), spec.coord(b)) for a, b in pairs] == edges(spec)


def test_ravel_index_is_lexicographic():
    spec = LatticeSpec(3, (2, 3, 4))
    verts = list(spec.vertices())
    assert verts == sorted(verts)
    assert [spec.index(v) for v in verts] == list(range(spec.n_vertices))
    assert np.all(np.diff([spec.index(v) for v in verts]) == 1)
