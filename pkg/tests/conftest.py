import pytest

from escapeflow.forest import Forest
from escapeflow.lattice import LatticeSpec


@pytest.fixture
def path_forest():
    """c -> b -> a along the middle row of a 3x3 box, rooted at a."""
    spec = LatticeSpec(2, (3, 3), "box-sink")
    a, b, c = (1, 0), (1, 1), (1, 2)
    return Forest.from_parents(spec, {b: a, c: b}, [a])


@pytest.fixture
def star_forest():
    """Root at the centre of a 3x3 box with its four lattice neighbours as leaves."""
    spec = LatticeSpec(2, (3, 3), "box-sink")
    r = (1, 1)
    arms = [(0, 1), (1, 0), (1, 2), (2, 1)]
    return Forest.from_parents(spec, {x: r for x in arms}, [r])
