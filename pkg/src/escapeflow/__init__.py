"""Simulator and verification toolkit for the richest-neighbour clustering process.

Each vertex of a finite piece of Z^d holds a nonnegative resource and, at every
step, hands all of it to a neighbour holding the maximum amount.  The package
builds rooted random forests whose descendant-count configuration drains every
vertex into a sink, and checks the raw dynamics against the forest's
closed-form leaf-peeling evolution.
"""

from escapeflow.errors import (
    ConsistencyError,
    DomainError,
    EscapeflowError,
    PreconditionError,
)
from escapeflow.lattice import LatticeSpec, neighbors, window

__all__ = [
    "ConsistencyError",
    "DomainError",
    "EscapeflowError",
    "LatticeSpec",
    "PreconditionError",
    "neighbors",
    "window",
]

__version__ = "0.1.0"
