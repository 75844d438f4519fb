"""Initial configurations C_0."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from escapeflow.dynamics import ResourceField
from escapeflow.errors import DomainError, PreconditionError
from escapeflow.forest import Forest, stats
from escapeflow.lattice import LatticeSpec
from escapeflow.rng import substream

INIT_KINDS = ("descendants", "iid-uniform", "iid-exponential", "iid-integer", "file")


@dataclass(frozen=True)
class InitSpec:
    """How to build C_0.

    ``params`` holds ``(a, b)`` for iid-uniform, ``(rate,)`` for
    iid-exponential and the inclusive ``(lo, hi)`` for iid-integer.
    """

    kind: str
    params: tuple[float, ...] = ()
    value_mode: str = "exact"
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in INIT_KINDS:
            raise DomainError(f"unknown init kind {self.kind!r}")
        if self.value_mode not in ("exact", "float"):
            raise DomainError(f"unknown value mode {self.value_mode!r}")
        if self.kind == "descendants" and self.value_mode != "exact":
            raise DomainError("descendant init is exact-integer only")
        if self.kind in ("iid-uniform", "iid-exponential") and self.value_mode != "float":
            raise DomainError(f"{self.kind} draws reals; use value_mode='float'")
        if self.kind == "file" and not self.path:
            raise DomainError("file init needs a path")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "params": list(self.params),
            "value_mode": self.value_mode,
            "path": self.path,
        }

    def build(
        self, spec: LatticeSpec, seed: int = 0, forest: Forest | None = None
    ) -> ResourceField:
        if self.kind == "descendants":
            if forest is None:
                raise PreconditionError("descendant init needs a forest")
            return descendant_init(forest, spec)
        if self.kind == "file":
            return file_init(self.path, spec, self.value_mode)
        return iid_init(spec, (self.kind, *self.params), seed, self.value_mode)


def descendant_init(f: Forest, spec: LatticeSpec | None = None) -> ResourceField:
    """C_0(x) = number of descendants of x (itself included) on the forest, 0 elsewhere."""
    spec = spec or f.spec
    if not f.oriented:
        raise PreconditionError("descendant init needs an oriented forest")
    if spec != f.spec:
        if spec.sides != f.spec.sides:
            raise PreconditionError("forest and lattice sides differ")
    return ResourceField(spec, stats(f).desc_array.copy())


def iid_init(
    spec: LatticeSpec, dist: tuple, seed: int, value_mode: str | None = None
) -> ResourceField:
    """Independent draws per vertex, in ravel order, from the seed's init substream."""
    kind, *params = dist
    rng = substream(seed, "init")
    V = spec.n_vertices
    if kind == "iid-uniform":
        a, b = (float(p) for p in params)
        if a < 0 or b < a:
            raise DomainError(f"uniform({a}, {b}) must have 0 <= a <= b")
        values = rng.uniform(a, b, size=V)
    elif kind == "iid-exponential":
        (rate,) = (float(p) for p in params)
        if rate <= 0:
            raise DomainError(f"exponential rate must be positive, got {rate}")
        values = rng.exponential(1.0 / rate, size=V)
    elif kind == "iid-integer":
        lo, hi = (int(p) for p in params)
        if lo < 0 or hi < lo:
            raise DomainError(f"integer range [{lo}, {hi}] must satisfy 0 <= lo <= hi")
        values = rng.integers(lo, hi + 1, size=V, dtype=np.int64)
        if value_mode == "float":
            values = values.astype(np.float64)
    else:
        raise DomainError(f"unknown i.i.d. distribution {kind!r}")
    return ResourceField(spec, values)


def file_init(path: str | Path, spec: LatticeSpec, value_mode: str = "exact") -> ResourceField:
    """Read ``x_1,...,x_d,value`` rows; unlisted vertices are 0.

    Lines starting with ``#`` are ignored.  Exact mode requires integer values.
    """
    if value_mode == "exact":
        values = np.zeros(spec.n_vertices, dtype=object)
        values[:] = 0
    else:
        values = np.zeros(spec.n_vertices, dtype=np.float64)
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if line.strip() and not line.startswith("#"))
        for lineno, row in enumerate(rows, 1):
            if len(row) != spec.d + 1:
                raise DomainError(f"{path}:{lineno}: expected {spec.d + 1} fields")
            try:
                x = tuple(int(c) for c in row[: spec.d])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise DomainError(f"{path}:{lineno}: bad coordinates") from None
            raw = row[-1].strip()
            if value_mode == "exact":
                try:
                    v = int(raw)
                except ValueError:
                    raise DomainError(f"{path}:{lineno}: {raw!r} is not an integer") from None
            else:
                v = float(raw)
                if not math.isfinite(v):
                    raise DomainError(f"{path}:{lineno}: infinite or NaN values are not allowed")
            if v < 0:
                raise DomainError(f"{path}:{lineno}: negative value {v}")
            values[spec.index(x)] = v
    return ResourceField(spec, values)
