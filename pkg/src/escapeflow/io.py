"""Serialization: config digests, trace CSV, PGM snapshots, JSON reports."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from escapeflow.dynamics import ResourceField


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v))


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, digest: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [f"# config_digest={digest}", ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def gray_levels(field: ResourceField, scale, maxval: int = 255) -> np.ndarray:
    """Values mapped linearly to ``0..maxval`` with ``scale`` at full white, clamped."""
    grid = field.grid()
    if grid.ndim > 2:
        grid = grid[(slice(None), slice(None)) + (0,) * (grid.ndim - 2)]
    elif grid.ndim == 1:
        grid = grid[None, :]
    if not scale or scale <= 0:
        return np.zeros(grid.shape, dtype=np.int64)
    if field.value_mode == "exact":
        levels = np.array([[min(maxval, (maxval * int(v)) // int(scale)) for v in row] for row in grid])
    else:
        levels = np.minimum(maxval, np.floor(maxval * grid / float(scale))).astype(np.int64)
    return levels.astype(np.int64)


def write_pgm(path: Path, field: ResourceField, scale, digest: str, maxval: int = 255) -> None:
    """Plain-text (P2) grayscale snapshot; d > 2 fields are sliced at trailing coordinate 0."""
    levels = gray_levels(field, scale, maxval)
    h, w = levels.shape
    lines = ["P2", f"# config_digest={digest}", f"# step={field.step_index}", f"{w} {h}", str(maxval)]
    lines.extend(" ".join(str(int(v)) for v in row) for row in levels)
    path.write_text("\n".join(lines) + "\n")
