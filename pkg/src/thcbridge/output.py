"""Deterministic CSV/JSON artifact writers.

Floats are written with 17 significant digits so artifacts round-trip
losslessly and two runs with the same config and seed are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(format_value(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def surface_rows(surface, dump_every: int = 1):
    """Long-format (t, y, value) rows of a density surface, thinned in time."""
    t_nodes = surface.times.nodes
    y_nodes = surface.grid.nodes
    # always include the final stored step so the terminal slice survives thinning
    steps = list(range(0, surface.times.n_steps + 1, dump_every))
    if steps[-1] != surface.times.n_steps:
        steps.append(surface.times.n_steps)
    for n in steps:
        row_t = t_nodes[n]
        values = surface.values[n]
        for i in range(y_nodes.size):
            yield row_t, y_nodes[i], values[i]


def write_surface_csv(path: Path, surface, dump_every: int = 1,
                      value_name: str = "p") -> None:
    write_csv(path, ["t", "y", value_name], surface_rows(surface, dump_every))


def write_surface_binary(path: Path, sidecar: Path, surface,
                         dump_every: int = 1) -> None:
    """Row-major float64 dump plus a JSON sidecar with the grid metadata."""
    steps = list(range(0, surface.times.n_steps + 1, dump_every))
    if steps[-1] != surface.times.n_steps:
        steps.append(surface.times.n_steps)
    block = surface.values[steps]
    path.write_bytes(block.astype("<f8").tobytes(order="C"))
    write_json(sidecar, {
        "dtype": "<f8",
        "order": "C",
        "shape": list(block.shape),
        "kind": surface.kind,
        "y_min": surface.grid.y_min,
        "y_max": surface.grid.y_max,
        "n_cells": surface.grid.n_cells,
        "t_start": surface.times.t_start,
        "t_end": surface.times.t_end,
        "n_steps": surface.times.n_steps,
        "dump_every": dump_every,
        "stored_steps": steps,
    })
