"""Output writers: load-displacement history (CSV) and field snapshots (legacy VTK)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .mesh import HierMesh
from .state import SimState

HISTORY_HEADER = ["step", "lambda_mm", "load_N", "delta_G", "iterations", "beta", "delta_tau", "mode", "ndof"]

_VTK_QUAD = 9


def write_history_csv(history: Iterable, path) -> None:
    """One row per converged step; floats use ``repr`` so the file is exact and deterministic."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_HEADER)
            for r in history:
                w.writerow(
                    [r.step, repr(float(r.lam)), repr(float(r.load)), repr(float(r.delta_G)), r.iterations,
                     repr(float(r.beta)), repr(float(r.delta_tau)), r.mode, r.ndof]
                )
    except OSError as exc:
        raise OSError(f"cannot write history to {path}: {exc}") from exc


def read_history_csv(path) -> dict[str, np.ndarray]:
    """Columns of a history file; ``mode`` stays a string array."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in HISTORY_HEADER:
        vals = [row[key] for row in rows]
        out[key] = np.array(vals) if key == "mode" else np.array(vals, dtype=float)
    return out


def write_fields_vtk(mesh: HierMesh, state: Optional[SimState], path) -> None:
    """Legacy ASCII unstructured grid of the active elements.

    Point data: ``displacement`` (mm, z = 0) and ``phi``; cell data: ``level``.
    With ``state=None`` only the geometry and levels are written.
    """
    path = Path(path)
    ids = mesh.active_ids
    conn = mesh.elements[ids]
    n = mesh.n_nodes
    lines = [
        "# vtk DataFile Version 3.0",
        "phase-field fracture",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes]
    lines.append(f"CELLS {len(ids)} {5 * len(ids)}")
    lines += ["4 " + " ".join(map(str, c)) for c in conn]
    lines.append(f"CELL_TYPES {len(ids)}")
    lines += [str(_VTK_QUAD)] * len(ids)
    lines += [f"CELL_DATA {len(ids)}", "SCALARS level int 1", "LOOKUP_TABLE default"]
    lines += [str(int(v)) for v in mesh.level[ids]]
    if state is not None:
        u = state.u.reshape(n, 2)
        phi = np.clip(state.phi, 0.0, 1.0)
        lines += [f"POINT_DATA {n}", "VECTORS displacement double"]
        lines += [f"{a!r} {b!r} 0.0" for a, b in u]
        lines += ["SCALARS phi double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in phi]
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write fields to {path}: {exc}") from exc


def read_vtk_counts(path) -> dict[str, int]:
    """Point and cell counts declared in a legacy VTK file."""
    counts = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        head = line.split()
        if head and head[0] in ("POINTS", "CELLS"):
            counts[head[0].lower()] = int(head[1])
    return counts
