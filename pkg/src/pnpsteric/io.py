"""CSV snapshots and timeseries, plus an optional legacy-VTK export.

Floats are written as ``%.16e`` (17 significant digits), so a parsed file
re-serializes byte for byte.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

FMT = "%.16e"


def _fmt(x) -> str:
    return FMT % float(x)


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_snapshot(path, grid, state) -> None:
    """One row per cell (row-major, x fastest): ``x,y,u1..un,phi``."""
    u = np.asarray(state.u)
    x, y = grid.centers()
    n = u.shape[1]
    header = ["x", "y"] + [f"u{i + 1}" for i in range(n)] + ["phi"]
    with _open_for_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for c in range(grid.n_cells):
            row = [x[c], y[c], *u[c], state.phi[c]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_snapshot(path) -> dict:
    """Parse a snapshot into ``{"x", "y", "u", "phi"}`` arrays."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    header, body = rows[0], rows[1:]
    if header[:2] != ["x", "y"] or header[-1] != "phi":
        raise ValueError(f"{path}: not a snapshot file (header {header})")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {"x": data[:, 0], "y": data[:, 1], "u": data[:, 2:-1], "phi": data[:, -1]}


def write_snapshot_arrays(path, snap: dict) -> None:
    """Serialize the dict returned by :func:`read_snapshot`."""
    n = snap["u"].shape[1]
    header = ["x", "y"] + [f"u{i + 1}" for i in range(n)] + ["phi"]
    with _open_for_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for c in range(snap["x"].size):
            row = [snap["x"][c], snap["y"][c], *snap["u"][c], snap["phi"][c]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def timeseries_header(n_species: int, relative: bool) -> list:
    cols = ["step", "time", "H_BR", "H_R", "production"]
    cols += [f"mass_{i + 1}" for i in range(n_species)]
    cols += ["u_min", "u_max", "phi_min", "phi_max"]
    if relative:
        cols.append("H_rel_BR")
    return cols


def write_timeseries(path, records) -> None:
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    relative = records[0].H_rel_BR is not None
    header = timeseries_header(len(records[0].masses), relative)
    with _open_for_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for r in records:
            vals = [r.time, r.H_BR, r.H_R, r.production, *r.masses,
                    r.u_min, r.u_max, r.phi_min, r.phi_max]
            if relative:
                vals.append(r.H_rel_BR)
            fh.write(",".join([str(int(r.step))] + [_fmt(v) for v in vals]) + "\n")


def read_timeseries(path) -> dict:
    """Column name -> array."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    out = {h: data[:, j] for j, h in enumerate(header)}
    out["step"] = out["step"].astype(int)
    return out


def write_vtk(path, grid, state) -> None:
    """Legacy-VTK structured points with cell data ``u1..un`` and ``phi``."""
    u = np.asarray(state.u)
    with _open_for_write(path) as fh:
        fh.write("# vtk DataFile Version 3.0\npnpsteric snapshot\nASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1\n")
        fh.write("ORIGIN 0 0 0\n")
        fh.write(f"SPACING {_fmt(grid.hx)} {_fmt(grid.hy)} 1\n")
        fh.write(f"CELL_DATA {grid.n_cells}\n")
        fields = [(f"u{i + 1}", u[:, i]) for i in range(u.shape[1])] + [("phi", state.phi)]
        for name, vals in fields:
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(_fmt(v) for v in vals) + "\n")
