"""Deterministic on-disk artifacts: JSON documents, CSV time series, meshes."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .geometry import SupportField, boundary_points

SCHEMA = 1
CSV_COLUMNS = ["t", "dt", "J", "speed_sup", "h_min", "h_max", "r", "R", "sigma_min", "sigma_max",
               "lambda_max", "w11"]


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(doc: dict) -> str:
    body = {"schema": SCHEMA, **doc}
    return json.dumps(body, indent=2, sort_keys=True, default=_default) + "\n"


def write_json(path: Path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def field_document(field: SupportField) -> dict:
    return {"grid": field.grid.to_dict(), "values": [float(v) for v in field.h]}


def write_timeseries(path: Path, snapshots: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in snapshots:
            w.writerow(["" if s[c] is None else repr(float(s[c])) for c in CSV_COLUMNS])


def _revolve(field: SupportField, nphi: int):
    """Axisymmetric boundary as a latitude/longitude vertex array (ntheta, nphi, 3)."""
    grid = field.grid
    F = boundary_points(field)  # meridian in the x-z plane
    phi = 2 * np.pi * np.arange(nphi) / nphi
    rho, z = F[:, 0], F[:, 2]
    return np.stack([rho[:, None] * np.cos(phi), rho[:, None] * np.sin(phi),
                     np.broadcast_to(z[:, None], (grid.size, nphi))], axis=2)


def mesh_lines(field: SupportField, nphi_axisym: int = 64) -> list[str]:
    """Plain-text polygon mesh: ``v x y [z]`` vertex lines and 1-based ``f`` face lines."""
    grid = field.grid
    lines = []
    if grid.mode == "circle":
        F = boundary_points(field)
        lines += [f"v {p[0]!r} {p[1]!r}" for p in F]
        N = grid.size
        lines += [f"f {i + 1} {(i + 1) % N + 1}" for i in range(N)]
        return lines
    if grid.mode == "axisym":
        V = _revolve(field, nphi_axisym)
    else:
        V = boundary_points(field).reshape(grid.resolution[0], grid.resolution[1], 3)
    nt, npp = V.shape[:2]
    lines += [f"v {p[0]!r} {p[1]!r} {p[2]!r}" for p in V.reshape(-1, 3)]

    def vid(i, j):
        return i * npp + (j % npp) + 1

    for i in range(nt - 1):
        for j in range(npp):
            lines.append(f"f {vid(i, j)} {vid(i + 1, j)} {vid(i + 1, j + 1)} {vid(i, j + 1)}")
    lines.append("f " + " ".join(str(vid(0, j)) for j in range(npp)))
    lines.append("f " + " ".join(str(vid(nt - 1, j)) for j in reversed(range(npp))))
    return lines


def write_mesh(path: Path, field: SupportField) -> None:
    Path(path).write_text("\n".join(mesh_lines(field)) + "\n")
