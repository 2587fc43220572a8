"""Reference-dataset CSV round trip.

Header is fixed per dimension (x,y[,z],u,v[,w],p,Ts,Tf), rows run in node
order (last coordinate fastest), values are written with repr so they
re-import bit-exactly. A JSON sidecar at <path>.json carries the grid box,
case identifier, config hash and solver residuals; import reads it when
present and otherwise reconstructs the grid from the coordinate columns.
"""

from __future__ import annotations

import json
import os
from typing import List

import numpy as np

from .grid import Grid, ReferenceDataset

_COLUMNS_2D = ["x", "y", "u", "v", "p", "Ts", "Tf"]
_COLUMNS_3D = ["x", "y", "z", "u", "v", "w", "p", "Ts", "Tf"]


def _columns(dim: int) -> List[str]:
    return _COLUMNS_3D if dim == 3 else _COLUMNS_2D


def export_dataset(dataset: ReferenceDataset, path: str) -> None:
    grid = dataset.grid
    dim = grid.dim
    names = _columns(dim)
    coords = np.meshgrid(*(grid.axis(d) for d in range(dim)), indexing="ij")
    columns = [c.ravel() for c in coords]
    for name in names[dim:]:
        columns.append(dataset.fields[name].ravel())
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(names) + "\n")
        for row in zip(*columns):
            f.write(",".join(repr(float(x)) for x in row) + "\n")
    meta = {
        "case_id": dataset.case_id,
        "config_hash": dataset.config_hash,
        "residuals": dataset.residuals,
        "shape": list(grid.shape),
        "extent": [list(b) for b in grid.extent],
    }
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")


def _infer_grid(coords: List[np.ndarray]) -> Grid:
    """Recover (shape, extent) from exact node-ordered coordinate columns."""
    n = coords[0].size
    strides = []
    stride = 1
    for c in reversed(coords):  # last coordinate varies fastest
        changes = np.nonzero(c != c[0])[0]
        period = int(changes[0]) if changes.size else n
        if period % stride != 0:
            raise ValueError("coordinate columns are not in node order")
        strides.append(period)
        stride = period
    strides.reverse()
    shape = []
    prev = n
    for s in strides:
        if prev % s != 0:
            raise ValueError("coordinate columns are not in node order")
        shape.append(prev // s)
        prev = s
    if prev != 1:
        raise ValueError("coordinate columns are not in node order")
    extent = tuple((float(c.min()), float(c.max())) for c in coords)
    return Grid(shape=tuple(shape), extent=extent)


def import_dataset(path: str) -> ReferenceDataset:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if header == _COLUMNS_2D:
        dim = 2
    elif header == _COLUMNS_3D:
        dim = 3
    else:
        raise ValueError(
            f"unexpected dataset header {header!r}; want {_COLUMNS_2D} or {_COLUMNS_3D}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError("row width does not match the header")

    meta = {}
    sidecar = path + ".json"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as f:
            meta = json.load(f)
    if "shape" in meta and "extent" in meta:
        grid = Grid(shape=tuple(int(s) for s in meta["shape"]),
                    extent=tuple(tuple(float(x) for x in b) for b in meta["extent"]))
    else:
        grid = _infer_grid([data[:, d] for d in range(dim)])
    if int(np.prod(grid.shape)) != data.shape[0]:
        raise ValueError("row count does not match the grid shape")

    names = _columns(dim)
    fields = {name: data[:, dim + i].reshape(grid.shape)
              for i, name in enumerate(names[dim:])}
    return ReferenceDataset(
        grid=grid, fields=fields,
        case_id=str(meta.get("case_id", "imported")),
        residuals={k: float(v) for k, v in meta.get("residuals", {}).items()},
        config_hash=meta.get("config_hash"),
    )
