"""Structured grids and reference datasets for the numerical solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..config import CaseConfig


@dataclass(frozen=True)
class Grid:
    """Uniform node-centered grid over an axis-aligned box (SI metres).

    Node counts include both boundary nodes; spacing is extent/(count-1).
    """

    shape: Tuple[int, ...]
    extent: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if len(self.shape) != len(self.extent):
            raise ValueError("shape and extent rank differ")
        if len(self.shape) not in (2, 3):
            raise ValueError("grids are 2-D or 3-D")
        if any(n < 3 for n in self.shape):
            raise ValueError("need at least 3 nodes per dimension")
        if any(hi <= lo for lo, hi in self.extent):
            raise ValueError("extent must be positive")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (n - 1)
                     for n, (lo, hi) in zip(self.shape, self.extent))

    def axis(self, d: int) -> np.ndarray:
        lo, hi = self.extent[d]
        return np.linspace(lo, hi, self.shape[d])

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (prod(shape), dim), x-major order."""
        axes = [self.axis(d) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))


def case_grid(case: CaseConfig, shape: Tuple[int, ...]) -> Grid:
    """Grid spanning the case domain, converted to SI metres."""
    L = case.scales.L
    extent = tuple((lo * L, hi * L) for lo, hi in case.domain)
    return Grid(tuple(shape), extent)


FIELD_ORDER_2D = ("u", "v", "p", "Ts", "Tf")
FIELD_ORDER_3D = ("u", "v", "w", "p", "Ts", "Tf")


@dataclass
class ReferenceDataset:
    """Solved fields on a grid, SI units, plus solver provenance."""

    grid: Grid
    fields: Dict[str, np.ndarray]
    case_id: str
    residuals: Dict[str, float] = field(default_factory=dict)
    config_hash: Optional[str] = None

    def __post_init__(self):
        for name, arr in self.fields.items():
            if arr.shape != self.grid.shape:
                raise ValueError(f"field {name!r} shape {arr.shape} != grid {self.grid.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name!r} contains non-finite values")

    @property
    def field_order(self) -> Tuple[str, ...]:
        return FIELD_ORDER_3D if self.grid.dim == 3 else FIELD_ORDER_2D

    def flat(self, name: str) -> np.ndarray:
        return self.fields[name].ravel()

    def x_slice(self, x_value: float) -> Dict[str, np.ndarray]:
        """Fields on the grid column nearest to x = x_value (SI)."""
        i = int(np.argmin(np.abs(self.grid.axis(0) - x_value)))
        return {name: arr[i] for name, arr in self.fields.items()}

    def outlet_row(self) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """Coordinates and fields on the outflow boundary (highest y)."""
        if self.grid.dim != 2:
            raise ValueError("outlet row extraction is 2-D only")
        x = self.grid.axis(0)
        y_out = self.grid.extent[1][1]
        coords = np.column_stack([x, np.full_like(x, y_out)])
        return coords, {name: arr[:, -1] for name, arr in self.fields.items()}
