"""Collocation point generation: Latin hypercube interiors, stratified facets.

All sampling is seeded and bitwise reproducible; generated sets are frozen
(read-only coordinate arrays).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ROLES = ("interior", "inlet", "outlet", "wall", "data")

# keeps random stratum offsets strictly inside (0, 1) so interior samples
# can never land on the domain boundary
_EDGE = 1e-12


@dataclass(frozen=True, eq=False)
class PointSet:
    """One immutable batch of collocation points."""

    role: str
    coordinates: np.ndarray
    seed: int
    facet: Optional[str] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        self.coordinates.flags.writeable = False

    @property
    def n(self) -> int:
        return self.coordinates.shape[0]

    @property
    def dim(self) -> int:
        return self.coordinates.shape[1]


@dataclass(frozen=True)
class Facet:
    """One boundary face of the domain box: a fixed axis pinned to a value."""

    role: str
    name: str
    axis: int
    value: float
    bounds: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if self.role not in ("inlet", "outlet", "wall"):
            raise ValueError(f"facet role must be a boundary role, got {self.role!r}")
        if not 0 <= self.axis < len(self.bounds):
            raise ValueError("facet axis outside the domain dimension")


def _strata(rng: np.random.Generator, n: int, midpoint: bool) -> np.ndarray:
    """n stratified samples of [0, 1), one per stratum, in random stratum order."""
    perm = rng.permutation(n)
    if midpoint:
        offsets = np.full(n, 0.5)
    else:
        offsets = rng.random(n) * (1.0 - 2.0 * _EDGE) + _EDGE
    return (perm + offsets) / n


def lhs_interior(n: int, bounds: Sequence[Tuple[float, float]], seed: int,
                 midpoint: bool = False) -> PointSet:
    """Latin hypercube sample of the open domain box.

    Each of the n equal-width strata per dimension holds exactly one point.
    """
    if n < 1:
        raise ValueError("need at least one interior point")
    rng = np.random.default_rng(seed)
    cols = []
    for lo, hi in bounds:
        cols.append(lo + _strata(rng, n, midpoint) * (hi - lo))
    return PointSet("interior", np.column_stack(cols), seed)


def boundary_points(facet: Facet, n: int, seed: int, midpoint: bool = False) -> PointSet:
    """Stratified sample of one boundary facet; the pinned coordinate is exact."""
    if n < 1:
        raise ValueError("need at least one boundary point")
    rng = np.random.default_rng(seed)
    dim = len(facet.bounds)
    coords = np.empty((n, dim))
    coords[:, facet.axis] = facet.value
    for d in range(dim):
        if d == facet.axis:
            continue
        lo, hi = facet.bounds[d]
        coords[:, d] = lo + _strata(rng, n, midpoint) * (hi - lo)
    return PointSet(facet.role, coords, seed, facet=facet.name)


def domain_facets(bounds: Sequence[Tuple[float, float]]) -> Tuple[Facet, ...]:
    """Standard facet family: inflow at low y, outflow at high y, walls elsewhere.

    2-D: walls at the two x extremes.  3-D: four walls, at the x and z extremes.
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    dim = len(bounds)
    if dim not in (2, 3):
        raise ValueError("domain must be 2-D or 3-D")
    ylo, yhi = bounds[1]
    facets = [
        Facet("inlet", "inlet", 1, ylo, bounds),
        Facet("outlet", "outlet", 1, yhi, bounds),
        Facet("wall", "wall_x0", 0, bounds[0][0], bounds),
        Facet("wall", "wall_x1", 0, bounds[0][1], bounds),
    ]
    if dim == 3:
        facets.append(Facet("wall", "wall_z0", 2, bounds[2][0], bounds))
        facets.append(Facet("wall", "wall_z1", 2, bounds[2][1], bounds))
    return tuple(facets)


@dataclass(frozen=True)
class PointCounts:
    """Per-role sampling sizes; walls are per facet."""

    interior: int
    inlet: int
    outlet: int
    wall: Union[int, Dict[str, int]]

    def wall_count(self, facet_name: str) -> int:
        if isinstance(self.wall, dict):
            return self.wall[facet_name]
        return self.wall


def case_point_sets(bounds: Sequence[Tuple[float, float]], counts: PointCounts,
                    seed: int, midpoint: bool = False) -> Dict[str, PointSet]:
    """The full sampling family for one training run, keyed by set name.

    Sub-seeds are derived from the master seed so the sets are mutually
    independent yet fully determined by (seed, counts, bounds).
    """
    facets = domain_facets(bounds)
    subseeds = np.random.SeedSequence(seed).generate_state(1 + len(facets))
    sets = {"interior": lhs_interior(counts.interior, bounds, int(subseeds[0]), midpoint)}
    for facet, sub in zip(facets, subseeds[1:]):
        if facet.role == "inlet":
            n = counts.inlet
        elif facet.role == "outlet":
            n = counts.outlet
        else:
            n = counts.wall_count(facet.name)
        sets[facet.name] = boundary_points(facet, n, int(sub), midpoint)
    return sets


def export_points_csv(sets: Union[Dict[str, PointSet], Iterable[PointSet]], path) -> None:
    """Write point sets to one CSV (columns: role, x, y[, z], all non-dimensional)."""
    if isinstance(sets, dict):
        sets = list(sets.values())
    else:
        sets = list(sets)
    if not sets:
        raise ValueError("nothing to export")
    dim = sets[0].dim
    if any(ps.dim != dim for ps in sets):
        raise ValueError("mixed dimensions in one export")
    header = ["role", "x", "y"] + (["z"] if dim == 3 else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for ps in sets:
            for row in ps.coordinates:
                writer.writerow([ps.role] + [repr(float(c)) for c in row])
