"""Network evaluation against reference datasets.

Predictions are made at the reference grid nodes in non-dimensional
coordinates, re-dimensionalized, and scored per field.  Norm-based
metrics use every node; pointwise relative metrics are restricted to
nodes where the reference value is nonzero (wall rows of the velocity
are exact zeros), and fields that are zero everywhere report only
absolute errors.
"""

from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import physics
from .config import CaseConfig
from .metrics import EvalReport, error_metrics, regression_metrics
from .model import ParamNet
from .oracle import Grid, ReferenceDataset

# network output name -> reference field name
OUTPUT_FIELD = {"u": "u", "v": "v", "w": "w", "p": "p", "Ts": "Ts",
                "hk": "Tf"}


def grid_points_nd(case: CaseConfig, grid: Grid) -> np.ndarray:
    """Grid nodes as (N, dim) non-dimensional coordinates, x fastest."""
    axes = [np.asarray(grid.axis(i), dtype=float) / case.scales.L
            for i in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def predict_fields(net: ParamNet, case: CaseConfig, grid: Grid,
                   batch: int = 200_000) -> Dict[str, np.ndarray]:
    """Dimensional field predictions on the grid, keyed by reference name."""
    pts = grid_points_nd(case, grid)
    chunks = [net.predict(pts[i:i + batch])
              for i in range(0, pts.shape[0], batch)]
    raw = np.concatenate(chunks, axis=0)
    fields = {}
    for col, name in enumerate(net.output_order):
        ref_name = OUTPUT_FIELD[name]
        fields[ref_name] = physics.redim(case, ref_name,
                                         raw[:, col]).reshape(grid.shape)
    return fields


def field_metrics(pred: np.ndarray, exact: np.ndarray) -> Dict[str, float]:
    pred = np.ravel(np.asarray(pred, dtype=float))
    exact = np.ravel(np.asarray(exact, dtype=float))
    if pred.shape != exact.shape or pred.size == 0:
        raise ValueError("prediction and exact arrays must match and be nonempty")
    diff = pred - exact
    out: Dict[str, float] = {
        "rmse": float(np.sqrt(np.mean(diff * diff))),
        "max_abs": float(np.max(np.abs(diff))),
    }
    norm = float(np.linalg.norm(exact))
    if norm > 0.0:
        out["relative_l2"] = float(np.linalg.norm(diff) / norm)
    nz = exact != 0.0
    if np.all(nz) and pred.size >= 3:
        _, max_rel, _, mape = error_metrics(pred, exact)
        r, r2, adj = regression_metrics(pred, exact)
        out.update(max_relative=max_rel, mape=mape, r=r, r2=r2, adj_r2=adj)
    elif np.any(nz):
        rel = np.abs(diff[nz]) / np.abs(exact[nz])
        out["max_relative"] = float(rel.max())
        out["mape"] = float(rel.mean())
    return out


def evaluate_against_reference(net: ParamNet, case: CaseConfig,
                               reference: ReferenceDataset,
                               fields: Optional[Sequence[str]] = None,
                               slice_id: str = "domain") -> EvalReport:
    """Score the network on every shared field of the reference dataset."""
    pred = predict_fields(net, case, reference.grid)
    names = [n for n in pred if n in reference.fields]
    if fields is not None:
        names = [n for n in names if n in fields]
    if not names:
        raise ValueError("no overlapping fields between network and reference")
    report = EvalReport(slice_id=slice_id,
                        n_samples=int(np.prod(reference.grid.shape)))
    for name in names:
        report.variables[name] = field_metrics(pred[name],
                                               reference.fields[name])
    return report


def nearest_plane_index(case: CaseConfig, grid: Grid, axis: int,
                        coord_nd: float) -> int:
    """Index of the grid plane closest to the non-dimensional coordinate."""
    axis_nd = np.asarray(grid.axis(axis), dtype=float) / case.scales.L
    return int(np.argmin(np.abs(axis_nd - coord_nd)))


def evaluate_planes(net: ParamNet, case: CaseConfig,
                    reference: ReferenceDataset, axis: int,
                    coords_nd: Sequence[float],
                    fields: Optional[Sequence[str]] = None
                    ) -> Tuple[EvalReport, ...]:
    """Per-plane reports at the grid planes nearest the given coordinates."""
    pred = predict_fields(net, case, reference.grid)
    names = [n for n in pred if n in reference.fields]
    if fields is not None:
        names = [n for n in names if n in fields]
    reports = []
    for coord in coords_nd:
        i = nearest_plane_index(case, reference.grid, axis, coord)
        sl = tuple(i if a == axis else slice(None)
                   for a in range(reference.grid.dim))
        rep = EvalReport(
            slice_id=f"axis{axis}={coord:g}",
            n_samples=int(np.prod(np.asarray(reference.grid.shape)[
                [a for a in range(reference.grid.dim) if a != axis]])))
        for name in names:
            rep.variables[name] = field_metrics(pred[name][sl],
                                                reference.fields[name][sl])
        reports.append(rep)
    return tuple(reports)
