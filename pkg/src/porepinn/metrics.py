"""Evaluation statistics: error norms, regression diagnostics, KDE, histograms.

All error metrics treat relative quantities as fractions, not percents.
Temperature comparisons are made in kelvin.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np


def _pair(pred, exact) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.ravel(np.asarray(pred, dtype=float))
    exact = np.ravel(np.asarray(exact, dtype=float))
    if pred.shape != exact.shape or pred.size == 0:
        raise ValueError("prediction and exact arrays must match and be nonempty")
    return pred, exact


def error_metrics(pred, exact) -> Tuple[float, float, float, float]:
    """(relative_l2, max_relative, rmse, mape)."""
    pred, exact = _pair(pred, exact)
    norm = np.linalg.norm(exact)
    if norm == 0.0:
        raise ValueError("exact field has zero norm")
    diff = pred - exact
    relative_l2 = float(np.linalg.norm(diff) / norm)
    denom = np.abs(exact)
    if np.any(denom == 0.0):
        raise ValueError("exact values must be nonzero for pointwise relative errors")
    rel = np.abs(diff) / denom
    return relative_l2, float(rel.max()), float(np.sqrt(np.mean(diff * diff))), float(rel.mean())


def regression_metrics(pred, exact) -> Tuple[float, float, float]:
    """(pearson r, r2, adjusted r2 with one predictor)."""
    pred, exact = _pair(pred, exact)
    n = pred.size
    if n < 3:
        raise ValueError("need at least three samples")
    dp = pred - pred.mean()
    de = exact - exact.mean()
    sp = float(dp @ dp)
    se = float(de @ de)
    if sp == 0.0 or se == 0.0:
        raise ValueError("zero variance input")
    r = float((dp @ de) / np.sqrt(sp * se))
    ss_res = float(np.sum((exact - pred) ** 2))
    r2 = 1.0 - ss_res / se
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    return r, r2, adj_r2


def kde_density(points, grid: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                grid_size: int = 200) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2-D Gaussian-kernel density of (exact, pred) pairs.

    Bandwidth is Scott's rule per dimension (n^(-1/6) times the sample
    standard deviation).  The default evaluation grid spans the data range
    padded by three bandwidths.  Returns (x_axis, y_axis, density) with
    density[i, j] at (x_axis[j], y_axis[i]).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of pairs")
    n = pts.shape[0]
    if n < 10:
        raise ValueError("need at least 10 points")
    std = pts.std(axis=0, ddof=1)
    if np.any(std == 0.0):
        raise ValueError("degenerate point cloud (zero spread in one dimension)")
    h = n ** (-1.0 / 6.0) * std
    if grid is None:
        lo = pts.min(axis=0) - 3.0 * h
        hi = pts.max(axis=0) + 3.0 * h
        gx = np.linspace(lo[0], hi[0], grid_size)
        gy = np.linspace(lo[1], hi[1], grid_size)
    else:
        gx = np.asarray(grid[0], dtype=float)
        gy = np.asarray(grid[1], dtype=float)
    # separable Gaussian kernels, summed over points
    ax = (gx[None, :] - pts[:, 0:1]) / h[0]
    ay = (gy[None, :] - pts[:, 1:2]) / h[1]
    kx = np.exp(-0.5 * ax * ax)
    ky = np.exp(-0.5 * ay * ay)
    dens = (ky.T @ kx) / (n * 2.0 * np.pi * h[0] * h[1])
    return gx, gy, dens


# numpy renamed trapz in 2.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def kde_integral(gx: np.ndarray, gy: np.ndarray, dens: np.ndarray) -> float:
    """Trapezoid integral of a KDE surface over its grid."""
    return float(_trapezoid(_trapezoid(dens, gx, axis=1), gy))


def re_histogram(pred, exact, bin_edges) -> np.ndarray:
    """Counts of |pred - exact| / |exact| per bin; every point lands in one bin."""
    pred, exact = _pair(pred, exact)
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    denom = np.abs(exact)
    if np.any(denom == 0.0):
        raise ValueError("exact values must be nonzero")
    re = np.abs(pred - exact) / denom
    idx = np.searchsorted(edges, re, side="right") - 1
    idx = np.clip(idx, 0, edges.size - 2)
    counts = np.bincount(idx, minlength=edges.size - 1)
    return counts


def sample_indices(n: int, m: int, seed: int) -> np.ndarray:
    """n distinct indices out of m, seeded."""
    if n > m:
        raise ValueError(f"cannot draw {n} distinct samples from {m}")
    if n == 0:
        return np.empty(0, dtype=np.intp)
    rng = np.random.default_rng(seed)
    return rng.choice(m, size=n, replace=False)


def sample_eval_points(n: int, domain: np.ndarray, seed: int) -> np.ndarray:
    """Seeded uniform selection of n distinct rows from a node array."""
    domain = np.asarray(domain)
    idx = sample_indices(n, domain.shape[0], seed)
    return domain[idx]


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    """Per-variable metric block for one evaluation slice."""

    slice_id: str
    n_samples: int
    variables: Dict[str, Dict[str, float]] = field(default_factory=dict)

    COLUMNS = ("relative_l2", "max_relative", "rmse", "mape", "r", "r2", "adj_r2")

    def add(self, name: str, pred, exact) -> None:
        rel_l2, max_rel, rmse, mape = error_metrics(pred, exact)
        r, r2, adj = regression_metrics(pred, exact)
        self.variables[name] = {
            "relative_l2": rel_l2, "max_relative": max_rel, "rmse": rmse,
            "mape": mape, "r": r, "r2": r2, "adj_r2": adj,
        }

    def to_json(self) -> str:
        return json.dumps({"slice": self.slice_id, "n": self.n_samples,
                           "variables": self.variables}, indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slice", "variable", "n"] + list(self.COLUMNS))
            for name in sorted(self.variables):
                row = self.variables[name]
                writer.writerow([self.slice_id, name, self.n_samples]
                                + [repr(row[c]) for c in self.COLUMNS])


def write_reports_csv(reports: Sequence[EvalReport], path) -> None:
    """All slices of one evaluation in a single CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice", "variable", "n"] + list(EvalReport.COLUMNS))
        for rep in reports:
            for name in sorted(rep.variables):
                row = rep.variables[name]
                writer.writerow([rep.slice_id, name, rep.n_samples]
                                + [repr(row[c]) for c in EvalReport.COLUMNS])


def write_kde_csv(gx: np.ndarray, gy: np.ndarray, dens: np.ndarray, path) -> None:
    """KDE surface as long-form CSV (x, y, density) for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "density"])
        for i, y in enumerate(gy):
            for j, x in enumerate(gx):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(dens[i, j]))])
