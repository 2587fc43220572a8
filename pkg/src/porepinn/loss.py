"""Weighted multi-term loss assembly and the order-of-magnitude weight rule.

The total loss is a sum of five group means (interior equations, inlet,
outlet, walls, labeled data), each the mean over its points of the weighted
squared residual terms active in that group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import physics
from .autodiff.api import eval_jets
from .autodiff.tape import Tape, TJet, TVar, value_of
from .collocation import PointSet
from .config import CaseConfig

N_TERMS = 18

GROUPS: Tuple[Tuple[str, Tuple[int, ...]], ...] = (
    ("pde", (1, 2, 3, 4, 5)),
    ("inlet", (6, 7, 8, 9)),
    ("outlet", (10, 11, 12)),
    ("wall", (13, 14, 15, 16)),
    ("data", (17, 18)),
)

FLOW_TERMS = frozenset({1, 2, 3, 6, 7, 10, 13, 14})
HEAT_TERMS = frozenset({4, 5, 8, 9, 11, 12, 15, 16})
DATA_TERMS = frozenset({17, 18})


class LossNaNError(RuntimeError):
    """A residual term produced a non-finite value."""

    def __init__(self, term: int, point: int):
        super().__init__(f"non-finite residual e{term} at point index {point}")
        self.term = term
        self.point = point


@dataclass(frozen=True)
class WeightVector:
    """Per-term weights and the activity mask deciding which terms train."""

    lam: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        active = np.asarray(self.active, dtype=bool)
        if lam.shape != (N_TERMS,) or active.shape != (N_TERMS,):
            raise ValueError(f"expected {N_TERMS} weights and flags")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("weights must be finite and nonnegative")
        if not active.any():
            raise ValueError("at least one term must be active")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "active", active)
        lam.flags.writeable = False
        active.flags.writeable = False

    def weight(self, term: int) -> float:
        return float(self.lam[term - 1])

    def is_active(self, term: int) -> bool:
        return bool(self.active[term - 1])

    def replace(self, **lam_by_term) -> "WeightVector":
        """Copy with λ overrides given as e.g. e11=1e-10."""
        lam = self.lam.copy()
        for key, val in lam_by_term.items():
            if not key.startswith("e"):
                raise KeyError(key)
            lam[int(key[1:]) - 1] = val
        return WeightVector(lam, self.active.copy())


def active_mask(mode: str) -> np.ndarray:
    """Term activity for a training mode."""
    if mode == "flow":
        terms = FLOW_TERMS
    elif mode in ("heat_stepwise", "heat"):
        terms = HEAT_TERMS
    elif mode == "joint":
        terms = FLOW_TERMS | HEAT_TERMS
    elif mode == "inverse":
        # the heat problem with labeled data standing in for the flux BCs
        terms = (HEAT_TERMS | DATA_TERMS) - {11, 12}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    mask = np.zeros(N_TERMS, dtype=bool)
    mask[[t - 1 for t in terms]] = True
    return mask


def suggest_weights(term_magnitudes: Sequence[float]) -> WeightVector:
    """λ_j = 10^(−2·floor(log10 m_j)), normalizing each squared term to O(1).

    Zero magnitudes mark terms with nothing to normalize; they get weight 1.
    """
    mags = np.asarray(term_magnitudes, dtype=float)
    if mags.shape != (N_TERMS,):
        raise ValueError(f"expected {N_TERMS} magnitudes")
    if np.any(mags < 0) or not np.all(np.isfinite(mags)):
        raise ValueError("magnitudes must be finite and nonnegative")
    lam = np.ones(N_TERMS)
    pos = mags > 0
    # the epsilon keeps exact decades (1e4 etc.) in their own bin
    lam[pos] = 10.0 ** (-2.0 * np.floor(np.log10(mags[pos]) + 1e-12))
    return WeightVector(lam, np.ones(N_TERMS, dtype=bool))


def apply_importance(weights: WeightVector, multipliers: Dict[int, float]) -> WeightVector:
    """Scale selected λ_j by case-specific importance factors."""
    lam = weights.lam.copy()
    for term, factor in multipliers.items():
        lam[term - 1] *= factor
    return WeightVector(lam, weights.active.copy())


def with_mask(weights: WeightVector, mask: np.ndarray) -> WeightVector:
    return WeightVector(weights.lam.copy(), np.asarray(mask, dtype=bool).copy())


@dataclass
class LossBreakdown:
    """One evaluation of the total loss with its group and term anatomy.

    term_ms holds the raw (unweighted) mean squares of e1..e18; inactive
    terms are zero.  groups holds the weighted group means; total is their
    sum.  loss is the taped scalar when assembly ran on a tape.
    """

    total: float
    groups: Dict[str, float]
    term_ms: np.ndarray
    divergent: bool = False
    loss: Optional[TVar] = field(default=None, repr=False, compare=False)

    def group(self, name: str) -> float:
        return self.groups[name]

    def row(self) -> list:
        """Flat trace row: total, five groups, eighteen term mean squares."""
        vals = [self.total] + [self.groups[g] for g, _ in GROUPS]
        return vals + [float(t) for t in self.term_ms]

    @staticmethod
    def row_header() -> list:
        return (["total"] + [f"L_{g}" for g, _ in GROUPS]
                + [f"e{j}_ms" for j in range(1, N_TERMS + 1)])


def _check_finite(term: int, values) -> None:
    vals = np.asarray(value_of(values))
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmin(np.isfinite(vals)))
        raise LossNaNError(term, bad)


def _mean_square(e):
    if isinstance(e, TVar):
        return e.square().mean()
    e = np.asarray(e, dtype=float)
    return float(np.mean(e * e))


def _gather_terms(net, point_sets: Dict[str, PointSet], case: CaseConfig,
                  weights: WeightVector, tape, labeled, trunk_cache) -> Dict[int, object]:
    """Evaluate every active residual term on its point set."""

    def cache_for(name):
        return None if trunk_cache is None else trunk_cache.get(name)

    heat_on = any(weights.is_active(t) for t in sorted(HEAT_TERMS))
    terms: Dict[int, object] = {}

    def want(*js):
        return [j for j in js if weights.is_active(j)]

    js = want(1, 2, 3, 4, 5)
    if js:
        ps = point_sets["interior"]
        need_second = bool({4, 5} & set(js))
        bundle = eval_jets(net, ps.coordinates, tape=tape, second=need_second,
                           trunk_cache=cache_for("interior"))
        if {1, 2, 3} & set(js):
            if case.dim == 3:
                e1, e2, e3, e4m = physics.flow3d_residuals(bundle, case)
                for j, e in zip((1, 2, 3), (e1, e2, e3)):
                    terms[j] = e
                terms[19] = e4m  # fourth 3-D momentum residual rides with e3's group
            else:
                e1, e2, e3 = physics.flow_residuals(bundle, case)
                for j, e in zip((1, 2, 3), (e1, e2, e3)):
                    terms[j] = e
        if {4, 5} & set(js):
            e4, e5 = physics.energy_residuals(bundle, case)
            terms[4], terms[5] = e4, e5

    js = want(6, 7, 8, 9)
    if js:
        ps = point_sets["inlet"]
        bundle = eval_jets(net, ps.coordinates, tape=tape, second=False,
                           trunk_cache=cache_for("inlet"))
        e6, e7, e8, e9 = physics.inlet_residuals(bundle, case)
        for j, e in zip((6, 7, 8, 9), (e6, e7, e8, e9)):
            if weights.is_active(j):
                terms[j] = e

    js = want(10, 11, 12)
    if js:
        ps = point_sets["outlet"]
        bundle = eval_jets(net, ps.coordinates, tape=tape, second=False,
                           trunk_cache=cache_for("outlet"))
        e10, e11, e12 = physics.outlet_residuals(bundle, case, x_nd=ps.coordinates[:, 0])
        for j, e in zip((10, 11, 12), (e10, e11, e12)):
            if weights.is_active(j):
                terms[j] = e

    js = want(13, 14, 15, 16)
    if js:
        # one evaluation per wall facet; the group mean later pools them
        for name, ps in point_sets.items():
            if ps.role != "wall":
                continue
            bundle = eval_jets(net, ps.coordinates, tape=tape, second=False,
                               trunk_cache=cache_for(name))
            e13, e14, e15, e16 = physics.wall_residuals(bundle, case)
            for j, e in zip((13, 14, 15, 16), (e13, e14, e15, e16)):
                if weights.is_active(j):
                    terms.setdefault(j, []).append(e)

    js = want(17, 18)
    if js:
        ps = point_sets["data"]
        if labeled is None:
            raise ValueError("data terms active but no labeled values supplied")
        bundle = eval_jets(net, ps.coordinates, tape=tape, second=False,
                           trunk_cache=cache_for("data"))
        e17, e18 = physics.data_residuals(bundle, labeled)
        terms[17], terms[18] = e17, e18
    return terms


def assemble_loss(net, point_sets: Dict[str, PointSet], case: CaseConfig,
                  weights: WeightVector, tape: Optional[Tape] = None,
                  labeled: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                  trunk_cache: Optional[Dict[str, TJet]] = None) -> LossBreakdown:
    """Evaluate the weighted loss; taped when a tape is supplied.

    Every active term must have a nonempty point set; non-finite residuals
    raise LossNaNError naming the term and point.
    """
    for gname, group_terms in GROUPS:
        if not any(weights.is_active(j) for j in group_terms):
            continue
        key = "interior" if gname == "pde" else gname
        if gname == "wall":
            if not any(ps.role == "wall" and ps.n > 0 for ps in point_sets.values()):
                raise ValueError("wall terms active but no wall points given")
        elif key not in point_sets or point_sets[key].n == 0:
            raise ValueError(f"{gname} terms active but no {key} points given")

    raw = _gather_terms(net, point_sets, case, weights, tape, labeled, trunk_cache)

    # wall terms may arrive once per facet; each list entry keeps its own mean
    term_ms_vals = np.zeros(N_TERMS)
    groups: Dict[str, float] = {}
    total_var = None
    for gname, group_terms in GROUPS:
        gsum = None
        for j in group_terms:
            if j not in raw:
                continue
            parts = raw[j] if isinstance(raw[j], list) else [raw[j]]
            if len(parts) == 1:
                e = parts[0]
                _check_finite(j, e)
                ms_j = _mean_square(e)
            else:
                n_tot = 0
                sq_sum = None
                for e in parts:
                    _check_finite(j, e)
                    n = np.size(value_of(e))
                    contrib = _mean_square(e) * float(n)
                    sq_sum = contrib if sq_sum is None else sq_sum + contrib
                    n_tot += n
                ms_j = sq_sum * (1.0 / n_tot)
            term_ms_vals[j - 1] = float(value_of(ms_j))
            lam = weights.weight(j)
            weighted = ms_j if lam == 1.0 else ms_j * lam
            gsum = weighted if gsum is None else gsum + weighted
        # the extra 3-D momentum residual joins the interior group
        if gname == "pde" and 19 in raw:
            e = raw[19]
            _check_finite(3, e)
            ms_j = _mean_square(e)
            weighted = ms_j if weights.weight(3) == 1.0 else ms_j * weights.weight(3)
            gsum = weighted if gsum is None else gsum + weighted
        if gsum is None:
            groups[gname] = 0.0
            continue
        groups[gname] = float(value_of(gsum))
        total_var = gsum if total_var is None else total_var + gsum

    if total_var is None:
        raise ValueError("no active terms produced a loss")
    total = float(value_of(total_var))
    return LossBreakdown(
        total=total,
        groups=groups,
        term_ms=term_ms_vals,
        divergent=not np.isfinite(total),
        loss=total_var if isinstance(total_var, TVar) else None,
    )


def probe_magnitudes(net, point_sets: Dict[str, PointSet], case: CaseConfig,
                     mask: np.ndarray, labeled=None, n_interior: int = 1000) -> np.ndarray:
    """Median |e_j| per active term on the current net, for suggest_weights.

    Uses up to n_interior interior points (they are already in random order)
    plus every boundary point; untaped.
    """
    sets = dict(point_sets)
    interior = sets.get("interior")
    if interior is not None and interior.n > n_interior:
        sets["interior"] = PointSet("interior", interior.coordinates[:n_interior].copy(),
                                    interior.seed)
    probe_w = WeightVector(np.ones(N_TERMS), mask)
    raw = _gather_terms(net, sets, case, probe_w, None, labeled, None)
    mags = np.zeros(N_TERMS)
    for j in range(1, N_TERMS + 1):
        if j in raw:
            parts = raw[j] if isinstance(raw[j], list) else [raw[j]]
            vals = np.concatenate([np.ravel(value_of(e)) for e in parts])
            mags[j - 1] = float(np.median(np.abs(vals)))
    return mags
