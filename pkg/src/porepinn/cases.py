"""Pinned experiment presets.

Every preset bundles a physical case with its published weight vector,
network architecture, collocation sizes, reference-grid shape, and
two-phase schedule.  Presets come in two scales: "full" carries the
production settings (1e5 Adam epochs, 20k interior points, 400x500
reference grid); "desk" shrinks networks, point counts, schedules, and
grids so the whole suite runs on a laptop.  Physics constants, domains,
boundary conditions, and loss weights are identical across scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .collocation import PointCounts
from .config import (BoundarySpec, CaseConfig, CharScales, FluidProps,
                     HeatFlux, PorousProps)
from .loss import N_TERMS, WeightVector, active_mask
from .trainer import Schedule

WATER = FluidProps(rho=960.0, c_pf=4217.0, k_f=0.68)
BED = PorousProps(c_ps=4000.0, k_s=30.0, eps=0.3, d_p=1e-4, K=3.67e-12)

DOMAIN_2D = ((0.0, 1.0), (0.0, 0.2))
DOMAIN_3D = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
L_2D = 0.1
L_3D = 0.02

INVERSE_POINT_COUNTS = (0, 5, 10, 20, 30, 50, 100)
NOISE_LEVELS = (0.001, 0.002, 0.005, 0.01)
WEIGHT_SWEEP_SCALES = (1e0, 1e1, 1e2, 1e3)
COMPARISON_MASS_FLUXES = (0.1, 0.5, 1.0, 2.0)

SCALES = ("desk", "full")


@dataclass(frozen=True)
class Preset:
    """One ready-to-run experiment configuration."""

    name: str
    case: CaseConfig
    mode: str
    weights: WeightVector
    counts: PointCounts
    schedule: Schedule
    oracle_shape: Tuple[int, ...]
    arch: Optional[dict] = None          # fresh-net runs (flow, joint)
    heat_arch: Optional[dict] = None     # branch extension (heat, inverse)
    source: Optional[str] = None         # preset supplying the source net
    transfer: Optional[Schedule] = None  # fine-tuning leg, when published
    n_labeled: int = 0
    noise_level: float = 0.0
    importance: Dict[int, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# building blocks


def _scales_2d(m_dot: float, p_char: float = 1e5) -> CharScales:
    return CharScales(V=m_dot / WATER.rho, L=L_2D, P=p_char, T=300.0,
                      C_P=WATER.c_pf)


def _flow_case(name: str, m_dot: float, *, eps: Optional[float] = None,
               permeability: Optional[float] = None,
               p_out: float = 1e5, p_char: Optional[float] = None) -> CaseConfig:
    porous = BED
    if eps is not None or permeability is not None:
        porous = PorousProps(c_ps=BED.c_ps, k_s=BED.k_s,
                             eps=BED.eps if eps is None else eps,
                             d_p=BED.d_p,
                             K=BED.K if permeability is None else permeability)
    return CaseConfig(
        name=name, fluid=WATER, porous=porous,
        scales=_scales_2d(m_dot, p_out if p_char is None else p_char),
        boundary=BoundarySpec(m_dot=m_dot, p_out=p_out),
        domain=DOMAIN_2D)


def _heat_case(name: str, q_dot: HeatFlux) -> CaseConfig:
    return CaseConfig(
        name=name, fluid=WATER, porous=BED, scales=_scales_2d(0.5),
        boundary=BoundarySpec(m_dot=0.5, q_dot=q_dot),
        domain=DOMAIN_2D, heat=True)


def _weights(mode: str, **lam_by_term) -> WeightVector:
    lam = np.ones(N_TERMS)
    for key, val in lam_by_term.items():
        lam[int(key[1:]) - 1] = val
    return WeightVector(lam, active_mask(mode))


FLOW_LAM_A = dict(e2=1e-8, e3=1e-8, e6=1e2)
FLOW_LAM_B = dict(e2=1e-10, e3=1e-10, e6=1e2)
HEAT_LAM_D = dict(e4=1e-22, e5=1e-22, e8=1e-4, e9=1e-4, e11=1e-7, e12=1e1)
HEAT_LAM_E = dict(HEAT_LAM_D, e11=1e-10)
DATA_LAM = dict(e17=1e2, e18=1e2)

# importance multipliers on top of the raw order-of-magnitude weights
IMPORTANCE_FLOW = {6: 1e2}
IMPORTANCE_HEAT = {8: 1e2, 9: 1e2, 11: 1e1, 12: 1e1}
IMPORTANCE_DATA = {17: 1e2, 18: 1e2}


def _arch_flow_2d(scale: str) -> dict:
    if scale == "full":
        trunk = [(100, "sine")] + [(100, "tanh")] * 3
        branch = [(50, "tanh")] * 2
    else:
        trunk = [(24, "sine")] + [(24, "tanh")] * 3
        branch = [(12, "tanh")] * 2
    return {"input_dim": 2, "trunk": trunk,
            "branches": {"u": list(branch), "v": list(branch),
                         "p": list(branch)},
            "output_order": ("u", "v", "p")}


def _arch_heat_branches(scale: str) -> dict:
    if scale == "full":
        layers = [(100, "sine")] + [(100, "tanh")] * 3
    else:
        layers = [(24, "sine")] + [(24, "tanh")] * 2
    return {"hk": list(layers), "Ts": list(layers)}


def _arch_joint_2d(scale: str) -> dict:
    arch = _arch_flow_2d(scale)
    arch["branches"].update(_arch_heat_branches(scale))
    arch["output_order"] = ("u", "v", "p", "hk", "Ts")
    return arch


def _arch_flow_3d(scale: str) -> dict:
    if scale == "full":
        trunk = [(150, "sine")] + [(150, "tanh")] * 4
        branch = [(50, "tanh")] * 3
    else:
        trunk = [(24, "sine")] + [(24, "tanh")] * 3
        branch = [(12, "tanh")] * 2
    return {"input_dim": 3, "trunk": trunk,
            "branches": {"u": list(branch), "v": list(branch),
                         "w": list(branch), "p": list(branch)},
            "output_order": ("u", "v", "w", "p")}


def fnn_arch(scale: str = "desk") -> dict:
    """Single-stack baseline: trunk layers then the stacked branch widths."""
    if scale == "full":
        layers = ([(100, "sine")] + [(100, "tanh")] * 3
                  + [(150, "tanh")] * 2)
    else:
        layers = ([(24, "sine")] + [(24, "tanh")] * 3
                  + [(36, "tanh")] * 2)
    return {"input_dim": 2, "layers": layers, "output_order": ("u", "v", "p")}


def _counts(scale: str, dim: int) -> PointCounts:
    if dim == 3:
        if scale == "full":
            return PointCounts(interior=100000, inlet=5000, outlet=5000,
                               wall=1000)
        return PointCounts(interior=3000, inlet=300, outlet=300, wall=150)
    if scale == "full":
        return PointCounts(interior=20000, inlet=400, outlet=400, wall=100)
    return PointCounts(interior=2000, inlet=200, outlet=200, wall=60)


def _oracle_shape(scale: str, dim: int) -> Tuple[int, ...]:
    if dim == 3:
        return (40, 50, 40)
    return (400, 500) if scale == "full" else (200, 250)


def _sched(scale: str, mode: str, full_pair, desk_pair, lr: float = 1e-4,
           **kw) -> Schedule:
    adam, lbfgs = full_pair if scale == "full" else desk_pair
    return Schedule(adam_epochs=adam, adam_lr=lr, lbfgs_max_iters=lbfgs,
                    mode=mode, **kw)


# ---------------------------------------------------------------------------
# preset construction


def _flow_preset(name: str, scale: str, case: CaseConfig, lam: dict,
                 **kw) -> Preset:
    return Preset(
        name=name, case=case, mode="flow",
        weights=_weights("flow", **lam),
        counts=_counts(scale, 2), oracle_shape=_oracle_shape(scale, 2),
        schedule=_sched(scale, "flow", (100000, 10000), (20000, 2000)),
        arch=_arch_flow_2d(scale), importance=dict(IMPORTANCE_FLOW), **kw)


def _heat_preset(name: str, scale: str, q_dot: HeatFlux, lam: dict) -> Preset:
    return Preset(
        name=name, case=_heat_case(name, q_dot), mode="heat_stepwise",
        weights=_weights("heat_stepwise", **lam),
        counts=_counts(scale, 2), oracle_shape=_oracle_shape(scale, 2),
        schedule=_sched(scale, "heat_stepwise", (100000, 10000),
                        (20000, 2000)),
        heat_arch=_arch_heat_branches(scale), source="B",
        importance=dict(IMPORTANCE_HEAT))


def _inverse_preset(name: str, scale: str, q_dot: HeatFlux, lam: dict,
                    n_labeled: int = 20, noise_level: float = 0.0) -> Preset:
    return Preset(
        name=name, case=_heat_case(name, q_dot), mode="inverse",
        weights=_weights("inverse", **dict(lam, **DATA_LAM)),
        counts=_counts(scale, 2), oracle_shape=_oracle_shape(scale, 2),
        schedule=_sched(scale, "inverse", (100000, 10000), (6000, 600)),
        heat_arch=_arch_heat_branches(scale), source="B",
        n_labeled=n_labeled, noise_level=noise_level,
        importance={**IMPORTANCE_HEAT, **IMPORTANCE_DATA})


def _transfer_flow_preset(name: str, scale: str, case: CaseConfig, lam: dict,
                          source: str, full_adam: int = 40000,
                          desk_adam: int = 8000) -> Preset:
    base = _flow_preset(name, scale, case, lam, source=source)
    transfer = _sched(scale, "transfer", (full_adam, 10000), (desk_adam, 800),
                      source_checkpoint=source, frozen_components=("trunk",))
    return replace(base, transfer=transfer)


def _joint_preset(name: str, scale: str, adam_pair, lr: float) -> Preset:
    lam = dict(FLOW_LAM_B, **HEAT_LAM_D)
    return Preset(
        name=name, case=_heat_case(name, HeatFlux(5e4)), mode="joint",
        weights=_weights("joint", **lam),
        counts=_counts(scale, 2), oracle_shape=_oracle_shape(scale, 2),
        schedule=_sched(scale, "joint", (adam_pair[0], 10000),
                        (adam_pair[1], 1000), lr=lr),
        arch=_arch_joint_2d(scale),
        importance={**IMPORTANCE_FLOW, **IMPORTANCE_HEAT})


def _linear_q_preset(scale: str) -> Preset:
    # the inverse problem with a known linear flux: the solid outlet flux
    # condition rejoins the active set at its order-of-magnitude weight
    lam = dict(HEAT_LAM_E, **DATA_LAM)
    weights = _weights("inverse", **lam)
    mask = weights.active.copy()
    mask[10] = True  # e11
    weights = WeightVector(weights.lam.copy(), mask)
    base = _inverse_preset("linear-q", scale, HeatFlux(1.5e5, -1e5),
                           HEAT_LAM_E, n_labeled=20)
    transfer = _sched(scale, "transfer", (60000, 10000), (4000, 400),
                      source_checkpoint="inverse-E",
                      frozen_components=("trunk", "u", "v", "p"))
    return replace(base, weights=weights, source="inverse-E",
                   transfer=transfer,
                   schedule=_sched(scale, "inverse", (100000, 10000),
                                   (6000, 600)))


def _build(name: str, scale: str) -> Preset:
    if name == "A":
        return _flow_preset("A", scale, _flow_case("A", 0.1), FLOW_LAM_A)
    if name == "B":
        return _flow_preset("B", scale, _flow_case("B", 0.5), FLOW_LAM_B)
    if name == "C":
        return _flow_preset("C", scale, _flow_case("C", 1.0), FLOW_LAM_B)
    if name == "D":
        return _heat_preset("D", scale, HeatFlux(5e4), HEAT_LAM_D)
    if name == "E":
        return _heat_preset("E", scale, HeatFlux(1e5), HEAT_LAM_E)
    if name == "F":
        return _heat_preset("F", scale, HeatFlux(1.5e5), HEAT_LAM_E)
    if name == "inverse-D":
        return _inverse_preset("inverse-D", scale, HeatFlux(5e4), HEAT_LAM_D)
    if name == "inverse-E":
        return _inverse_preset("inverse-E", scale, HeatFlux(1e5), HEAT_LAM_E)
    if name == "inverse-F":
        return _inverse_preset("inverse-F", scale, HeatFlux(1.5e5),
                               HEAT_LAM_E)
    if name.startswith("noise-"):
        pct = float(name[len("noise-"):])
        level = pct / 100.0
        if not any(np.isclose(level, l) for l in NOISE_LEVELS):
            raise KeyError(f"unknown preset {name!r}")
        return _inverse_preset(name, scale, HeatFlux(5e4), HEAT_LAM_D,
                               n_labeled=50, noise_level=level)
    if name == "transfer-eps04":
        case = _flow_case("transfer-eps04", 0.5, eps=0.4)
        return _transfer_flow_preset("transfer-eps04", scale, case,
                                     FLOW_LAM_B, source="B")
    if name == "transfer-eps05":
        case = _flow_case("transfer-eps05", 0.5, eps=0.5)
        return _transfer_flow_preset("transfer-eps05", scale, case,
                                     FLOW_LAM_B, source="B")
    if name == "transfer-eps09":
        case = _flow_case("transfer-eps09", 0.5, eps=0.9,
                          permeability=4.86e-9)
        lam = dict(FLOW_LAM_B, e2=1e-4, e3=1e-4)
        return _transfer_flow_preset("transfer-eps09", scale, case, lam,
                                     source="B", full_adam=60000,
                                     desk_adam=12000)
    if name == "low-pressure-A":
        case = _flow_case("low-pressure-A", 0.1, p_out=5e4)
        return _transfer_flow_preset("low-pressure-A", scale, case,
                                     FLOW_LAM_A, source="A")
    if name == "low-pressure-B":
        case = _flow_case("low-pressure-B", 0.5, p_out=5e4)
        return _transfer_flow_preset("low-pressure-B", scale, case,
                                     FLOW_LAM_B, source="B")
    if name == "linear-q":
        return _linear_q_preset(scale)
    if name == "3d":
        case = CaseConfig(
            name="3d", fluid=WATER, porous=BED,
            scales=CharScales(V=0.5 / WATER.rho, L=L_3D, P=1e5, T=300.0,
                              C_P=WATER.c_pf),
            boundary=BoundarySpec(m_dot=0.5), dim=3, domain=DOMAIN_3D)
        return Preset(
            name="3d", case=case, mode="flow",
            weights=_weights("flow", **FLOW_LAM_B),
            counts=_counts(scale, 3), oracle_shape=_oracle_shape(scale, 3),
            schedule=_sched(scale, "flow", (100000, 10000), (20000, 2000)),
            arch=_arch_flow_3d(scale), importance=dict(IMPORTANCE_FLOW))
    if name == "joint-1":
        return _joint_preset("joint-1", scale, (5000, 2000), 1e-4)
    if name == "joint-2":
        return _joint_preset("joint-2", scale, (5000, 2000), 5e-5)
    if name == "joint-3":
        return _joint_preset("joint-3", scale, (20000, 5000), 5e-5)
    raise KeyError(f"unknown preset {name!r}")


PRESET_NAMES = (
    "A", "B", "C", "D", "E", "F",
    "inverse-D", "inverse-E", "inverse-F",
    "noise-0.1", "noise-0.2", "noise-0.5", "noise-1.0",
    "transfer-eps04", "transfer-eps05", "transfer-eps09",
    "low-pressure-A", "low-pressure-B",
    "linear-q", "3d",
    "joint-1", "joint-2", "joint-3",
)


def preset(name: str, scale: str = "desk") -> Preset:
    """Look up a preset at the requested scale."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}; "
                       f"known: {', '.join(PRESET_NAMES)}")
    return _build(name, scale)


def preset_names() -> Tuple[str, ...]:
    return PRESET_NAMES


FLUX_PRESETS = {0.1: "A", 0.5: "B", 1.0: "C"}


def flux_preset(m_dot: float, scale: str = "desk") -> Preset:
    """Flow preset for a mass flux, synthesized when no named case exists."""
    for flux, name in FLUX_PRESETS.items():
        if np.isclose(m_dot, flux):
            return preset(name, scale)
    name = f"m{m_dot:g}"
    lam = FLOW_LAM_A if m_dot < 0.3 else FLOW_LAM_B
    return _flow_preset(name, scale, _flow_case(name, m_dot), lam)
