"""Case description: material properties, scales, boundary data, domain.

Everything here is plain data (JSON round-trippable), so a case can live in
a config file, be hashed for provenance, and be rebuilt bit-identically.
All physical values are SI; derived coefficients are computed on demand
with viscosity and Prandtl number frozen at the reference temperature.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class FluidProps:
    """Liquid properties; mu and Pr follow a log10 law with a pole."""

    rho: float  # kg/m^3
    c_pf: float  # J/(kg K)
    k_f: float  # W/(m K)
    mu_coeff: float = 2.41e-5  # kg/(m s)
    pr_coeff: float = 0.149
    law_slope: float = 247.8  # K
    law_pole: float = 140.0  # K

    def __post_init__(self):
        if min(self.rho, self.c_pf, self.k_f, self.mu_coeff, self.pr_coeff) <= 0:
            raise ValueError("fluid properties must be positive")

    def mu(self, T: float) -> float:
        """Dynamic viscosity at temperature T (K)."""
        return self.mu_coeff * 10.0 ** (self.law_slope / (T - self.law_pole))

    def pr(self, T: float) -> float:
        return self.pr_coeff * 10.0 ** (self.law_slope / (T - self.law_pole))

    # spec-facing aliases
    @property
    def mu_law(self):
        return self.mu

    @property
    def pr_law(self):
        return self.pr


@dataclass(frozen=True)
class PorousProps:
    c_ps: float  # J/(kg K)
    k_s: float  # W/(m K)
    eps: float  # porosity
    d_p: float  # particle diameter, m
    K: float  # permeability, m^2
    alpha_sf: Optional[float] = None  # specific surface area 1/m; packed-sphere default

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("porosity must lie in (0, 1)")
        if self.K <= 0 or self.d_p <= 0 or self.k_s <= 0 or self.c_ps <= 0:
            raise ValueError("porous properties must be positive")
        if self.alpha_sf is None:
            object.__setattr__(self, "alpha_sf", 6.0 * (1.0 - self.eps) / self.d_p)
        elif self.alpha_sf <= 0:
            raise ValueError("alpha_sf must be positive")


@dataclass(frozen=True)
class CharScales:
    V: float  # m/s
    L: float  # m
    P: float  # Pa
    T: float  # K
    C_P: float  # J/(kg K)

    def __post_init__(self):
        if min(self.V, self.L, self.P, self.T, self.C_P) <= 0:
            raise ValueError("characteristic scales must be positive")


@dataclass(frozen=True)
class HeatFlux:
    """Boundary heat flux q(x_nd) = c0 + c1 * x_nd, in W/m^2."""

    c0: float
    c1: float = 0.0

    def __call__(self, x_nd):
        return self.c0 + self.c1 * np.asarray(x_nd, dtype=float)


@dataclass(frozen=True)
class BoundarySpec:
    m_dot: float  # inlet mass flux, kg/(m^2 s)
    T_in: float = 300.0  # K
    p_out: float = 1.0e5  # Pa
    q_dot: HeatFlux = field(default_factory=lambda: HeatFlux(0.0))
    wall: str = "no-slip adiabatic"

    def __post_init__(self):
        if self.m_dot <= 0:
            raise ValueError("inlet mass flux must be positive")
        if not np.all(np.isfinite(self.q_dot(np.linspace(0.0, 1.0, 16)))):
            raise ValueError("outlet heat flux must be finite on [0, 1]")


@dataclass(frozen=True)
class CaseConfig:
    """Physics of one case; network/schedule presets layer on top of this."""

    name: str
    fluid: FluidProps
    porous: PorousProps
    scales: CharScales
    boundary: BoundarySpec
    dim: int = 2
    # non-dimensional domain box, one (lo, hi) per coordinate
    domain: tuple = ((0.0, 1.0), (0.0, 0.2))
    heat: bool = False
    t_ref: float = 300.0
    re_i_length: float = 0.02  # m, length scale inside the inlet Reynolds number
    wall_hk_normal_grad: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if len(self.domain) != self.dim:
            raise ValueError("domain box must have one bound pair per coordinate")
        if self.t_ref <= self.fluid.law_pole:
            raise ValueError("reference temperature is at or below the viscosity-law pole")

    # -- derived constants (all at the frozen reference temperature) --------

    @property
    def mu0(self) -> float:
        return self.fluid.mu(self.t_ref)

    @property
    def pr0(self) -> float:
        return self.fluid.pr(self.t_ref)

    @property
    def outputs(self) -> tuple:
        if self.dim == 3:
            return ("u", "v", "w", "p")
        return ("u", "v", "p", "hk", "Ts") if self.heat else ("u", "v", "p")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = [list(b) for b in self.domain]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseConfig":
        d = dict(d)
        d["fluid"] = FluidProps(**d["fluid"])
        d["porous"] = PorousProps(**d["porous"])
        d["scales"] = CharScales(**d["scales"])
        b = dict(d["boundary"])
        b["q_dot"] = HeatFlux(**b["q_dot"])
        d["boundary"] = BoundarySpec(**b)
        d["domain"] = tuple(tuple(b) for b in d["domain"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()
