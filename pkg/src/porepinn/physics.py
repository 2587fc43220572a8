"""Material correlations, scaling, and the residual terms e1..e18.

Every residual is written as LHS minus RHS of the corresponding
non-dimensional governing equation or boundary condition, evaluated from
jet components.  The formulas are plain arithmetic over component
accessors, so the same code runs on taped variables (training), raw numpy
arrays (probing/evaluation), and scalar Jet2 objects (unit checks).
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from .autodiff.jets import Jet2, d2_index
from .autodiff.tape import TJet, jet_component
from .config import CaseConfig, FluidProps, PorousProps


# ---------------------------------------------------------------------------
# correlations


def h_sf(fluid: FluidProps, porous: PorousProps, mass_flux: float, T_ref: float) -> float:
    """Interphase heat-transfer coefficient, W/(m^2 K).

    k_f (2.0 + 1.1 Pr^0.33 Re^0.6) / d_p with the particle-diameter
    Reynolds number Re = mass_flux * d_p / mu(T_ref).
    """
    if porous.d_p <= 0:
        raise ValueError("particle diameter must be positive")
    if T_ref <= fluid.law_pole:
        raise ValueError("reference temperature is at or below the viscosity-law pole")
    re = mass_flux * porous.d_p / fluid.mu(T_ref)
    pr = fluid.pr(T_ref)
    return fluid.k_f * (2.0 + 1.1 * pr**0.33 * re**0.6) / porous.d_p


def h_i(pr_i: float, re_i: float) -> float:
    """Inlet convection coefficient 0.664 Pr^(1/3) Re^(1/2), as printed."""
    if pr_i < 0 or re_i < 0:
        raise ValueError("Prandtl and Reynolds numbers must be nonnegative")
    return 0.664 * pr_i ** (1.0 / 3.0) * re_i**0.5


# ---------------------------------------------------------------------------
# derived coefficient bundle


class CaseCoefficients:
    """Constant prefactors of the non-dimensional residuals for one case."""

    def __init__(self, case: CaseConfig):
        f, p, s, b = case.fluid, case.porous, case.scales, case.boundary
        self.case = case
        self.mu0 = case.mu0
        self.c_mom = (f.rho / p.eps) * s.V**2 / s.L
        self.c_px = s.P / s.L
        self.c_darcy = (self.mu0 / p.K) * s.V
        self.c_conv = f.rho * s.V * s.T * s.C_P / s.L
        self.c_diff = (p.eps * f.k_f / f.c_pf) * s.T * s.C_P / s.L**2
        self.c_ex = h_sf(f, p, b.m_dot, case.t_ref) * p.alpha_sf * s.T
        self.c_solid = (1.0 - p.eps) * p.k_s * s.T / s.L**2
        self.c_sgrad = (1.0 - p.eps) * p.k_s * s.T / s.L
        re_i = b.m_dot * case.re_i_length / self.mu0
        self.h_i = h_i(case.pr0, re_i)
        self.c_hi = self.h_i * s.T
        self.c_enth = f.rho * s.V * s.T * s.C_P


_COEFF_CACHE: dict = {}


def coefficients(case: CaseConfig) -> CaseCoefficients:
    co = _COEFF_CACHE.get(id(case))
    if co is None or co.case is not case:
        co = CaseCoefficients(case)
        _COEFF_CACHE[id(case)] = co
    return co


# ---------------------------------------------------------------------------
# component bundles


class Field:
    """Per-variable jet components: val, dx, dy[, dz], and second derivatives.

    Components are whatever arithmetic type the caller works in (taped
    variables, arrays, or floats); missing ones stay None.
    """

    __slots__ = ("val", "dx", "dy", "dz", "dxx", "dxy", "dyy", "dxz", "dyz", "dzz")

    def __init__(self, val, dx=None, dy=None, dz=None, dxx=None, dxy=None,
                 dyy=None, dxz=None, dyz=None, dzz=None):
        self.val = val
        self.dx = dx
        self.dy = dy
        self.dz = dz
        self.dxx = dxx
        self.dxy = dxy
        self.dyy = dyy
        self.dxz = dxz
        self.dyz = dyz
        self.dzz = dzz

    @classmethod
    def from_jet2(cls, jet: Jet2) -> "Field":
        dim = jet.dim
        f = cls(jet.value, *[jet.d1[i] for i in range(dim)])
        if dim == 2:
            f.dxx = jet.d2u[d2_index(2, 0, 0)]
            f.dxy = jet.d2u[d2_index(2, 0, 1)]
            f.dyy = jet.d2u[d2_index(2, 1, 1)]
        else:
            f.dxx = jet.d2u[d2_index(3, 0, 0)]
            f.dxy = jet.d2u[d2_index(3, 0, 1)]
            f.dxz = jet.d2u[d2_index(3, 0, 2)]
            f.dyy = jet.d2u[d2_index(3, 1, 1)]
            f.dyz = jet.d2u[d2_index(3, 1, 2)]
            f.dzz = jet.d2u[d2_index(3, 2, 2)]
        return f

    @classmethod
    def from_tjet(cls, block: TJet, col: int) -> "Field":
        dim = block.dim
        comp = lambda c: jet_component(block, c, col)  # noqa: E731
        f = cls(comp(0), *[comp(1 + i) for i in range(dim)])
        if block.second:
            if dim == 2:
                f.dxx, f.dxy, f.dyy = comp(3), comp(4), comp(5)
            else:
                f.dxx, f.dxy, f.dxz = comp(4), comp(5), comp(6)
                f.dyy, f.dyz, f.dzz = comp(7), comp(8), comp(9)
        return f


def as_field(obj) -> Field:
    if isinstance(obj, Field):
        return obj
    if isinstance(obj, Jet2):
        return Field.from_jet2(obj)
    if isinstance(obj, tuple) and len(obj) == 2 and isinstance(obj[0], TJet):
        return Field.from_tjet(obj[0], obj[1])
    raise TypeError(f"cannot interpret {type(obj).__name__} as a field bundle")


def _fields(bundle, *names):
    return tuple(as_field(bundle[name]) for name in names)


# ---------------------------------------------------------------------------
# residual terms (each is LHS - RHS of its governing relation)


def flow_residuals(bundle, case: CaseConfig):
    """Interior mass and momentum residuals (e1, e2, e3); 2-D."""
    u, v, p = _fields(bundle, "u", "v", "p")
    co = coefficients(case)
    e1 = u.dx + v.dy
    e2 = (co.c_mom * (2.0 * (u.val * u.dx) + u.dy * v.val + u.val * v.dy)
          + co.c_px * p.dx + co.c_darcy * u.val)
    e3 = (co.c_mom * (v.dx * u.val + v.val * u.dx + 2.0 * (v.val * v.dy))
          + co.c_px * p.dy + co.c_darcy * v.val)
    return e1, e2, e3


def energy_residuals(bundle, case: CaseConfig):
    """Interior fluid/solid energy residuals (e4, e5)."""
    u, v, hk, Ts = _fields(bundle, "u", "v", "hk", "Ts")
    co = coefficients(case)
    e4 = (co.c_conv * (u.dx * hk.val + u.val * hk.dx + v.dy * hk.val + v.val * hk.dy)
          - co.c_diff * (hk.dxx + hk.dyy)
          - co.c_ex * (Ts.val - hk.val))
    e5 = (co.c_solid * (Ts.dxx + Ts.dyy)
          - co.c_ex * (Ts.val - hk.val))
    return e4, e5


def inlet_residuals(bundle, case: CaseConfig):
    """Inlet conditions (e6..e9): plug inflow and conjugate heat entry."""
    co = coefficients(case)
    u, v = _fields(bundle, "u", "v")
    e6 = v.val - 1.0
    e7 = u.val
    if not case.heat:
        return e6, e7, None, None
    hk, Ts = _fields(bundle, "hk", "Ts")
    e8 = co.c_sgrad * Ts.dy - co.c_hi * (Ts.val - 1.0)
    e9 = co.c_hi * (Ts.val - 1.0) - co.c_enth * (hk.val - 1.0)
    return e6, e7, e8, e9


def outlet_residuals(bundle, case: CaseConfig, x_nd=None):
    """Outlet conditions (e10..e12); x_nd locates the heat-flux profile."""
    co = coefficients(case)
    (p,) = _fields(bundle, "p")
    e10 = p.val - 1.0
    if not case.heat:
        return e10, None, None
    hk, Ts = _fields(bundle, "hk", "Ts")
    q = case.boundary.q_dot(x_nd if x_nd is not None else 0.0)
    e11 = co.c_sgrad * Ts.dy - q
    e12 = hk.dy
    return e10, e11, e12


def wall_residuals(bundle, case: CaseConfig):
    """Side-wall conditions (e13..e16): no slip and adiabatic phases."""
    u, v = _fields(bundle, "u", "v")
    e13 = u.val
    e14 = v.val
    if not case.heat:
        return e13, e14, None, None
    hk, Ts = _fields(bundle, "hk", "Ts")
    e15 = Ts.dx
    # the fluid wall condition is published with a vertical gradient; the
    # switch flips it to the wall-normal derivative
    e16 = hk.dx if case.wall_hk_normal_grad else hk.dy
    return e13, e14, e15, e16


def data_residuals(bundle, labeled) -> tuple:
    """Labeled-data mismatches (e17, e18); labeled = (hk_data, Ts_data)."""
    hk, Ts = _fields(bundle, "hk", "Ts")
    hk_data, Ts_data = labeled
    if not (np.all(np.isfinite(hk_data)) and np.all(np.isfinite(Ts_data))):
        raise ValueError("labeled values must be finite")
    e17 = hk.val - hk_data
    e18 = Ts.val - Ts_data
    return e17, e18


def flow3d_residuals(bundle, case: CaseConfig):
    """3-D mass and momentum residuals (c1..c4)."""
    if case.dim != 3:
        raise ValueError("flow3d_residuals requires a 3-D case")
    u, v, w, p = _fields(bundle, "u", "v", "w", "p")
    co = coefficients(case)
    c1 = u.dx + v.dy + w.dz
    c2 = (co.c_mom * (2.0 * (u.val * u.dx)
                      + u.dy * v.val + u.val * v.dy
                      + u.dz * w.val + u.val * w.dz)
          + co.c_px * p.dx + co.c_darcy * u.val)
    c3 = (co.c_mom * (v.dx * u.val + v.val * u.dx
                      + 2.0 * (v.val * v.dy)
                      + v.dz * w.val + v.val * w.dz)
          + co.c_px * p.dy + co.c_darcy * v.val)
    c4 = (co.c_mom * (w.dx * u.val + w.val * u.dx
                      + w.dy * v.val + w.val * v.dy
                      + 2.0 * (w.val * w.dz))
          + co.c_px * p.dz + co.c_darcy * w.val)
    return c1, c2, c3, c4


# ---------------------------------------------------------------------------
# dimensional <-> non-dimensional conversions

_VELOCITY = ("u", "v", "w")
_COORD = ("x", "y", "z")


def nondim(case: CaseConfig, name: str, values):
    """SI value(s) of variable `name` to its non-dimensional form."""
    s = case.scales
    values = np.asarray(values, dtype=float)
    if name in _VELOCITY:
        return values / s.V
    if name in _COORD:
        return values / s.L
    if name == "p":
        return values / s.P
    if name == "Ts":
        return values / s.T
    if name == "Tf":
        return values * (case.fluid.c_pf / (s.T * s.C_P))
    if name == "hk":
        return values / (s.T * s.C_P)
    raise KeyError(f"unknown variable {name!r}")


def redim(case: CaseConfig, name: str, values):
    """Inverse of nondim (exact up to one floating-point rounding)."""
    s = case.scales
    values = np.asarray(values, dtype=float)
    if name in _VELOCITY:
        return values * s.V
    if name in _COORD:
        return values * s.L
    if name == "p":
        return values * s.P
    if name == "Ts":
        return values * s.T
    if name == "Tf":
        return values * ((s.T * s.C_P) / case.fluid.c_pf)
    if name == "hk":
        return values * (s.T * s.C_P)
    raise KeyError(f"unknown variable {name!r}")
