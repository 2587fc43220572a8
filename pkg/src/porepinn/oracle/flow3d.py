"""3-D steady flow on the cube: continuity over node-centered boxes with
Darcy momentum closing the face velocities, upwind inertia as lagged sources.

Same construction as the 2-D solve, one dimension wider. The pressure system
is a symmetric positive-definite 7-point graph Laplacian (outlet plane folded
into the right-hand side), solved with Jacobi-preconditioned conjugate
gradients from a Darcy-profile warm start; the Picard loop then updates the
convective sources, which vanish identically for uniform injection.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..config import CaseConfig
from .flow2d import OracleConvergenceError, _cv_widths
from .grid import Grid, ReferenceDataset, case_grid


def _upwind_axis(q: np.ndarray, vel: np.ndarray, d: float, ax: int) -> np.ndarray:
    """First-order upwind d(q)/dax at nodes, direction from the sign of vel."""
    dq = np.diff(q, axis=ax) / d
    lo = [slice(None)] * q.ndim
    hi = [slice(None)] * q.ndim
    lo[ax] = slice(0, 1)
    hi[ax] = slice(-1, None)
    back = np.concatenate([dq[tuple(lo)], dq], axis=ax)
    fwd = np.concatenate([dq, dq[tuple(hi)]], axis=ax)
    return np.where(vel >= 0, back, fwd)


def _avg_axis(q: np.ndarray, ax: int) -> np.ndarray:
    lo = [slice(None)] * q.ndim
    hi = [slice(None)] * q.ndim
    lo[ax] = slice(None, -1)
    hi[ax] = slice(1, None)
    return 0.5 * (q[tuple(lo)] + q[tuple(hi)])


def _conv_sources_3d(u, v, w, rho_eps: float, dx: float, dy: float, dz: float):
    """(rho/eps) convective momentum terms at x-, y- and z-faces."""
    uv, uw, vw = u * v, u * w, v * w
    duvdy = _upwind_axis(uv, v, dy, 1)
    duwdz = _upwind_axis(uw, w, dz, 2)
    cx = rho_eps * (np.diff(u * u, axis=0) / dx
                    + _avg_axis(duvdy, 0) + _avg_axis(duwdz, 0))
    duvdx = _upwind_axis(uv, u, dx, 0)
    dvwdz = _upwind_axis(vw, w, dz, 2)
    cy = rho_eps * (np.diff(v * v, axis=1) / dy
                    + _avg_axis(duvdx, 1) + _avg_axis(dvwdz, 1))
    duwdx = _upwind_axis(uw, u, dx, 0)
    dvwdy = _upwind_axis(vw, v, dy, 1)
    cz = rho_eps * (np.diff(w * w, axis=2) / dz
                    + _avg_axis(duwdx, 2) + _avg_axis(dvwdy, 2))
    return cx, cy, cz


def _pressure_system_3d(grid: Grid, g: float):
    nx, ny, nz = grid.shape
    dx, dy, dz = grid.spacing
    wx = _cv_widths(nx, dx)
    wy = _cv_widths(ny, dy)
    wz = _cv_widths(nz, dz)
    nyu = ny - 1
    n = nx * nyu * nz
    idx = np.arange(n).reshape(nx, nyu, nz)
    diag = np.zeros(n)
    rows, cols, vals = [], [], []

    def add_pair(P, Q, T):
        T = np.ravel(T)
        P = np.ravel(P)
        Q = np.ravel(Q)
        rows.append(P)
        cols.append(Q)
        vals.append(-T)
        rows.append(Q)
        cols.append(P)
        vals.append(-T)
        np.add.at(diag, P, T)
        np.add.at(diag, Q, T)

    t_x = np.broadcast_to((g / dx) * wy[:nyu, None] * wz[None, :],
                          (nx - 1, nyu, nz))
    add_pair(idx[:-1, :, :], idx[1:, :, :], t_x)
    t_y = np.broadcast_to((g / dy) * wx[:, None, None] * wz[None, None, :],
                          (nx, nyu - 1, nz))
    add_pair(idx[:, :-1, :], idx[:, 1:, :], t_y)
    t_z = np.broadcast_to((g / dz) * wx[:, None, None] * wy[None, :nyu, None],
                          (nx, nyu, nz - 1))
    add_pair(idx[:, :, :-1], idx[:, :, 1:], t_z)
    # outlet Dirichlet plane behind the top faces of row nyu-1
    t_out = (g / dy) * wx[:, None] * wz[None, :]
    np.add.at(diag, idx[:, -1, :], t_out)

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return A, wx, wy, wz


def _pressure_rhs_3d(grid: Grid, g: float, wx, wy, wz, v_in: float,
                     p_out: float, cx, cy, cz) -> np.ndarray:
    nx, ny, nz = grid.shape
    dx, dy, dz = grid.spacing
    nyu = ny - 1
    b = np.zeros((nx, nyu, nz))
    b[:, 0, :] += v_in * wx[:, None] * wz[None, :]
    b[:, -1, :] += (g / dy) * wx[:, None] * wz[None, :] * p_out
    a_x = wy[:nyu, None] * wz[None, :]
    b[:-1, :, :] += g * cx[:, :nyu, :] * a_x[None, :, :]
    b[1:, :, :] -= g * cx[:, :nyu, :] * a_x[None, :, :]
    a_y = wx[:, None, None] * wz[None, None, :]
    b += g * cy[:, :nyu, :] * a_y
    b[:, 1:, :] -= g * cy[:, : nyu - 1, :] * a_y
    a_z = wx[:, None, None] * wy[None, :nyu, None]
    b[:, :, :-1] += g * cz[:, :nyu, :] * a_z
    b[:, :, 1:] -= g * cz[:, :nyu, :] * a_z
    return b.ravel()


def _face_velocities_3d(p, g, dx, dy, dz, cx, cy, cz):
    uf = -g * (np.diff(p, axis=0) / dx + cx)
    vf = -g * (np.diff(p, axis=1) / dy + cy)
    wf = -g * (np.diff(p, axis=2) / dz + cz)
    return uf, vf, wf


def _node_velocities_3d(uf, vf, wf, v_in: float, noslip_nodes: bool):
    nx = uf.shape[0] + 1
    ny = vf.shape[1] + 1
    nz = wf.shape[2] + 1
    u = np.zeros((nx, ny, nz))
    u[1:-1, :, :] = 0.5 * (uf[:-1, :, :] + uf[1:, :, :])
    v = np.empty((nx, ny, nz))
    v[:, 0, :] = v_in
    v[:, 1:-1, :] = 0.5 * (vf[:, :-1, :] + vf[:, 1:, :])
    v[:, -1, :] = vf[:, -1, :]
    w = np.zeros((nx, ny, nz))
    w[:, :, 1:-1] = 0.5 * (wf[:, :, :-1] + wf[:, :, 1:])
    if noslip_nodes:
        for arr in (u, v, w):
            arr[0, :, :] = arr[-1, :, :] = 0.0
            arr[:, :, 0] = arr[:, :, -1] = 0.0
    return u, v, w


def solve_flow_3d(case: CaseConfig, grid: Grid = None, tol: float = 1e-9,
                  max_iters: int = 50, noslip_nodes: bool = True,
                  shape: Tuple[int, int, int] = (40, 50, 40)) -> ReferenceDataset:
    """Solve steady mass/momentum on the cube; fields returned in SI units."""
    if case.dim != 3:
        raise ValueError("solve_flow_3d requires a 3-D case")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if grid is None:
        grid = case_grid(case, shape)
    nx, ny, nz = grid.shape
    dx, dy, dz = grid.spacing
    g = case.porous.K / case.mu0
    v_in = case.boundary.m_dot / case.fluid.rho
    p_out = case.boundary.p_out
    rho_eps = case.fluid.rho / case.porous.eps
    nyu = ny - 1

    A, wx, wy, wz = _pressure_system_3d(grid, g)
    precond = sp.diags(1.0 / A.diagonal())
    atol = 0.5 * tol * v_in * wx.min() * wz.min()

    # Darcy-profile warm start: linear in y, exact for uniform injection
    y = grid.axis(1)
    p0 = np.broadcast_to(p_out + (v_in / g) * (y[-1] - y[:nyu])[None, :, None],
                         (nx, nyu, nz)).copy()

    u = np.zeros((nx, ny, nz))
    v = np.full((nx, ny, nz), v_in)
    w = np.zeros((nx, ny, nz))
    flux_scale = v_in * wx[:, None, None] * wz[None, None, :]
    p_full = np.empty((nx, ny, nz))
    p_full[:, -1, :] = p_out

    res = np.inf
    cg_total = 0
    x = p0.ravel()
    for it in range(1, max_iters + 1):
        cx, cy, cz = _conv_sources_3d(u, v, w, rho_eps, dx, dy, dz)
        b = _pressure_rhs_3d(grid, g, wx, wy, wz, v_in, p_out, cx, cy, cz)
        iters = [0]
        x, info = spla.cg(A, b, x0=x, rtol=0.0, atol=atol, maxiter=200000,
                          M=precond, callback=lambda _: iters.__setitem__(0, iters[0] + 1))
        cg_total += iters[0]
        if info != 0:
            raise OracleConvergenceError(f"pressure CG failed to reach atol ({info})")
        p = x.reshape(nx, nyu, nz)
        p_full[:, :-1, :] = p
        uf, vf, wf = _face_velocities_3d(p_full, g, dx, dy, dz, cx, cy, cz)
        u_new, v_new, w_new = _node_velocities_3d(uf, vf, wf, v_in, noslip_nodes)
        delta = max(np.max(np.abs(u_new - u)), np.max(np.abs(v_new - v)),
                    np.max(np.abs(w_new - w))) / v_in
        u, v, w = u_new, v_new, w_new
        cx2, cy2, cz2 = _conv_sources_3d(u, v, w, rho_eps, dx, dy, dz)
        b2 = _pressure_rhs_3d(grid, g, wx, wy, wz, v_in, p_out, cx2, cy2, cz2)
        defect = (A @ x - b2).reshape(nx, nyu, nz)
        res = np.max(np.abs(defect) / flux_scale)
        if res < tol and delta < tol:
            break
    else:
        raise OracleConvergenceError(
            f"flow solve stalled at residual {res:.3e} after {max_iters} sweeps")

    T0 = float(case.boundary.T_in)
    fields = {
        "u": u, "v": v, "w": w, "p": p_full,
        "Ts": np.full((nx, ny, nz), T0), "Tf": np.full((nx, ny, nz), T0),
    }
    return ReferenceDataset(
        grid=grid, fields=fields, case_id=case.name,
        residuals={"continuity": float(res), "picard_delta": float(delta),
                   "iterations": float(it), "cg_iterations": float(cg_total)},
        config_hash=case.config_hash(),
    )
