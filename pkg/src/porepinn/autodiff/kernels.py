"""Elementwise jet kernels with a compiled fast path.

A jet block is a C-contiguous float64 array of shape (C, N, width):
row 0 holds values, rows 1..dim the first derivatives, and (for
second-order blocks) the remaining rows the Hessian upper triangle in
`jets.d2_pairs` order.  The linear-layer work is plain GEMM and stays in
numpy/BLAS; only the activation propagation below has a handwritten
compiled kernel, selected at import time with a numpy fallback.

Set POREPINN_BACKEND=numpy|cython to force a backend ("auto" default).
"""

from __future__ import annotations

import os

import numpy as np

from .jets import d2_pairs

TANH = 0
SIN = 1

_cy = None
_requested = os.environ.get("POREPINN_BACKEND", "auto").lower()
if _requested not in ("auto", "numpy", "cython"):
    raise ValueError(f"POREPINN_BACKEND must be auto|numpy|cython, got {_requested!r}")
if _requested != "numpy":
    try:
        from . import _jetkernels as _cy  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "POREPINN_BACKEND=cython but the compiled kernel module is missing; "
                "reinstall with a working C toolchain or use POREPINN_BACKEND=numpy"
            )
        _cy = None


def backend() -> str:
    """Name of the kernel implementation in use."""
    return "cython" if _cy is not None else "numpy"


def _pair_arrays(dim: int, second: bool) -> tuple[np.ndarray, np.ndarray]:
    if not second:
        return (np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp))
    pairs = d2_pairs(dim)
    return (
        np.array([p[0] for p in pairs], dtype=np.intp),
        np.array([p[1] for p in pairs], dtype=np.intp),
    )


def act_forward(kind: int, J: np.ndarray, dim: int, second: bool):
    """Propagate an activation through a jet block.

    Returns (out, saved) where saved carries what act_backward needs.
    """
    if _cy is not None:
        out = np.empty_like(J)
        n, w = J.shape[1], J.shape[2]
        t = np.empty((n, w))
        f1 = np.empty((n, w))
        f2 = np.empty((n, w))
        pi, pj = _pair_arrays(dim, second)
        _cy.act_fwd(kind, J, out, t, f1, f2, dim, pi, pj)
        return out, (t, f1, f2)
    v = J[0]
    if kind == TANH:
        t = np.tanh(v)
        f1 = 1.0 - t * t
        f2 = -2.0 * t * f1
    else:
        t = np.sin(v)
        f1 = np.cos(v)
        f2 = -t
    out = np.empty_like(J)
    out[0] = t
    g = J[1 : 1 + dim]
    np.multiply(f1, g, out=out[1 : 1 + dim])
    if second:
        H = J[1 + dim :]
        for k, (i, j) in enumerate(d2_pairs(dim)):
            out[1 + dim + k] = f1 * H[k] + f2 * (g[i] * g[j])
    return out, (t, f1, f2)


def act_backward(kind: int, J: np.ndarray, gbar: np.ndarray, saved, dim: int, second: bool) -> np.ndarray:
    """Vector-Jacobian product of act_forward w.r.t. the input jet block."""
    t, f1, f2 = saved
    if _cy is not None:
        jbar = np.empty_like(J)
        pi, pj = _pair_arrays(dim, second)
        _cy.act_bwd(kind, J, np.ascontiguousarray(gbar), jbar, t, f1, f2, dim, pi, pj)
        return jbar
    # df2/dv, needed because second-derivative outputs depend on f2
    f3 = -2.0 * (f1 * f1 + t * f2) if kind == TANH else -f1
    g = J[1 : 1 + dim]
    jbar = np.empty_like(J)
    vbar = f1 * gbar[0]
    gb = jbar[1 : 1 + dim]
    for i in range(dim):
        gb[i] = f1 * gbar[1 + i]
        vbar += f2 * (g[i] * gbar[1 + i])
    if second:
        H = J[1 + dim :]
        for k, (i, j) in enumerate(d2_pairs(dim)):
            sb = gbar[1 + dim + k]
            vbar += (f2 * H[k] + f3 * (g[i] * g[j])) * sb
            if i == j:
                gb[i] += 2.0 * f2 * g[i] * sb
            else:
                gb[i] += f2 * g[j] * sb
                gb[j] += f2 * g[i] * sb
            jbar[1 + dim + k] = f1 * sb
    jbar[0] = vbar
    return jbar
