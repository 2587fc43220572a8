# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused activation kernels for jet blocks (C, N, width).

Single pass over memory per call; the numpy fallback in kernels.py computes
the same recurrences with whole-array temporaries.
"""

from libc.math cimport tanh as c_tanh, sin as c_sin, cos as c_cos

cimport numpy as cnp  # noqa: F401  (ensures numpy headers are linked)

DEF KIND_TANH = 0


def act_fwd(int kind,
            double[:, :, ::1] J,
            double[:, :, ::1] out,
            double[:, ::1] t,
            double[:, ::1] f1,
            double[:, ::1] f2,
            int dim,
            Py_ssize_t[:] pi,
            Py_ssize_t[:] pj):
    cdef Py_ssize_t n = J.shape[1], w = J.shape[2], npair = pi.shape[0]
    cdef Py_ssize_t a, b, i, k
    cdef double v, tv, f1v, f2v
    cdef double g[3]
    for a in range(n):
        for b in range(w):
            v = J[0, a, b]
            if kind == KIND_TANH:
                tv = c_tanh(v)
                f1v = 1.0 - tv * tv
                f2v = -2.0 * tv * f1v
            else:
                tv = c_sin(v)
                f1v = c_cos(v)
                f2v = -tv
            t[a, b] = tv
            f1[a, b] = f1v
            f2[a, b] = f2v
            out[0, a, b] = tv
            for i in range(dim):
                g[i] = J[1 + i, a, b]
                out[1 + i, a, b] = f1v * g[i]
            for k in range(npair):
                out[1 + dim + k, a, b] = (
                    f1v * J[1 + dim + k, a, b] + f2v * g[pi[k]] * g[pj[k]]
                )


def act_bwd(int kind,
            double[:, :, ::1] J,
            double[:, :, ::1] gbar,
            double[:, :, ::1] jbar,
            double[:, ::1] t,
            double[:, ::1] f1,
            double[:, ::1] f2,
            int dim,
            Py_ssize_t[:] pi,
            Py_ssize_t[:] pj):
    cdef Py_ssize_t n = J.shape[1], w = J.shape[2], npair = pi.shape[0]
    cdef Py_ssize_t a, b, i, k, ii, jj
    cdef double tv, f1v, f2v, f3v, vbar, sb
    cdef double g[3]
    cdef double gb[3]
    for a in range(n):
        for b in range(w):
            tv = t[a, b]
            f1v = f1[a, b]
            f2v = f2[a, b]
            if kind == KIND_TANH:
                f3v = -2.0 * (f1v * f1v + tv * f2v)
            else:
                f3v = -f1v
            vbar = f1v * gbar[0, a, b]
            for i in range(dim):
                g[i] = J[1 + i, a, b]
                sb = gbar[1 + i, a, b]
                gb[i] = f1v * sb
                vbar += f2v * g[i] * sb
            for k in range(npair):
                ii = pi[k]
                jj = pj[k]
                sb = gbar[1 + dim + k, a, b]
                vbar += (f2v * J[1 + dim + k, a, b] + f3v * g[ii] * g[jj]) * sb
                if ii == jj:
                    gb[ii] += 2.0 * f2v * g[ii] * sb
                else:
                    gb[ii] += f2v * g[jj] * sb
                    gb[jj] += f2v * g[ii] * sb
                jbar[1 + dim + k, a, b] = f1v * sb
            jbar[0, a, b] = vbar
            for i in range(dim):
                jbar[1 + i, a, b] = gb[i]
