"""Differentiation entry points.

`eval_jets` drives a network forward in jet form (values + input
derivatives), optionally recording onto a tape so one reverse sweep gives
parameter gradients of any scalar assembled from the outputs.  The rest are
the user-facing operations built on it: plain evaluation, per-output Jet2
extraction, and the finite-difference cross-check harness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .jets import Jet2, d2_pairs, d2_size
from .tape import Tape, TJet, TVar, jet_act, jet_component, jet_linear, jet_points

ACT_KINDS = {"tanh": kernels.TANH, "sine": kernels.SIN}


class NonFiniteParameterError(ValueError):
    """A parameter is NaN or infinite."""


def _check_finite_params(net) -> None:
    if not np.all(np.isfinite(net.theta)):
        raise NonFiniteParameterError("network parameters contain non-finite values")


def eval_jets(net, points: np.ndarray, tape: Optional[Tape] = None,
              second: bool = True, trunk_cache: Optional[TJet] = None) -> dict:
    """Jet-propagate `points` (N, input_dim) through the net.

    Returns {output name: (TJet, column)}.  With a tape, all nodes needed
    for parameter gradients are recorded; fully frozen prefixes stay off
    the tape automatically.  `trunk_cache` short-circuits the first segment
    with a precomputed constant block (valid only while that segment is
    frozen and the points are unchanged).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != net.input_dim:
        raise ValueError(f"expected points of shape (N, {net.input_dim})")
    cache = {"input": jet_points(points, second)}
    segs = net.segments()
    for seg in segs:
        if trunk_cache is not None and seg.source == "input":
            cache[seg.component] = trunk_cache
            continue
        j = cache[seg.source]
        frozen = net.is_frozen(seg.component)
        for li, layer in enumerate(seg.layers):
            wslot = net.slot_map[(seg.component, li, "W")]
            bslot = net.slot_map[(seg.component, li, "b")]
            j = jet_linear(tape, j, net.slot_view(wslot), net.slot_view(bslot),
                           wslot.offset, bslot.offset, frozen, frozen)
            if layer.activation != "linear":
                j = jet_act(tape, ACT_KINDS[layer.activation], j)
        cache[seg.component] = j
    omap = net.output_map()
    return {name: (cache[omap[name][0]], omap[name][1]) for name in net.output_order}


def frozen_trunk_block(net, points: np.ndarray, second: bool = True) -> TJet:
    """Constant jet block of the first segment, for reuse across epochs."""
    points = np.asarray(points, dtype=float)
    seg = net.segments()[0]
    j = jet_points(points, second)
    for li, layer in enumerate(seg.layers):
        wslot = net.slot_map[(seg.component, li, "W")]
        bslot = net.slot_map[(seg.component, li, "b")]
        j = jet_linear(None, j, net.slot_view(wslot), net.slot_view(bslot),
                       wslot.offset, bslot.offset, True, True)
        if layer.activation != "linear":
            j = jet_act(None, ACT_KINDS[layer.activation], j)
    return j


def forward_eval(net, inputs) -> np.ndarray:
    """Network outputs at a single point, in declared output order."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (net.input_dim,):
        raise ValueError(f"expected {net.input_dim} input coordinates, got shape {inputs.shape}")
    _check_finite_params(net)
    return net.predict(inputs[None, :])[0]


def input_derivatives(net, inputs) -> list:
    """One Jet2 per output: value, gradient, and Hessian w.r.t. the inputs."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (net.input_dim,):
        raise ValueError(f"expected {net.input_dim} input coordinates, got shape {inputs.shape}")
    if not np.all(np.isfinite(inputs)):
        raise ValueError("inputs contain non-finite values")
    _check_finite_params(net)
    dim = net.input_dim
    outs = eval_jets(net, inputs[None, :], tape=None, second=True)
    jets = []
    for name in net.output_order:
        block, col = outs[name]
        v = block.value
        jets.append(Jet2(v[0, 0, col], v[1 : 1 + dim, 0, col], v[1 + dim :, 0, col]))
    return jets


# ---------------------------------------------------------------------------
# finite-difference harness


@dataclass
class FDCheckReport:
    max_rel_d1: float
    max_rel_d2: float
    max_rel_param: float
    tol_d1: float
    tol_d2: float
    tol_param: float

    @property
    def ok_d1(self) -> bool:
        return self.max_rel_d1 < self.tol_d1

    @property
    def ok_d2(self) -> bool:
        return self.max_rel_d2 < self.tol_d2

    @property
    def ok_param(self) -> bool:
        return self.max_rel_param < self.tol_param

    @property
    def ok(self) -> bool:
        return self.ok_d1 and self.ok_d2 and self.ok_param


def _rel_dev(ad: np.ndarray, fd: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(fd))) if fd.size else 0.0, 1e-12)
    return float(np.max(np.abs(ad - fd)) / scale) if ad.size else 0.0


def _check_loss_terms(net, points, tape: Optional[Tape]):
    """Scalar probe loss touching every jet component of every output."""
    outs = eval_jets(net, points, tape=tape, second=True)
    total = None
    for name in net.output_order:
        block, col = outs[name]
        for comp in range(block.n_components):
            piece = jet_component(block, comp, col)
            if isinstance(piece, TVar):
                term = piece.square().mean()
            else:
                term = float(np.mean(piece * piece))
            total = term if total is None else total + term
    return total


def fd_check(net, points: np.ndarray, step: float,
             tol_d1: float = 1e-6, tol_d2: float = 1e-4,
             tol_param: float = 1e-5) -> FDCheckReport:
    """Compare jet derivatives and parameter gradients against central differences.

    `step` applies to the input-derivative differences; parameter
    differences use per-parameter steps max(1e-6, 1e-6*|theta|).
    """
    if not 0.0 < step <= 1e-2:
        raise ValueError("step must lie in (0, 1e-2]")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape

    outs = eval_jets(net, points, tape=None, second=True)
    names = net.output_order
    ad_d1 = np.empty((len(names), n, dim))
    ad_d2 = np.empty((len(names), n, d2_size(dim)))
    for oi, name in enumerate(names):
        block, col = outs[name]
        ad_d1[oi] = block.value[1 : 1 + dim, :, col].T
        ad_d2[oi] = block.value[1 + dim :, :, col].T

    # one batched evaluation for all stencil points
    stencil = [points]
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = step
        stencil.append(points + e)
        stencil.append(points - e)
    pairs = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    for i, j in pairs:
        ei = np.zeros(dim)
        ei[i] = step
        ej = np.zeros(dim)
        ej[j] = step
        stencil.extend([points + ei + ej, points + ei - ej,
                        points - ei + ej, points - ei - ej])
    values = net.predict(np.concatenate(stencil, axis=0))
    chunks = values.reshape(len(stencil), n, len(names))
    f0 = chunks[0]
    fd_d1 = np.empty_like(ad_d1)
    fd_d2 = np.empty_like(ad_d2)
    for i in range(dim):
        fp, fm = chunks[1 + 2 * i], chunks[2 + 2 * i]
        fd_d1[:, :, i] = ((fp - fm) / (2.0 * step)).T
        fd_d2[:, :, d2_pairs(dim).index((i, i))] = ((fp - 2.0 * f0 + fm) / step**2).T
    base = 1 + 2 * dim
    for k, (i, j) in enumerate(pairs):
        fpp, fpm, fmp, fmm = chunks[base + 4 * k : base + 4 * k + 4]
        fd_d2[:, :, d2_pairs(dim).index((i, j))] = (
            (fpp - fpm - fmp + fmm) / (4.0 * step**2)).T

    # parameter gradient of the probe loss
    tape = Tape(net.n_params, net.frozen_param_mask())
    _check_loss_terms(net, points, tape)
    ad_grad = tape.param_gradient()

    theta0 = net.theta.copy()
    fd_grad = np.zeros_like(theta0)
    frozen = net.frozen_param_mask()
    try:
        for k in range(theta0.size):
            if frozen[k]:
                continue
            h = max(1e-6, 1e-6 * abs(theta0[k]))
            net.theta[k] = theta0[k] + h
            up = _check_loss_terms(net, points, None)
            net.theta[k] = theta0[k] - h
            dn = _check_loss_terms(net, points, None)
            net.theta[k] = theta0[k]
            fd_grad[k] = (up - dn) / (2.0 * h)
    finally:
        net.theta[...] = theta0

    return FDCheckReport(
        max_rel_d1=_rel_dev(ad_d1, fd_d1),
        max_rel_d2=_rel_dev(ad_d2, fd_d2),
        max_rel_param=_rel_dev(ad_grad, fd_grad),
        tol_d1=tol_d1,
        tol_d2=tol_d2,
        tol_param=tol_param,
    )
