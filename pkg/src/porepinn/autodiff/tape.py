"""Reverse-mode tape over array-valued nodes.

One node holds one batched operation (a linear layer applied to a whole jet
block, an activation, a component extraction, or elementwise arithmetic on
per-point residual arrays), so a full loss evaluation over thousands of
collocation points costs a few hundred nodes.  A single reverse sweep
yields the gradient of the final scalar with respect to every trainable
parameter; frozen parameters come back exactly zero.
"""

from __future__ import annotations

import numbers
from typing import Optional, Union

import numpy as np

from . import kernels
from .jets import d2_size


class TapeOverflowError(RuntimeError):
    """Node budget exceeded."""


class TapeNotFinalizedError(RuntimeError):
    """Reverse sweep requested without a scalar final node."""


class TapeNaNError(RuntimeError):
    """Non-finite adjoint encountered during the reverse sweep."""

    def __init__(self, node_index: int):
        super().__init__(f"non-finite adjoint at tape node {node_index}")
        self.node_index = node_index


class Tape:
    """Append-only record of batched operations feeding one scalar loss."""

    def __init__(self, n_params: int, frozen_mask: Optional[np.ndarray] = None,
                 budget: int = 200_000):
        self.n_params = int(n_params)
        self.frozen_mask = frozen_mask
        self.budget = int(budget)
        self.nodes: list = []

    def _append(self, node) -> int:
        if len(self.nodes) >= self.budget:
            raise TapeOverflowError(f"tape node budget {self.budget} exceeded")
        self.nodes.append(node)
        return len(self.nodes) - 1

    # reverse sweep ---------------------------------------------------------

    def param_gradient(self) -> np.ndarray:
        """Gradient of the final scalar node w.r.t. all parameters.

        Every node is visited at most once; parameters covered by the
        frozen mask are exactly zero in the result.
        """
        grad, _ = self._sweep(check_nodes=False)
        if not np.all(np.isfinite(grad)):
            # locate the first offending node for the error report
            _, bad = self._sweep(check_nodes=True)
            raise TapeNaNError(bad if bad is not None else len(self.nodes) - 1)
        return grad

    def _sweep(self, check_nodes: bool):
        if not self.nodes:
            raise TapeNotFinalizedError("empty tape")
        final = self.nodes[-1]
        if np.ndim(final.value) != 0:
            raise TapeNotFinalizedError("final tape node is not a scalar loss")
        pgrad = np.zeros(self.n_params)
        bars: list = [None] * len(self.nodes)
        bars[-1] = 1.0
        bad_node = None
        for i in range(len(self.nodes) - 1, -1, -1):
            bar = bars[i]
            if bar is None:
                continue
            if check_nodes and not np.all(np.isfinite(bar)):
                bad_node = i
                break
            for j, contrib, owned in self.nodes[i].backward(bar, pgrad):
                prev = bars[j]
                if prev is None:
                    if owned or isinstance(contrib, numbers.Number):
                        bars[j] = contrib
                    else:
                        bars[j] = contrib.copy()
                elif isinstance(prev, numbers.Number):
                    bars[j] = prev + contrib
                else:
                    prev += contrib
            bars[i] = None
        if self.frozen_mask is not None:
            pgrad[self.frozen_mask] = 0.0
        return pgrad, bad_node


def param_gradient(loss_tape: Tape) -> np.ndarray:
    """Module-level spelling of Tape.param_gradient."""
    return loss_tape.param_gradient()


# ---------------------------------------------------------------------------
# node classes


class _JetLinear:
    __slots__ = ("in_idx", "J_in", "W", "w_off", "b_off", "frozen_w", "frozen_b", "value")

    def __init__(self, in_idx, J_in, W, w_off, b_off, frozen_w, frozen_b, value):
        self.in_idx = in_idx
        self.J_in = J_in
        self.W = W
        self.w_off = w_off
        self.b_off = b_off
        self.frozen_w = frozen_w
        self.frozen_b = frozen_b
        self.value = value

    def backward(self, bar, pgrad):
        C, N, wo = bar.shape
        win = self.W.shape[0]
        bar2 = bar.reshape(C * N, wo)
        out = []
        if self.in_idx is not None:
            out.append((self.in_idx, (bar2 @ self.W.T).reshape(C, N, win), True))
        if not self.frozen_w:
            gw = self.J_in.reshape(C * N, win).T @ bar2
            pgrad[self.w_off : self.w_off + win * wo] += gw.ravel()
        if not self.frozen_b:
            pgrad[self.b_off : self.b_off + wo] += bar[0].sum(axis=0)
        return out


class _JetAct:
    __slots__ = ("kind", "in_idx", "J_in", "saved", "dim", "second", "value")

    def __init__(self, kind, in_idx, J_in, saved, dim, second, value):
        self.kind = kind
        self.in_idx = in_idx
        self.J_in = J_in
        self.saved = saved
        self.dim = dim
        self.second = second
        self.value = value

    def backward(self, bar, pgrad):
        jbar = kernels.act_backward(self.kind, self.J_in, bar, self.saved, self.dim, self.second)
        return [(self.in_idx, jbar, True)]


class _Component:
    __slots__ = ("in_idx", "in_shape", "comp", "col", "value")

    def __init__(self, in_idx, in_shape, comp, col, value):
        self.in_idx = in_idx
        self.in_shape = in_shape
        self.comp = comp
        self.col = col
        self.value = value

    def backward(self, bar, pgrad):
        full = np.zeros(self.in_shape)
        full[self.comp, :, self.col] = bar
        return [(self.in_idx, full, True)]


class _Add:
    __slots__ = ("a_idx", "b_idx", "value")

    def __init__(self, a_idx, b_idx, value):
        self.a_idx = a_idx
        self.b_idx = b_idx
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, bar, False), (self.b_idx, bar, False)]


class _AddC:
    __slots__ = ("a_idx", "value")

    def __init__(self, a_idx, value):
        self.a_idx = a_idx
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, bar, False)]


class _Sub:
    __slots__ = ("a_idx", "b_idx", "value")

    def __init__(self, a_idx, b_idx, value):
        self.a_idx = a_idx
        self.b_idx = b_idx
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, bar, False), (self.b_idx, -bar, True)]


class _Mul:
    __slots__ = ("a_idx", "b_idx", "a_val", "b_val", "value")

    def __init__(self, a_idx, b_idx, a_val, b_val, value):
        self.a_idx = a_idx
        self.b_idx = b_idx
        self.a_val = a_val
        self.b_val = b_val
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, bar * self.b_val, True), (self.b_idx, bar * self.a_val, True)]


class _MulC:
    __slots__ = ("a_idx", "c", "value")

    def __init__(self, a_idx, c, value):
        self.a_idx = a_idx
        self.c = c
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, bar * self.c, True)]


class _Square:
    __slots__ = ("a_idx", "a_val", "value")

    def __init__(self, a_idx, a_val, value):
        self.a_idx = a_idx
        self.a_val = a_val
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, (2.0 * bar) * self.a_val, True)]


class _Mean:
    __slots__ = ("a_idx", "n", "value")

    def __init__(self, a_idx, n, value):
        self.a_idx = a_idx
        self.n = n
        self.value = value

    def backward(self, bar, pgrad):
        return [(self.a_idx, np.full(self.n, bar / self.n), True)]


# ---------------------------------------------------------------------------
# handles


class TJet:
    """Handle to a jet block: value array (C, N, width) plus tape position.

    idx None marks a constant block (inputs, or anything downstream of
    exclusively frozen parameters), which the reverse sweep never visits.
    """

    __slots__ = ("tape", "idx", "value", "dim", "second")

    def __init__(self, tape, idx, value, dim, second):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.dim = dim
        self.second = second

    @property
    def n_components(self) -> int:
        return 1 + self.dim + (d2_size(self.dim) if self.second else 0)


class TVar:
    """Handle to a per-point residual array (N,) or a scalar on the tape.

    Supports the arithmetic the residual formulas need; plain numbers and
    ndarrays are treated as constants, so the same formulas also run
    entirely untaped on raw arrays.
    """

    __slots__ = ("tape", "idx", "value")

    # ndarray <op> TVar must dispatch to the reflected TVar methods, not
    # numpy's elementwise object broadcasting
    __array_ufunc__ = None

    def __init__(self, tape, idx, value):
        self.tape = tape
        self.idx = idx
        self.value = value

    def __add__(self, other):
        if isinstance(other, TVar):
            v = self.value + other.value
            return TVar(self.tape, self.tape._append(_Add(self.idx, other.idx, v)), v)
        v = self.value + other
        return TVar(self.tape, self.tape._append(_AddC(self.idx, v)), v)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, TVar):
            v = self.value - other.value
            return TVar(self.tape, self.tape._append(_Sub(self.idx, other.idx, v)), v)
        v = self.value - other
        return TVar(self.tape, self.tape._append(_AddC(self.idx, v)), v)

    def __rsub__(self, other):
        neg = self * -1.0
        return neg + other

    def __neg__(self):
        return self * -1.0

    def __mul__(self, other):
        if isinstance(other, TVar):
            v = self.value * other.value
            return TVar(self.tape, self.tape._append(
                _Mul(self.idx, other.idx, self.value, other.value, v)), v)
        v = self.value * other
        return TVar(self.tape, self.tape._append(_MulC(self.idx, other, v)), v)

    __rmul__ = __mul__

    def square(self):
        v = self.value * self.value
        return TVar(self.tape, self.tape._append(_Square(self.idx, self.value, v)), v)

    def mean(self):
        n = np.size(self.value)
        m = float(np.mean(self.value))
        return TVar(self.tape, self.tape._append(_Mean(self.idx, n, m)), m)


# ---------------------------------------------------------------------------
# batched jet operations


def jet_points(points: np.ndarray, second: bool) -> TJet:
    """Seed jet block for a batch of collocation points, shape (N, dim)."""
    points = np.asarray(points, dtype=float)
    n, dim = points.shape
    c = 1 + dim + (d2_size(dim) if second else 0)
    block = np.zeros((c, n, dim))
    block[0] = points
    for i in range(dim):
        block[1 + i, :, i] = 1.0
    return TJet(None, None, block, dim, second)


def jet_linear(tape: Optional[Tape], jin: TJet, W: np.ndarray, b: np.ndarray,
               w_off: int, b_off: int, frozen_w: bool, frozen_b: bool) -> TJet:
    """Affine layer applied to every component of a jet block (bias on values only)."""
    J = jin.value
    C, N, win = J.shape
    out = (J.reshape(C * N, win) @ W).reshape(C, N, W.shape[1])
    out[0] += b
    untracked = tape is None or (jin.idx is None and frozen_w and frozen_b)
    if untracked:
        return TJet(tape, None, out, jin.dim, jin.second)
    idx = tape._append(_JetLinear(jin.idx, J, W, w_off, b_off, frozen_w, frozen_b, out))
    return TJet(tape, idx, out, jin.dim, jin.second)


def jet_act(tape: Optional[Tape], kind: int, jin: TJet) -> TJet:
    out, saved = kernels.act_forward(kind, jin.value, jin.dim, jin.second)
    if tape is None or jin.idx is None:
        return TJet(tape, None, out, jin.dim, jin.second)
    idx = tape._append(_JetAct(kind, jin.idx, jin.value, saved, jin.dim, jin.second, out))
    return TJet(tape, idx, out, jin.dim, jin.second)


def jet_component(jin: TJet, comp: int, col: int) -> Union[TVar, np.ndarray]:
    """Extract one derivative component of one output column as an (N,) array."""
    vals = jin.value[comp, :, col]
    if jin.idx is None:
        return vals
    idx = jin.tape._append(_Component(jin.idx, jin.value.shape, comp, col, vals))
    return TVar(jin.tape, idx, vals)


def value_of(x) -> Union[np.ndarray, float]:
    """Plain numeric payload of a TVar/TJet or passthrough for arrays."""
    if isinstance(x, (TVar, TJet)):
        return x.value
    return x
