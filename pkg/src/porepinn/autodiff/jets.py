"""Second-order forward-mode jets over up to three spatial inputs.

A Jet2 carries a value, the gradient with respect to the declared inputs,
and the upper triangle of the Hessian (the symmetric matrix is never stored
twice, so symmetry holds to bit equality).  Arithmetic propagates both
derivative orders through product/chain rules; this is what turns a network
evaluation into the field derivatives consumed by the PDE residuals.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

Number = Union[int, float]

_PAIRS_CACHE: dict[int, tuple[tuple[int, int], ...]] = {}


def d2_size(dim: int) -> int:
    """Number of independent second-derivative slots for `dim` inputs."""
    return dim * (dim + 1) // 2


def d2_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Upper-triangle index pairs (i, j), i <= j, in row-major order."""
    pairs = _PAIRS_CACHE.get(dim)
    if pairs is None:
        pairs = tuple((i, j) for i in range(dim) for j in range(i, dim))
        _PAIRS_CACHE[dim] = pairs
    return pairs


def d2_index(dim: int, i: int, j: int) -> int:
    """Slot of the (i, j) second derivative in the upper-triangle vector."""
    if i > j:
        i, j = j, i
    if not 0 <= i <= j < dim:
        raise IndexError(f"pair ({i}, {j}) out of range for dim {dim}")
    return d2_pairs(dim).index((i, j))


def _cross_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = d2_pairs(dim)
    return (np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))


class Jet2:
    """Value + gradient + Hessian upper triangle w.r.t. the spatial inputs."""

    __slots__ = ("value", "d1", "d2u")

    def __init__(self, value: float, d1, d2u) -> None:
        self.value = float(value)
        self.d1 = np.asarray(d1, dtype=float)
        self.d2u = np.asarray(d2u, dtype=float)
        if self.d1.ndim != 1 or self.d2u.ndim != 1:
            raise ValueError("d1 and d2u must be one-dimensional")
        if self.d2u.shape[0] != d2_size(self.d1.shape[0]):
            raise ValueError("d2u length inconsistent with input dimension")

    @property
    def dim(self) -> int:
        return self.d1.shape[0]

    @property
    def d2(self) -> np.ndarray:
        """Full symmetric Hessian assembled from the stored upper triangle."""
        n = self.dim
        out = np.empty((n, n), dtype=float)
        for k, (i, j) in enumerate(d2_pairs(n)):
            out[i, j] = self.d2u[k]
            out[j, i] = self.d2u[k]
        return out

    @classmethod
    def constant(cls, value: Number, dim: int) -> "Jet2":
        return cls(float(value), np.zeros(dim), np.zeros(d2_size(dim)))

    @classmethod
    def variable(cls, value: Number, index: int, dim: int) -> "Jet2":
        """Seed jet for input coordinate `index` of a `dim`-dimensional point."""
        d1 = np.zeros(dim)
        d1[index] = 1.0
        return cls(float(value), d1, np.zeros(d2_size(dim)))

    def _lift(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            if other.dim != self.dim:
                raise ValueError("jet dimensions differ")
            return other
        return Jet2.constant(other, self.dim)

    # arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Jet2":
        o = self._lift(other)
        return Jet2(self.value + o.value, self.d1 + o.d1, self.d2u + o.d2u)

    __radd__ = __add__

    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, -self.d1, -self.d2u)

    def __sub__(self, other) -> "Jet2":
        o = self._lift(other)
        return Jet2(self.value - o.value, self.d1 - o.d1, self.d2u - o.d2u)

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            c = float(other)
            return Jet2(self.value * c, self.d1 * c, self.d2u * c)
        o = self._lift(other)
        I, J = _cross_indices(self.dim)
        d2u = (
            self.value * o.d2u
            + o.value * self.d2u
            + self.d1[I] * o.d1[J]
            + self.d1[J] * o.d1[I]
        )
        return Jet2(self.value * o.value, self.value * o.d1 + o.value * self.d1, d2u)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet2":
        if not isinstance(other, Jet2):
            return self * (1.0 / float(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other) -> "Jet2":
        return self.reciprocal() * other

    def __pow__(self, n: int) -> "Jet2":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers are supported")
        out = Jet2.constant(1.0, self.dim)
        base = self
        k = n
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    # primitives with known first/second derivative laws --------------------

    def _unary(self, u0: float, u1: float, u2: float) -> "Jet2":
        I, J = _cross_indices(self.dim)
        d2u = u1 * self.d2u + u2 * self.d1[I] * self.d1[J]
        return Jet2(u0, u1 * self.d1, d2u)

    def tanh(self) -> "Jet2":
        t = math.tanh(self.value)
        f1 = 1.0 - t * t
        return self._unary(t, f1, -2.0 * t * f1)

    def sin(self) -> "Jet2":
        s = math.sin(self.value)
        return self._unary(s, math.cos(self.value), -s)

    def cos(self) -> "Jet2":
        c = math.cos(self.value)
        return self._unary(c, -math.sin(self.value), -c)

    def square(self) -> "Jet2":
        return self._unary(self.value * self.value, 2.0 * self.value, 2.0)

    def reciprocal(self) -> "Jet2":
        v = self.value
        if v == 0.0:
            raise ZeroDivisionError("reciprocal of a zero-valued jet")
        inv = 1.0 / v
        return self._unary(inv, -inv * inv, 2.0 * inv * inv * inv)

    def exp(self) -> "Jet2":
        e = math.exp(self.value)
        return self._unary(e, e, e)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Jet2(value={self.value!r}, d1={self.d1!r}, d2u={self.d2u!r})"


def tanh(x: Jet2) -> Jet2:
    return x.tanh()


def sin(x: Jet2) -> Jet2:
    return x.sin()


def square(x: Jet2) -> Jet2:
    return x.square()


def reciprocal(x: Jet2) -> Jet2:
    return x.reciprocal()
