"""Full-batch Adam and L-BFGS with a strong-Wolfe line search.

Both operate on one flat parameter vector.  Frozen parameters are handled
upstream (their gradients arrive exactly zero), so neither optimizer moves
them: Adam's moments stay zero and L-BFGS directions inherit the zeros.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Optional, Tuple

import numpy as np

Evaluator = Callable[[np.ndarray], Tuple[float, np.ndarray]]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    diverged: bool = False

    def _ensure(self, n: int) -> None:
        if self.m is None:
            self.m = np.zeros(n)
            self.v = np.zeros(n)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray
              ) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update, in place on params.

    A non-finite gradient refuses the step and raises the divergence flag;
    params and moments are left untouched.
    """
    if params.shape != grads.shape:
        raise ValueError("parameter and gradient shapes differ")
    if not np.all(np.isfinite(grads)):
        state.diverged = True
        return params, state
    state._ensure(params.size)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m += (1.0 - b1) * (grads - state.m)
    state.v += (1.0 - b2) * (grads * grads - state.v)
    mhat = state.m / (1.0 - b1**state.t)
    vhat = state.v / (1.0 - b2**state.t)
    params -= state.lr * mhat / (np.sqrt(vhat) + state.eps_hat)
    return params, state


# ---------------------------------------------------------------------------
# L-BFGS


@dataclass
class LBFGSState:
    x: np.ndarray
    f: float
    g: np.ndarray
    memory: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_trials: int = 25
    iteration: int = 0
    n_evals: int = 1
    diverged: bool = False
    stalled: bool = False
    pairs: Deque = field(default_factory=deque)
    f_recent: Deque = field(default_factory=lambda: deque(maxlen=11))

    def __post_init__(self):
        self.f_recent.append(self.f)

    @property
    def converged(self) -> bool:
        """Relative loss decrease below 1e-12 over the last 10 iterations."""
        if np.max(np.abs(self.g)) < 1e-14:
            return True
        if len(self.f_recent) < self.f_recent.maxlen:
            return False
        first, last = self.f_recent[0], self.f_recent[-1]
        return first - last < 1e-12 * max(abs(first), 1.0)


def lbfgs_init(x0: np.ndarray, evaluator: Evaluator, memory: int = 50,
               c1: float = 1e-4, c2: float = 0.9, max_trials: int = 25) -> LBFGSState:
    f0, g0 = evaluator(x0)
    if not (np.isfinite(f0) and np.all(np.isfinite(g0))):
        state = LBFGSState(x0.copy(), float(f0), np.array(g0, dtype=float),
                           memory, c1, c2, max_trials)
        state.diverged = True
        return state
    return LBFGSState(x0.copy(), float(f0), np.array(g0, dtype=float),
                      memory, c1, c2, max_trials)


def _two_loop(state: LBFGSState) -> np.ndarray:
    q = state.g.copy()
    alphas = []
    for s, y, rho in reversed(state.pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if state.pairs:
        s, y, _ = state.pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(state.pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _wolfe(state: LBFGSState, evaluator: Evaluator, d: np.ndarray
           ) -> Optional[Tuple[float, float, np.ndarray]]:
    """Strong-Wolfe line search along d; None when no acceptable step exists."""
    phi0 = state.f
    dphi0 = float(state.g @ d)
    if not np.isfinite(dphi0) or dphi0 >= 0.0:
        return None
    c1, c2 = state.c1, state.c2
    trials = 0

    def phi(a):
        nonlocal trials
        trials += 1
        f, g = evaluator(state.x + a * d)
        state.n_evals += 1
        ok = np.isfinite(f) and np.all(np.isfinite(g))
        return (float(f), g, float(g @ d)) if ok else (np.inf, None, np.inf)

    def zoom(lo, f_lo, d_lo, hi):
        while trials < state.max_trials:
            a = 0.5 * (lo + hi)
            f, g, dphi = phi(a)
            if f > phi0 + c1 * a * dphi0 or f >= f_lo:
                hi = a
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return a, f, g
                if dphi * (hi - lo) >= 0.0:
                    hi = lo
                lo, f_lo, d_lo = a, f, dphi
        # bracket ran out of trials; the best low point still satisfies Armijo
        if lo > 0.0 and np.isfinite(f_lo):
            f, g, _ = phi(lo)
            if np.isfinite(f):
                return lo, f, g
        return None

    a_prev, f_prev, d_prev = 0.0, phi0, dphi0
    a = 1.0
    first = True
    while trials < state.max_trials:
        f, g, dphi = phi(a)
        if not np.isfinite(f):
            # overshoot into a non-finite region: shrink toward the last good point
            a = 0.5 * (a_prev + a)
            if a <= 1e-20:
                return None
            continue
        if f > phi0 + c1 * a * dphi0 or (not first and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a)
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g
        if dphi >= 0.0:
            return zoom(a, f, dphi, a_prev)
        a_prev, f_prev, d_prev = a, f, dphi
        a *= 2.0
        first = False
    return None


def lbfgs_step(state: LBFGSState, evaluator: Evaluator
               ) -> Tuple[np.ndarray, LBFGSState]:
    """One quasi-Newton step: two-loop direction, strong-Wolfe search.

    On line-search failure the step retries once as steepest descent with
    backtracking; if that also fails the state is marked stalled.  Non-finite
    losses during the search only reject trials; when every trial is
    non-finite the state is marked diverged and x stays at the last valid
    point.
    """
    if state.diverged or state.stalled:
        return state.x, state
    d = _two_loop(state)
    hit = _wolfe(state, evaluator, d)
    if hit is None:
        # fallback: plain steepest descent, backtracking Armijo only
        d = -state.g
        a = 1.0
        hit = None
        saw_finite = False
        for _ in range(state.max_trials):
            f, g = evaluator(state.x + a * d)
            state.n_evals += 1
            ok = np.isfinite(f) and np.all(np.isfinite(g))
            saw_finite = saw_finite or ok
            if ok and f <= state.f + state.c1 * a * float(state.g @ d):
                hit = (a, float(f), g)
                break
            a *= 0.5
        if hit is None:
            if saw_finite:
                state.stalled = True
            else:
                state.diverged = True
            return state.x, state
    a, f_new, g_new = hit
    x_new = state.x + a * d
    s = x_new - state.x
    y = g_new - state.g
    sy = float(s @ y)
    if state.memory > 0 and sy > 1e-20 * float(np.linalg.norm(s) * np.linalg.norm(y) + 1e-300):
        state.pairs.append((s, y, 1.0 / sy))
        while len(state.pairs) > state.memory:
            state.pairs.popleft()
    state.x = x_new
    state.f = f_new
    state.g = np.asarray(g_new, dtype=float)
    state.iteration += 1
    state.f_recent.append(f_new)
    return state.x, state
