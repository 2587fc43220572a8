"""Optimizer behavior: exact Adam algebra, L-BFGS vs scipy, failure flags."""

import numpy as np
import pytest
from scipy.optimize import minimize, rosen, rosen_der

from porepinn.optimizers import (AdamState, LBFGSState, adam_step, lbfgs_init,
                                 lbfgs_step)


def test_adam_first_step_exact():
    params = np.array([1.0, -2.0, 0.5])
    grads = np.array([0.3, -0.1, 0.0])
    state = AdamState(lr=1e-3)
    p0 = params.copy()
    adam_step(state, params, grads)
    assert state.t == 1
    # bias correction makes the first step lr * g / (|g| + eps)
    want = p0 - 1e-3 * grads / (np.abs(grads) + 1e-8)
    assert np.allclose(params, want, rtol=1e-12, atol=1e-15)
    assert np.allclose(state.m, 0.1 * grads)
    assert np.allclose(state.v, 0.001 * grads * grads)


def test_adam_two_steps_match_reference_formula():
    rng = np.random.default_rng(0)
    params = rng.standard_normal(6)
    g1, g2 = rng.standard_normal(6), rng.standard_normal(6)
    state = AdamState(lr=2e-2)

    ref = params.copy()
    m = np.zeros(6)
    v = np.zeros(6)
    for t, g in ((1, g1), (2, g2)):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1.0 - 0.9**t)
        vhat = v / (1.0 - 0.999**t)
        ref -= 2e-2 * mhat / (np.sqrt(vhat) + 1e-8)

    adam_step(state, params, g1)
    adam_step(state, params, g2)
    assert np.allclose(params, ref, rtol=1e-13, atol=1e-16)


def test_adam_refuses_non_finite_gradients():
    params = np.ones(3)
    state = AdamState(lr=1e-3)
    adam_step(state, params, np.array([1.0, np.nan, 0.0]))
    assert state.diverged
    assert np.all(params == 1.0)
    assert state.t == 0


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState(lr=1e-3), np.ones(3), np.ones(4))


def test_adam_converges_on_quadratic():
    target = np.array([3.0, -1.0])
    params = np.zeros(2)
    state = AdamState(lr=5e-2)
    for _ in range(2000):
        adam_step(state, params, params - target)
    assert np.allclose(params, target, atol=1e-3)


# ---------------------------------------------------------------------------
# L-BFGS


def _rosen_evaluator(x):
    return float(rosen(x)), rosen_der(x)


def test_lbfgs_matches_scipy_on_rosenbrock():
    x0 = np.array([-1.2, 1.0, -0.5, 0.8])
    state = lbfgs_init(x0, _rosen_evaluator)
    for _ in range(400):
        if state.converged or state.diverged or state.stalled:
            break
        lbfgs_step(state, _rosen_evaluator)
    ref = minimize(rosen, x0, jac=rosen_der, method="L-BFGS-B",
                   options={"maxiter": 400, "ftol": 1e-16, "gtol": 1e-12})
    assert not state.diverged and not state.stalled
    assert np.allclose(state.x, np.ones(4), atol=1e-6)
    assert state.f <= ref.fun + 1e-10


def test_lbfgs_exact_on_quadratic():
    A = np.diag([1.0, 4.0, 9.0])
    b = np.array([1.0, -2.0, 0.5])

    def quad(x):
        return float(0.5 * x @ A @ x - b @ x), A @ x - b

    state = lbfgs_init(np.zeros(3), quad)
    for _ in range(30):
        if state.converged:
            break
        lbfgs_step(state, quad)
    assert np.allclose(state.x, np.linalg.solve(A, b), atol=1e-9)


def test_lbfgs_preserves_zero_gradient_coordinates():
    # gradients zeroed on a frozen set: those coordinates must never move
    frozen = np.array([False, True, False, True])
    target = np.array([2.0, 0.0, -1.0, 0.0])

    def f(x):
        g = x - target
        g[frozen] = 0.0
        return float(0.5 * np.sum((x - target)[~frozen] ** 2)), g

    x0 = np.array([0.0, 7.0, 0.0, -3.0])
    state = lbfgs_init(x0, f)
    for _ in range(50):
        if state.converged:
            break
        lbfgs_step(state, f)
    assert np.all(state.x[frozen] == x0[frozen])
    assert np.allclose(state.x[~frozen], target[~frozen], atol=1e-10)


def test_lbfgs_init_flags_non_finite_start():
    state = lbfgs_init(np.zeros(2), lambda x: (np.nan, np.zeros(2)))
    assert state.diverged
    x, state = lbfgs_step(state, lambda x: (np.nan, np.zeros(2)))
    assert state.diverged and np.all(x == 0.0)


def test_lbfgs_stalls_on_flat_loss():
    # constant loss with a lying gradient: every line search fails finite
    def f(x):
        return 1.0, np.ones_like(x)

    state = lbfgs_init(np.zeros(3), f)
    lbfgs_step(state, f)
    assert state.stalled and not state.diverged
    assert np.all(state.x == 0.0)


def test_lbfgs_diverges_when_everything_is_non_finite():
    calls = {"n": 0}

    def f(x):
        calls["n"] += 1
        if calls["n"] == 1:
            return 1.0, np.ones_like(x)
        return np.inf, np.full_like(x, np.inf)

    state = lbfgs_init(np.zeros(3), f)
    lbfgs_step(state, f)
    assert state.diverged


def test_lbfgs_converged_on_plateau():
    state = LBFGSState(x=np.zeros(2), f=1.0, g=np.full(2, 1e-3))
    for _ in range(10):
        state.f_recent.append(1.0)
    assert state.converged
    fresh = LBFGSState(x=np.zeros(2), f=1.0, g=np.full(2, 1e-3))
    assert not fresh.converged
    tiny_grad = LBFGSState(x=np.zeros(2), f=1.0, g=np.zeros(2))
    assert tiny_grad.converged
