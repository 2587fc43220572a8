"""Reverse-mode tape: parameter gradients, failure modes, frozen masks."""

import numpy as np
import pytest

from porepinn.autodiff.api import eval_jets, fd_check, forward_eval, input_derivatives
from porepinn.autodiff.tape import (Tape, TapeNaNError, TapeNotFinalizedError,
                                    TapeOverflowError, TVar, jet_component,
                                    jet_points, value_of)
from porepinn.model import init_tbnet

ARCH = {
    "input_dim": 2,
    "trunk": [(8, "sine"), (8, "tanh")],
    "branches": {"u": [(5, "tanh")], "v": [(5, "tanh")], "p": [(5, "tanh")]},
    "output_order": ("u", "v", "p"),
}


def _net(seed=0):
    return init_tbnet(ARCH, seed)


def _probe_loss(net, points, tape):
    """Mean square of every output value: simple but touches all branches."""
    outs = eval_jets(net, points, tape=tape, second=False)
    total = None
    for name in net.output_order:
        block, col = outs[name]
        piece = jet_component(block, 0, col)
        term = piece.square().mean() if isinstance(piece, TVar) else float(
            np.mean(piece * piece))
        total = term if total is None else total + term
    return total


def test_param_gradient_matches_finite_differences():
    net = _net(3)
    rng = np.random.default_rng(7)
    points = rng.random((6, 2))
    tape = Tape(net.n_params, net.frozen_param_mask())
    _probe_loss(net, points, tape)
    grad = tape.param_gradient()

    theta0 = net.theta.copy()
    for k in rng.choice(net.n_params, size=40, replace=False):
        h = max(1e-6, 1e-6 * abs(theta0[k]))
        net.theta[k] = theta0[k] + h
        up = _probe_loss(net, points, None)
        net.theta[k] = theta0[k] - h
        dn = _probe_loss(net, points, None)
        net.theta[k] = theta0[k]
        fd = (up - dn) / (2.0 * h)
        assert abs(grad[k] - fd) <= 1e-7 * max(1.0, abs(fd))


def test_fd_check_harness_passes_on_healthy_net():
    report = fd_check(_net(11), np.array([[0.4, 0.1], [0.8, 0.15]]), step=1e-4)
    assert report.ok, (report.max_rel_d1, report.max_rel_d2, report.max_rel_param)


def test_fd_check_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_check(_net(0), np.array([[0.5, 0.1]]), step=0.5)
    with pytest.raises(ValueError):
        fd_check(_net(0), np.array([[0.5, 0.1]]), step=0.0)


def test_frozen_components_get_zero_gradient():
    net = _net(5)
    net.freeze(("trunk", "u"))
    points = np.random.default_rng(1).random((5, 2))
    tape = Tape(net.n_params, net.frozen_param_mask())
    _probe_loss(net, points, tape)
    grad = tape.param_gradient()
    mask = net.frozen_param_mask()
    assert mask.any() and not mask.all()
    assert np.all(grad[mask] == 0.0)
    assert np.any(grad[~mask] != 0.0)


def test_frozen_output_arithmetic_stays_numeric():
    # frozen branches come back as plain ndarrays; mixing them with taped
    # TVars on either side must produce TVars, not object arrays
    net = _net(9)
    net.freeze(("trunk", "u"))
    points = np.random.default_rng(2).random((4, 2))
    tape = Tape(net.n_params, net.frozen_param_mask())
    outs = eval_jets(net, points, tape=tape, second=False)
    u_vals = jet_component(outs["u"][0], 0, outs["u"][1])
    v_vals = jet_component(outs["v"][0], 0, outs["v"][1])
    assert isinstance(u_vals, np.ndarray)
    assert isinstance(v_vals, TVar)
    for combined in (u_vals * v_vals, u_vals + v_vals, u_vals - v_vals,
                     v_vals * u_vals, v_vals + u_vals, v_vals - u_vals):
        assert isinstance(combined, TVar)
        assert combined.value.dtype == np.float64
    (u_vals * v_vals).square().mean()
    tape.param_gradient()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_error_names_a_node():
    net = _net(4)
    points = np.random.default_rng(3).random((4, 2))
    tape = Tape(net.n_params, net.frozen_param_mask())
    outs = eval_jets(net, points, tape=tape, second=False)
    v = jet_component(outs["v"][0], 0, outs["v"][1])
    poisoned = v * np.inf  # non-finite constant factor
    poisoned.square().mean()
    with pytest.raises(TapeNaNError) as err:
        tape.param_gradient()
    assert 0 <= err.value.node_index < len(tape.nodes)


def test_unfinalized_tape_rejected():
    with pytest.raises(TapeNotFinalizedError):
        Tape(4).param_gradient()
    net = _net(0)
    points = np.zeros((3, 2))
    tape = Tape(net.n_params, net.frozen_param_mask())
    outs = eval_jets(net, points, tape=tape, second=False)
    block, col = outs["u"]
    jet_component(block, 0, col)  # final node is an (N,) array, not a scalar
    with pytest.raises(TapeNotFinalizedError):
        tape.param_gradient()


def test_node_budget_enforced():
    net = _net(0)
    tape = Tape(net.n_params, net.frozen_param_mask(), budget=10)
    with pytest.raises(TapeOverflowError):
        for _ in range(20):
            _probe_loss(net, np.zeros((2, 2)), tape)


def test_gradient_accumulates_across_reuse():
    # the same output feeds the loss twice; adjoints must sum
    net = _net(6)
    points = np.random.default_rng(4).random((3, 2))
    tape = Tape(net.n_params, net.frozen_param_mask())
    outs = eval_jets(net, points, tape=tape, second=False)
    u = jet_component(outs["u"][0], 0, outs["u"][1])
    (u.square().mean() + u.square().mean())
    g2 = tape.param_gradient()

    tape1 = Tape(net.n_params, net.frozen_param_mask())
    outs = eval_jets(net, points, tape=tape1, second=False)
    u = jet_component(outs["u"][0], 0, outs["u"][1])
    u.square().mean()
    g1 = tape1.param_gradient()
    assert np.allclose(g2, 2.0 * g1, rtol=1e-13, atol=0.0)


def test_jet_points_structure():
    pts = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    block = jet_points(pts, second=True)
    assert block.idx is None
    assert block.value.shape == (6, 3, 2)  # 1 value + 2 first + 3 second
    assert np.array_equal(block.value[0], pts)
    assert np.all(block.value[1, :, 0] == 1.0) and np.all(block.value[1, :, 1] == 0.0)
    assert np.all(block.value[2, :, 1] == 1.0)
    assert np.all(block.value[3:] == 0.0)
    first_only = jet_points(pts, second=False)
    assert first_only.value.shape == (3, 3, 2)
    assert first_only.n_components == 3


def test_value_of_passthrough():
    arr = np.arange(3.0)
    assert value_of(arr) is arr
    tv = TVar(None, None, 2.5)
    assert value_of(tv) == 2.5


def test_forward_eval_matches_predict():
    net = _net(8)
    x = np.array([0.3, 0.12])
    assert np.array_equal(forward_eval(net, x), net.predict(x[None, :])[0])
    with pytest.raises(ValueError):
        forward_eval(net, np.array([0.3, 0.12, 0.5]))


def test_input_derivatives_match_batched_jets():
    net = _net(12)
    x = np.array([0.6, 0.05])
    jets = input_derivatives(net, x)
    outs = eval_jets(net, x[None, :], tape=None, second=True)
    for jet, name in zip(jets, net.output_order):
        block, col = outs[name]
        assert jet.value == block.value[0, 0, col]
        assert np.array_equal(jet.d1, block.value[1:3, 0, col])
        assert np.array_equal(jet.d2u, block.value[3:, 0, col])
    with pytest.raises(ValueError):
        input_derivatives(net, np.array([np.nan, 0.1]))
