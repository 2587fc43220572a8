"""Loss assembly, activity masks, and the order-of-magnitude weight rule."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porepinn.autodiff.tape import Tape
from porepinn.cases import preset
from porepinn.collocation import PointCounts, PointSet, case_point_sets
from porepinn.loss import (DATA_TERMS, FLOW_TERMS, GROUPS, HEAT_TERMS,
                           N_TERMS, LossBreakdown, LossNaNError, WeightVector,
                           active_mask, apply_importance, assemble_loss,
                           probe_magnitudes, suggest_weights, with_mask)
from porepinn.model import init_tbnet


def _terms_of(mask: np.ndarray) -> set:
    return {j + 1 for j in range(N_TERMS) if mask[j]}


def test_active_masks():
    assert _terms_of(active_mask("flow")) == {1, 2, 3, 6, 7, 10, 13, 14}
    assert _terms_of(active_mask("heat_stepwise")) == {4, 5, 8, 9, 11, 12, 15, 16}
    assert _terms_of(active_mask("heat")) == set(HEAT_TERMS)
    assert _terms_of(active_mask("joint")) == set(FLOW_TERMS | HEAT_TERMS)
    # inverse: heat terms plus data, minus the outlet flux conditions
    assert _terms_of(active_mask("inverse")) == (
        (HEAT_TERMS | DATA_TERMS) - {11, 12})
    with pytest.raises(ValueError):
        active_mask("backward")


def test_groups_partition_all_terms():
    seen = []
    for _, terms in GROUPS:
        seen.extend(terms)
    assert sorted(seen) == list(range(1, N_TERMS + 1))


def test_suggest_weights_anchors():
    mags = np.ones(N_TERMS)
    mags[0] = 1e4      # decade boundary stays in its own bin
    mags[1] = 9.99e3
    mags[2] = 1e11
    mags[3] = 3.16e2
    mags[4] = 0.0      # nothing to normalize
    mags[5] = 2e-3
    w = suggest_weights(mags)
    assert w.lam[0] == pytest.approx(1e-8)
    assert w.lam[1] == pytest.approx(1e-6)
    assert w.lam[2] == pytest.approx(1e-22)
    assert w.lam[3] == pytest.approx(1e-4)
    assert w.lam[4] == 1.0
    assert w.lam[5] == pytest.approx(1e6)
    assert w.active.all()


@given(mag=st.floats(1e-12, 1e12))
@settings(max_examples=100, deadline=None)
def test_suggest_weights_normalizes_to_unit_decade(mag):
    mags = np.zeros(N_TERMS)
    mags[0] = mag
    lam = suggest_weights(mags).lam[0]
    weighted = lam * mag * mag
    # lambda * m^2 = (m / 10^floor(log10 m))^2, the squared mantissa
    assert 1.0 - 1e-9 <= weighted < 100.0 * (1.0 + 1e-9)


def test_suggest_weights_validation():
    with pytest.raises(ValueError):
        suggest_weights(np.ones(4))
    bad = np.ones(N_TERMS)
    bad[3] = -1.0
    with pytest.raises(ValueError):
        suggest_weights(bad)


def test_weight_vector_validation():
    lam = np.ones(N_TERMS)
    with pytest.raises(ValueError):
        WeightVector(lam[:5], np.ones(5, dtype=bool))
    with pytest.raises(ValueError):
        WeightVector(-lam, np.ones(N_TERMS, dtype=bool))
    with pytest.raises(ValueError):
        WeightVector(lam, np.zeros(N_TERMS, dtype=bool))
    w = WeightVector(lam, active_mask("flow"))
    with pytest.raises(ValueError):
        w.lam[0] = 2.0


def test_weight_vector_replace_and_accessors():
    w = WeightVector(np.ones(N_TERMS), active_mask("flow"))
    w2 = w.replace(e2=1e-10, e6=1e2)
    assert w2.weight(2) == 1e-10 and w2.weight(6) == 1e2
    assert w.weight(2) == 1.0  # original untouched
    assert w2.is_active(1) and not w2.is_active(4)
    with pytest.raises(KeyError):
        w.replace(lam2=5.0)


def test_apply_importance_and_with_mask():
    w = WeightVector(np.full(N_TERMS, 1e-4), active_mask("heat_stepwise"))
    w2 = apply_importance(w, {8: 1e2, 12: 1e1})
    assert w2.weight(8) == pytest.approx(1e-2)
    assert w2.weight(12) == pytest.approx(1e-3)
    assert w2.weight(9) == pytest.approx(1e-4)
    w3 = with_mask(w, active_mask("joint"))
    assert w3.is_active(1) and w3.is_active(4)


def test_trace_row_header():
    assert LossBreakdown.row_header() == (
        ["total", "L_pde", "L_inlet", "L_outlet", "L_wall", "L_data"]
        + [f"e{j}_ms" for j in range(1, 19)])


# ---------------------------------------------------------------------------
# assembly on a live network

ARCH = {"input_dim": 2, "trunk": [(8, "sine"), (8, "tanh")],
        "branches": {"u": [(4, "tanh")], "v": [(4, "tanh")], "p": [(4, "tanh")]},
        "output_order": ("u", "v", "p")}


def _flow_setup(seed=0):
    p = preset("B")
    net = init_tbnet(ARCH, seed)
    counts = PointCounts(interior=40, inlet=8, outlet=8, wall=6)
    sets = case_point_sets(p.case.domain, counts, seed)
    return net, sets, p.case, p.weights


def test_assemble_taped_and_untaped_agree():
    net, sets, case, weights = _flow_setup()
    plain = assemble_loss(net, sets, case, weights)
    tape = Tape(net.n_params, net.frozen_param_mask())
    taped = assemble_loss(net, sets, case, weights, tape=tape)
    assert plain.total == pytest.approx(taped.total, rel=1e-14)
    assert np.allclose(plain.term_ms, taped.term_ms, rtol=1e-14)
    assert plain.loss is None and taped.loss is not None
    grad = tape.param_gradient()
    assert grad.shape == (net.n_params,) and np.any(grad != 0.0)


def test_total_is_sum_of_groups_and_weighted_terms():
    net, sets, case, weights = _flow_setup(1)
    bd = assemble_loss(net, sets, case, weights)
    assert bd.total == pytest.approx(sum(bd.groups.values()), rel=1e-13)
    for gname, terms in GROUPS:
        want = sum(weights.weight(j) * bd.term_ms[j - 1] for j in terms
                   if weights.is_active(j))
        assert bd.groups[gname] == pytest.approx(want, rel=1e-12), gname
    # inactive terms stay zero in the anatomy
    for j in range(1, N_TERMS + 1):
        if not weights.is_active(j):
            assert bd.term_ms[j - 1] == 0.0


def test_wall_terms_pool_facets_by_point_count():
    net, sets, case, weights = _flow_setup(2)
    bd = assemble_loss(net, sets, case, weights)
    wall_pts = np.concatenate([sets["wall_x0"].coordinates,
                               sets["wall_x1"].coordinates])
    pred = net.predict(wall_pts)
    u_ms = float(np.mean(pred[:, 0] ** 2))
    v_ms = float(np.mean(pred[:, 1] ** 2))
    assert bd.term_ms[12] == pytest.approx(u_ms, rel=1e-13)
    assert bd.term_ms[13] == pytest.approx(v_ms, rel=1e-13)
    assert bd.groups["wall"] == pytest.approx(
        weights.weight(13) * u_ms + weights.weight(14) * v_ms, rel=1e-13)


def test_row_layout_matches_header():
    net, sets, case, weights = _flow_setup(3)
    bd = assemble_loss(net, sets, case, weights)
    row = bd.row()
    assert len(row) == len(LossBreakdown.row_header())
    assert row[0] == bd.total
    assert row[1] == bd.groups["pde"]
    assert row[6:] == [float(t) for t in bd.term_ms]


def test_nan_parameters_raise_loss_error():
    net, sets, case, weights = _flow_setup(4)
    net.theta[0] = np.nan
    with pytest.raises(LossNaNError) as err:
        assemble_loss(net, sets, case, weights)
    assert 1 <= err.value.term <= N_TERMS
    assert err.value.point >= 0


def test_missing_point_sets_rejected():
    net, sets, case, weights = _flow_setup(5)
    no_inlet = {k: v for k, v in sets.items() if k != "inlet"}
    with pytest.raises(ValueError, match="inlet"):
        assemble_loss(net, no_inlet, case, weights)
    no_walls = {k: v for k, v in sets.items() if not k.startswith("wall")}
    with pytest.raises(ValueError, match="wall"):
        assemble_loss(net, no_walls, case, weights)


def test_data_terms_require_labels():
    p = preset("inverse-D")
    arch = dict(ARCH, branches=dict(ARCH["branches"],
                                    hk=[(4, "tanh")], Ts=[(4, "tanh")]),
                output_order=("u", "v", "p", "hk", "Ts"))
    net = init_tbnet(arch, 0)
    counts = PointCounts(interior=20, inlet=5, outlet=5, wall=4)
    sets = case_point_sets(p.case.domain, counts, 0)
    sets["data"] = PointSet("data", np.array([[0.5, 0.2], [0.2, 0.2]]), 0)
    with pytest.raises(ValueError, match="labeled"):
        assemble_loss(net, sets, p.case, p.weights)
    labels = (np.array([1.0, 1.1]), np.array([1.2, 1.3]))
    bd = assemble_loss(net, sets, p.case, p.weights, labeled=labels)
    assert bd.term_ms[16] > 0.0 and bd.term_ms[17] > 0.0
    assert not bd.divergent


def test_probe_magnitudes_median_abs():
    net, sets, case, weights = _flow_setup(6)
    mags = probe_magnitudes(net, sets, case, weights.active, n_interior=10)
    assert mags.shape == (N_TERMS,)
    active = [j for j in range(1, N_TERMS + 1) if weights.is_active(j)]
    for j in active:
        assert mags[j - 1] > 0.0
    for j in range(1, N_TERMS + 1):
        if j not in active:
            assert mags[j - 1] == 0.0
    # boundary medians are insensitive to the interior cap
    full = probe_magnitudes(net, sets, case, weights.active, n_interior=40)
    assert mags[5] == full[5]
    # pairing with the weight rule reproduces the published flow pattern:
    # momentum residuals get crushed, boundary terms stay O(1)
    w = suggest_weights(mags)
    assert w.lam[1] <= 1e-8 and w.lam[2] <= 1e-8
