import numpy as np
import pytest

from porepinn.cases import fnn_arch, preset
from porepinn.model import (CheckpointError, extend_tbnet, init_fnn,
                            init_tbnet, load_checkpoint, save_checkpoint)

TINY = {
    "input_dim": 2,
    "trunk": [(8, "sine"), (8, "tanh")],
    "branches": {"u": [(4, "tanh")], "v": [(4, "tanh")], "p": [(4, "tanh")]},
    "output_order": ("u", "v", "p"),
}

HEAT = {"hk": [(6, "sine"), (6, "tanh")], "Ts": [(6, "sine"), (6, "tanh")]}


def test_full_scale_parameter_counts():
    tb = init_tbnet(preset("B", "full").arch, 0)
    assert tb.n_params == 53553
    fnn = init_fnn(fnn_arch("full"), 0)
    assert fnn.n_params == 68853


def test_tbnet_component_structure():
    net = init_tbnet(TINY, 3)
    assert net.output_order == ("u", "v", "p")
    assert set(net.component_names()) == {"trunk", "u", "v", "p"}
    total = sum(s.size for s in net.slots)
    assert total == net.n_params


def test_init_is_seed_deterministic():
    a = init_tbnet(TINY, 11)
    b = init_tbnet(TINY, 11)
    c = init_tbnet(TINY, 12)
    assert np.array_equal(a.theta, b.theta)
    assert not np.array_equal(a.theta, c.theta)


def test_predict_shape_and_input_validation():
    net = init_tbnet(TINY, 0)
    pts = np.random.default_rng(0).uniform(size=(17, 2))
    out = net.predict(pts)
    assert out.shape == (17, 3)
    with pytest.raises(ValueError):
        net.predict(np.zeros((4, 3)))


def test_fnn_head_width_matches_outputs():
    net = init_fnn(fnn_arch("desk"), 0)
    out = net.predict(np.zeros((5, 2)))
    assert out.shape == (5, 3)
    assert net.output_order == ("u", "v", "p")


def test_freeze_unfreeze_roundtrip():
    net = init_tbnet(TINY, 0)
    assert not net.is_frozen("trunk")
    net.freeze(("trunk", "u"))
    assert net.is_frozen("trunk") and net.is_frozen("u")
    assert not net.is_frozen("v")
    mask = net.frozen_param_mask()
    frozen_size = sum(s.size for s in net.slots
                      if s.component in ("trunk", "u"))
    assert mask.sum() == frozen_size
    net.unfreeze(("trunk",))
    assert not net.is_frozen("trunk") and net.is_frozen("u")
    with pytest.raises(KeyError):
        net.freeze(("nope",))


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = init_tbnet(TINY, 5)
    net.freeze(("trunk",))
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path, case="B", epochs=42, seed=5)
    loaded, meta = load_checkpoint(path)
    assert np.array_equal(loaded.theta, net.theta)
    assert loaded.output_order == net.output_order
    assert loaded.is_frozen("trunk") and not loaded.is_frozen("u")
    assert meta == {"case": "B", "epochs": 42, "seed": 5}


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_truncation_detected(tmp_path):
    net = init_tbnet(TINY, 5)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path, case="B", epochs=1, seed=5)
    data = path.read_bytes()
    path.write_bytes(data[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_extend_preserves_existing_slots_bitwise():
    base = init_tbnet(TINY, 7)
    snapshot = base.theta.copy()
    ext = extend_tbnet(base, HEAT, 99)
    assert ext.output_order == ("u", "v", "p", "hk", "Ts")
    for slot in base.slots:
        key = (slot.component, slot.layer, slot.kind)
        assert np.array_equal(base.slot_view(slot),
                              ext.slot_view(ext.slot_map[key]))
    assert np.array_equal(base.theta, snapshot)
    # the extension is deterministic in its own seed
    ext2 = extend_tbnet(init_tbnet(TINY, 7), HEAT, 99)
    assert np.array_equal(ext.theta, ext2.theta)


def test_extend_predictions_unchanged_for_old_outputs():
    base = init_tbnet(TINY, 7)
    pts = np.random.default_rng(1).uniform(size=(9, 2))
    before = base.predict(pts)
    ext = extend_tbnet(base, HEAT, 3)
    after = ext.predict(pts)
    assert np.array_equal(before, after[:, :3])


def test_extend_rejects_duplicate_branch():
    base = init_tbnet(TINY, 7)
    with pytest.raises(ValueError):
        extend_tbnet(base, {"u": [(4, "tanh")]}, 0)


def test_arch_validation():
    with pytest.raises(ValueError):
        init_tbnet({**TINY, "branches": {}}, 0)
    with pytest.raises(ValueError):
        init_tbnet({**TINY, "output_order": ("u", "v")}, 0)
    bad = {**TINY, "trunk": [(8, "softplus")]}
    with pytest.raises(ValueError):
        init_tbnet(bad, 0)
