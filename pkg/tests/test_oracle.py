"""Reference solvers: analytic anchors, conservation audits, dataset I/O."""

import os

import numpy as np
import pytest

from porepinn.cases import flux_preset, preset
from porepinn.config import HeatFlux
from porepinn.oracle import (
    Grid,
    ReferenceDataset,
    add_noise,
    case_grid,
    darcy_pressure_drop,
    energy_audit,
    export_dataset,
    import_dataset,
    solve_energy_ltne,
    solve_flow_2d,
    solve_flow_3d,
)

V_IN = 0.5 / 960.0


@pytest.fixture(scope="module")
def flow_b():
    case = preset("B").case
    return case, solve_flow_2d(case, grid=case_grid(case, (40, 50)))


@pytest.fixture(scope="module")
def energy_d():
    case = preset("D").case
    flow = solve_flow_2d(case, grid=case_grid(case, (40, 50)))
    return case, solve_energy_ltne(case, flow)


# ---------------------------------------------------------------------------
# analytic pressure drop


def test_pressure_drop_matches_handwritten_formula():
    # recompute from raw constants: mu(300 K) * (m_dot/rho) * H / K
    mu = 2.41e-5 * 10.0 ** (247.8 / (300.0 - 140.0))
    expected = mu * (0.5 / 960.0) * 0.02 / 3.67e-12
    assert darcy_pressure_drop(preset("B").case) == pytest.approx(
        expected, rel=1e-12)


def test_pressure_drop_linear_in_mass_flux():
    drops = [darcy_pressure_drop(flux_preset(m).case)
             for m in (0.1, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(drops, drops[1:]))
    for m, d in zip((0.1, 0.5, 1.0, 2.0), drops):
        assert d == pytest.approx(drops[0] * m / 0.1, rel=1e-12)


# ---------------------------------------------------------------------------
# 2-D flow solve


def test_flow_reproduces_darcy_drop(flow_b):
    case, ds = flow_b
    p = ds.fields["p"]
    drop = darcy_pressure_drop(case)
    for i in (0, 13, 39):
        assert p[i, 0] - p[i, -1] == pytest.approx(drop, rel=1e-9)
    assert p[:, -1] == pytest.approx(case.boundary.p_out, rel=1e-12)


def test_flow_velocity_uniform_between_walls(flow_b):
    _, ds = flow_b
    v = ds.fields["v"]
    assert np.max(np.abs(v[1:-1, :] / V_IN - 1.0)) < 1e-9
    assert np.max(np.abs(ds.fields["u"])) < 1e-9 * V_IN


def test_flow_wall_nodes_carry_no_slip(flow_b):
    case, ds = flow_b
    v = ds.fields["v"]
    assert np.all(v[0, :] == 0.0) and np.all(v[-1, :] == 0.0)
    free = solve_flow_2d(case, grid=ds.grid, noslip_nodes=False)
    vf = free.fields["v"]
    assert np.max(np.abs(vf[[0, -1], 1:] / V_IN - 1.0)) < 1e-9
    # the node convention only relabels the walls, not the interior
    assert np.allclose(vf[1:-1, :], v[1:-1, :], rtol=1e-9, atol=0.0)


def test_flow_records_convergence_residuals(flow_b):
    _, ds = flow_b
    assert ds.residuals["continuity"] < 1e-9
    assert ds.residuals["picard_delta"] < 1e-9
    assert ds.residuals["iterations"] >= 1


def test_flow_solve_is_deterministic(flow_b):
    case, ds = flow_b
    again = solve_flow_2d(case, grid=ds.grid)
    for name in ds.fields:
        assert np.array_equal(again.fields[name], ds.fields[name])


def test_flow_rejects_bad_inputs():
    with pytest.raises(ValueError, match="2-D"):
        solve_flow_2d(preset("3d").case)
    with pytest.raises(ValueError, match="tolerance"):
        solve_flow_2d(preset("B").case, tol=0.0)


# ---------------------------------------------------------------------------
# energy solve


def test_energy_audit_closes(energy_d):
    case, ds = energy_d
    heat_in, enthalpy_out, mismatch = energy_audit(case, ds)
    # uniform 5e4 W/m^2 over the 0.1 m outlet
    assert heat_in == pytest.approx(5e4 * 0.1, rel=1e-12)
    assert mismatch < 1e-8
    assert mismatch == pytest.approx(ds.residuals["audit_mismatch"], abs=1e-15)
    assert enthalpy_out == pytest.approx(heat_in, rel=1e-6)


def test_energy_exchange_antisymmetry(energy_d):
    _, ds = energy_d
    assert ds.residuals["exchange_antisymmetry"] < 1e-8


def test_energy_fields_physically_ordered(energy_d):
    case, ds = energy_d
    ts, tf = ds.fields["Ts"], ds.fields["Tf"]
    t0 = case.boundary.T_in
    assert ts.min() > t0 - 1e-9 and tf.min() > t0 - 1e-9
    assert ts.max() < t0 + 40.0 and tf.max() < t0 + 40.0
    # fluid heats monotonically toward the flux-loaded outlet
    centerline = tf[ds.grid.shape[0] // 2, :]
    assert np.all(np.diff(centerline) > -1e-9)


def test_energy_preserves_flow_fields(energy_d):
    case, ds = energy_d
    flow = solve_flow_2d(case, grid=ds.grid)
    for name in ("u", "v", "p"):
        assert np.array_equal(ds.fields[name], flow.fields[name])


def test_energy_validates_inputs(flow_b):
    case, flow = flow_b
    heat_case = preset("D").case
    with pytest.raises(ValueError, match="grid"):
        solve_energy_ltne(heat_case, flow,
                          grid=case_grid(heat_case, (30, 40)))
    gutted = ReferenceDataset(grid=flow.grid,
                              fields={"u": flow.fields["u"]},
                              case_id="gutted")
    with pytest.raises(ValueError, match="missing"):
        solve_energy_ltne(heat_case, gutted)
    with pytest.raises(ValueError, match="2-D"):
        solve_energy_ltne(preset("3d").case, flow)


# ---------------------------------------------------------------------------
# 3-D flow solve


@pytest.fixture(scope="module")
def flow_3d():
    case = preset("3d").case
    return case, solve_flow_3d(case, grid=case_grid(case, (12, 14, 12)))


def test_flow3d_reproduces_darcy_drop(flow_3d):
    case, ds = flow_3d
    p = ds.fields["p"]
    drop = darcy_pressure_drop(case)
    assert p[6, 0, 6] - p[6, -1, 6] == pytest.approx(drop, rel=1e-9)


def test_flow3d_uniform_plug_flow(flow_3d):
    _, ds = flow_3d
    v = ds.fields["v"]
    assert np.max(np.abs(v[1:-1, :, 1:-1] / V_IN - 1.0)) < 1e-9
    assert np.max(np.abs(ds.fields["u"])) < 1e-9 * V_IN
    w = ds.fields["w"]
    assert np.all(w[[0, -1], :, :] == 0.0)
    assert np.all(w[:, :, [0, -1]] == 0.0)


def test_flow3d_mirror_symmetry(flow_3d):
    _, ds = flow_3d
    for name in ("v", "p"):
        arr = ds.fields[name]
        assert np.max(np.abs(arr - arr.transpose(2, 1, 0))) < 1e-10 * max(
            1.0, np.max(np.abs(arr)))


def test_flow3d_rejects_2d_case():
    with pytest.raises(ValueError, match="3-D"):
        solve_flow_3d(preset("B").case)


# ---------------------------------------------------------------------------
# dataset round trip


def test_export_import_bit_exact(flow_b, tmp_path):
    _, ds = flow_b
    path = str(tmp_path / "ref.csv")
    export_dataset(ds, path)
    back = import_dataset(path)
    assert back.grid == ds.grid
    assert back.case_id == ds.case_id
    assert back.config_hash == ds.config_hash
    for name, arr in ds.fields.items():
        assert np.array_equal(back.fields[name], arr)
    for key, val in ds.residuals.items():
        assert back.residuals[key] == val


def test_import_without_sidecar_infers_grid(flow_b, tmp_path):
    _, ds = flow_b
    path = str(tmp_path / "ref.csv")
    export_dataset(ds, path)
    os.remove(path + ".json")
    back = import_dataset(path)
    assert back.grid.shape == ds.grid.shape
    assert np.allclose(back.grid.extent, ds.grid.extent, rtol=1e-15)
    assert np.array_equal(back.fields["p"], ds.fields["p"])


def test_import_rejects_malformed_files(flow_b, tmp_path):
    _, ds = flow_b
    path = str(tmp_path / "ref.csv")
    export_dataset(ds, path)
    lines = open(path).read().splitlines()

    bad_header = str(tmp_path / "hdr.csv")
    with open(bad_header, "w") as f:
        f.write("x,y,u,v,p\n" + "\n".join(lines[1:]) + "\n")
    with pytest.raises(ValueError, match="header"):
        import_dataset(bad_header)

    bad_width = str(tmp_path / "wide.csv")
    with open(bad_width, "w") as f:
        f.write(lines[0] + "\n")
        f.write("\n".join(line + ",0.0" for line in lines[1:]) + "\n")
    with pytest.raises(ValueError, match="width"):
        import_dataset(bad_width)


def test_export_import_3d_round_trip(flow_3d, tmp_path):
    _, ds = flow_3d
    path = str(tmp_path / "cube.csv")
    export_dataset(ds, path)
    back = import_dataset(path)
    assert back.grid == ds.grid
    for name, arr in ds.fields.items():
        assert np.array_equal(back.fields[name], arr)


# ---------------------------------------------------------------------------
# grids and datasets


def test_grid_geometry():
    g = Grid(shape=(3, 4), extent=((0.0, 1.0), (0.0, 2.0)))
    assert g.dim == 2
    assert g.spacing == pytest.approx((0.5, 2.0 / 3.0))
    assert np.allclose(g.axis(1), [0.0, 2.0 / 3.0, 4.0 / 3.0, 2.0])
    nodes = g.nodes()
    assert nodes.shape == (12, 2)
    # x-major ordering: the first block shares x = 0
    assert np.all(nodes[:4, 0] == 0.0)
    assert np.allclose(nodes[:4, 1], g.axis(1))


def test_grid_validation():
    with pytest.raises(ValueError, match="rank"):
        Grid(shape=(3, 4), extent=((0.0, 1.0),))
    with pytest.raises(ValueError, match="2-D or 3-D"):
        Grid(shape=(5,), extent=((0.0, 1.0),))
    with pytest.raises(ValueError, match="3 nodes"):
        Grid(shape=(2, 4), extent=((0.0, 1.0), (0.0, 1.0)))
    with pytest.raises(ValueError, match="positive"):
        Grid(shape=(3, 4), extent=((0.0, 1.0), (1.0, 1.0)))


def test_case_grid_spans_case_domain():
    g = case_grid(preset("B").case, (200, 250))
    assert g.shape == (200, 250)
    assert np.allclose(g.extent, ((0.0, 0.1), (0.0, 0.02)), rtol=1e-12)
    g3 = case_grid(preset("3d").case, (40, 50, 40))
    assert np.allclose(g3.extent, ((0.0, 0.02),) * 3, rtol=1e-12)


def test_dataset_slices(flow_b):
    _, ds = flow_b
    x = ds.grid.axis(0)
    sl = ds.x_slice(0.05)
    i = int(np.argmin(np.abs(x - 0.05)))
    assert np.array_equal(sl["p"], ds.fields["p"][i])
    coords, fields = ds.outlet_row()
    assert np.all(coords[:, 1] == ds.grid.extent[1][1])
    assert np.array_equal(coords[:, 0], x)
    assert np.array_equal(fields["v"], ds.fields["v"][:, -1])


def test_dataset_validation(flow_b):
    _, ds = flow_b
    with pytest.raises(ValueError, match="shape"):
        ReferenceDataset(grid=ds.grid, fields={"u": np.zeros((3, 3))},
                         case_id="bad")
    broken = ds.fields["u"].copy()
    broken[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        ReferenceDataset(grid=ds.grid, fields={"u": broken}, case_id="bad")
    assert ds.field_order == ("u", "v", "p", "Ts", "Tf")


# ---------------------------------------------------------------------------
# noise


def test_noise_level_zero_is_bit_exact():
    x = np.linspace(300.0, 330.0, 17)
    out = add_noise(x, 0.0, seed=3)
    assert np.array_equal(out, x)
    assert out is not x


def test_noise_is_bounded_and_seeded():
    x = np.full(1000, 320.0)
    out = add_noise(x, 0.01, seed=9)
    rel = np.abs(out / x - 1.0)
    assert np.all(rel <= 0.01)
    assert rel.max() > 0.005  # actually perturbs
    assert np.array_equal(out, add_noise(x, 0.01, seed=9))
    assert not np.array_equal(out, add_noise(x, 0.01, seed=10))


def test_noise_dict_draw_ignores_insertion_order():
    a = np.linspace(1.0, 2.0, 11)
    b = np.linspace(3.0, 4.0, 11)
    fwd = add_noise({"a": a, "b": b}, 0.005, seed=1)
    rev = add_noise({"b": b, "a": a}, 0.005, seed=1)
    assert np.array_equal(fwd["a"], rev["a"])
    assert np.array_equal(fwd["b"], rev["b"])


def test_noise_rejects_negative_level():
    with pytest.raises(ValueError, match="nonnegative"):
        add_noise(np.ones(3), -0.1, seed=0)
