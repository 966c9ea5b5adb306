import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sflab import flow
from sflab import operators as ops
from sflab import oracle
from sflab import spectral as sp
from sflab.geometry import FlatTorus, OutsideTubularNeighborhood, Sphere
from sflab.scenarios import bump, constant, helical, tangent_perturbation
from sflab.spectral import GridSpec
from sflab.verify import smooth_field, step_halving_rate


@pytest.fixture
def ctx64():
    return ops.OperatorContext(Sphere(), GridSpec(1, 64))


def test_params_validation():
    with pytest.raises(ValueError):
        flow.FlowParams(eps=-1.0)
    with pytest.raises(ValueError):
        flow.FlowParams(dt=0.0)
    with pytest.raises(ValueError):
        flow.FlowParams(picard_max=0)
    assert flow.FlowParams(sobolev_s=(1, 6)).sobolev_s == (1.0, 6.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 50.0))
def test_phi_weights_match_closed_form(z):
    phi1, phi2 = flow._phi_weights(np.array([z]))
    if z > 1e-2:
        assert phi1[0] == pytest.approx((1 - np.exp(-z)) / z, rel=1e-12)
        assert phi2[0] == pytest.approx((z - 1 + np.exp(-z)) / z ** 2, rel=1e-9)
    assert 0 < phi2[0] <= phi1[0] <= 1


def test_phi_weights_small_z_continuous():
    a = flow._phi_weights(np.array([0.99e-4, 1.01e-4]))
    assert abs(a[0][0] - a[0][1]) < 1e-6
    assert abs(a[1][0] - a[1][1]) < 1e-6
    z0 = flow._phi_weights(np.array([0.0]))
    assert z0[0][0] == 1.0 and z0[1][0] == 0.5


def test_zero_nonlinearity_reproduces_semigroup(rng):
    g = GridSpec(2, 32)
    v = smooth_field(g, 3, rng)
    ctx = ops.OperatorContext(Sphere(), g, check_tube=False)
    p = flow.FlowParams(eps=5e-2, dt=2e-2)
    w = flow.duhamel_step(ctx, v, p, nonlinear=lambda u: np.zeros_like(u))
    assert np.max(np.abs(w - sp.semigroup(g, v, 5e-2, 2e-2))) <= 1e-14


def test_constant_forcing_is_integrated_exactly(rng):
    # N ≡ c in the zero mode: w = v + dt c (the semigroup fixes the mean)
    g = GridSpec(1, 32)
    v = smooth_field(g, 1, rng)
    c = np.full_like(v, 0.7)
    ctx = ops.OperatorContext(Sphere(), g, check_tube=False)
    p = flow.FlowParams(eps=1e-1, dt=1e-2)
    w = flow.duhamel_step(ctx, v, p, nonlinear=lambda u: c)
    assert np.max(np.abs(w - (sp.semigroup(g, v, 1e-1, 1e-2) + 7e-3))) <= 1e-14


def test_picard_divergence_is_reported(ctx64):
    v = helical(Sphere(), ctx64.grid)
    p = flow.FlowParams(eps=1e-3, dt=1e-3)
    with pytest.raises(flow.PicardDiverged):
        flow.duhamel_step(replace(ctx64, check_tube=False), v, p, nonlinear=lambda u: 50 * u ** 3 * 1e3)


def test_step_info_contraction(ctx64):
    v = helical(Sphere(), ctx64.grid)
    w, info = flow.duhamel_step(ctx64, v, flow.FlowParams(eps=1e-2, dt=1e-3), return_info=True)
    assert info["contraction"] < 0.5
    assert info["differences"][-1] < 1e-10


def test_integrate_rejects_unsafe_eps_zero(ctx64):
    v = helical(Sphere(), ctx64.grid)
    with pytest.raises(ValueError):
        flow.integrate(ctx64, v, flow.FlowParams(eps=0.0))


def test_integrate_rejects_off_manifold_data(ctx64):
    v = 1.1 * helical(Sphere(), ctx64.grid)
    with pytest.raises(ValueError):
        flow.integrate(ctx64, v, flow.FlowParams(eps=1e-2, t_end=0.01))
    tr = flow.integrate(ctx64, v, flow.FlowParams(eps=1e-2, dt=1e-3, t_end=0.01), off_manifold=True)
    assert tr.column("sup_rho")[-1] < tr.column("sup_rho")[0]


def test_integrate_records_and_snapshots(ctx64):
    v = helical(Sphere(), ctx64.grid)
    p = flow.FlowParams(eps=1e-2, beta=0.1, dt=1e-3, t_end=0.02, record_every=5, snapshot_every=4)
    tr = flow.integrate(ctx64, v, p)
    assert tr.times == pytest.approx([0.0, 0.005, 0.01, 0.015, 0.02])
    assert tr.snapshot_times == pytest.approx([0.0, 0.004, 0.008, 0.012, 0.016, 0.02])
    assert np.all(tr.column("sup_rho") <= 1e-8)
    assert tr.column("grad_H6").shape == (5,)
    E = tr.column("E")
    assert np.all(np.diff(E) < 0)
    assert len(tr.records[0].row(p.sobolev_s)) == len(flow.diagnostics_columns(p.sobolev_s))


def test_integrate_is_deterministic(ctx64):
    v = tangent_perturbation(Sphere(), ctx64.grid, helical(Sphere(), ctx64.grid), 0.1, seed=1)
    p = flow.FlowParams(eps=1e-2, beta=0.1, dt=1e-3, t_end=0.01)
    a, b = flow.integrate(ctx64, v, p), flow.integrate(ctx64, v, p)
    assert np.array_equal(a.final, b.final)


def test_constant_map_is_fixed_point():
    g = GridSpec(2, 16)
    for m in (Sphere(), FlatTorus()):
        v = constant(m, g)
        tr = flow.integrate(ops.OperatorContext(m, g), v, flow.FlowParams(eps=1e-2, beta=1.0, dt=1e-2, t_end=0.05))
        assert np.max(np.abs(tr.final - v)) == 0.0


def test_torus_flow_runs():
    g = GridSpec(1, 64)
    m = FlatTorus()
    v = helical(m, g, k=1, theta=0.3)
    tr = flow.integrate(ops.OperatorContext(m, g), v, flow.FlowParams(eps=1e-2, beta=0.1, dt=1e-3, t_end=0.02))
    assert np.max(tr.column("sup_rho")) <= 1e-8


def test_step_halving_second_order():
    assert abs(step_halving_rate(Sphere()) - 2.0) <= 0.5


def test_checkpoints(tmp_path, ctx64):
    v = helical(Sphere(), ctx64.grid)
    p = flow.FlowParams(eps=1e-2, dt=1e-3, t_end=0.004, snapshot_every=2)
    flow.integrate(ctx64, v, p, checkpoint_dir=tmp_path)
    names = sorted(f.name for f in tmp_path.iterdir())
    assert names == ["final.bin", "final.json", "step0000002.bin", "step0000002.json"]
    meta = json.loads((tmp_path / "final.json").read_text())
    assert meta["t"] == pytest.approx(0.004)
    g, w = sp.load_field(tmp_path / "final.bin")
    assert g == ctx64.grid and w.shape == v.shape


def test_tube_exit_is_raised(ctx64, monkeypatch, tmp_path):
    v = helical(Sphere(), ctx64.grid)
    # a nonlinearity that pushes the field radially out of the tube
    monkeypatch.setattr(ops, "nonlinear_n", lambda ctx, w, eps, beta: 2.0 * w)
    with pytest.raises(OutsideTubularNeighborhood):
        flow.integrate(ctx64, v, flow.FlowParams(eps=1e-2, dt=1e-2, t_end=1.0), checkpoint_dir=tmp_path)
    assert (tmp_path / "failure.json").exists()


def test_baseline_conserves_energy():
    g = GridSpec(1, 64)
    ctx = ops.OperatorContext(Sphere(), g)
    v = helical(Sphere(), g)
    tr = flow.baseline_ll_midpoint(ctx, v, flow.FlowParams(eps=0.0, dt=1e-3, t_end=0.05))
    E = tr.column("E")
    assert abs(E[-1] - E[0]) <= 1e-10 * E[0]
    exact = oracle.exact_helical(np.pi / 3, 2, 0.05, g.x[0])
    assert sp.lp_norm(g, tr.final - exact, 2) <= 1e-6


def test_baseline_rejects_wrong_inputs():
    g = GridSpec(1, 32)
    with pytest.raises(TypeError):
        flow.baseline_ll_midpoint(ops.OperatorContext(FlatTorus(), g), helical(FlatTorus(), g),
                                  flow.FlowParams(eps=0.0))
    with pytest.raises(ValueError):
        flow.baseline_ll_midpoint(ops.OperatorContext(Sphere(), g), helical(Sphere(), g),
                                  flow.FlowParams(eps=1e-2))


def test_heuristics():
    g = GridSpec(1, 256, 64.0)
    v = bump(Sphere(), g)
    assert flow.t0_heuristic(g, v) == pytest.approx(1 / 128)
    p = flow.FlowParams(eps=1e-2)
    dt = flow.step_size_heuristic(g, v, p)
    assert 0 < dt <= p.dt_cap
    with pytest.raises(ValueError):
        flow.step_size_heuristic(g, v, flow.FlowParams(eps=0.0))


def test_calibration_bounds_dt(ctx64):
    v = helical(Sphere(), ctx64.grid)
    p = flow.FlowParams(eps=1e-1)
    c = flow.calibrate_heuristic(ctx64, v, p, n_steps=3, iters=6)
    assert c is not None and c > 0
    dt = flow.step_size_heuristic(ctx64.grid, v, replace(p, dt_cap=np.inf), c=c)
    assert 1e-9 <= dt <= 1e-1


def test_epsilon_continuation(ctx64):
    v = helical(Sphere(), ctx64.grid)
    p = flow.FlowParams(dt=1e-3, t_end=0.01, snapshot_every=5)
    res = flow.epsilon_continuation(ctx64, v, [1e-1, 1e-2, 1e-3], p)
    assert len(res.l2_distances) == 2
    assert res.l2_distances[0][0] == 0.0
    assert res.l2_distances[1][-1] < res.l2_distances[0][-1]
    with pytest.raises(ValueError):
        flow.epsilon_continuation(ctx64, v, [1e-2, 1e-1], p)
