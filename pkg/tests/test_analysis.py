import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sflab import analysis as an
from sflab import flow
from sflab import operators as ops
from sflab import oracle
from sflab.geometry import AntipodalPoints, Sphere
from sflab.scenarios import helical, tangent_perturbation
from sflab.spectral import GridSpec
from sflab.verify import chart_field, gn_dilation_error, kato_violations, smooth_field


# --- Gagliardo-Nirenberg ------------------------------------------------------------------

def test_gn_table_shape_and_relation():
    rows = an.gn_table()
    assert len(rows) == 20
    for e in rows:
        assert abs(e.relation_residual) <= 1e-12
        assert np.isfinite([e.p, e.q, e.r]).all()


def test_gn_exponent_validation():
    with pytest.raises(ValueError):
        an.GNExponents(1, 2, 1, 2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        an.GNExponents(1, 0, 1, 0.5, 2, 2, 0.5)
    with pytest.raises(ValueError):
        an.GNExponents(1, 0, 1, 3.0, 2, 2, 0.5)


def test_gn_endpoint_flag():
    # a = 1, 1 < r < inf, k - j - n/r = 1 - 1/2 is not an integer: allowed
    e = an.GNExponents(1, 0, 1, np.inf, 2, 2, 0.5)
    assert e.valid
    # n = 2, k = 2, r = 2, a = 1: k - j - n/r = 1 is an integer, the excluded case
    e = an.GNExponents(2, 0, 2, np.inf, 1, 2, 1.0)
    assert not e.valid


def test_gn_dilation_exact():
    assert gn_dilation_error() <= 1e-10


def test_gn_ratio_degenerate():
    g = GridSpec(1, 32)
    with pytest.raises(an.DegenerateDenominator):
        an.gn_ratio(g, np.ones(g.shape), an.gn_table()[0])


def test_grad_power_magnitude_plane_wave():
    g = GridSpec(2, 32)
    f = np.sin(g.x[0] + 2 * g.x[1])
    # |∇²f|² sums every ordered pair: (1 + 2·4 + 16) sin² = 25 sin²
    np.testing.assert_allclose(an.grad_power_magnitude(g, f, 2), 5 * np.abs(f), atol=1e-11)


# --- Kato ---------------------------------------------------------------------------------------

def test_kato_sample(rng):
    assert kato_violations(rng, 20) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_kato_nonnegative(seed):
    g = GridSpec(1, 64)
    f = smooth_field(g, 3, np.random.default_rng(seed))
    f[0] += 2.0
    assert an.kato_gap(g, f) >= -1e-12


# --- parallel transport ----------------------------------------------------------------------

def test_transport_example():
    e1, e2 = np.eye(3)[:2]
    np.testing.assert_allclose(an.parallel_transport_s2(e1, e2, e2), -e1, atol=1e-15)


def unit(x):
    n = np.linalg.norm(x)
    return None if n < 1e-3 else x / n


vec3 = arrays(np.float64, 3, elements=st.floats(-1, 1, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(vec3, vec3, vec3, vec3)
def test_transport_isometry(a, b, X, Y):
    p, q = unit(a), unit(b)
    if p is None or q is None or p @ q < -0.99:
        return
    X, Y = X - (X @ p) * p, Y - (Y @ p) * p
    PX, PY = an.parallel_transport_s2(p, q, X), an.parallel_transport_s2(p, q, Y)
    assert abs(PX @ PY - X @ Y) <= 1e-12
    assert abs(PX @ q) <= 1e-12
    np.testing.assert_allclose(an.parallel_transport_s2(q, p, PX), X, atol=1e-11)


def test_transport_against_ode(rng):
    for _ in range(10):
        p, q = (v / np.linalg.norm(v) for v in rng.standard_normal((2, 3)))
        if p @ q < -0.9:
            continue
        X = rng.standard_normal(3)
        X -= (X @ p) * p
        assert np.max(np.abs(an.parallel_transport_s2(p, q, X) - oracle.transport_ode(p, q, X))) <= 1e-9


def test_transport_antipodal():
    e3 = np.eye(3)[2]
    with pytest.raises(AntipodalPoints):
        an.parallel_transport_s2(e3, -e3, np.eye(3)[0])


def test_solution_distance():
    g = GridSpec(1, 64)
    u = helical(Sphere(), g)
    assert an.solution_distance(g, u, u).total == 0.0
    w = tangent_perturbation(Sphere(), g, u, 1e-3, seed=2)
    d1 = an.solution_distance(g, u, w).total
    d2 = an.solution_distance(g, u, tangent_perturbation(Sphere(), g, u, 2e-3, seed=2)).total
    assert d2 / d1 == pytest.approx(4.0, rel=1e-2)
    assert an.naive_h1_distance(g, u, w) > 0


def test_fit_exponential_exact_data():
    t = np.linspace(0, 1, 21)
    C, logA, resid = an.fit_exponential(t, 3.0 * np.exp(1.7 * t))
    assert C == pytest.approx(1.7)
    assert logA == pytest.approx(np.log(3.0))
    assert resid <= 1e-12
    with pytest.raises(ValueError):
        an.fit_exponential(t, np.zeros_like(t))


def test_twin_runs_coincide():
    g = GridSpec(1, 64)
    ctx = ops.OperatorContext(Sphere(), g)
    u = helical(Sphere(), g)
    res = an.gronwall_experiment(ctx, u, u.copy(),
                                 flow.FlowParams(eps=1e-2, beta=0.1, dt=1e-3, t_end=0.01, snapshot_every=2))
    assert np.max(res.totals) == 0.0 and res.envelope_ok


# --- interpolation and norms ----------------------------------------------------------------------

def test_interpolation_dependence(rng):
    g = GridSpec(1, 64)
    a = [smooth_field(g, 3, rng) for _ in range(4)]
    b = [smooth_field(g, 3, rng) for _ in range(4)]
    rep = an.interpolation_dependence(g, a, b, 6, 5)
    assert rep.passed
    with pytest.raises(ValueError):
        an.interpolation_dependence(g, a, b, 2, 3)


def test_norm_equivalence_chart():
    g = GridSpec(2, 32)
    rep = an.norm_equivalence_check(ops.OperatorContext(Sphere(), g), chart_field(g))
    assert rep.passed
    assert rep.first_order_max_error <= 1e-8
    assert rep.second_order_max_violation <= 0


def test_chart_tension_matches_ambient():
    g = GridSpec(1, 64)
    v = chart_field(g)
    T = ops.tension_ambient(ops.OperatorContext(Sphere(), g, dealias=False), v)
    np.testing.assert_allclose(an.chart_tension(g, v), T, atol=1e-8)


def test_differenced_energy_identity_requires_spacing():
    g = GridSpec(1, 32)
    tr = flow.Trajectory(grid=g, snapshots=[np.zeros(1)] * 3, snapshot_times=[0.0, 0.1, 0.3])
    with pytest.raises(ValueError):
        an.differenced_energy_identity(None, tr, 1e-2, 0.1)


# --- reports ------------------------------------------------------------------------------------------

def test_reports(tmp_path):
    r = an.make_report("x", [np.arange(3.0)], {"c": np.float64(2.0)}, True, {"rel": 1e-3})
    assert r["inputs_hash"] == an.inputs_hash(np.arange(3.0))
    an.write_json_reports(tmp_path / "r.json", [r])
    assert json.loads((tmp_path / "r.json").read_text())[0]["constants"]["c"] == 2.0
    an.write_curve_csv(tmp_path / "c.csv", ["t", "d"], [(0, 1), (1, 2)], comment="demo")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "t,d"
