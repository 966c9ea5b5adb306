import numpy as np
import pytest

from sflab import operators as ops
from sflab import oracle
from sflab import spectral as sp
from sflab.geometry import FlatTorus, OutsideTubularNeighborhood, Sphere
from sflab.spectral import GridSpec
from sflab.verify import (normal_identity_error, on_sphere_field, run_suite, smooth_field,
                          variational_errors)


def equator(g):
    x = g.x[0]
    return np.stack([np.cos(x), np.sin(x), np.zeros_like(x)])


@pytest.fixture
def ctx1():
    return ops.OperatorContext(Sphere(), GridSpec(1, 64))


def test_context_rejects_bad_shape(ctx1):
    with pytest.raises(ValueError):
        ctx1.validate(np.zeros((2, 64)))
    with pytest.raises(OutsideTubularNeighborhood):
        ctx1.validate(np.zeros((3, 64)))


def test_equator_is_harmonic(ctx1):
    v = equator(ctx1.grid)
    assert np.max(np.abs(ops.tension_ambient(ctx1, v))) <= 1e-12
    f = ops.functionals(ctx1, v)
    assert f.energy == pytest.approx(np.pi, rel=1e-13)
    assert f.tension_energy <= 1e-24


def test_helical_energies(ctx1):
    # θ = π/3, k = 2: |∂s|² = k² sin²θ = 3 and |τ| = k² sinθ cosθ = √3
    v = oracle.exact_helical(np.pi / 3, 2, 0.0, ctx1.grid.x[0])
    f = ops.functionals(ctx1, v)
    assert f.energy == pytest.approx(3 * np.pi, rel=1e-13)
    assert f.tension_energy == pytest.approx(3 * np.pi, rel=1e-12)


def test_schrodinger_term_is_time_derivative(ctx1):
    x = ctx1.grid.x[0]
    v = oracle.exact_helical(np.pi / 3, 2, 0.0, x)
    h = 1e-5
    vt = (oracle.exact_helical(np.pi / 3, 2, h, x) - oracle.exact_helical(np.pi / 3, 2, -h, x)) / (2 * h)
    assert np.max(np.abs(ops.schrodinger_term(ctx1, v) - vt)) <= 1e-8


def test_schrodinger_term_tangent(rng):
    g = GridSpec(2, 32)
    m = Sphere()
    v = on_sphere_field(g, rng)
    f = ops.schrodinger_term(ops.OperatorContext(m, g), v)
    assert np.max(np.abs(np.sum(f * v, axis=0))) <= 1e-10


def test_variational_consistency_sample(rng):
    assert np.max(variational_errors(Sphere(), rng, 4)) <= 1e-6


def test_variational_consistency_torus(rng):
    assert np.max(variational_errors(FlatTorus(), rng, 3, floor=1e-3)) <= 1e-6


def test_normal_identity(rng):
    assert normal_identity_error(Sphere(), rng, trials=3) <= 1e-6
    assert normal_identity_error(FlatTorus(), rng, trials=2) <= 1e-6


def test_lower_order_terms_consistent(ctx1, rng):
    v = on_sphere_field(ctx1.grid, rng)
    lhs = ops.lower_order_terms(ctx1, v) + ops.el_operator(ctx1, v)
    np.testing.assert_allclose(lhs, sp.bilaplacian(ctx1.grid, v), atol=1e-9)


def test_rhs_reduces_to_schrodinger_term(ctx1, rng):
    v = on_sphere_field(ctx1.grid, rng)
    np.testing.assert_allclose(ops.rhs_regularized(ctx1, v, 0.0, 0.0), ops.schrodinger_term(ctx1, v))
    n = ops.nonlinear_n(ctx1, v, 1e-2, 0.0)
    ref = ctx1.P(ops.rhs_regularized(ctx1, v, 1e-2, 0.0) + 1e-2 * sp.bilaplacian(ctx1.grid, v))
    np.testing.assert_allclose(n, ref, atol=1e-9)


def test_constant_map_is_stationary():
    g = GridSpec(2, 16)
    v = np.zeros((3,) + g.shape)
    v[2] = 1.0
    ctx = ops.OperatorContext(Sphere(), g)
    assert np.max(np.abs(ops.rhs_regularized(ctx, v, 1e-1, 1.0))) == 0.0


def test_rho_dissipation_identity_off_manifold(ctx1):
    x = ctx1.grid.x[0]
    u = oracle.exact_helical(np.pi / 3, 2, 0.0, x)
    v = u * (1 + 0.01 * np.sin(x) + 0.005 * np.cos(3 * x))
    for eps, beta in [(1e-3, 0.1), (1e-2, 0.0), (1e-1, 1.0)]:
        a, b = ops.rho_rate(ctx1, v, eps, beta), ops.rho_dissipation(ctx1, v, eps, beta)
        assert abs(a - b) <= 1e-3 * abs(b)
        assert b < 0


def test_rho_dissipation_vanishes_on_manifold(ctx1, rng):
    v = on_sphere_field(ctx1.grid, rng)
    assert abs(ops.rho_dissipation(ctx1, v, 1e-2, 0.1)) <= 1e-20


def test_energy_identity_rhs_equator_zero(ctx1):
    assert abs(ops.energy_identity_rhs(ctx1, equator(ctx1.grid), 1e-2, 0.1)) <= 1e-20


def test_dealias_flag_changes_only_resolved_error(rng):
    g = GridSpec(1, 128)
    v = on_sphere_field(g, rng)
    a = ops.tension_ambient(ops.OperatorContext(Sphere(), g, dealias=True), v)
    b = ops.tension_ambient(ops.OperatorContext(Sphere(), g, dealias=False), v)
    assert np.max(np.abs(a - b)) <= 1e-8


def test_operator_suite_passes():
    res = run_suite("operators")
    assert res and all(r.passed for r in res), [r.to_dict() for r in res if not r.passed]


def test_operator_suite_detects_sign_flip(mutated_sphere):
    res = {r.name: r for r in run_suite("operators", manifold=mutated_sphere)}
    assert not res["normal_part_identity"].passed
    assert not res["variational_consistency"].passed
