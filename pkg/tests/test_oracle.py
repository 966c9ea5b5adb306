import numpy as np
import pytest

from sflab import oracle
from sflab.geometry import Sphere
from sflab.spectral import GridSpec


def test_richardson_removes_leading_error():
    h = np.array([0.1, 0.05, 0.025])
    vals = 1.0 + 3.0 * h ** 2 + 5.0 * h ** 4
    est, table = oracle.richardson(list(vals))
    assert abs(est - 1.0) <= 1e-12
    assert len(table) == 3


def test_fd_gateaux_of_quadratic():
    a = np.array([1.0, -2.0, 0.5])
    val = oracle.fd_gateaux(lambda v: float(np.sum(v ** 2)), a, np.ones(3))
    assert val == pytest.approx(2 * np.sum(a), abs=1e-10)


def test_fd_jacobian_linear_map():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(oracle.fd_jacobian(lambda z: A @ z, np.array([0.3, 0.4])), A, atol=1e-8)


def test_dense_calculus_matches_fft(rng):
    from sflab import spectral as sp
    g = GridSpec(2, 16)
    f = np.sin(g.x[0]) * np.cos(2 * g.x[1])
    calc = oracle.DenseCalculus(2, 16, g.L)
    np.testing.assert_allclose(calc.lap(f), sp.laplacian(g, f), atol=1e-11)
    assert calc.integral(f * f) == pytest.approx(sp.inner(g, f, f), rel=1e-12)


def test_exact_helical_frequency():
    # θ = π/3, k = 2 gives ω = k² cos θ = 2
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    v0 = oracle.exact_helical(np.pi / 3, 2, 0.0, x)
    v1 = oracle.exact_helical(np.pi / 3, 2, np.pi, x)
    # after t = π the phase has shifted by ωπ = 2π
    np.testing.assert_allclose(v1, v0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(v0, axis=0), 1.0, atol=1e-15)


def test_exact_helical_solves_ll():
    x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    h = 1e-5
    s = oracle.exact_helical(np.pi / 3, 2, 0.3, x)
    st = (oracle.exact_helical(np.pi / 3, 2, 0.3 + h, x) - oracle.exact_helical(np.pi / 3, 2, 0.3 - h, x)) / (2 * h)
    sxx = -4 * s.copy()
    sxx[2] = 0.0
    np.testing.assert_allclose(st, np.cross(s, sxx, axis=0), atol=1e-8)


def test_rk4_exponential():
    out = oracle.rk4_reference(lambda y: -y, np.array([1.0]), 1.0, 100)
    assert out[0] == pytest.approx(np.exp(-1.0), rel=1e-9)


def test_transport_ode_quarter_turn():
    e1, e2, e3 = np.eye(3)
    np.testing.assert_allclose(oracle.transport_ode(e1, e2, e2), -e1, atol=1e-10)
    np.testing.assert_allclose(oracle.transport_ode(e1, e2, e3), e3, atol=1e-10)


def test_nearest_point_bruteforce():
    np.testing.assert_allclose(oracle.nearest_point_bruteforce(np.array([3.0, 4.0, 0.0]), 201, 401),
                               [0.6, 0.8, 0.0], atol=1e-12)
    q = np.array([0.2, -0.9, 0.5])
    np.testing.assert_allclose(oracle.nearest_point_bruteforce(q, 201, 401), q / np.linalg.norm(q), atol=1e-12)


def test_tension_energy_oracle_equator():
    g = GridSpec(1, 32)
    x = g.x[0]
    v = np.stack([np.cos(x), np.sin(x), np.zeros_like(x)])
    # the equator is a harmonic map, so its tension vanishes
    assert oracle.tension_energy_oracle(Sphere(), g, v) <= 1e-12
    assert oracle.dirichlet_energy_oracle(g, v) == pytest.approx(np.pi, rel=1e-12)


def test_oracle_config_validation():
    with pytest.raises(ValueError):
        oracle.OracleConfig(fd_step=-1.0)
