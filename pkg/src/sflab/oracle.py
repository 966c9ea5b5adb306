"""Brute-force reference implementations.

Nothing here touches :mod:`sflab.spectral`; derivatives come from dense
trigonometric summation matrices and derivatives of the projection from
finite differences, so a bug shared with the fast kernels is unlikely.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .geometry import AntipodalPoints, OutsideTubularNeighborhood


@dataclass(frozen=True)
class OracleConfig:
    fd_step: float = 1e-5
    richardson_levels: int = 3
    ode_tol: float = 1e-10

    def __post_init__(self):
        if not 1e-8 <= self.fd_step <= 1e-3:
            raise ValueError("fd_step must lie in [1e-8, 1e-3]")


class TubeExit(OutsideTubularNeighborhood):
    pass


# --- finite differences -------------------------------------------------------

def richardson(values, ratio=2.0, power=2):
    """Extrapolate a sequence computed at steps h, h/ratio, h/ratio², ...

    Assumes an error expansion in even powers h^power, h^{2 power}, ...
    Returns the table's last diagonal entry and the full table.
    """
    table = [list(values)]
    p = power
    while len(table[-1]) > 1:
        prev = table[-1]
        fac = ratio ** p
        table.append([(fac * prev[i + 1] - prev[i]) / (fac - 1) for i in range(len(prev) - 1)])
        p += power
    return table[-1][0], table


def fd_gateaux(functional, v, phi, config=OracleConfig(), step=None, levels=None):
    """d/ds functional(v + s φ) at s=0 by central differences + Richardson."""
    h = config.fd_step if step is None else step
    levels = config.richardson_levels if levels is None else levels
    vals = []
    for i in range(levels):
        s = h / 2 ** i
        try:
            vals.append((functional(v + s * phi) - functional(v - s * phi)) / (2 * s))
        except OutsideTubularNeighborhood as exc:
            raise TubeExit(str(exc)) from exc
    best, _ = richardson(vals)
    return best


def fd_jacobian(fun, Q, h=1e-6):
    """Central-difference Jacobian of a map R^p -> R^p at one point."""
    Q = np.asarray(Q, dtype=float)
    cols = []
    for b in range(Q.size):
        e = np.zeros_like(Q)
        e[b] = h
        cols.append((fun(Q + e) - fun(Q - e)) / (2 * h))
    return np.stack(cols, axis=1)


def fd_second(fun, Q, X, Y, h=1e-3, levels=2):
    """Mixed second directional derivative D²fun(Q)(X, Y), vectorised over points."""
    vals = []
    for i in range(levels):
        s = h / 2 ** i
        vals.append((fun(Q + s * X + s * Y) - fun(Q + s * X - s * Y)
                     - fun(Q - s * X + s * Y) + fun(Q - s * X - s * Y)) / (4 * s * s))
    best, _ = richardson(vals)
    return best


def fd_third(fun, Q, X, Y, Z, h=2e-3, levels=2):
    """Third mixed directional derivative via nested central differences."""
    vals = []
    for i in range(levels):
        s = h / 2 ** i
        vals.append((fd_second(fun, Q + s * Z, X, Y, h=s, levels=1)
                     - fd_second(fun, Q - s * Z, X, Y, h=s, levels=1)) / (2 * s))
    best, _ = richardson(vals)
    return best


# --- dense trigonometric differentiation ---------------------------------------

@lru_cache(maxsize=32)
def _dense_matrices(M, L):
    x = np.arange(M) * (L / M)
    n = np.arange(M)
    n = np.where(n < M // 2, n, n - M).astype(float)
    k = 2 * np.pi * n / L
    # synthesis/analysis by explicit exponentials rather than an FFT
    E = np.exp(1j * np.outer(x, k))
    Einv = E.conj().T / M
    nyq = np.abs(n) == M // 2
    d1 = np.where(nyq, 0.0, 1j * k)
    D1 = (E * d1) @ Einv
    D2 = (E * (-(k ** 2))) @ Einv
    cut = (2.0 / 3.0) * np.max(np.abs(k))
    P = (E * (np.abs(k) < cut)) @ Einv
    return D1.real, D2.real, P.real, k


def _apply_axis(A, f, axis):
    f = np.moveaxis(f, axis, -1)
    return np.moveaxis(f @ A.T, -1, axis)


class DenseCalculus:
    """Derivatives on a periodic grid by dense matrix multiplication."""

    def __init__(self, dim, M, L):
        self.dim, self.M, self.L = dim, M, L
        self.D1, self.D2, self.P, self.k = _dense_matrices(M, float(L))
        self.h = L / M

    def grad(self, f):
        return [_apply_axis(self.D1, f, -self.dim + a) for a in range(self.dim)]

    def lap(self, f):
        return sum(_apply_axis(self.D2, f, -self.dim + a) for a in range(self.dim))

    def dealias(self, f):
        for a in range(self.dim):
            f = _apply_axis(self.P, f, -self.dim + a)
        return f

    def integral(self, f):
        return float(np.sum(f) * self.h ** self.dim)


def tension_energy_oracle(manifold, grid, v, dealias=False, h=1e-3, levels=2):
    """½∫|Δv - Σ_α D²Π(∂_α v, ∂_α v)|² with dense derivatives and FD Hessians."""
    calc = DenseCalculus(grid.dim, grid.M, grid.L)
    dv = calc.grad(v)
    project = lambda z: z - manifold.rho(z)
    Q = sum(fd_second(project, v, d, d, h=h, levels=levels) for d in dv)
    if dealias:
        Q = calc.dealias(Q)
    T = calc.lap(v) - Q
    return 0.5 * calc.integral(T * T)


def dirichlet_energy_oracle(grid, v):
    calc = DenseCalculus(grid.dim, grid.M, grid.L)
    return 0.5 * sum(calc.integral(d * d) for d in calc.grad(v))


# --- calculus constants ---------------------------------------------------------

def smoothing_constant(i):
    """C_i = sup_{y ≥ 0} y^i exp(-y⁴), by golden-section search."""
    f = lambda y: -(y ** i) * np.exp(-y ** 4)
    res = minimize_scalar(f, bracket=(0.1, 0.8, 3.0), method="golden", tol=1e-12)
    return float(-res.fun)


def smoothing_constant_grid(i, n=10 ** 6):
    y = np.logspace(-6, 1, n)
    return float(np.max(y ** i * np.exp(-y ** 4)))


# --- exact solutions --------------------------------------------------------------

def exact_helical(theta, k, t, x):
    """Helical travelling wave of s_t = s × s_xx with frequency ω = k² cos θ."""
    omega = k ** 2 * np.cos(theta)
    x = np.asarray(x, dtype=float)
    phase = k * x - omega * t
    return np.stack([np.sin(theta) * np.cos(phase),
                     np.sin(theta) * np.sin(phase),
                     np.cos(theta) * np.ones_like(phase)])


def rk4_reference(rhs, v0, t_end, n_steps):
    """Classical fourth-order Runge-Kutta with a fixed step."""
    v = np.array(v0, dtype=float)
    dt = t_end / n_steps
    for _ in range(n_steps):
        k1 = rhs(v)
        k2 = rhs(v + 0.5 * dt * k1)
        k3 = rhs(v + 0.5 * dt * k2)
        k4 = rhs(v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


# --- geometry oracles ---------------------------------------------------------------

def transport_ode(pt1, pt2, V, config=OracleConfig()):
    """Parallel transport on S² by integrating V' = -(V·γ')γ along the great circle."""
    pt1, pt2, V = (np.asarray(a, dtype=float) for a in (pt1, pt2, V))
    c = float(np.dot(pt1, pt2))
    if c <= -1 + 1e-6:
        raise AntipodalPoints("no unique minimising geodesic")
    e = pt2 - c * pt1
    ne = np.linalg.norm(e)
    if ne < 1e-15:
        return V.copy()
    e /= ne
    length = np.arctan2(ne, c)

    def gamma(s):
        return np.cos(s) * pt1 + np.sin(s) * e

    def dgamma(s):
        return -np.sin(s) * pt1 + np.cos(s) * e

    def rhs(s, y):
        return -np.dot(y, dgamma(s)) * gamma(s)

    sol = solve_ivp(rhs, (0.0, length), V, method="DOP853",
                    rtol=config.ode_tol * 1e-2, atol=config.ode_tol * 1e-3)
    return sol.y[:, -1]


def christoffel_from_metric(metric, point, h=1e-5):
    """Γ^i_jk = ½ g^{il}(∂_j g_lk + ∂_k g_lj - ∂_l g_jk) with FD metric derivatives."""
    point = np.asarray(point, dtype=float)
    d = point.size
    dg = np.zeros((d, d, d))  # dg[l, i, j] = ∂_l g_ij
    for l in range(d):
        e = np.zeros(d)
        e[l] = h
        dg[l] = (metric(point + e) - metric(point - e)) / (2 * h)
    ginv = np.linalg.inv(metric(point))
    G = np.zeros((d, d, d))
    for i in range(d):
        for j in range(d):
            for k in range(d):
                G[i, j, k] = 0.5 * sum(ginv[i, l] * (dg[j, l, k] + dg[k, l, j] - dg[l, j, k])
                                       for l in range(d))
    return G


def nearest_point_bruteforce(Q, n_theta=2001, n_phi=4001):
    """Closest point of a fine (θ, φ) sphere mesh, refined by local minimisation."""
    from scipy.optimize import minimize, root

    Q = np.asarray(Q, dtype=float)
    th = np.linspace(0, np.pi, n_theta)
    ph = np.linspace(-np.pi, np.pi, n_phi)
    best = None
    for chunk in np.array_split(th, 20):
        T, P = np.meshgrid(chunk, ph, indexing="ij")
        pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)])
        d = np.sum((pts - Q[:, None, None]) ** 2, axis=0)
        idx = np.unravel_index(np.argmin(d), d.shape)
        cand = (d[idx], T[idx], P[idx])
        if best is None or cand[0] < best[0]:
            best = cand

    def dist(a):
        p = np.array([np.sin(a[0]) * np.cos(a[1]), np.sin(a[0]) * np.sin(a[1]), np.cos(a[0])])
        return np.sum((p - Q) ** 2)

    res = minimize(dist, [best[1], best[2]], method="Nelder-Mead",
                   options={"xatol": 1e-13, "fatol": 1e-16, "maxiter": 4000})

    # a quadratic minimum only resolves to ~sqrt(machine eps); polish by
    # solving the stationarity condition d|p - Q|²/d(θ, φ) = 0 instead
    def grad(a):
        th, ph = a
        dth = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        dph = np.array([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), 0.0])
        return np.array([-Q @ dth, -(Q @ dph) / max(np.sin(th), 1e-300)])

    a = root(grad, res.x, tol=1e-15).x
    return np.array([np.sin(a[0]) * np.cos(a[1]), np.sin(a[0]) * np.sin(a[1]), np.cos(a[0])])
