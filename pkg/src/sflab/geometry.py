"""Embedded Kähler targets: the nearest-point projection with its derivatives, plus J.

All kernels are vectorised over trailing axes.  A point or vector is an
array whose *first* axis holds the ambient components, so a field sampled
on a grid of shape ``(M,)`` or ``(M, M)`` is simply an array of shape
``(p, M)`` or ``(p, M, M)``.
"""

from __future__ import annotations

import numpy as np


class GeometryError(ValueError):
    pass


class OutsideTubularNeighborhood(GeometryError):
    pass


class NotTangent(GeometryError):
    pass


class PoleProximity(GeometryError):
    pass


class AntipodalPoints(GeometryError):
    pass


def _dot(a, b):
    return np.einsum("i...,i...->...", a, b)


class TargetManifold:
    """Interface for an isometrically embedded Kähler target ``w(N) ⊂ R^p``.

    Subclasses implement the closed-form kernels; the default ``rho``,
    ``d_rho`` and matrix helpers are derived from them.
    """

    name = "abstract"
    ambient_dim = 0
    tubular_radius = 0.0
    on_manifold_tol = 1e-12

    def project(self, Q):
        raise NotImplementedError

    def d_pi(self, Q, X):
        """dΠ|_Q applied to X."""
        raise NotImplementedError

    def hess_pi(self, Q, X, Y):
        """Second derivative D²Π|_Q(X, Y), vector valued."""
        raise NotImplementedError

    def third_pi(self, Q, X, Y, Z):
        """Third derivative D³Π|_Q(X, Y, Z), vector valued."""
        raise NotImplementedError

    def j_apply(self, q, X, check=False):
        raise NotImplementedError

    def normal_basis(self, q):
        """List of unit normal fields at on-manifold points ``q``."""
        raise NotImplementedError

    def curvature_pairing(self, q, X, T):
        """⟨R(X, T)X, T⟩ for tangent X, T at q (convention R(X,Y)=[∇X,∇Y]-∇[X,Y])."""
        raise NotImplementedError

    def distance(self, Q):
        return np.sqrt(_dot(self.rho(Q), self.rho(Q)))

    def rho(self, Q):
        return np.asarray(Q, dtype=float) - self.project(Q)

    def d_rho(self, Q, X):
        return X - self.d_pi(Q, X)

    def check_tube(self, Q, margin=1.0):
        d = self.distance(Q)
        worst = float(np.max(d)) if np.size(d) else 0.0
        if not np.isfinite(worst) or worst >= margin * self.tubular_radius:
            raise OutsideTubularNeighborhood(
                f"distance {worst:.3g} to {self.name} exceeds tube radius "
                f"{self.tubular_radius}")

    def check_tangent(self, q, X, tol=1e-10):
        for nu in self.normal_basis(q):
            err = np.max(np.abs(_dot(nu, X)), initial=0.0)
            scale = max(1.0, float(np.max(np.abs(X), initial=0.0)))
            if err > tol * scale:
                raise NotTangent(f"normal component {err:.3g} exceeds {tol:g}")

    # adjoint contractions used by the Euler-Lagrange assembly

    def hess_pi_adjoint(self, Q, W, X):
        """Vector h with h_c = ⟨W, D²Π|_Q(X, e_c)⟩."""
        out = np.empty_like(np.asarray(W, dtype=float))
        for c in range(self.ambient_dim):
            e = np.zeros_like(out)
            e[c] = 1.0
            out[c] = _dot(W, self.hess_pi(Q, X, e))
        return out

    def third_pi_adjoint(self, Q, W, X, Y):
        """Vector g with g_c = ⟨W, D³Π|_Q(X, Y, e_c)⟩."""
        out = np.empty_like(np.asarray(W, dtype=float))
        for c in range(self.ambient_dim):
            e = np.zeros_like(out)
            e[c] = 1.0
            out[c] = _dot(W, self.third_pi(Q, X, Y, e))
        return out

    def d_pi_matrix(self, Q):
        """Jacobian of Π at a single point, shape (p, p)."""
        Q = np.asarray(Q, dtype=float)
        eye = np.eye(self.ambient_dim)
        return np.stack([self.d_pi(Q, eye[:, b]) for b in range(self.ambient_dim)], axis=1)

    def d_rho_matrix(self, Q):
        return np.eye(self.ambient_dim) - self.d_pi_matrix(Q)

    def random_point(self, rng, size=()):
        raise NotImplementedError

    def random_tangent(self, rng, q):
        X = rng.standard_normal(np.shape(q))
        for nu in self.normal_basis(q):
            X = X - _dot(nu, X) * nu
        return X


# Sphere kernels in arbitrary dimension; S² uses d=3, the torus factors use d=2.

def _sphere_project(Q):
    r = np.sqrt(_dot(Q, Q))
    return Q / r


def _sphere_d_pi(Q, X):
    r = np.sqrt(_dot(Q, Q))
    qx = _dot(Q, X)
    return X / r - qx * Q / r**3


def _sphere_hess(Q, X, Y):
    r2 = _dot(Q, Q)
    r = np.sqrt(r2)
    qx, qy, xy = _dot(Q, X), _dot(Q, Y), _dot(X, Y)
    return -(qy * X + qx * Y + xy * Q) / r**3 + 3.0 * qx * qy * Q / r**5


def _sphere_third(Q, X, Y, Z):
    r = np.sqrt(_dot(Q, Q))
    qx, qy, qz = _dot(Q, X), _dot(Q, Y), _dot(Q, Z)
    xy, xz, yz = _dot(X, Y), _dot(X, Z), _dot(Y, Z)
    out = -(yz * X + xz * Y + xy * Z) / r**3
    out = out + 3.0 * (qz * (qy * X + qx * Y + xy * Q) + xz * qy * Q + qx * yz * Q + qx * qy * Z) / r**5
    return out - 15.0 * qx * qy * qz * Q / r**7


class Sphere(TargetManifold):
    """Unit sphere S² ⊂ R³ with J(s)X = s × X."""

    name = "s2"
    ambient_dim = 3
    tubular_radius = 0.5

    def __init__(self, orientation=1.0):
        # orientation -1 gives the time-reversed flow
        self.orientation = float(orientation)

    def project(self, Q):
        Q = np.asarray(Q, dtype=float)
        self.check_tube(Q)
        return _sphere_project(Q)

    def distance(self, Q):
        Q = np.asarray(Q, dtype=float)
        return np.abs(np.sqrt(_dot(Q, Q)) - 1.0)

    def rho(self, Q):
        Q = np.asarray(Q, dtype=float)
        return Q - _sphere_project(Q)

    def d_pi(self, Q, X):
        return _sphere_d_pi(np.asarray(Q, dtype=float), X)

    def hess_pi(self, Q, X, Y):
        return _sphere_hess(np.asarray(Q, dtype=float), X, Y)

    def third_pi(self, Q, X, Y, Z):
        return _sphere_third(np.asarray(Q, dtype=float), X, Y, Z)

    def hess_pi_adjoint(self, Q, W, X):
        # closed form of ⟨W, D²Π(X, ·)⟩
        Q = np.asarray(Q, dtype=float)
        r = np.sqrt(_dot(Q, Q))
        qx, qw, wx = _dot(Q, X), _dot(Q, W), _dot(W, X)
        return (-(wx * Q + qx * W + qw * X) / r**3 + 3.0 * qx * qw * Q / r**5)

    def third_pi_adjoint(self, Q, W, X, Y):
        return self.third_pi(Q, X, Y, W)

    def j_apply(self, q, X, check=False):
        q = np.asarray(q, dtype=float)
        if check:
            self.check_tangent(q, X)
        return self.orientation * np.cross(q, X, axis=0)

    def normal_basis(self, q):
        return [np.asarray(q, dtype=float) / np.sqrt(_dot(q, q))]

    def curvature_pairing(self, q, X, T):
        # R(X,T)X = ⟨T,X⟩X - ⟨X,X⟩T for sectional curvature 1
        return _dot(X, T) ** 2 - _dot(X, X) * _dot(T, T)

    def random_point(self, rng, size=()):
        Q = rng.standard_normal((3,) + tuple(np.atleast_1d(size)))
        return Q / np.sqrt(_dot(Q, Q))


class FlatTorus(TargetManifold):
    """Flat torus S¹ × S¹ ⊂ R⁴; zero curvature, J rotates circle 1 into circle 2."""

    name = "torus"
    ambient_dim = 4
    tubular_radius = 0.5

    _blocks = (slice(0, 2), slice(2, 4))

    def _split(self, *arrays):
        return [[np.asarray(a, dtype=float)[b] for a in arrays] for b in self._blocks]

    def _apply(self, kernel, *arrays):
        parts = [kernel(*blk) for blk in self._split(*arrays)]
        return np.concatenate(parts, axis=0)

    def project(self, Q):
        self.check_tube(np.asarray(Q, dtype=float))
        return self._apply(_sphere_project, Q)

    def distance(self, Q):
        Q = np.asarray(Q, dtype=float)
        out = 0.0
        for b in self._blocks:
            r = np.sqrt(_dot(Q[b], Q[b]))
            out = out + (r - 1.0) ** 2
        return np.sqrt(out)

    def rho(self, Q):
        Q = np.asarray(Q, dtype=float)
        return Q - self._apply(_sphere_project, Q)

    def d_pi(self, Q, X):
        return self._apply(_sphere_d_pi, Q, X)

    def hess_pi(self, Q, X, Y):
        return self._apply(_sphere_hess, Q, X, Y)

    def third_pi(self, Q, X, Y, Z):
        return self._apply(_sphere_third, Q, X, Y, Z)

    def third_pi_adjoint(self, Q, W, X, Y):
        return self.third_pi(Q, X, Y, W)

    def _tangents(self, q):
        q = np.asarray(q, dtype=float)
        zero = np.zeros_like(q[0])
        t1 = np.stack([-q[1], q[0], zero, zero])
        t2 = np.stack([zero, zero, -q[3], q[2]])
        n1 = np.sqrt(_dot(t1, t1))
        n2 = np.sqrt(_dot(t2, t2))
        return t1 / n1, t2 / n2

    def j_apply(self, q, X, check=False):
        if check:
            self.check_tangent(q, X)
        t1, t2 = self._tangents(q)
        return _dot(X, t1) * t2 - _dot(X, t2) * t1

    def normal_basis(self, q):
        q = np.asarray(q, dtype=float)
        zero = np.zeros_like(q[0])
        r1 = np.sqrt(q[0] ** 2 + q[1] ** 2)
        r2 = np.sqrt(q[2] ** 2 + q[3] ** 2)
        return [np.stack([q[0] / r1, q[1] / r1, zero, zero]),
                np.stack([zero, zero, q[2] / r2, q[3] / r2])]

    def curvature_pairing(self, q, X, T):
        return np.zeros(np.shape(q)[1:])

    def random_point(self, rng, size=()):
        shape = tuple(np.atleast_1d(size))
        a = rng.uniform(0, 2 * np.pi, shape)
        b = rng.uniform(0, 2 * np.pi, shape)
        return np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)])


def get_manifold(name):
    if name in ("s2", "sphere"):
        return Sphere()
    if name == "torus":
        return FlatTorus()
    raise ValueError(f"unknown target {name!r}")


# --- spherical chart (cross-checks only) -----------------------------------

CHART_MARGIN = 1e-3


def _check_chart(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < CHART_MARGIN) or np.any(theta > np.pi - CHART_MARGIN):
        raise PoleProximity("chart point within 1e-3 rad of a pole")


def chart_to_ambient(theta, phi):
    _check_chart(theta)
    return np.stack([np.sin(theta) * np.cos(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(theta) * np.ones_like(phi)])


def ambient_to_chart(s):
    s = np.asarray(s, dtype=float)
    theta = np.arccos(np.clip(s[2], -1.0, 1.0))
    phi = np.arctan2(s[1], s[0])
    _check_chart(theta)
    return theta, phi


def christoffel_s2(theta, phi=0.0):
    """Christoffel symbols Γ[i, j, k] of dθ² + sin²θ dφ², index 0 = θ, 1 = φ.

    Vectorised: an array ``theta`` gives shape (2, 2, 2, *theta.shape).
    """
    theta = np.asarray(theta, dtype=float)
    _check_chart(theta)
    G = np.zeros((2, 2, 2) + theta.shape)
    G[0, 1, 1] = -np.sin(theta) * np.cos(theta)
    G[1, 0, 1] = G[1, 1, 0] = np.cos(theta) / np.sin(theta)
    return G


def s2_metric(theta):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros((2, 2) + theta.shape)
    g[0, 0] = 1.0
    g[1, 1] = np.sin(theta) ** 2
    return g
