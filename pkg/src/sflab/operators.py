"""Field-level operators of the regularised ambient flow.

Notation follows the ambient picture: ``v`` is an array ``(p, *grid.shape)``
with values in the tube around the embedded target.  ``T`` is the ambient
tension, ``G`` the tension energy ½∫|T|², ``F`` its Euler-Lagrange
operator, ``H`` the normal correction and ``f_v`` the Schrödinger term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .geometry import TargetManifold
from .spectral import GridSpec


@dataclass(frozen=True)
class OperatorContext:
    manifold: TargetManifold
    grid: GridSpec
    dealias: bool = True
    check_tube: bool = True

    def validate(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.manifold.ambient_dim,) + self.grid.shape:
            raise ValueError(
                f"field shape {v.shape} does not match p={self.manifold.ambient_dim} "
                f"on grid {self.grid.shape}")
        if self.check_tube:
            self.manifold.check_tube(v)
        return v

    def P(self, f):
        return sp.dealias(self.grid, f) if self.dealias else f


@dataclass(frozen=True)
class Functionals:
    energy: float
    tension_energy: float


def _grad(ctx, v):
    return sp.gradient(ctx.grid, v)


def _hess_trace(ctx, v, dv):
    """Σ_α D²Π|_v(∂_α v, ∂_α v)."""
    m = ctx.manifold
    return sum(m.hess_pi(v, d, d) for d in dv)


def tension_ambient(ctx, v):
    """T(v) = Δv - Σ_α D²Π(v)(∂_α v, ∂_α v)."""
    v = ctx.validate(v)
    dv = _grad(ctx, v)
    return sp.laplacian(ctx.grid, v) - ctx.P(_hess_trace(ctx, v, dv))


def schrodinger_term(ctx, v):
    """f_v = J_{Π(v)}(dΠ|_v Δv)."""
    v = ctx.validate(v)
    m = ctx.manifold
    q = v - m.rho(v)
    return m.j_apply(q, m.d_pi(v, sp.laplacian(ctx.grid, v)))


def tension_energy(ctx, v):
    T = tension_ambient(ctx, v)
    return 0.5 * sp.inner(ctx.grid, T, T)


def dirichlet_energy(ctx, v):
    return 0.5 * sum(sp.inner(ctx.grid, d, d) for d in _grad(ctx, v))


def functionals(ctx, v):
    return Functionals(energy=dirichlet_energy(ctx, v), tension_energy=tension_energy(ctx, v))


def el_operator(ctx, v, return_parts=False):
    """Euler-Lagrange operator of the discrete tension energy.

    F = ΔT - Σ_α ⟨W, D³Π(∂_α v, ∂_α v, ·)⟩ + 2 Σ_α ∂_α ⟨W, D²Π(∂_α v, ·)⟩

    with W the (dealiased) tension.  This is the traced reading of the
    double index sum: it is the exact gradient of ½ h^n Σ |T|² on the grid.
    """
    v = ctx.validate(v)
    m, g = ctx.manifold, ctx.grid
    dv = _grad(ctx, v)
    Q = _hess_trace(ctx, v, dv)
    T = sp.laplacian(g, v) - ctx.P(Q)
    W = ctx.P(T)
    g3 = sum(m.third_pi_adjoint(v, W, d, d) for d in dv)
    flux = sp.divergence(g, [m.hess_pi_adjoint(v, W, d) for d in dv])
    F = sp.laplacian(g, T) - g3 + 2.0 * flux
    if return_parts:
        return F, {"T": T, "Q": Q, "dv": dv}
    return F


def lower_order_terms(ctx, v):
    """F̃(v) = Δ²v - F(v); contains derivatives of order ≤ 3 only."""
    return sp.bilaplacian(ctx.grid, ctx.validate(v)) - el_operator(ctx, v)


def _normal_correction_from(ctx, v, F):
    m, g = ctx.manifold, ctx.grid
    dv = _grad(ctx, v)
    lap = sp.laplacian(g, v)
    dlap = _grad(ctx, lap)
    Ftilde = sp.bilaplacian(g, v) - F
    term1 = sp.laplacian(g, ctx.P(_hess_trace(ctx, v, dv)))
    term2 = sp.divergence(g, [ctx.P(m.hess_pi(v, lap, d)) for d in dv])
    term3 = ctx.P(sum(m.hess_pi(v, a, d) for a, d in zip(dlap, dv)))
    return term1 + term2 + term3 - m.d_rho(v, Ftilde)


def normal_correction(ctx, v):
    """H(v): the normal part of F written without fourth derivatives of v."""
    v = ctx.validate(v)
    return _normal_correction_from(ctx, v, el_operator(ctx, v))


def rhs_regularized(ctx, v, eps, beta):
    """-ε(F - H) + f_v + βT."""
    v = ctx.validate(v)
    F, parts = el_operator(ctx, v, return_parts=True)
    out = schrodinger_term(ctx, v)
    if beta:
        out = out + beta * parts["T"]
    if eps:
        out = out - eps * (F - _normal_correction_from(ctx, v, F))
    return out


def nonlinear_n(ctx, v, eps, beta):
    """N(v) = rhs + εΔ²v, dealiased when the context asks for it."""
    N = rhs_regularized(ctx, v, eps, beta)
    if eps:
        N = N + eps * sp.bilaplacian(ctx.grid, v)
    return ctx.P(N)


def energy_identity_rhs(ctx, v, eps, beta):
    """-ε∫|∇τ|² - β∫|τ|² - ε∫⟨R(∇u,τ)∇u,τ⟩ evaluated through the ambient field."""
    v = ctx.validate(v)
    m, g = ctx.manifold, ctx.grid
    q = m.project(v)
    T = tension_ambient(ctx, v)
    dv = _grad(ctx, v)
    cov = [m.d_pi(v, d) for d in _grad(ctx, T)]
    grad_tau = sum(sp.inner(g, c, c) for c in cov)
    tau2 = sp.inner(g, T, T)
    curv = sum(float(np.sum(m.curvature_pairing(q, d, T))) for d in dv) * g.cell_volume
    return -eps * grad_tau - beta * tau2 - eps * curv


def rho_dissipation(ctx, v, eps, beta):
    """-2∫(β|∇ρ(v)|² + ε|Δρ(v)|²)."""
    m, g = ctx.manifold, ctx.grid
    r = m.rho(v)
    grad_r = sum(sp.inner(g, d, d) for d in sp.gradient(g, r))
    lap_r = sp.laplacian(g, r)
    return -2.0 * (beta * grad_r + eps * sp.inner(g, lap_r, lap_r))


def rho_rate(ctx, v, eps, beta):
    """Exact instantaneous d/dt ∫|ρ(v)|² along the regularised flow."""
    m = ctx.manifold
    r = m.rho(v)
    rate = m.d_rho(v, rhs_regularized(ctx, v, eps, beta))
    return 2.0 * sp.inner(ctx.grid, r, rate)
