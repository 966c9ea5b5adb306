"""Invariant suites behind ``sflab verify``.

Each check is small enough to run in a few seconds at desk resolution and
returns a measured value, the tolerance it is held to and a verdict.
Checks accept an optional target manifold so that a deliberately broken
kernel can be pushed through the same suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import analysis as an
from . import flow
from . import operators as ops
from . import oracle
from . import spectral as sp
from .geometry import FlatTorus, Sphere, chart_to_ambient, christoffel_s2, s2_metric
from .scenarios import constant, helical, tangent_perturbation

SUITES = ("geometry", "spectral", "operators", "flow", "analysis")


@dataclass
class CheckResult:
    suite: str
    name: str
    measured: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    note: str = ""

    def to_dict(self):
        return {"suite": self.suite, "name": self.name, "measured": float(self.measured),
                "tolerance": float(self.tolerance), "passed": bool(self.passed),
                "seconds": round(self.seconds, 4), "note": self.note}


_REGISTRY = {s: [] for s in SUITES}


def check(suite, tol, note=""):
    def deco(fn):
        _REGISTRY[suite].append((fn.__name__, fn, tol, note))
        return fn
    return deco


def reference(m):
    """A fresh, unmodified instance of the target family of ``m``."""
    return Sphere() if isinstance(m, Sphere) else FlatTorus()


def smooth_field(grid, p, rng, modes=3, amp=1.0):
    """Random trigonometric polynomial with a few low modes per component."""
    out = np.zeros((p,) + grid.shape)
    for c in range(p):
        for _ in range(modes):
            kvec = rng.integers(-modes, modes + 1, grid.dim)
            ph = rng.uniform(0, 2 * np.pi)
            arg = sum(kk * x * (2 * np.pi / grid.L) for kk, x in zip(kvec, grid.x))
            out[c] += amp * rng.standard_normal() * np.cos(arg + ph) / modes
    return out


def on_sphere_field(grid, rng, amp=0.4):
    v = smooth_field(grid, 3, rng, amp=amp)
    v[2] += 1.0
    return v / np.sqrt(np.sum(v ** 2, axis=0))


def on_torus_field(grid, rng, amp=0.5):
    a, b = smooth_field(grid, 2, rng, amp=amp)
    return np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)])


def chart_field(grid):
    x = grid.x
    if grid.dim == 1:
        th = np.pi / 2 + 0.5 * np.sin(x[0])
        ph = np.sin(2 * x[0]) + 0.3 * np.cos(x[0])
    else:
        th = np.pi / 2 + 0.4 * np.sin(x[0]) * np.cos(x[1])
        ph = np.sin(x[0] + x[1]) + 0.3 * np.cos(x[1])
    return chart_to_ambient(th, ph)


# --- geometry -------------------------------------------------------------------------------

@check("geometry", 1e-12)
def projection_idempotent(m, rng):
    Q = m.random_point(rng, 1000) * rng.uniform(0.75, 1.25, 1000)
    P = m.project(Q)
    return float(np.max(np.abs(m.project(P) - P)))


@check("geometry", 1e-12)
def dpi_plus_drho_identity(m, rng):
    Q = m.random_point(rng, 200) * rng.uniform(0.6, 1.4, 200)
    I = np.eye(m.ambient_dim)
    return float(max(np.max(np.abs(m.d_pi_matrix(Q[:, i]) + m.d_rho_matrix(Q[:, i]) - I))
                     for i in range(Q.shape[1])))


@check("geometry", 1e-8, "closed-form Hessian of the projection against finite differences")
def hessian_matches_fd(m, rng):
    Q = m.random_point(rng, 50) * rng.uniform(0.7, 1.3, 50)
    X, Y = rng.standard_normal((2, m.ambient_dim, 50))
    ref = reference(m)
    fd = oracle.fd_second(lambda z: z - ref.rho(z), Q, X, Y)
    return float(np.max(np.abs(m.hess_pi(Q, X, Y) - fd)))


@check("geometry", 1e-6, "third derivative of the projection against finite differences")
def third_derivative_matches_fd(m, rng):
    ref = reference(m)
    Q = m.random_point(rng, 20) * rng.uniform(0.8, 1.2, 20)
    X, Y, Z = rng.standard_normal((3, m.ambient_dim, 20))
    fd = oracle.fd_third(ref.project, Q, X, Y, Z)
    return float(np.max(np.abs(m.third_pi(Q, X, Y, Z) - fd)))


@check("geometry", 1e-10)
def complex_structure_properties(m, rng):
    q = m.random_point(rng, 200)
    X = m.random_tangent(rng, q)
    JX = m.j_apply(q, X)
    errs = [np.max(np.abs(m.j_apply(q, JX) + X)),
            np.max(np.abs(np.sum(JX * X, axis=0))),
            np.max(np.abs(np.linalg.norm(JX, axis=0) - np.linalg.norm(X, axis=0))),
            np.max(np.abs(m.d_rho(q, JX)))]
    return float(max(errs))


@check("geometry", 1e-9, "closed form against brute-force nearest point on the sphere")
def projection_vs_bruteforce(m, rng):
    if not isinstance(m, Sphere):
        return 0.0
    # (3, 4, 0) lies outside the tube, so compare the unchecked closed form Q - ρ(Q)
    Q = np.array([3.0, 4.0, 0.0])
    return float(np.max(np.abs(Q - m.rho(Q) - oracle.nearest_point_bruteforce(Q, 401, 801))))


@check("geometry", 1e-6, "Christoffel symbols against metric finite differences")
def christoffel_vs_metric(m, rng):
    errs = []
    for th in rng.uniform(0.2, np.pi - 0.2, 10):
        G = oracle.christoffel_from_metric(lambda pt: s2_metric(pt[0]), np.array([th, 0.3]))
        errs.append(np.max(np.abs(G - christoffel_s2(th))))
    return float(max(errs))


@check("geometry", 1e-6, "chart tension pushed forward against the ambient tension")
def chart_tension_agreement(m, rng):
    if not isinstance(m, Sphere):
        return 0.0
    g = sp.GridSpec(1, 128)
    v = chart_field(g)
    T = ops.tension_ambient(ops.OperatorContext(m, g, dealias=False), v)
    return float(np.max(np.abs(T - an.chart_tension(g, v))))


# --- spectral --------------------------------------------------------------------------------

@check("spectral", 1e-12)
def fft_round_trip(m, rng):
    g = sp.GridSpec(2, 32)
    f = rng.standard_normal((1000,) + g.shape)
    back = sp.ifft(g, sp.fft(g, f))
    return float(np.max(np.abs(back - f)) / np.max(np.abs(f)))


@check("spectral", 1e-12)
def derivative_commutes_with_semigroup(m, rng):
    g = sp.GridSpec(1, 64)
    f = rng.standard_normal(g.shape)
    a = sp.derivative(g, sp.semigroup(g, f, 1e-2, 0.1), 0, 3)
    b = sp.semigroup(g, sp.derivative(g, f, 0, 3), 1e-2, 0.1)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(a)))


@check("spectral", 1e-12)
def semigroup_law(m, rng):
    g = sp.GridSpec(2, 32)
    f = rng.standard_normal(g.shape)
    a = sp.semigroup(g, sp.semigroup(g, f, 1e-3, 0.2), 1e-3, 0.3)
    b = sp.semigroup(g, f, 1e-3, 0.5)
    return float(np.max(np.abs(a - b)))


@check("spectral", 0.0, "count of violations of the smoothing inequality (200 trials)")
def smoothing_inequality(m, rng):
    return float(smoothing_violations(rng, 200))


def smoothing_violations(rng, trials, grid=None):
    g = grid or sp.GridSpec(1, 256)
    consts = {i: oracle.smoothing_constant(i) for i in (1, 2, 3)}
    bad = 0
    for n in range(trials):
        i = 1 + n % 3
        eps = (1e-1, 1e-3)[(n // 3) % 2]
        t = (1e-2, 1.0)[(n // 6) % 2]
        s = rng.uniform(i, i + 3)
        f = rng.standard_normal(g.shape)
        lhs = sp.homogeneous_norm(g, sp.semigroup(g, f, eps, t), s)
        rhs = consts[i] * (t * eps) ** (-i / 4) * sp.homogeneous_norm(g, f, s - i)
        bad += lhs > rhs * (1 + 1e-12)
    return bad


@check("spectral", 0.0, "count of violations of the proximity bound")
def proximity_bound(m, rng):
    g = sp.GridSpec(1, 128)
    bad = 0
    for _ in range(30):
        f = rng.standard_normal(g.shape)
        for sigma in (0.25, 0.5, 1.0):
            eps, t = 10 ** rng.uniform(-4, -1), 10 ** rng.uniform(-2, 0)
            lhs = sp.lp_norm(g, sp.semigroup(g, f, eps, t) - f, 2)
            rhs = (eps * t) ** sigma * sp.homogeneous_norm(g, f, 4 * sigma)
            bad += lhs > rhs * (1 + 1e-12)
    return float(bad)


@check("spectral", 1e-12)
def parseval_quadrature(m, rng):
    g = sp.GridSpec(2, 32, 3.0)
    f = rng.standard_normal((3,) + g.shape)
    return abs(sp.lp_norm(g, f, 2) - sp.sobolev_norm(g, f, 0)) / sp.lp_norm(g, f, 2)


@check("spectral", 1e-12)
def fractional_composition(m, rng):
    g = sp.GridSpec(1, 64)
    f = rng.standard_normal(g.shape)
    a = sp.fractional(g, sp.fractional(g, f, 0.7), 1.6)
    b = sp.fractional(g, f, 2.3)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


# --- operators --------------------------------------------------------------------------------

def _ctx(m, dim=2, M=16, dealias=True, L=2 * np.pi):
    return ops.OperatorContext(m, sp.GridSpec(dim, M, L), dealias=dealias)


def variational_errors(m, rng, pairs, grid=None, dealias=True, ref=None, floor=0.0):
    """Relative errors of ⟨F(v), φ⟩ against the oracle derivative of the tension energy.

    ``ref`` is the manifold whose projection defines the oracle energy
    (the true sphere by default), so a corrupted kernel in ``m`` shows up.
    The denominator is max(|oracle|, floor ‖F‖‖φ‖); a positive floor guards
    against pairings that nearly cancel.
    """
    g = grid or sp.GridSpec(2, 16)
    ref = ref or reference(m)
    ctx = ops.OperatorContext(m, g, dealias=dealias)
    errs = []
    for i in range(pairs):
        if isinstance(ref, Sphere):
            v = on_sphere_field(g, rng, amp=0.3)
            if i % 2:
                v = v * (1 + 0.1 * smooth_field(g, 1, rng)[0])
        else:
            v = on_torus_field(g, rng)
            if i % 2:
                v = v * (1 + 0.05 * smooth_field(g, 1, rng)[0])
        phi = smooth_field(g, ref.ambient_dim, rng)
        F = ops.el_operator(ctx, v)
        lhs = sp.inner(g, F, phi)
        fd = oracle.fd_gateaux(
            lambda w: oracle.tension_energy_oracle(ref, g, w, dealias=dealias, h=2e-2, levels=3),
            v, phi, step=2e-2, levels=3)
        scale = floor * np.sqrt(sp.inner(g, F, F) * sp.inner(g, phi, phi))
        errs.append(abs(lhs - fd) / max(abs(fd), scale))
    return np.array(errs)


@check("operators", 1e-6, "⟨F(v),φ⟩ against the oracle Gateaux derivative (max relative error)")
def variational_consistency(m, rng):
    # torus pairings often cancel to 1e-8 of their Cauchy-Schwarz scale
    floor = 0.0 if isinstance(m, Sphere) else 1e-3
    return float(np.max(variational_errors(m, rng, 10, floor=floor)))


def normal_identity_error(m, rng, grid=None, trials=5):
    """max relative |H(v) - dρ(v)F(v)| over well-resolved on-manifold fields."""
    g = grid or sp.GridSpec(1, 128)
    ctx = ops.OperatorContext(m, g, dealias=False)
    errs = []
    for _ in range(trials):
        if isinstance(m, Sphere):
            v = on_sphere_field(g, rng, amp=0.4)
        else:
            v = on_torus_field(g, rng)
        F = ops.el_operator(ctx, v)
        H = ops.normal_correction(ctx, v)
        ref = reference(m).d_rho(v, F)
        errs.append(np.max(np.abs(H - ref)) / np.max(np.abs(ref)))
    return float(max(errs))


@check("operators", 1e-6, "normal correction against the normal part of F on the manifold")
def normal_part_identity(m, rng):
    return normal_identity_error(m, rng)


@check("operators", 1e-8, "normal component of the full right-hand side on the manifold")
def rhs_is_tangent(m, rng):
    g = sp.GridSpec(1, 128)
    ctx = ops.OperatorContext(m, g, dealias=False)
    v = on_sphere_field(g, rng) if isinstance(m, Sphere) else \
        on_torus_field(g, rng)
    rhs = ops.rhs_regularized(ctx, v, 1e-2, 0.1)
    return float(np.max(np.abs(m.d_rho(v, rhs))) / np.max(np.abs(rhs)))


@check("operators", 1e-10, "Schrödinger term against s × Δs on the sphere")
def schrodinger_is_cross_product(m, rng):
    if not isinstance(m, Sphere):
        return 0.0
    g = sp.GridSpec(2, 32)
    ctx = ops.OperatorContext(m, g)
    v = on_sphere_field(g, rng)
    ref = np.cross(v, sp.laplacian(g, v), axis=0)
    return float(np.max(np.abs(ops.schrodinger_term(ctx, v) - ref)))


@check("operators", 1e-8, "|∇u|² (chart) against |∂v|² (ambient)")
def energy_density_chart(m, rng):
    if not isinstance(m, Sphere):
        return 0.0
    g = sp.GridSpec(2, 32)
    return an.norm_equivalence_check(ops.OperatorContext(m, g), chart_field(g), k=1).first_order_max_error


@check("operators", 1e-8, "flat torus: tangential part of F against the connection Laplacian of T")
def flat_torus_reduction(m, rng):
    t = FlatTorus()
    g = sp.GridSpec(1, 64)
    ctx = ops.OperatorContext(t, g, dealias=False)
    a = np.sin(g.x[0]) + 0.3 * np.cos(2 * g.x[0])
    b = 0.5 * np.cos(g.x[0])
    v = np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)])
    F = ops.el_operator(ctx, v)
    T = ops.tension_ambient(ctx, v)
    # with zero curvature the geometric operator is ∇_α∇_α τ
    conn = t.d_pi(v, sp.divergence(g, [t.d_pi(v, d) for d in sp.gradient(g, T)]))
    return float(np.max(np.abs(t.d_pi(v, F) - conn)) / np.max(np.abs(conn)))


# --- flow -------------------------------------------------------------------------------------------

@check("flow", 1e-14, "step with N ≡ 0 against the bare semigroup")
def zero_nonlinearity_is_semigroup(m, rng):
    g = sp.GridSpec(1, 64)
    v = smooth_field(g, 3, rng)
    p = flow.FlowParams(eps=1e-2, dt=1e-2)
    ctx = ops.OperatorContext(Sphere(), g, check_tube=False)
    w = flow.duhamel_step(ctx, v, p, nonlinear=lambda u: np.zeros_like(u))
    return float(np.max(np.abs(w - sp.semigroup(g, v, 1e-2, 1e-2))))


@check("flow", 0.5, "largest Picard contraction factor on the helical scenario")
def picard_contraction(m, rng):
    g = sp.GridSpec(1, 128)
    ctx = ops.OperatorContext(m, g)
    v = helical(reference(m), g)
    worst = 0.0
    for eps in (1e-1, 1e-2, 1e-3):
        _, info = flow.duhamel_step(ctx, v, flow.FlowParams(eps=eps, dt=1e-3), return_info=True)
        worst = max(worst, info["contraction"])
    return worst


@check("flow", 1e-6, "sup |ρ(v)| over a short regularised run from on-manifold data")
def manifold_preservation_short(m, rng):
    g = sp.GridSpec(1, 64)
    ctx = ops.OperatorContext(m, g)
    v = helical(reference(m), g)
    tr = flow.integrate(ctx, v, flow.FlowParams(eps=1e-3, beta=0.1, dt=1e-3, t_end=0.05,
                                                record_every=5))
    return float(np.max(tr.column("sup_rho")))


@check("flow", 1e-3, "d/dt∫|ρ|² against the dissipation formula, off-manifold data")
def rho_dissipation_identity(m, rng):
    g = sp.GridSpec(1, 64)
    ctx = ops.OperatorContext(m, g)
    u = helical(reference(m), g)
    v = u * (1 + 0.01 * np.sin(g.x[0]) + 0.005 * np.cos(3 * g.x[0]))
    a, b = ops.rho_rate(ctx, v, 1e-3, 0.1), ops.rho_dissipation(ctx, v, 1e-3, 0.1)
    return abs(a - b) / abs(b)


@check("flow", 1e-3, "instantaneous energy identity residual")
def energy_identity_instantaneous(m, rng):
    g = sp.GridSpec(1, 64)
    ctx = ops.OperatorContext(m, g)
    v = tangent_perturbation(reference(m), g, helical(reference(m), g), 0.2, seed=int(rng.integers(1 << 30)))
    a = flow.energy_rate(ctx, v, 1e-2, 0.1)
    b = ops.energy_identity_rhs(ctx, v, 1e-2, 0.1)
    return abs(a - b) / abs(b)


@check("flow", 0.0, "max deviation of a constant map after ten steps")
def constant_map_fixed(m, rng):
    g = sp.GridSpec(2, 16)
    ctx = ops.OperatorContext(m, g)
    v = constant(reference(m), g)
    tr = flow.integrate(ctx, v, flow.FlowParams(eps=1e-2, beta=0.1, dt=1e-2, t_end=0.1))
    return float(np.max(np.abs(tr.final - v)))


@check("flow", 1e-9, "baseline midpoint: max ||s| - 1| over a short run")
def baseline_unit_norm(m, rng):
    g = sp.GridSpec(1, 64)
    ctx = ops.OperatorContext(Sphere(), g)
    tr = flow.baseline_ll_midpoint(ctx, helical(Sphere(), g), flow.FlowParams(eps=0.0, dt=1e-3, t_end=0.02))
    return float(np.max(np.abs(np.linalg.norm(tr.final, axis=0) - 1)))


@check("flow", 0.5, "|log2(error ratio) - 2| under step halving (second order expected)")
def step_halving_order(m, rng):
    return abs(step_halving_rate(m) - 2.0)


def step_halving_rate(m, M=64, t_end=0.1, dts=(1e-2, 5e-3, 2.5e-3)):
    g = sp.GridSpec(1, M)
    ctx = ops.OperatorContext(m, g)
    v = tangent_perturbation(reference(m), g, helical(reference(m), g), 0.1, seed=3)
    finals = [flow.integrate(ctx, v, flow.FlowParams(eps=1e-2, beta=0.1, dt=dt, t_end=t_end,
                                                     record_every=1000)).final for dt in dts]
    e1 = sp.lp_norm(g, finals[0] - finals[1], 2)
    e2 = sp.lp_norm(g, finals[1] - finals[2], 2)
    return float(np.log2(e1 / e2))


# --- analysis ----------------------------------------------------------------------------------------

@check("analysis", 1e-10, "GN ratio change under exact 2x dilation (20 tuples)")
def gn_dilation(m, rng):
    return gn_dilation_error()


def gn_dilation_error():
    worst = 0.0
    for e in an.gn_table():
        g = sp.GridSpec(e.n, 64 if e.n == 1 else 32)
        f = np.exp(-sum((x - np.pi) ** 2 for x in g.x) / 0.5)
        r1, r2 = an.gn_ratio(g, f, e), an.gn_ratio(an.dilated_grid(g), f, e)
        worst = max(worst, abs(r1 - r2) / r1)
    return worst


@check("analysis", 0.0, "Kato inequality violations over 100 random fields")
def kato_inequality(m, rng):
    return float(kato_violations(rng, 100))


def kato_violations(rng, n):
    g = sp.GridSpec(1, 64)
    bad = 0
    for _ in range(n):
        f = smooth_field(g, 3, rng)
        f[0] += 3.0
        bad += an.kato_gap(g, f) < -1e-12
    return bad


@check("analysis", 1e-9, "closed-form transport against the ODE oracle")
def transport_vs_ode(m, rng):
    return transport_ode_error(rng, 20)


def transport_ode_error(rng, n):
    s = Sphere()
    worst = 0.0
    for _ in range(n):
        p1, p2 = s.random_point(rng), s.random_point(rng)
        if p1 @ p2 < -0.9:
            p2 = -p2
        V = s.random_tangent(rng, p1)
        worst = max(worst, np.max(np.abs(an.parallel_transport_s2(p1, p2, V)
                                          - oracle.transport_ode(p1, p2, V))))
    return float(worst)


@check("analysis", 1e-12, "transport: inner products and the round trip")
def transport_isometry(m, rng):
    s = Sphere()
    p1, p2 = s.random_point(rng, 200), s.random_point(rng, 200)
    flip = np.sum(p1 * p2, axis=0) < -0.9
    p2[:, flip] *= -1
    V, W = s.random_tangent(rng, p1), s.random_tangent(rng, p1)
    tV, tW = an.parallel_transport_s2(p1, p2, V), an.parallel_transport_s2(p1, p2, W)
    back = an.parallel_transport_s2(p2, p1, tV)
    return float(max(np.max(np.abs(np.sum(tV * tW, axis=0) - np.sum(V * W, axis=0))),
                     np.max(np.abs(back - V))))


@check("analysis", 1e-12, "interpolation inequality with constant 1 (max ratio - 1)")
def interpolation_inequality(m, rng):
    g = sp.GridSpec(1, 64)
    a = [smooth_field(g, 3, rng, modes=8) for _ in range(5)]
    b = [smooth_field(g, 3, rng, modes=8) for _ in range(5)]
    rep = an.interpolation_dependence(g, a, b, 6.0, 3.0)
    return max(0.0, rep.max_ratio - 1)


@check("analysis", 100.0, "distance after a 1e-3 rotation divided by 1e-6 (inf if d(u,u) != 0)")
def solution_distance_small(m, rng):
    g = sp.GridSpec(1, 64)
    # the distance uses sphere transport, so the check always runs on S²
    u = helical(Sphere(), g)
    if an.solution_distance(g, u, u).total != 0:
        return np.inf
    c, s = np.cos(1e-3), np.sin(1e-3)
    R = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    return an.solution_distance(g, u, np.einsum("ij,j...->i...", R, u)).total / 1e-6


@check("analysis", 1e-8, "norm equivalence report on a chart-friendly field (first order error)")
def norm_equivalence(m, rng):
    g = sp.GridSpec(2, 32)
    rep = an.norm_equivalence_check(ops.OperatorContext(Sphere(), g), chart_field(g))
    return rep.first_order_max_error if rep.second_order_max_violation <= 0 else 1.0


# --- driver ------------------------------------------------------------------------------------------

def run_suite(name="all", manifold=None, seed=0, log=None):
    """Run one suite (or all) and return a list of CheckResult."""
    suites = SUITES if name == "all" else (name,)
    for s in suites:
        if s not in SUITES:
            raise ValueError(f"unknown suite {s!r}; choose from {SUITES + ('all',)}")
    m = manifold or Sphere()
    out = []
    for s in suites:
        for fname, fn, tol, note in _REGISTRY[s]:
            rng = np.random.default_rng([seed, len(out)])
            t0 = time.perf_counter()
            try:
                val = float(fn(m, rng))
                ok = bool(np.isfinite(val) and val <= tol)
                msg = note
            except Exception as exc:  # a crashing invariant is a failing invariant
                val, ok, msg = float("nan"), False, f"{type(exc).__name__}: {exc}"
            res = CheckResult(s, fname, val, tol, ok, time.perf_counter() - t0, msg)
            if log:
                log(res)
            out.append(res)
    return out
