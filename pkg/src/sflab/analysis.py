"""Numerical checks of the analytic toolbox.

Gagliardo-Nirenberg scaling, Kato's inequality, intrinsic versus ambient
norms on S², parallel transport, the transported solution distance and
the twin-run (Gronwall) experiments.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, replace
from fractions import Fraction

import numpy as np

from . import operators as ops
from . import spectral as sp
from .flow import baseline_ll_midpoint, integrate
from .geometry import AntipodalPoints, GeometryError, ambient_to_chart, christoffel_s2, s2_metric


class DegenerateDenominator(ZeroDivisionError):
    pass


# --- Gagliardo-Nirenberg --------------------------------------------------------------

def _inv(x):
    return 0.0 if np.isinf(x) else 1.0 / x


@dataclass(frozen=True)
class GNExponents:
    n: int
    j: int
    k: int
    p: float
    q: float
    r: float
    a: float

    def __post_init__(self):
        if not 0 <= self.j <= self.k or self.k == 0:
            raise ValueError("need 0 <= j <= k and k >= 1")
        for x in (self.p, self.q, self.r):
            if not 1 <= x <= np.inf:
                raise ValueError("exponents p, q, r must lie in [1, inf]")
        if not (self.j / self.k <= self.a <= 1) or (self.j > 0 and self.a == self.j / self.k
                                                    and self.j != self.k):
            raise ValueError("a must lie in (j/k, 1] (or [0, 1] when j = 0)")
        if abs(self.relation_residual) > 1e-12:
            raise ValueError(f"exponent relation violated by {self.relation_residual:.3e}")

    @property
    def relation_residual(self):
        n = self.n
        return _inv(self.p) - (self.j / n + _inv(self.r)
                               + self.a * (_inv(self.q) - _inv(self.r) - self.k / n))

    @property
    def valid(self):
        """False in the excluded endpoint case a = 1 with 1 < r < ∞ and k - j - n/r a nonnegative integer."""
        if self.a == 1 and 1 < self.r < np.inf:
            t = self.k - self.j - self.n / self.r
            return not (t >= 0 and abs(t - round(t)) < 1e-12)
        return True


def _gn(n, j, k, q, r, a):
    a = Fraction(a)
    inv_p = Fraction(j, n) + Fraction(1, r) + a * (Fraction(1, q) - Fraction(1, r) - Fraction(k, n))
    return GNExponents(n, j, k, float(1 / inv_p), float(q), float(r), float(a))


def gn_table():
    """Twenty exponent tuples satisfying the scaling relation, all with finite p, q, r."""
    rows = [
        (1, 0, 1, 2, 2, "1/4"), (1, 0, 1, 2, 2, "1/3"), (1, 0, 1, 4, 2, "1/3"),
        (1, 1, 2, 2, 2, "3/5"), (1, 1, 2, 2, 4, "2/3"), (1, 1, 2, 4, 4, "3/5"),
        (1, 2, 3, 2, 2, "3/4"), (1, 2, 3, 4, 2, "3/4"), (1, 2, 4, 2, 2, "3/5"),
        (1, 0, 1, 2, 4, "1/4"), (2, 0, 1, 2, 2, "1/2"), (2, 0, 1, 2, 4, "2/3"),
        (2, 0, 1, 4, 2, "1/3"), (2, 0, 2, 2, 2, "1/3"), (2, 1, 2, 2, 2, "3/4"),
        (2, 1, 2, 4, 4, "3/5"), (2, 1, 3, 2, 2, "1/2"), (2, 2, 3, 2, 4, "5/6"),
        (2, 2, 4, 2, 2, "2/3"), (2, 0, 1, 4, 4, "1/4"),
    ]
    return [_gn(n, j, k, q, r, Fraction(a)) for n, j, k, q, r, a in rows]


def grad_power_magnitude(grid, f, j):
    """Pointwise |∇^j f| = (Σ over ordered multi-indices of length j of |∂^α f|²)^{1/2}."""
    f = np.asarray(f, dtype=float)
    if j == 0:
        return np.abs(f) if f.ndim == grid.dim else np.sqrt(np.sum(f ** 2, axis=0))
    fh = sp.fft(grid, f)
    total = 0.0
    for alpha in itertools.product(range(grid.dim), repeat=j):
        sym = 1.0
        for ax in alpha:
            sym = sym * sp.derivative_symbol(grid, ax)
        d = sp.ifft(grid, fh * sym)
        total = total + (d ** 2 if d.ndim == grid.dim else np.sum(d ** 2, axis=0))
    return np.sqrt(total)


def gn_ratio(grid, f, e, floor=1e-14):
    """‖∇^j f‖_{L^p} / (‖∇^k f‖_{L^q}^a ‖f‖_{L^r}^{1-a})."""
    if e.n != grid.dim:
        raise ValueError("exponent tuple dimension differs from the grid")
    num = sp.lp_norm(grid, grad_power_magnitude(grid, f, e.j), e.p)
    top = sp.lp_norm(grid, grad_power_magnitude(grid, f, e.k), e.q)
    low = sp.lp_norm(grid, grad_power_magnitude(grid, f, 0), e.r)
    if top < floor or low < floor:
        raise DegenerateDenominator("a denominator norm vanishes")
    return num / (top ** e.a * low ** (1 - e.a))


def dilated_grid(grid, factor=2):
    """The same samples on a box shrunk by ``factor``: an exact discrete dilation."""
    return sp.GridSpec(grid.dim, grid.M, grid.L / factor)


def kato_gap(grid, f):
    """‖∂f‖_{L²} - ‖∂|f|‖_{L²} for a vector field f (p, *shape); nonnegative by Kato.

    ∂|f| is formed pointwise as (f·∂f)/|f|, the chain rule away from zeros.
    """
    mag = np.sqrt(np.sum(f ** 2, axis=0))
    if np.min(mag) <= 0:
        raise DegenerateDenominator("field vanishes on the grid")
    dfs = sp.gradient(grid, f)
    grad_f = np.sqrt(sum(sp.inner(grid, d, d) for d in dfs))
    grad_mag = np.sqrt(sum(sp.inner(grid, s, s) for s in
                           (np.sum(f * d, axis=0) / mag for d in dfs)))
    return grad_f - grad_mag


# --- chart quantities on S² -----------------------------------------------------------------

@dataclass
class ChartJet:
    theta: np.ndarray
    phi: np.ndarray
    du: list          # per axis: array (2, *shape) of (∂θ, ∂φ)
    ddu: dict         # (α, β) -> array (2, *shape)


def chart_jet(grid, v):
    """Chart coordinates of an on-sphere field with first and second derivatives."""
    theta, phi = ambient_to_chart(v)
    dv = sp.gradient(grid, v)
    s1, s2, s3 = v
    rxy2 = s1 ** 2 + s2 ** 2
    sin_t = np.sin(theta)
    du = []
    for d in dv:
        dth = -d[2] / sin_t
        dph = (s1 * d[1] - s2 * d[0]) / rxy2
        du.append(np.stack([dth, dph]))
    ddu = {}
    for a in range(grid.dim):
        for b in range(grid.dim):
            ddu[(a, b)] = sp.derivative(grid, du[b], a)
    return ChartJet(theta, phi, du, ddu)


def _metric_contract(theta, X, Y):
    g = s2_metric(theta)
    return g[0, 0] * X[0] * Y[0] + g[1, 1] * X[1] * Y[1]


def chart_covariant_hessian(theta, jet):
    """(∇du)^i_{αβ} = ∂_α∂_β u^i + Γ^i_{jk} ∂_α u^j ∂_β u^k."""
    G = christoffel_s2(theta)
    out = {}
    for (a, b), dd in jet.ddu.items():
        X, Y = jet.du[a], jet.du[b]
        corr = np.einsum("ijk...,j...,k...->i...", G, X, Y)
        out[(a, b)] = dd + corr
    return out


def chart_tension(grid, v):
    """Intrinsic tension of an on-sphere field, pushed forward into ℝ³."""
    jet = chart_jet(grid, v)
    hess = chart_covariant_hessian(jet.theta, jet)
    tau = sum(hess[(a, a)] for a in range(grid.dim))
    th, ph = jet.theta, jet.phi
    e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
    e_ph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)])
    return tau[0] * e_th + tau[1] * e_ph


@dataclass
class NormEquivalenceReport:
    first_order_max_error: float      # max |(|∇u|² - |∂v|²)|
    second_order_max_violation: float  # max of |∇²u|² - 2|∂²v|² - C|∂v|⁴ (≤ 0 expected)
    second_order_split_error: float   # max ||∂²v|² - |∇²u|² - |A(du,du)|²|
    constant: float
    passed: bool


def norm_equivalence_check(ctx, v, k=2, constant=1.0, tol=1e-8):
    """Pointwise intrinsic/ambient norm relations on S² through second order."""
    if k > 2:
        raise ValueError("chart covariant derivatives are implemented through order 2")
    g = ctx.grid
    v = ctx.validate(v)
    jet = chart_jet(g, v)
    dv = sp.gradient(g, v)
    dv2 = sum(np.sum(d ** 2, axis=0) for d in dv)
    du2 = sum(_metric_contract(jet.theta, X, X) for X in jet.du)
    err1 = float(np.max(np.abs(du2 - dv2)))
    if k < 2:
        return NormEquivalenceReport(err1, 0.0, 0.0, constant, err1 <= tol)
    hess = chart_covariant_hessian(jet.theta, jet)
    h2 = sum(_metric_contract(jet.theta, H, H) for H in hess.values())
    ddv2 = 0.0
    sff2 = 0.0
    for a in range(g.dim):
        for b in range(g.dim):
            ddv = sp.derivative(g, dv[b], a)
            ddv2 = ddv2 + np.sum(ddv ** 2, axis=0)
            # second fundamental form of the round sphere: A(X, Y) = -(X·Y) s
            sff2 = sff2 + np.sum(dv[a] * dv[b], axis=0) ** 2
    viol = float(np.max(h2 - 2 * ddv2 - constant * dv2 ** 2))
    split = float(np.max(np.abs(ddv2 - h2 - sff2)))
    scale = max(1.0, float(np.max(ddv2)))
    ok = err1 <= tol * max(1.0, float(np.max(dv2))) and viol <= 0 and split <= 1e-6 * scale
    return NormEquivalenceReport(err1, viol, split, constant, ok)


# --- parallel transport and solution distance -------------------------------------------------

def parallel_transport_s2(pt1, pt2, V, margin=1e-6):
    """Closed-form transport along the minimising great circle, vectorised on trailing axes."""
    pt1, pt2, V = (np.asarray(a, dtype=float) for a in (pt1, pt2, V))
    c = np.sum(pt1 * pt2, axis=0)
    if np.any(c <= -1 + margin):
        raise AntipodalPoints("points are (nearly) antipodal; the geodesic is not unique")
    coef = np.sum(V * pt2, axis=0) / (1 + c)
    # coincident points: transport is the identity, exactly
    same = np.all(pt1 == pt2, axis=0)
    return np.where(same, V, V - coef * (pt1 + pt2))


@dataclass(frozen=True)
class SolutionDistance:
    transport_term: float
    position_term: float

    @property
    def total(self):
        return self.transport_term + self.position_term


def solution_distance(grid, u1, u2):
    """Σ_α ‖∂_α u₂ - P(∂_α u₁)‖² + ‖u₁ - u₂‖², P transporting from u₁ to u₂ pointwise."""
    d1, d2 = sp.gradient(grid, u1), sp.gradient(grid, u2)
    trans = 0.0
    for V, W in zip(d1, d2):
        diff = W - parallel_transport_s2(u1, u2, V)
        trans += sp.inner(grid, diff, diff)
    pos = sp.inner(grid, u1 - u2, u1 - u2)
    return SolutionDistance(float(trans), float(pos))


def naive_h1_distance(grid, u1, u2):
    d = u1 - u2
    return sum(sp.inner(grid, x, x) for x in sp.gradient(grid, d)) + sp.inner(grid, d, d)


# --- twin runs ----------------------------------------------------------------------------------

@dataclass
class GronwallResult:
    times: np.ndarray
    totals: np.ndarray
    rate: float
    intercept: float
    fit_residual: float        # max relative deviation of the fit over the fit window
    envelope_ok: bool          # totals[i] ≤ e^{C t_i} totals[0] at every sample
    envelope_margin: float     # max over i of totals[i] / (e^{C t_i} totals[0])


def _run(ctx, u0, p):
    if p.eps == 0:
        return baseline_ll_midpoint(ctx, u0, p)
    return integrate(ctx, u0, p)


def distance_curve(ctx, u1_0, u2_0, p):
    t1, t2 = _run(ctx, u1_0, p), _run(ctx, u2_0, p)
    totals = np.array([solution_distance(ctx.grid, a, b).total
                       for a, b in zip(t1.snapshots, t2.snapshots)])
    return np.array(t1.snapshot_times), totals


def fit_exponential(times, totals, window=0.5):
    """Least-squares fit of log(total) = log A + C t over the last ``window`` of samples."""
    start = int(len(times) * (1 - window))
    t, y = times[start:], totals[start:]
    if len(t) < 2 or np.any(y <= 0):
        raise ValueError("need at least two positive samples in the fit window")
    C, logA = np.polyfit(t, np.log(y), 1)
    fit = np.exp(logA + C * t)
    return float(C), float(logA), float(np.max(np.abs(fit - y) / y))


def gronwall_experiment(ctx, u1_0, u2_0, p):
    """Evolve both data with the same parameters and fit exponential growth of the distance."""
    times, totals = distance_curve(ctx, u1_0, u2_0, p)
    if totals[0] == 0:
        return GronwallResult(times, totals, 0.0, -np.inf, 0.0,
                              bool(np.all(totals == 0)), float(np.max(totals)))
    C, logA, resid = fit_exponential(times, totals)
    env = totals[0] * np.exp(C * times)
    margin = float(np.max(totals / env))
    return GronwallResult(times, totals, C, logA, resid, bool(margin <= 1 + 1e-12), margin)


# --- interpolation ------------------------------------------------------------------------------

@dataclass
class InterpolationReport:
    s: float
    s_prime: float
    lhs: np.ndarray
    rhs: np.ndarray
    max_ratio: float

    @property
    def passed(self):
        return bool(self.max_ratio <= 1 + 1e-12)


def interpolation_dependence(grid, snaps1, snaps2, s, s_prime):
    """‖∂d‖_{H^{s'}} ≤ ‖∂d‖_{H^s}^{s'/s} ‖∂d‖_{L²}^{1-s'/s} at every sample, d = v₁ - v₂."""
    if not 0 <= s_prime <= s or s <= 0:
        raise ValueError("need 0 <= s' <= s and s > 0")
    th = s_prime / s
    lhs, rhs = [], []
    for a, b in zip(snaps1, snaps2):
        d = a - b
        lhs.append(sp.grad_sobolev_norm(grid, d, s_prime))
        rhs.append(sp.grad_sobolev_norm(grid, d, s) ** th * sp.grad_sobolev_norm(grid, d, 0) ** (1 - th))
    lhs, rhs = np.array(lhs), np.array(rhs)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return InterpolationReport(s, s_prime, lhs, rhs, float(np.max(ratio)))


# --- flow-level checks ---------------------------------------------------------------------------

def differenced_energy_identity(ctx, traj, eps, beta):
    """Central-difference dE/dt from snapshots against the predicted rate.

    Returns (times, measured, predicted) at the interior snapshots; the
    snapshots must be equally spaced.
    """
    t = np.asarray(traj.snapshot_times)
    dts = np.diff(t)
    if len(t) < 3 or np.ptp(dts) > 1e-9 * dts[0]:
        raise ValueError("need at least three equally spaced snapshots")
    fast = replace(ctx, check_tube=False)
    E = np.array([ops.dirichlet_energy(fast, v) for v in traj.snapshots])
    measured = (E[2:] - E[:-2]) / (2 * dts[0])
    predicted = np.array([ops.energy_identity_rhs(fast, v, eps, beta)
                          for v in traj.snapshots[1:-1]])
    return t[1:-1], measured, predicted


def drift_rates(grid, traj, v0):
    """‖v(t) - v₀‖_{L²} / t at each snapshot after the first."""
    t = np.asarray(traj.snapshot_times[1:])
    d = np.array([sp.lp_norm(grid, v - v0, 2) for v in traj.snapshots[1:]])
    return t, d / t


# --- reports ------------------------------------------------------------------------------------

def inputs_hash(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=float))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def make_report(test_id, inputs, constants, passed, tolerances, caveats=()):
    return {"test_id": test_id, "inputs_hash": inputs_hash(*inputs),
            "constants": {k: _jsonable(v) for k, v in constants.items()},
            "passed": bool(passed), "tolerances": dict(tolerances), "caveats": list(caveats)}


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "__dataclass_fields__"):
        return {k: _jsonable(v) for k, v in asdict(x).items()}
    return x


def write_json_reports(path, reports):
    with open(path, "w") as fh:
        json.dump(reports, fh, indent=1, default=_jsonable)


def write_curve_csv(path, columns, rows, comment=""):
    with open(path, "w", newline="") as fh:
        fh.write("# " + (comment + " | " if comment else "") + "columns: " + ",".join(columns) + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
