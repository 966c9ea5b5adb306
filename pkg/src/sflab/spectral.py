"""Periodic grids and Fourier-multiplier calculus.

Fields are plain numpy arrays shaped ``(p, *grid.shape)`` (or just
``grid.shape`` for scalars).  Every operator acts on the trailing ``dim``
axes, so component and batch axes ride along for free.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, L)^dim`` with ``M`` points per axis."""

    dim: int = 1
    M: int = 256
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only dim 1 or 2 is supported")
        if self.M < 8 or self.M & (self.M - 1):
            raise ValueError("M must be a power of two >= 8")
        if not self.L > 0:
            raise ValueError("period must be positive")

    @property
    def shape(self):
        return (self.M,) * self.dim

    @property
    def h(self):
        return self.L / self.M

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @property
    def measure(self):
        return self.L ** self.dim

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @cached_property
    def x(self):
        """Coordinate arrays, one per axis, broadcast to the grid shape."""
        x1 = np.arange(self.M) * self.h
        if self.dim == 1:
            return (x1,)
        return tuple(np.meshgrid(x1, x1, indexing="ij"))

    @cached_property
    def k1(self):
        return 2 * np.pi * np.fft.fftfreq(self.M, d=self.h)

    @cached_property
    def k(self):
        """Wavevector components broadcast to the grid shape."""
        if self.dim == 1:
            return (self.k1,)
        return tuple(np.meshgrid(self.k1, self.k1, indexing="ij"))

    @cached_property
    def ksq(self):
        return sum(kk ** 2 for kk in self.k)

    @cached_property
    def kabs(self):
        return np.sqrt(self.ksq)

    @cached_property
    def nyquist(self):
        """Per-axis masks of the Nyquist plane (odd derivatives vanish there)."""
        out = []
        for kk in self.k:
            out.append(np.isclose(np.abs(kk), np.pi / self.h))
        return tuple(out)

    @cached_property
    def dealias_mask(self):
        kmax = np.max(np.abs(self.k1))
        cut = (2.0 / 3.0) * kmax
        m = np.ones(self.shape, dtype=bool)
        for kk in self.k:
            m &= np.abs(kk) < cut
        return m

    def to_dict(self):
        return {"dim": self.dim, "M": self.M, "L": self.L}


def fft(grid, f):
    return np.fft.fftn(f, axes=grid.axes)


def ifft(grid, fh):
    return np.fft.ifftn(fh, axes=grid.axes).real


def apply_multiplier(grid, f, symbol):
    """Multiply the spectrum of ``f`` by ``symbol`` (an array on grid.shape)."""
    return ifft(grid, fft(grid, f) * symbol)


def derivative_symbol(grid, axis, order=1):
    kk = grid.k[axis]
    sym = (1j * kk) ** order
    if order % 2 == 1:
        sym = np.where(grid.nyquist[axis], 0.0, sym)
    return sym


def derivative(grid, f, axis=0, order=1):
    """Spectral partial derivative of the given order along ``axis``."""
    if order == 0:
        return np.array(f, dtype=float)
    if order > 6:
        raise ValueError("derivative order above 6 is not supported")
    return apply_multiplier(grid, f, derivative_symbol(grid, axis, order))


def gradient(grid, f):
    """List of first partials, one array per spatial axis."""
    fh = fft(grid, f)
    return [ifft(grid, fh * derivative_symbol(grid, a)) for a in range(grid.dim)]


def laplacian(grid, f):
    return apply_multiplier(grid, f, -grid.ksq)


def bilaplacian(grid, f):
    return apply_multiplier(grid, f, grid.ksq ** 2)


def divergence(grid, vecs):
    """Σ_α ∂_α vecs[α]."""
    out = 0.0
    for a, va in enumerate(vecs):
        out = out + derivative(grid, va, a)
    return out


def fractional_symbol(grid, s):
    if s < 0:
        raise ValueError("fractional order must be nonnegative")
    if s == 0:
        return np.ones(grid.shape)
    sym = np.zeros(grid.shape)
    nz = grid.kabs > 0
    sym[nz] = grid.kabs[nz] ** s
    return sym


def fractional(grid, f, s):
    """D^s with symbol |ξ|^s; the zero mode is annihilated for s > 0."""
    return apply_multiplier(grid, f, fractional_symbol(grid, s))


def semigroup_symbol(grid, eps, t):
    if eps < 0 or t < 0:
        raise ValueError("eps and t must be nonnegative")
    return np.exp(-eps * grid.ksq ** 2 * t)


def semigroup(grid, f, eps, t):
    """S_ε(t) f, the exact solution operator of v_t = -ε Δ² v."""
    if eps == 0 or t == 0:
        return np.array(f, dtype=float)
    return apply_multiplier(grid, f, semigroup_symbol(grid, eps, t))


def dealias(grid, f):
    """2/3-rule truncation."""
    return apply_multiplier(grid, f, grid.dealias_mask)


def _spectral_energy(grid, f, weight):
    fh = fft(grid, f)
    # Parseval on the torus: ∫|f|² = L^n / M^{2n} Σ |f̂_k|²
    scale = grid.measure / grid.M ** (2 * grid.dim)
    axes_all = tuple(range(np.ndim(fh)))
    return float(np.sum(weight * np.abs(fh) ** 2, axis=axes_all) * scale)


def sobolev_norm(grid, f, s):
    """(Σ_ξ (1 + |ξ|²)^s |f̂(ξ)|²)^{1/2}, summed over components."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    return np.sqrt(_spectral_energy(grid, f, (1.0 + grid.ksq) ** s))


def homogeneous_norm(grid, f, s):
    """‖D^s f‖_{L²}."""
    return np.sqrt(_spectral_energy(grid, f, fractional_symbol(grid, s) ** 2))


def grad_sobolev_norm(grid, f, s):
    """‖∂f‖_{H^s}: the H^s norm of the full gradient, summed over axes."""
    return np.sqrt(_spectral_energy(grid, f, grid.ksq * (1.0 + grid.ksq) ** s))


def lp_norm(grid, f, p=2):
    """Rectangle-rule L^p norm of |f| (Euclidean over a leading component axis)."""
    f = np.asarray(f, dtype=float)
    mag = np.abs(f) if f.ndim == grid.dim else np.sqrt(np.sum(f ** 2, axis=0))
    if p == np.inf:
        return float(np.max(mag))
    return float((np.sum(mag ** p) * grid.cell_volume) ** (1.0 / p))


def inner(grid, f, g):
    """Discrete L² inner product summed over components."""
    return float(np.sum(np.asarray(f) * np.asarray(g)) * grid.cell_volume)


def mean(grid, f):
    return np.mean(f, axis=grid.axes, keepdims=True)


# --- field serialisation --------------------------------------------------

_HEADER = struct.Struct("<4d")


def save_field(path, grid, f):
    """Flat little-endian float64 file: header (n, M, L, p) then C-ordered data."""
    f = np.asarray(f, dtype="<f8")
    if f.ndim == grid.dim:
        f = f[None]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.dim, grid.M, grid.L, f.shape[0]))
        fh.write(np.ascontiguousarray(f).tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        n, M, L, p = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridSpec(int(n), int(M), float(L))
    return grid, data.reshape((int(p),) + grid.shape).astype(float)


def save_field_csv(path, grid, f):
    """One row per grid point: coordinates followed by the components."""
    f = np.asarray(f, dtype=float)
    if f.ndim == grid.dim:
        f = f[None]
    coords = [c.ravel() for c in grid.x]
    comps = f.reshape(f.shape[0], -1)
    names = ["x", "y"][: grid.dim] + [f"v{c}" for c in range(f.shape[0])]
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={grid.dim} M={grid.M} L={grid.L!r} p={f.shape[0]}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(comps.shape[1]):
            w.writerow([repr(float(c[i])) for c in coords] + [repr(float(v)) for v in comps[:, i]])


def load_field_csv(path):
    with open(path) as fh:
        meta = dict(kv.split("=") for kv in fh.readline()[1:].split())
        grid = GridSpec(int(meta["n"]), int(meta["M"]), float(meta["L"]))
        rows = list(csv.reader(fh))[1:]
    arr = np.array(rows, dtype=float)[:, grid.dim:]
    return grid, arr.T.reshape((int(meta["p"]),) + grid.shape)
