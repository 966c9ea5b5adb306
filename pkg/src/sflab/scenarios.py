"""Initial data shared by the CLI and the test suites."""

from __future__ import annotations

import numpy as np

from . import spectral as sp
from .geometry import FlatTorus, Sphere
from .oracle import exact_helical

SCENARIOS = ("helical", "bump", "constant", "file")


def helical(manifold, grid, theta=np.pi / 3, k=2):
    """Helical wave on S² (phase along the first axis); a winding map on the torus."""
    x = grid.x[0]
    if isinstance(manifold, Sphere):
        return exact_helical(theta, k, 0.0, x)
    if isinstance(manifold, FlatTorus):
        a = k * x
        b = theta * np.ones_like(x)
        return np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)])
    raise TypeError(f"no helical data for {type(manifold).__name__}")


def bump(manifold, grid, amplitude=1.0, width=4.0):
    """Gaussian bump centred in the box on top of a constant map.

    Outside a few widths the field equals the constant, which mimics data
    that are constant at infinity.
    """
    r2 = sum((x - grid.L / 2) ** 2 for x in grid.x)
    b = amplitude * np.exp(-r2 / (2 * width ** 2))
    if isinstance(manifold, Sphere):
        return manifold.project(np.stack([b, np.zeros_like(b), np.ones_like(b)]))
    if isinstance(manifold, FlatTorus):
        return np.stack([np.cos(b), np.sin(b), np.ones_like(b), np.zeros_like(b)])
    raise TypeError(f"no bump data for {type(manifold).__name__}")


def constant(manifold, grid, point=None):
    if point is None:
        point = np.zeros(manifold.ambient_dim)
        point[-1] = 1.0
        if isinstance(manifold, FlatTorus):
            point = np.array([1.0, 0.0, 1.0, 0.0])
    point = manifold.project(np.asarray(point, dtype=float))
    return np.broadcast_to(point.reshape((-1,) + (1,) * grid.dim),
                           (manifold.ambient_dim,) + grid.shape).copy()


def from_file(manifold, grid, path):
    loader = sp.load_field_csv if str(path).endswith(".csv") else sp.load_field
    g, v = loader(path)
    if g != grid:
        raise ValueError(f"file grid {g} differs from configured grid {grid}")
    if v.shape[0] != manifold.ambient_dim:
        raise ValueError("file component count differs from the target's ambient dimension")
    return v


def build(name, manifold, grid, **kw):
    if name == "helical":
        return helical(manifold, grid, **kw)
    if name == "bump":
        return bump(manifold, grid, **kw)
    if name == "constant":
        return constant(manifold, grid, **kw)
    if name == "file":
        return from_file(manifold, grid, **kw)
    raise ValueError(f"unknown scenario {name!r}")


def tangent_perturbation(manifold, grid, v, amplitude, seed=0, width=None):
    """v displaced along a smooth random tangent field and pulled back onto the target."""
    rng = np.random.default_rng(seed)
    width = grid.L / 8 if width is None else width
    c = rng.uniform(0, grid.L, grid.dim)
    # periodic chordal distance keeps the envelope smooth across the box edge
    r2 = sum((grid.L / np.pi * np.sin(np.pi * (x - ci) / grid.L)) ** 2 for x, ci in zip(grid.x, c))
    env = np.exp(-r2 / (2 * width ** 2))
    dirs = rng.standard_normal((manifold.ambient_dim,) + (1,) * grid.dim) * env
    return manifold.project(v + amplitude * manifold.d_pi(v, dirs))
