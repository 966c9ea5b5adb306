"""Calibrating the constant of the step-size heuristic against the Picard contraction factor.

The raw heuristic c·min(ε³(1+a)^-12, ε^-1(1+a)^-4), a = ‖∂v₀‖_{H^6}, is tiny
for realistic data, so c is fitted: the largest c whose step keeps twenty
consecutive Picard iterations contracting by at least one half.

Run: python3 demos/03_step_size_calibration.py   (about a minute)
"""

import numpy as np

from sflab import FlowParams, GridSpec, OperatorContext, Sphere
from sflab import flow
from sflab import spectral as sp
from sflab.scenarios import helical

g = GridSpec(1, 256)
ctx = OperatorContext(Sphere(), g, check_tube=False)
v0 = helical(Sphere(), g)
print(f"a = ‖∂v0‖_H6 = {sp.grad_sobolev_norm(g, v0, 6):.1f}")
for eps in (1e-1, 1e-2, 1e-3):
    p = FlowParams(eps=eps)
    raw = flow.step_size_heuristic(g, v0, FlowParams(eps=eps, dt_cap=np.inf), c=1.0)
    c = flow.calibrate_heuristic(ctx, v0, p, iters=12)
    dt = c * raw if c else float("nan")
    print(f"eps={eps:<6g} raw step {raw:.2e}  calibrated c {c:.2e}  step {dt:.2e}")
print(f"frozen constant: {flow.HEURISTIC_C:.1e}")
