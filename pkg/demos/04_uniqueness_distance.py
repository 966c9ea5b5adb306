"""Twin runs and the transported distance between nearby solutions.

Run: python3 demos/04_uniqueness_distance.py   (about a minute)
"""

import numpy as np

from sflab import FlowParams, GridSpec, OperatorContext, Sphere
from sflab import analysis as an
from sflab.scenarios import helical

m = Sphere()
g = GridSpec(1, 128)
ctx = OperatorContext(m, g)
u = helical(m, g)
x = g.x[0]
direction = np.stack([np.exp(-(x - np.pi) ** 2), np.sin(x) * np.exp(-(x - 2) ** 2), np.zeros_like(x)])
p = FlowParams(eps=1e-2, beta=1.0, dt=1e-3, t_end=1.0, snapshot_every=50, record_every=1000)

res = an.gronwall_experiment(ctx, u, u.copy(), p)
print(f"identical data: max distance {np.max(res.totals):.1e}")

res = an.gronwall_experiment(ctx, u, m.project(u + 1e-3 * direction), p)
print(f"perturbed data: fitted rate C = {res.rate:.3f}, fit residual {res.fit_residual:.1%}, "
      f"envelope holds: {res.envelope_ok}")
for t, d in zip(res.times[::4], res.totals[::4]):
    print(f"  t={t:4.2f}  distance {d:.3e}  e^(Ct) d(0) {res.totals[0] * np.exp(res.rate * t):.3e}")
