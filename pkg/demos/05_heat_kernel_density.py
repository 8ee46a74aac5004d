"""Kernel density estimates of the transition law.

The estimate is taken with respect to the canonical volume of the chart,
so its volume-weighted integral over a window holding the bulk of the
mass is close to one.  Rotational symmetry of the law and the parabolic
dilation scaling (z, tau)(t) ~ (sqrt(t) z, t tau)(1) are checked on the
samples directly.
"""

import numpy as np

from crdiff import FrameState, SimConfig, estimate_density, heisenberg_model, ks_distance, simulate_ensemble
from crdiff.observables import density_at

m = heisenberg_model(1)
start = FrameState(np.zeros(3), np.eye(1))

ens = simulate_ensemble(m, start, SimConfig(t_horizon=1.0, n_steps=400, seed=51), 20_000)
window = np.array([[-4.0, 4.0], [-4.0, 4.0], [-5.0, 5.0]])
est = estimate_density(ens, m, window, grid_points=25)
print(f"bandwidths (per axis): {np.round(est.bandwidth, 4)}")
print(f"volume-weighted window integral: {est.normalization():.4f} (should be near 1)")

p_a, p_b = np.array([0.5, 0.0, 0.2]), np.array([0.0, 0.5, 0.2])
d = density_at(ens, m, np.stack([p_a, p_b]))
print(f"density at rotated points {p_a} / {p_b}: {d[0]:.5f} / {d[1]:.5f}")

quarter = simulate_ensemble(m, start, SimConfig(t_horizon=0.25, n_steps=400, seed=52), 20_000)
scale = np.array([0.5, 0.5, 0.25])
print("\ndilation scaling, KS distance per marginal (t=1/4 vs scaled t=1):")
for k, name in ((0, "u"), (1, "v"), (2, "tau")):
    print(f"  {name}: {ks_distance(quarter.x[:, k], scale[k] * ens.x[:, k]):.4f}")
