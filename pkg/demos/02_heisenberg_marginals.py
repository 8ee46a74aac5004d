"""Simulate the reference diffusion and compare with its exact laws.

Starting at the origin of the 3-dimensional Heisenberg chart, the
horizontal part of the diffusion is a standard complex Brownian motion,
so Re z(t) is Gaussian with variance t/2, and the vertical coordinate
follows the planar-area law: variance t^2 and characteristic function
1/cosh(lambda t).
"""

import numpy as np

from crdiff import FrameState, SimConfig, char_function, heisenberg_model, simulate_ensemble

N_PATHS = 30_000
T = 1.0

m = heisenberg_model(1)
start = FrameState(np.zeros(3), np.eye(1))
cfg = SimConfig(t_horizon=T, n_steps=800, seed=20260808)

ens = simulate_ensemble(m, start, cfg, N_PATHS)
u, v, tau = ens.x[:, 0], ens.x[:, 1], ens.x[:, 2]

print(f"{N_PATHS} paths to t = {T}\n")
print(f"E[u]     = {u.mean():+.4f}   (exact 0)")
print(f"Var(u)   = {u.var():.4f}    (exact {T/2})")
print(f"Var(v)   = {v.var():.4f}    (exact {T/2})")
print(f"E[|z|^2] = {(u**2 + v**2).mean():.4f}    (exact {T})")
print(f"E[tau]   = {tau.mean():+.4f}   (exact 0)")
print(f"Var(tau) = {tau.var():.4f}    (exact {T**2})")

print("\ncharacteristic function of the vertical coordinate:")
cf = char_function(tau, [0.5, 1.0, 2.0])
for lam, val in zip(cf.lambdas, cf.values):
    print(f"  lambda={lam:3.1f}: {val.real:+.4f}{val.imag:+.4f}i   "
          f"(exact {1/np.cosh(lam*T):.4f})")
